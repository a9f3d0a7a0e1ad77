#![allow(dead_code)]

use faer::Mat;
use tdwo::models::{BasisMode, Model, PulseSpec, TimeAbsorber, ZerothOrderBasis};
use tdwo::timegrid::TimeGrid;
use tdwo::waveop::ActiveSpace;
use tdwo::C64;

pub const TOY_ENERGIES: [f64; 6] = [0.0, 0.37, 1.05, 1.32, 1.61, 2.2];
pub const TOY_COUPLINGS: [(usize, usize, f64); 7] = [(0, 2, 1.0), (0, 3, 0.6), (1, 3, 0.8), (1, 4, 1.0), (2, 5, 0.5), (3, 5, 0.4), (0, 4, 0.3)];

pub fn dipole(n: usize, couplings: &[(usize, usize, f64)]) -> Mat<C64> {
    let mut d = Mat::zeros(n, n);
    for &(i, j, v) in couplings {
        d[(i, j)] = C64::new(v, 0.0);
        d[(j, i)] = C64::new(v, 0.0);
    }
    d
}

pub fn toy_pulses() -> Vec<PulseSpec> {
    vec![
        PulseSpec { amplitude: 0.05, frequency: 0.9, center: 12.0, width: 4.0 },
        PulseSpec { amplitude: 0.04, frequency: 1.2, center: 17.0, width: 4.0 },
    ]
}

/// Six-level hermitian model on [0, 40] with two smooth pulses.
pub fn toy(absorber: bool) -> (Model, TimeGrid, ActiveSpace) {
    let energies = TOY_ENERGIES.iter().map(|&e| C64::new(e, 0.0)).collect();
    let basis = ZerothOrderBasis::from_parts(energies, dipole(6, &TOY_COUPLINGS), BasisMode::Hermitian).unwrap();
    let abs = absorber.then(|| TimeAbsorber::with_damping(30.0, 40.0, 2.0, 25.0));
    let model = Model::new(basis, toy_pulses(), abs);
    (model, TimeGrid::new(40.0, 512).unwrap(), ActiveSpace::new(vec![0, 1], 6).unwrap())
}

/// Same levels with decay widths on the complement.
pub fn lossy_toy() -> (Model, TimeGrid, ActiveSpace) {
    let widths = [0.0, 0.0, -0.01, -0.02, -0.005, -0.03];
    let energies = TOY_ENERGIES.iter().zip(widths).map(|(&e, w)| C64::new(e, w)).collect();
    let basis = ZerothOrderBasis::from_parts(energies, dipole(6, &TOY_COUPLINGS), BasisMode::ComplexSymmetric).unwrap();
    let model = Model::new(basis, toy_pulses(), Some(TimeAbsorber::with_damping(30.0, 40.0, 2.0, 25.0)));
    (model, TimeGrid::new(40.0, 512).unwrap(), ActiveSpace::new(vec![0, 1], 6).unwrap())
}

pub fn unit(n: usize, i: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); n];
    v[i] = C64::new(1.0, 0.0);
    v
}

pub fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn mat_diff(a: &Mat<C64>, b: &Mat<C64>) -> f64 {
    let mut d = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            d = d.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    d
}
