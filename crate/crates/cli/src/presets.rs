//! Built-in run configurations.

use std::path::PathBuf;

use crate::config::*;

const STIRAP_LOWER: [f64; 5] = [0.0, 0.0, -5.0, 0.5, 1.0];
const STIRAP_UPPER: [f64; 5] = [0.0, 0.0, 0.0, 0.0, 0.2];

fn stirap(name: &str, states: Vec<usize>, description: &str) -> RunConfig {
    RunConfig {
        name: name.into(),
        description: description.into(),
        model: ModelSpec::TwoSurface(TwoSurfaceConfig {
            hbar: 1.0,
            mass: 10.0,
            states: [30, 30],
            coordinates: CoordinateConfig { start: -4.5, end: 4.5, points: 256 },
            lower: CurveConfig::Quartic { coefficients: STIRAP_LOWER },
            upper: CurveConfig::Quartic { coefficients: STIRAP_UPPER },
            dipole: DipoleConfig::Constant { value: 1.0 },
            dipole_scale: 4.2,
            cap: None,
            dissociation_limit: None,
            bound_tolerance: 1e-6,
        }),
        pulses: vec![
            PulseConfig { amplitude: 0.03, frequency: 4.77725153, center: 250.0, width: 125.0 },
            PulseConfig { amplitude: 0.03, frequency: 9.9844894, center: 360.0, width: 125.0 },
        ],
        grid: GridConfig { total: 800.0, points: 65536 },
        active: ActiveConfig { states, ..Default::default() },
        absorber: Some(AbsorberConfig { enabled: true, start: 600.0, exponent: 2.0, damping: 25.0, strength: None }),
        solver: SolverConfig { eps: 1e-7, max_iterations: 30, ..Default::default() },
        output: OutputConfig {
            dir: PathBuf::from(format!("out-{name}")),
            pairs: vec![[0, 0], [0, 5], [0, 36], [0, 46], [0, 6]],
            fs_subspaces: vec![vec![0]],
            floquet: true,
            stride: 16,
        },
    }
}

fn h2plus(name: &str, active: ActiveConfig, description: &str) -> RunConfig {
    RunConfig {
        name: name.into(),
        description: description.into(),
        model: ModelSpec::TwoSurface(TwoSurfaceConfig {
            hbar: 1.0,
            mass: 918.0763,
            states: [200, 200],
            coordinates: CoordinateConfig { start: 0.5, end: 22.5, points: 320 },
            lower: CurveConfig::Morse { depth: 0.1026, width: 0.72, center: 2.0, asymptote: 0.0 },
            upper: CurveConfig::Exponential { amplitude: 0.33, rate: 0.7, center: 2.0, asymptote: 0.0 },
            dipole: DipoleConfig::DampedLinear { slope: 0.5, offset: 0.0, range: 6.0 },
            dipole_scale: 1.0,
            cap: Some(CapConfig { onset: 16.0, strength: 0.1, exponent: 3.0 }),
            dissociation_limit: Some(0.0),
            bound_tolerance: 1e-6,
        }),
        pulses: vec![
            PulseConfig { amplitude: 0.03, frequency: 0.35, center: 250.0, width: 100.0 },
            PulseConfig { amplitude: 0.03, frequency: 0.3398, center: 250.0, width: 100.0 },
        ],
        grid: GridConfig { total: 640.0, points: 2048 },
        active,
        absorber: Some(AbsorberConfig { enabled: true, start: 500.0, exponent: 2.0, damping: 25.0, strength: None }),
        solver: SolverConfig { eps: 3e-8, max_iterations: 30, ..Default::default() },
        output: OutputConfig {
            dir: PathBuf::from(format!("out-{name}")),
            pairs: vec![[0, 0], [0, 1], [0, 2], [3, 2], [3, 3], [3, 4], [3, 6]],
            fs_subspaces: Vec::new(),
            floquet: true,
            stride: 1,
        },
    }
}

fn toy6() -> RunConfig {
    let energies = vec![0.0, 0.37, 1.05, 1.32, 1.61, 2.2];
    let mut dipole = vec![vec![0.0; 6]; 6];
    let couple = [(0, 2, 1.0), (0, 3, 0.6), (1, 3, 0.8), (1, 4, 1.0), (2, 5, 0.5), (3, 5, 0.4), (0, 4, 0.3)];
    for &(i, j, v) in &couple {
        dipole[i][j] = v;
        dipole[j][i] = v;
    }
    RunConfig {
        name: "toy6".into(),
        description: "six-level test model with two smooth pulses".into(),
        model: ModelSpec::Explicit(ExplicitConfig { hbar: 1.0, energies, energies_imag: Vec::new(), dipole }),
        pulses: vec![
            PulseConfig { amplitude: 0.05, frequency: 0.9, center: 12.0, width: 4.0 },
            PulseConfig { amplitude: 0.04, frequency: 1.2, center: 17.0, width: 4.0 },
        ],
        grid: GridConfig { total: 40.0, points: 512 },
        active: ActiveConfig { states: vec![0, 1], ..Default::default() },
        absorber: Some(AbsorberConfig { enabled: true, start: 30.0, exponent: 2.0, damping: 25.0, strength: None }),
        solver: SolverConfig { eps: 1e-12, max_iterations: 40, ..Default::default() },
        output: OutputConfig { dir: PathBuf::from("out-toy6"), ..Default::default() },
    }
}

pub fn presets() -> Vec<RunConfig> {
    vec![
        stirap("stirap-m1", vec![0], "STIRAP double well, active space {(v0,S1)}"),
        stirap("stirap-m2", vec![0, 5], "STIRAP double well, active space {(v0,S1),(v5,S1)}"),
        stirap("stirap-m3", vec![0, 5, 36], "STIRAP double well, active space {(v0,S1),(v5,S1),(v6,S2)}"),
        stirap("stirap-m5", vec![0, 5, 36, 46, 6], "STIRAP double well, active space {(v0,S1),(v5,S1),(v6,S2),(v16,S2),(v6,S1)}"),
        h2plus("h2plus-m19", ActiveConfig { bound: true, ..Default::default() }, "H2+ surrogate, the 19 bound states active"),
        h2plus(
            "h2plus-m41",
            ActiveConfig { bound: true, lower_continuum: 11, upper_continuum: 11, ..Default::default() },
            "H2+ surrogate, 19 bound + 22 long-lived continuum states active",
        ),
        toy6(),
    ]
}

pub fn preset(name: &str) -> Option<RunConfig> {
    presets().into_iter().find(|p| p.name == name)
}
