//! Post-solve analysis of a [`SolveReport`].

use std::f64::consts::{FRAC_PI_2, PI};

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::models::BasisMode;
use crate::waveop::{propagate_state, SolveReport};

const FS_SLACK: f64 = 1e-8;

fn fs_from_det(d: C64) -> Result<f64> {
    let a = d.norm();
    if !a.is_finite() || a > 1.0 + FS_SLACK {
        return Err(Error::Consistency(format!("|det P0 U P0| = {a} exceeds 1")));
    }
    Ok(a.min(1.0).acos().clamp(0.0, FRAC_PI_2))
}

/// `arccos |det U_eff(t_j)|`; `j = N_t` gives t = T.
pub fn fubini_study_distance(report: &SolveReport, j: usize) -> Result<f64> {
    let u = report.propagators.forward.get(j).ok_or_else(|| Error::InvalidInput(format!("time index {j} out of range")))?;
    fs_from_det(linalg::determinant(u.as_ref()))
}

/// Distance series on the grid (`N_t` values).
pub fn fubini_study_series(report: &SolveReport) -> Result<Vec<f64>> {
    (0..report.grid.len()).map(|j| fubini_study_distance(report, j)).collect()
}

/// Distance for the smaller model space spanned by `subset` (basis indices,
/// all active), using the dynamics carried by `report`.
pub fn fubini_study_subspace_series(report: &SolveReport, subset: &[usize]) -> Result<Vec<f64>> {
    let pos: Vec<usize> = subset
        .iter()
        .map(|&i| report.active.position(i).ok_or_else(|| Error::InvalidInput(format!("state {i} is not active"))))
        .collect::<Result<_>>()?;
    (0..report.grid.len())
        .map(|j| {
            let u = &report.propagators.forward[j];
            let sub = Mat::from_fn(pos.len(), pos.len(), |r, c| u[(pos[r], pos[c])]);
            fs_from_det(linalg::determinant(sub.as_ref()))
        })
        .collect()
}

/// `P_{i→j}(t)` for every basis state j, at `N_t + 1` times (last is T).
#[derive(Debug, Clone)]
pub struct Populations {
    pub initial: usize,
    pub times: Vec<f64>,
    pub probabilities: Vec<Vec<f64>>,
}

impl Populations {
    pub fn series(&self, j: usize) -> Vec<f64> {
        self.probabilities.iter().map(|p| p[j]).collect()
    }

    /// Value at the last sample with `t <= time`.
    pub fn at_time(&self, j: usize, time: f64) -> f64 {
        let k = self.times.iter().rposition(|&t| t <= time + 1e-9).unwrap_or(0);
        self.probabilities[k][j]
    }

    pub fn total(&self, k: usize) -> f64 {
        self.probabilities[k].iter().sum()
    }
}

fn unit_state(report: &SolveReport, i: usize) -> Result<Vec<C64>> {
    if !report.active.contains(i) {
        return Err(Error::InvalidInput(format!("initial state {i} is not active")));
    }
    let mut psi = vec![C64::new(0.0, 0.0); report.active.basis_size()];
    psi[i] = C64::new(1.0, 0.0);
    Ok(psi)
}

pub fn transition_probabilities(report: &SolveReport, i: usize) -> Result<Populations> {
    let s = propagate_state(report, &unit_state(report, i)?)?;
    let probabilities = s.states.iter().map(|psi| psi.iter().map(|z| z.norm_sqr()).collect()).collect();
    Ok(Populations { initial: i, times: s.times, probabilities })
}

/// `1 − Σ_{j∈bound} P_{i→j}(T)`.
pub fn dissociation_probability(report: &SolveReport, i: usize, bound: &[usize]) -> Result<f64> {
    let pos = report.active.position(i).ok_or_else(|| Error::InvalidInput(format!("initial state {i} is not active")))?;
    let n_t = report.grid.len();
    let u = &report.propagators.forward[n_t];
    let x = &report.x.end;
    let m = report.active.m();
    let mut kept = 0.0;
    for &j in bound {
        let amp = match report.active.position(j) {
            Some(r) => u[(r, pos)],
            None => (0..m).map(|p| x[(j, p)] * u[(p, pos)]).sum(),
        };
        kept += amp.norm_sqr();
    }
    Ok(1.0 - kept)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CyclicityDefect {
    pub per_state: Vec<f64>,
    pub max: f64,
}

/// `max(‖X(0)e_p‖, ‖X(T)e_p‖)` per active column.
pub fn cyclicity_defect(report: &SolveReport) -> CyclicityDefect {
    let x = &report.x;
    let n_m = report.active.basis_size();
    let per_state: Vec<f64> = (0..report.active.m())
        .map(|p| {
            let a: f64 = (0..n_m).map(|r| x.samples.get(r, p, 0).norm_sqr()).sum::<f64>().sqrt();
            let b: f64 = (0..n_m).map(|r| x.end[(r, p)].norm_sqr()).sum::<f64>().sqrt();
            a.max(b)
        })
        .collect();
    let max = per_state.iter().copied().fold(0.0, f64::max);
    CyclicityDefect { per_state, max }
}

#[derive(Debug, Clone)]
pub struct FloquetSet {
    /// Quasi-energies with Re in (−πħ/T, πħ/T].
    pub quasi_energies: Vec<C64>,
    /// Column j holds ⟨k|λ_j(0)⟩ over the active states k.
    pub components: CMat,
    pub multipliers: Vec<C64>,
    pub degenerate: bool,
    pub defect: f64,
}

/// Diagonalises Ψ_ki = ⟨k|ψ_i(T)⟩ within the active space.
pub fn floquet_extract(report: &SolveReport, mode: BasisMode) -> Result<FloquetSet> {
    let n_t = report.grid.len();
    let total = report.grid.total();
    let hbar = report.hbar;
    let psi = &report.propagators.forward[n_t];
    let m = psi.nrows();
    let (vals, vecs) = linalg::eig(psi.as_ref()).ok_or(Error::EigenFailure)?;
    let vinv = linalg::inverse(vecs.as_ref()).ok_or(Error::NotDiagonalizable)?;
    let cond = linalg::frobenius_sqr(vecs.as_ref()).sqrt() * linalg::frobenius_sqr(vinv.as_ref()).sqrt();
    if !(cond < 1e10) {
        return Err(Error::NotDiagonalizable);
    }
    let zone = PI * hbar / total;
    let energy = |l: C64| {
        let mut re = -hbar * l.arg() / total;
        if re <= -zone {
            re += 2.0 * zone;
        }
        C64::new(re, hbar * l.norm().ln() / total)
    };
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| energy(vals[b]).re.partial_cmp(&energy(vals[a]).re).unwrap());
    let mut components = Mat::zeros(m, m);
    for (jn, &j) in order.iter().enumerate() {
        let mut col: Vec<C64> = (0..m).map(|k| vecs[(k, j)]).collect();
        let norm = match mode {
            BasisMode::Hermitian => C64::new(col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(), 0.0),
            BasisMode::ComplexSymmetric => col.iter().map(|z| z * z).sum::<C64>().sqrt(),
        };
        if norm.norm() < 1e-14 {
            return Err(Error::SelfOrthogonal(jn));
        }
        col.iter_mut().for_each(|z| *z /= norm);
        if mode == BasisMode::Hermitian {
            let big = col.iter().copied().max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap()).unwrap();
            let ph = big.conj() / big.norm();
            col.iter_mut().for_each(|z| *z *= ph);
        }
        for k in 0..m {
            components[(k, jn)] = col[k];
        }
    }
    let multipliers: Vec<C64> = order.iter().map(|&j| vals[j]).collect();
    let quasi_energies: Vec<C64> = multipliers.iter().map(|&l| energy(l)).collect();
    let gap_tol = 1e-10 * 2.0 * zone;
    let degenerate = (0..m).any(|a| (a + 1..m).any(|b| (quasi_energies[a] - quasi_energies[b]).norm() < gap_tol));
    Ok(FloquetSet { quasi_energies, components, multipliers, degenerate, defect: crate::diagnostics::cyclicity_defect(report).max })
}

/// Largest deviation between ψ_i(t) and `Σ_j e^{−iE_j t/ħ}|λ_j(t)⟩U_ji` with
/// λ_j(t_j) inverted from the propagated states on `[0, T)` and continued
/// periodically to t = T.
pub fn floquet_reconstruction_residual(report: &SolveReport, set: &FloquetSet) -> Result<f64> {
    let active = &report.active;
    let m = active.m();
    let n_m = active.basis_size();
    let n_t = report.grid.len();
    let hbar = report.hbar;
    let uinv = linalg::inverse(set.components.as_ref()).ok_or(Error::NotDiagonalizable)?;
    let states: Vec<Vec<Vec<C64>>> =
        active.indices().iter().map(|&i| unit_state(report, i).and_then(|p| propagate_state(report, &p)).map(|s| s.states)).collect::<Result<_>>()?;
    let psi_at = |j: usize| Mat::from_fn(n_m, m, |r, i| states[i][j][r]);
    let phases = |t: f64| -> Vec<C64> { set.quasi_energies.iter().map(|&e| (-C64::new(0.0, 1.0) * e * t / hbar).exp()).collect() };
    // Ψ(t) = L(t) D(t) U  ⇒  L(t) = Ψ(t) U⁻¹ D(t)⁻¹, with U⁻¹ = components
    let modes = |j: usize, t: f64| {
        let p = psi_at(j);
        let l = &p * &set.components;
        let d = phases(t);
        Mat::from_fn(n_m, m, |r, c| l[(r, c)] / d[c])
    };
    let rebuild = |l: &CMat, t: f64| {
        let d = phases(t);
        let ld = Mat::from_fn(n_m, m, |r, c| l[(r, c)] * d[c]);
        &ld * &uinv
    };
    let mut worst = 0.0f64;
    for j in 0..n_t {
        let t = report.grid.time(j);
        let diff = &rebuild(&modes(j, t), t) - &psi_at(j);
        worst = worst.max(column_max_norm(&diff));
    }
    let l0 = modes(0, 0.0);
    let total = report.grid.total();
    let diff = &rebuild(&l0, total) - &psi_at(n_t);
    Ok(worst.max(column_max_norm(&diff)))
}

fn column_max_norm(a: &CMat) -> f64 {
    (0..a.ncols()).map(|c| (0..a.nrows()).map(|r| a[(r, c)].norm_sqr()).sum::<f64>().sqrt()).fold(0.0, f64::max)
}
