//! Step-by-step reference propagator: midpoint exponentials of the full
//! N_m × N_m Hamiltonian. Slow and simple by design.

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::models::{BasisMode, Model};
use crate::timegrid::TimeGrid;
use crate::waveop::{ActiveSpace, ReducedWaveOperator, StateSeries};

fn step_propagator(model: &Model, active: &ActiveSpace, t: f64, h: f64) -> CMat {
    let ham = model.hamiltonian(active, t);
    let n = ham.nrows();
    let hermitian = model.basis.mode == BasisMode::Hermitian && model.absorber_at(t) == 0.0;
    if hermitian {
        if let Some((vals, v)) = linalg::eigh(ham.as_ref()) {
            let vd = Mat::from_fn(n, n, |i, j| v[(i, j)] * C64::new(0.0, -vals[j] * h / model.hbar).exp());
            return &vd * v.adjoint();
        }
    }
    linalg::expm(linalg::scale(ham.as_ref(), C64::new(0.0, -h / model.hbar)).as_ref())
}

/// Propagates the columns of `psi0`; returns `N_t + 1` snapshots (last is T).
pub fn oracle_propagate_many(model: &Model, active: &ActiveSpace, grid: &TimeGrid, psi0: &CMat, n_substeps: usize) -> Result<Vec<CMat>> {
    if n_substeps < 1 {
        return Err(Error::InvalidInput("n_substeps must be at least 1".into()));
    }
    if psi0.nrows() != model.basis.len() {
        return Err(Error::InvalidInput("initial states do not match basis size".into()));
    }
    let h = grid.dt() / n_substeps as f64;
    let mut out = Vec::with_capacity(grid.len() + 1);
    let mut psi = psi0.clone();
    out.push(psi.clone());
    for j in 0..grid.len() {
        for s in 0..n_substeps {
            let tm = grid.time(j) + (s as f64 + 0.5) * h;
            psi = &step_propagator(model, active, tm, h) * &psi;
        }
        out.push(psi.clone());
    }
    Ok(out)
}

pub fn oracle_propagate(model: &Model, active: &ActiveSpace, grid: &TimeGrid, psi0: &[C64], n_substeps: usize) -> Result<StateSeries> {
    let n = psi0.len();
    let m0 = Mat::from_fn(n, 1, |i, _| psi0[i]);
    let snaps = oracle_propagate_many(model, active, grid, &m0, n_substeps)?;
    let mut times = grid.times();
    times.push(grid.total());
    let states = snaps.iter().map(|s| (0..n).map(|i| s[(i, 0)]).collect()).collect();
    Ok(StateSeries { times, states })
}

/// Exact X(t_j) = Q₀(UP₀)(P₀UP₀)⁻¹ and the largest condition number of P₀UP₀.
pub fn oracle_wave_operator(model: &Model, active: &ActiveSpace, grid: &TimeGrid, n_substeps: usize) -> Result<(ReducedWaveOperator, f64)> {
    let n_m = model.basis.len();
    let m = active.m();
    let psi0 = Mat::from_fn(n_m, m, |r, c| if active.indices()[c] == r { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    let snaps = oracle_propagate_many(model, active, grid, &psi0, n_substeps)?;
    let n_t = grid.len();
    let mut x = ReducedWaveOperator::zeros(n_m, m, n_t);
    let mut worst = 1.0f64;
    let comp = active.complement();
    for (j, up) in snaps.iter().enumerate() {
        let b = Mat::from_fn(m, m, |r, c| up[(active.indices()[r], c)]);
        let time = if j < n_t { grid.time(j) } else { grid.total() };
        let binv = match linalg::inverse(b.as_ref()) {
            Some(bi) => bi,
            None => return Err(Error::Singular { index: j, time }),
        };
        let cond = linalg::norm1(b.as_ref()) * linalg::norm1(binv.as_ref());
        if !(cond < 1e12) || linalg::determinant(b.as_ref()).norm() < 1e-10 {
            return Err(Error::Singular { index: j, time });
        }
        worst = worst.max(cond);
        let full = up * &binv;
        for &q in &comp {
            for p in 0..m {
                if j < n_t {
                    x.samples.set(q, p, j, full[(q, p)]);
                } else {
                    x.end[(q, p)] = full[(q, p)];
                }
            }
        }
    }
    Ok((x, worst))
}
