//! Global iterative solver for the reduced wave operator X(t) on the whole
//! time grid.
//!
//! Storage is column-major by active column: for column `p` and basis row `r`
//! the `N_t` time samples are contiguous, so spectral transforms run on
//! contiguous slices and columns can be processed independently.

use faer::prelude::ReborrowMut;
use faer::{Mat, MatMut, MatRef, Par};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::models::Model;
use crate::timegrid::{Fourier, TimeGrid};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSpace {
    indices: Vec<usize>,
    n_m: usize,
    position: Vec<Option<usize>>,
}

impl ActiveSpace {
    pub fn new(indices: Vec<usize>, n_m: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidInput("active space must contain at least one state".into()));
        }
        let mut position = vec![None; n_m];
        for (k, &i) in indices.iter().enumerate() {
            if i >= n_m {
                return Err(Error::InvalidInput(format!("active index {i} outside basis of size {n_m}")));
            }
            if position[i].is_some() {
                return Err(Error::InvalidInput(format!("active index {i} repeated")));
            }
            position[i] = Some(k);
        }
        Ok(ActiveSpace { indices, n_m, position })
    }

    pub fn m(&self) -> usize {
        self.indices.len()
    }

    pub fn basis_size(&self) -> usize {
        self.n_m
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, i: usize) -> bool {
        self.position.get(i).is_some_and(|p| p.is_some())
    }

    pub fn position(&self, i: usize) -> Option<usize> {
        self.position.get(i).copied().flatten()
    }

    pub fn complement(&self) -> Vec<usize> {
        (0..self.n_m).filter(|&i| !self.contains(i)).collect()
    }
}

/// `n_cols × n_rows` complex time series of length `n_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSeries {
    n_rows: usize,
    n_cols: usize,
    n_t: usize,
    data: Vec<C64>,
}

impl BlockSeries {
    pub fn zeros(n_rows: usize, n_cols: usize, n_t: usize) -> Self {
        BlockSeries { n_rows, n_cols, n_t, data: vec![ZERO; n_rows * n_cols * n_t] }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    fn offset(&self, row: usize, col: usize) -> usize {
        (col * self.n_rows + row) * self.n_t
    }

    pub fn series(&self, row: usize, col: usize) -> &[C64] {
        let o = self.offset(row, col);
        &self.data[o..o + self.n_t]
    }

    pub fn series_mut(&mut self, row: usize, col: usize) -> &mut [C64] {
        let o = self.offset(row, col);
        let n = self.n_t;
        &mut self.data[o..o + n]
    }

    pub fn column(&self, col: usize) -> &[C64] {
        let n = self.n_rows * self.n_t;
        &self.data[col * n..(col + 1) * n]
    }

    pub fn get(&self, row: usize, col: usize, t: usize) -> C64 {
        self.data[self.offset(row, col) + t]
    }

    pub fn set(&mut self, row: usize, col: usize, t: usize, z: C64) {
        let o = self.offset(row, col) + t;
        self.data[o] = z;
    }

    /// The `n_rows × n_cols` block at time index `t`.
    pub fn at(&self, t: usize) -> CMat {
        Mat::from_fn(self.n_rows, self.n_cols, |r, c| self.get(r, c, t))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `max_j ‖block(t_j)‖_F`
    pub fn max_block_norm(&self) -> f64 {
        let mut acc = vec![0.0; self.n_t];
        for chunk in self.data.chunks(self.n_t) {
            for (a, z) in acc.iter_mut().zip(chunk) {
                *a += z.norm_sqr();
            }
        }
        acc.into_iter().fold(0.0, f64::max).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn columns_mut(&mut self) -> impl IndexedParallelIterator<Item = (usize, &mut [C64])> {
        let n = self.n_rows * self.n_t;
        self.data.par_chunks_mut(n).enumerate()
    }
}

/// X(t_j) on the grid plus its value at t = T.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedWaveOperator {
    pub samples: BlockSeries,
    pub end: CMat,
}

impl ReducedWaveOperator {
    pub fn zeros(n_m: usize, m: usize, n_t: usize) -> Self {
        ReducedWaveOperator { samples: BlockSeries::zeros(n_m, m, n_t), end: Mat::zeros(n_m, m) }
    }

    pub fn at(&self, j: usize) -> CMat {
        self.samples.at(j)
    }

    /// Active rows are exactly zero.
    pub fn is_structural(&self, active: &ActiveSpace) -> bool {
        active.indices().iter().all(|&a| {
            (0..self.samples.n_cols()).all(|p| self.samples.series(a, p).iter().all(|z| *z == ZERO) && self.end[(a, p)] == ZERO)
        })
    }
}

/// m × m matrices on the grid, element-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveHamiltonianSeries {
    m: usize,
    n_t: usize,
    data: Vec<C64>,
}

impl EffectiveHamiltonianSeries {
    pub fn zeros(m: usize, n_t: usize) -> Self {
        EffectiveHamiltonianSeries { m, n_t, data: vec![ZERO; m * m * n_t] }
    }

    pub fn from_fn(m: usize, grid: &TimeGrid, f: impl Fn(f64) -> CMat) -> Self {
        let mut s = Self::zeros(m, grid.len());
        for j in 0..grid.len() {
            let h = f(grid.time(j));
            for r in 0..m {
                for c in 0..m {
                    s.data[(r * m + c) * s.n_t + j] = h[(r, c)];
                }
            }
        }
        s
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn element(&self, r: usize, c: usize) -> &[C64] {
        let o = (r * self.m + c) * self.n_t;
        &self.data[o..o + self.n_t]
    }

    pub fn at(&self, t: usize) -> CMat {
        Mat::from_fn(self.m, self.m, |r, c| self.data[(r * self.m + c) * self.n_t + t])
    }
}

/// One value per basis row per time sample; active rows are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalSeries {
    n_m: usize,
    n_t: usize,
    data: Vec<C64>,
}

impl DiagonalSeries {
    pub fn row(&self, q: usize) -> &[C64] {
        &self.data[q * self.n_t..(q + 1) * self.n_t]
    }

    pub fn n_rows(&self) -> usize {
        self.n_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shift {
    Auto,
    Fixed(f64),
}

/// Source fed to the spectral increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncrementForm {
    /// Λ built from the residual Δ; δX is the increment itself.
    Residual,
    /// Λ built from Q₀W − H̃X; the increment formula then returns X⁽ⁿ⁺¹⁾
    /// directly and δX = X⁽ⁿ⁺¹⁾ − X⁽ⁿ⁾. Same result in exact arithmetic, but
    /// the spectral derivative of X never enters the update.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub eps: f64,
    pub max_iterations: usize,
    pub guard: f64,
    pub growth_limit: usize,
    pub shift: Shift,
    pub denominator_tol: f64,
    pub step_rule: StepRule,
    pub form: IncrementForm,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { eps: 1e-7, max_iterations: 30, guard: 1e6, growth_limit: 3, shift: Shift::Auto, denominator_tol: 1e-10, step_rule: StepRule::Commutator, form: IncrementForm::Direct }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidInput("eps must be positive".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidInput("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// U(t_k, 0; H_eff) for k = 0..=N_t (the last entry is t = T) and inverses.
#[derive(Debug, Clone)]
pub struct Propagators {
    pub forward: Vec<CMat>,
    pub inverse: Vec<CMat>,
    pub fallback_steps: usize,
}

impl Propagators {
    fn element_major(mats: &[CMat], m: usize) -> Vec<C64> {
        let n = mats.len();
        let mut out = vec![ZERO; m * m * n];
        for (t, u) in mats.iter().enumerate() {
            for r in 0..m {
                for c in 0..m {
                    out[(r * m + c) * n + t] = u[(r, c)];
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Converged,
    Diverged(String),
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub outcome: Outcome,
    pub factors: Vec<f64>,
    pub x: ReducedWaveOperator,
    pub heff: EffectiveHamiltonianSeries,
    pub propagators: Propagators,
    pub grid: TimeGrid,
    pub active: ActiveSpace,
    pub shift: f64,
    pub hbar: f64,
    /// Frobenius norm of the residual for the returned X relative to the
    /// norm of the bare coupling block.
    pub relative_residual: f64,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.outcome == Outcome::Converged
    }

    pub fn diverged(&self) -> bool {
        matches!(self.outcome, Outcome::Diverged(_))
    }

    pub fn iterations(&self) -> usize {
        self.factors.len()
    }
}

struct Samples {
    field: Vec<f64>,
    absorber: Vec<f64>,
}

impl Samples {
    fn new(model: &Model, grid: &TimeGrid) -> Self {
        let ts = grid.times();
        Samples { field: ts.iter().map(|&t| model.field(t)).collect(), absorber: ts.iter().map(|&t| model.absorber_at(t)).collect() }
    }
}

/// Dipole blocks that are not identically zero, as (row range, col range).
fn dipole_blocks(model: &Model) -> Vec<(std::ops::Range<usize>, std::ops::Range<usize>)> {
    let labels = &model.basis.labels;
    let n = labels.len();
    let mut bounds = vec![0];
    for i in 1..n {
        if labels[i].surface != labels[i - 1].surface {
            bounds.push(i);
        }
    }
    bounds.push(n);
    let ranges: Vec<_> = bounds.windows(2).map(|w| w[0]..w[1]).collect();
    let mut out = Vec::new();
    for r in &ranges {
        for c in &ranges {
            let nonzero = r.clone().any(|i| c.clone().any(|j| model.basis.dipole[(i, j)] != ZERO));
            if nonzero {
                out.push((r.clone(), c.clone()));
            }
        }
    }
    out
}

fn check_dims(model: &Model, grid: &TimeGrid, active: &ActiveSpace, x: &ReducedWaveOperator) -> Result<()> {
    let n_m = model.basis.len();
    if active.basis_size() != n_m {
        return Err(Error::InvalidInput("active space built for a different basis size".into()));
    }
    let s = &x.samples;
    if s.n_rows() != n_m || s.n_cols() != active.m() || s.n_t() != grid.len() {
        return Err(Error::InvalidInput("wave operator dimensions do not match model, grid and active space".into()));
    }
    Ok(())
}

/// W = H(t)·(P₀ + X(t)) for every active column, all basis rows.
fn apply_hamiltonian(model: &Model, active: &ActiveSpace, smp: &Samples, x: &BlockSeries) -> BlockSeries {
    let n_m = x.n_rows();
    let n_t = x.n_t();
    let mut w = BlockSeries::zeros(n_m, x.n_cols(), n_t);
    let blocks = dipole_blocks(model);
    let mu = model.basis.dipole.as_ref();
    let eps = &model.basis.energies;
    w.columns_mut().for_each(|(p, out)| {
        let a = active.indices()[p];
        let xin = x.column(p);
        {
            let xr = MatRef::from_row_major_slice(xin, n_m, n_t);
            let mut wr = MatMut::from_row_major_slice_mut(out, n_m, n_t);
            for (rr, cc) in &blocks {
                faer::linalg::matmul::matmul(
                    wr.rb_mut().subrows_mut(rr.start, rr.len()),
                    faer::Accum::Add,
                    mu.submatrix(rr.start, cc.start, rr.len(), cc.len()),
                    xr.subrows(cc.start, cc.len()),
                    C64::new(1.0, 0.0),
                    Par::Seq,
                );
            }
        }
        for r in 0..n_m {
            let row = &mut out[r * n_t..(r + 1) * n_t];
            let xs = &xin[r * n_t..(r + 1) * n_t];
            let e = eps[r];
            let mu_ra = mu[(r, a)];
            let damp = !active.contains(r);
            let base = if r == a { e } else { ZERO };
            for t in 0..n_t {
                let mut z = e * xs[t] - (row[t] + mu_ra) * smp.field[t] + base;
                if damp {
                    z -= I * smp.absorber[t] * xs[t];
                }
                row[t] = z;
            }
        }
    });
    w
}

fn heff_from(w: &BlockSeries, active: &ActiveSpace) -> EffectiveHamiltonianSeries {
    let m = active.m();
    let n_t = w.n_t();
    let mut h = EffectiveHamiltonianSeries::zeros(m, n_t);
    for (k, &a) in active.indices().iter().enumerate() {
        for p in 0..m {
            h.data[(k * m + p) * n_t..(k * m + p + 1) * n_t].copy_from_slice(w.series(a, p));
        }
    }
    h
}

/// Q₀[H − XH]_diag Q₀ without the time absorber.
fn dressed_bare(model: &Model, active: &ActiveSpace, smp: &Samples, x: &BlockSeries) -> DiagonalSeries {
    let n_m = x.n_rows();
    let n_t = x.n_t();
    let mu = &model.basis.dipole;
    let mut data = vec![ZERO; n_m * n_t];
    data.par_chunks_mut(n_t).enumerate().for_each(|(q, row)| {
        if active.contains(q) {
            return;
        }
        let mqq = mu[(q, q)];
        let eq = model.basis.energies[q];
        for (t, z) in row.iter_mut().enumerate() {
            let mut s = mqq;
            for (p, &a) in active.indices().iter().enumerate() {
                s -= x.get(q, p, t) * mu[(a, q)];
            }
            *z = eq - s * smp.field[t];
        }
    });
    DiagonalSeries { n_m, n_t, data }
}

/// Turns W into Δ = Q₀W − X·H_eff − iħẊ in place.
fn residual_in_place(w: &mut BlockSeries, x: &BlockSeries, heff: &EffectiveHamiltonianSeries, active: &ActiveSpace, fourier: &Fourier, hbar: f64) {
    let n_m = x.n_rows();
    let n_t = x.n_t();
    let m = active.m();
    let complement = active.complement();
    w.columns_mut().for_each_init(
        || (fourier.scratch(), vec![ZERO; n_t]),
        |(scratch, tmp), (p, out)| {
            for &a in active.indices() {
                out[a * n_t..(a + 1) * n_t].fill(ZERO);
            }
            for k in 0..m {
                let h = heff.element(k, p);
                let xk = x.column(k);
                for &q in &complement {
                    let row = &mut out[q * n_t..(q + 1) * n_t];
                    let xs = &xk[q * n_t..(q + 1) * n_t];
                    for t in 0..n_t {
                        row[t] -= xs[t] * h[t];
                    }
                }
            }
            let xp = x.column(p);
            for &q in &complement {
                tmp.copy_from_slice(&xp[q * n_t..(q + 1) * n_t]);
                fourier.differentiate_in_place(tmp, scratch);
                let row = &mut out[q * n_t..(q + 1) * n_t];
                for t in 0..n_t {
                    row[t] -= I * hbar * tmp[t];
                }
            }
        },
    );
    let _ = n_m;
}

/// Turns W into Q₀W − H̃X in place (absorber included in H̃, so it cancels).
fn source_in_place(w: &mut BlockSeries, x: &BlockSeries, dressed: &DiagonalSeries, active: &ActiveSpace) {
    let n_t = x.n_t();
    let complement = active.complement();
    w.columns_mut().for_each(|(p, out)| {
        for &a in active.indices() {
            out[a * n_t..(a + 1) * n_t].fill(ZERO);
        }
        let xp = x.column(p);
        for &q in &complement {
            let row = &mut out[q * n_t..(q + 1) * n_t];
            let xs = &xp[q * n_t..(q + 1) * n_t];
            for ((r, &xv), &d) in row.iter_mut().zip(xs).zip(dressed.row(q)) {
                *r -= d * xv;
            }
        }
    });
}

struct Stage {
    delta: BlockSeries,
    heff: EffectiveHamiltonianSeries,
    dressed: DiagonalSeries,
}

fn stage(model: &Model, active: &ActiveSpace, fourier: &Fourier, smp: &Samples, x: &BlockSeries) -> Stage {
    let mut w = apply_hamiltonian(model, active, smp, x);
    let heff = heff_from(&w, active);
    let dressed = dressed_bare(model, active, smp, x);
    residual_in_place(&mut w, x, &heff, active, fourier, model.hbar);
    Stage { delta: w, heff, dressed }
}

/// Like [`stage`] but `delta` holds Q₀W − H̃X.
fn stage_direct(model: &Model, active: &ActiveSpace, smp: &Samples, x: &BlockSeries) -> Stage {
    let mut w = apply_hamiltonian(model, active, smp, x);
    let heff = heff_from(&w, active);
    let dressed = dressed_bare(model, active, smp, x);
    let mut full = dressed.clone();
    add_absorber(&mut full, active, smp, -1.0);
    source_in_place(&mut w, x, &full, active);
    Stage { delta: w, heff, dressed }
}

/// Δ(t) = Q₀(1 − X)H_F(1 + X)P₀ on the grid.
pub fn residual(x: &ReducedWaveOperator, model: &Model, grid: &TimeGrid, active: &ActiveSpace) -> Result<BlockSeries> {
    check_dims(model, grid, active, x)?;
    let fourier = Fourier::new(*grid);
    let smp = Samples::new(model, grid);
    Ok(stage(model, active, &fourier, &smp, &x.samples).delta)
}

/// H_eff(t) = P₀H(t)(P₀ + X(t)).
pub fn effective_hamiltonian(x: &ReducedWaveOperator, model: &Model, grid: &TimeGrid, active: &ActiveSpace) -> Result<EffectiveHamiltonianSeries> {
    check_dims(model, grid, active, x)?;
    let smp = Samples::new(model, grid);
    Ok(heff_from(&apply_hamiltonian(model, active, &smp, &x.samples), active))
}

/// Q₀[H(t) − X(t)H(t)]_diag Q₀ including the time absorber.
pub fn dressed_diagonal(x: &ReducedWaveOperator, model: &Model, grid: &TimeGrid, active: &ActiveSpace) -> Result<DiagonalSeries> {
    check_dims(model, grid, active, x)?;
    let smp = Samples::new(model, grid);
    let mut d = dressed_bare(model, active, &smp, &x.samples);
    add_absorber(&mut d, active, &smp, -1.0);
    Ok(d)
}

fn add_absorber(d: &mut DiagonalSeries, active: &ActiveSpace, smp: &Samples, sign: f64) {
    let n_t = d.n_t;
    for q in active.complement() {
        for (z, v) in d.data[q * n_t..(q + 1) * n_t].iter_mut().zip(&smp.absorber) {
            *z += I * (sign * v);
        }
    }
}

/// Per-step exponent used by [`propagate_effective`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// exp of the step integral of H_eff only.
    Integral,
    /// Adds the first-moment commutator term (fourth-order Magnus).
    Commutator,
}

/// Product of per-step exponentials of the spectrally integrated H_eff.
pub fn propagate_effective(heff: &EffectiveHamiltonianSeries, grid: &TimeGrid, hbar: f64, rule: StepRule) -> Propagators {
    let m = heff.m;
    let n_t = heff.n_t;
    let nu = n_t + 1;
    let fourier = Fourier::new(*grid);
    let mut scratch = fourier.scratch();
    let dt = grid.dt();
    // prefix integrals F_j and, for the commutator rule, G_j = ∫₀^{t_j} F
    let mut prefix = vec![ZERO; m * m * nu];
    let mut second = vec![ZERO; if rule == StepRule::Commutator { m * m * nu } else { 0 }];
    for e in 0..m * m {
        let src = &heff.data[e * n_t..(e + 1) * n_t];
        let dst = &mut prefix[e * nu..(e + 1) * nu];
        dst[..n_t].copy_from_slice(src);
        let end = fourier.integrate_in_place(&mut dst[..n_t], &mut scratch);
        dst[n_t] = end;
        if rule == StepRule::Commutator {
            let mean = end / grid.total();
            let g = &mut second[e * nu..(e + 1) * nu];
            for j in 0..n_t {
                g[j] = dst[j] - mean * (j as f64 * dt);
            }
            let periodic_end = fourier.integrate_in_place(&mut g[..n_t], &mut scratch);
            let total = grid.total();
            for j in 0..n_t {
                let t = j as f64 * dt;
                g[j] += mean * (0.5 * t * t);
            }
            g[n_t] = periodic_end + mean * (0.5 * total * total);
        }
    }
    let mut forward = Vec::with_capacity(nu);
    let mut inverse = Vec::with_capacity(nu);
    forward.push(linalg::identity(m));
    inverse.push(linalg::identity(m));
    let mut fallback_steps = 0;
    let s = C64::new(0.0, -1.0 / hbar);
    for k in 1..=n_t {
        let a0 = Mat::from_fn(m, m, |r, c| {
            let o = (r * m + c) * nu;
            prefix[o + k] - prefix[o + k - 1]
        });
        let step = match rule {
            StepRule::Integral => a0,
            StepRule::Commutator => {
                // M₁ = ∫ (t − t_mid) H over the step
                let m1 = Mat::from_fn(m, m, |r, c| {
                    let o = (r * m + c) * nu;
                    (prefix[o + k] + prefix[o + k - 1]) * (0.5 * dt) - (second[o + k] - second[o + k - 1])
                });
                let comm = &(&m1 * &a0) - &(&a0 * &m1);
                &a0 - &linalg::scale(comm.as_ref(), C64::new(0.0, 1.0 / (hbar * dt)))
            }
        };
        let e = linalg::exp_pair(step.as_ref(), s);
        if e.fallback {
            fallback_steps += 1;
        }
        let u = &e.forward * &forward[k - 1];
        let ui = &inverse[k - 1] * &e.backward;
        forward.push(u);
        inverse.push(ui);
    }
    Propagators { forward, inverse, fallback_steps }
}

/// Shift σ in [0, 2πħ/T) maximising the smallest spectral denominator.
pub fn auto_shift(model: &Model, grid: &TimeGrid, active: &ActiveSpace) -> f64 {
    let period = 2.0 * std::f64::consts::PI * model.hbar / grid.total();
    let comp = active.complement();
    if comp.is_empty() {
        return 0.0;
    }
    let samples = 8192;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for s in 0..samples {
        let sigma = period * s as f64 / samples as f64;
        let worst = comp
            .iter()
            .map(|&q| {
                let e = model.basis.energies[q];
                let r = (e.re + sigma).rem_euclid(period);
                let d = r.min(period - r);
                d.hypot(e.im)
            })
            .fold(f64::INFINITY, f64::min);
        if worst > best.0 {
            best = (worst, sigma);
        }
    }
    best.1
}

/// δX on the grid and at t = T.
pub struct Increment {
    pub samples: BlockSeries,
    pub end: CMat,
}

/// Spectral solution of the linearised increment equation. `dressed` is the
/// full dressed diagonal (absorber included); the absorber is dropped inside
/// Λ and kept in the left propagator.
#[allow(clippy::too_many_arguments)]
pub fn increment(
    model: &Model,
    grid: &TimeGrid,
    active: &ActiveSpace,
    delta: &BlockSeries,
    heff: &EffectiveHamiltonianSeries,
    dressed: &DiagonalSeries,
    sigma: f64,
    tol: f64,
) -> Result<Increment> {
    let smp = Samples::new(model, grid);
    let mut bare = dressed.clone();
    add_absorber(&mut bare, active, &smp, 1.0);
    let fourier = Fourier::new(*grid);
    let props = propagate_effective(heff, grid, model.hbar, StepRule::Commutator);
    increment_inner(model, grid, active, &fourier, delta.clone(), &bare, &props, sigma, tol)
}

#[allow(clippy::too_many_arguments)]
fn increment_inner(
    model: &Model,
    grid: &TimeGrid,
    active: &ActiveSpace,
    fourier: &Fourier,
    mut delta: BlockSeries,
    bare: &DiagonalSeries,
    props: &Propagators,
    sigma: f64,
    tol: f64,
) -> Result<Increment> {
    let hbar = model.hbar;
    let n_m = delta.n_rows();
    let n_t = delta.n_t();
    let m = active.m();
    let comp = active.complement();
    let omega = fourier.omega();
    let total = grid.total();
    let dt = grid.dt();

    for &q in &comp {
        let base = model.basis.energies[q] + sigma;
        for (k, &w) in omega.iter().enumerate() {
            let d = (base + hbar * w).norm();
            if !(d >= tol) {
                return Err(Error::ResonantDenominator { state: q, bin: k, value: d });
            }
        }
    }

    // phase integrals of δH̃ (absorber excluded)
    let mut phase = vec![ZERO; n_m * n_t];
    let mut phase_end = vec![ZERO; n_m];
    {
        let mut scratch = fourier.scratch();
        for &q in &comp {
            let row = &mut phase[q * n_t..(q + 1) * n_t];
            let eq = model.basis.energies[q];
            for (z, d) in row.iter_mut().zip(bare.row(q)) {
                *z = d - eq;
            }
            phase_end[q] = fourier.integrate_in_place(row, &mut scratch);
        }
    }
    let damp: Vec<f64> = (0..n_t).map(|t| (-model.absorber_integral(grid.time(t)) / hbar).exp()).collect();
    let damp_end = (-model.absorber_integral(total) / hbar).exp();
    let u = Propagators::element_major(&props.forward, m);
    let uinv = Propagators::element_major(&props.inverse, m);
    let nu = n_t + 1;

    // Λ → Z → Y = L·[−Z(t) + e^{−i(ε+σ)t/ħ}Z(0)], per column
    let mut y = BlockSeries::zeros(n_m, m, n_t);
    let mut y_end = Mat::<C64>::zeros(n_m, m);
    let ends: Vec<Vec<(usize, C64)>> = y
        .columns_mut()
        .map_init(
            || fourier.scratch(),
            |scratch, (p, out)| {
                let mut ends = Vec::with_capacity(comp.len());
                for &q in &comp {
                    let row = &mut out[q * n_t..(q + 1) * n_t];
                    for k in 0..m {
                        let d = delta.series(q, k);
                        let ukp = &u[(k * m + p) * nu..(k * m + p) * nu + n_t];
                        for t in 0..n_t {
                            row[t] += d[t] * ukp[t];
                        }
                    }
                    let ph = &phase[q * n_t..(q + 1) * n_t];
                    for t in 0..n_t {
                        let tt = t as f64 * dt;
                        row[t] *= (I * (ph[t] - sigma * tt) / hbar).exp();
                    }
                    fourier.forward_raw(row, scratch);
                    let base = model.basis.energies[q] + sigma;
                    for (z, &w) in row.iter_mut().zip(omega) {
                        *z /= base + hbar * w;
                    }
                    fourier.inverse_raw(row, scratch);
                    let z0 = row[0];
                    for t in 0..n_t {
                        let tt = t as f64 * dt;
                        let left = (-I * (ph[t] - sigma * tt) / hbar).exp() * damp[t];
                        row[t] = left * (-row[t] + (-I * base * tt / hbar).exp() * z0);
                    }
                    let left = (-I * (phase_end[q] - sigma * total) / hbar).exp() * damp_end;
                    ends.push((q, left * z0 * ((-I * base * total / hbar).exp() - 1.0)));
                }
                ends
            },
        )
        .collect();
    for (p, e) in ends.into_iter().enumerate() {
        for (q, z) in e {
            y_end[(q, p)] = z;
        }
    }

    // δX = Y·U⁻¹, written over Δ
    delta.columns_mut().for_each(|(p, out)| {
        out.fill(ZERO);
        for k in 0..m {
            let uk = &uinv[(k * m + p) * nu..(k * m + p) * nu + n_t];
            let yk = y.column(k);
            for &q in &comp {
                let row = &mut out[q * n_t..(q + 1) * n_t];
                let ys = &yk[q * n_t..(q + 1) * n_t];
                for t in 0..n_t {
                    row[t] += ys[t] * uk[t];
                }
            }
        }
    });
    let uinv_end = &props.inverse[n_t];
    let end = &y_end * uinv_end;
    Ok(Increment { samples: delta, end })
}

/// Iterates residual → increment → X ← X + δX until the convergence factor
/// drops below `eps` or the divergence guard trips.
pub fn solve(model: &Model, grid: &TimeGrid, active: &ActiveSpace, options: &SolveOptions) -> Result<SolveReport> {
    options.validate()?;
    let n_m = model.basis.len();
    let m = active.m();
    let n_t = grid.len();
    let mut x = ReducedWaveOperator::zeros(n_m, m, n_t);
    check_dims(model, grid, active, &x)?;
    let fourier = Fourier::new(*grid);
    let smp = Samples::new(model, grid);
    let sigma = match options.shift {
        Shift::Auto => auto_shift(model, grid, active),
        Shift::Fixed(s) => s,
    };

    let mut factors = Vec::new();
    let mut outcome = Outcome::MaxIterations;
    let mut growth = 0;
    let mut coupling_norm = 0.0;
    for n in 0..=options.max_iterations {
        let st = match options.form {
            IncrementForm::Residual => stage(model, active, &fourier, &smp, &x.samples),
            IncrementForm::Direct => stage_direct(model, active, &smp, &x.samples),
        };
        if n == 0 {
            coupling_norm = st.delta.norm_sqr().sqrt();
        }
        let props = propagate_effective(&st.heff, grid, model.hbar, options.step_rule);
        let mut inc = increment_inner(model, grid, active, &fourier, st.delta, &st.dressed, &props, sigma, options.denominator_tol)?;
        if options.form == IncrementForm::Direct {
            inc.samples.data.par_iter_mut().zip(x.samples.data.par_iter()).for_each(|(d, xv)| *d -= xv);
            inc.end = &inc.end - &x.end;
        }
        let dn = inc.samples.norm_sqr();
        if n > 0 {
            let xn = x.samples.norm_sqr();
            let f = if dn == 0.0 { 0.0 } else { dn / xn };
            if let Some(&prev) = factors.last() {
                if f > prev {
                    growth += 1;
                } else {
                    growth = 0;
                }
            }
            factors.push(f);
        }
        add_into(&mut x, &inc);
        if n == 0 {
            continue;
        }
        let f = *factors.last().unwrap();
        if !f.is_finite() || !x.samples.is_finite() {
            outcome = Outcome::Diverged("non-finite values in the wave operator".into());
            break;
        }
        let xmax = x.samples.max_block_norm();
        if xmax > options.guard {
            outcome = Outcome::Diverged(format!("max ‖X(t)‖ = {xmax:.3e} exceeds guard {:.1e}", options.guard));
            break;
        }
        if f <= options.eps {
            outcome = Outcome::Converged;
            break;
        }
        if growth >= options.growth_limit {
            outcome = Outcome::Diverged(format!("convergence factor grew {growth} consecutive iterations"));
            break;
        }
        if n == options.max_iterations {
            break;
        }
    }

    let st = stage(model, active, &fourier, &smp, &x.samples);
    let rel = if coupling_norm > 0.0 { st.delta.norm_sqr().sqrt() / coupling_norm } else { st.delta.norm_sqr().sqrt() };
    let propagators = propagate_effective(&st.heff, grid, model.hbar, options.step_rule);
    Ok(SolveReport {
        outcome,
        factors,
        x,
        heff: st.heff,
        propagators,
        grid: *grid,
        active: active.clone(),
        shift: sigma,
        hbar: model.hbar,
        relative_residual: rel,
    })
}

fn add_into(x: &mut ReducedWaveOperator, inc: &Increment) {
    x.samples.data.par_iter_mut().zip(inc.samples.data.par_iter()).for_each(|(a, b)| *a += b);
    x.end = &x.end + &inc.end;
}

/// Basis-space samples of one propagated state, `N_t + 1` times (last is T).
#[derive(Debug, Clone)]
pub struct StateSeries {
    pub times: Vec<f64>,
    pub states: Vec<Vec<C64>>,
}

/// ψ(t_j) = (P₀ + X(t_j))·U(t_j, 0; H_eff)·ψ₀
pub fn propagate_state(report: &SolveReport, psi0: &[C64]) -> Result<StateSeries> {
    let active = &report.active;
    let n_m = active.basis_size();
    if psi0.len() != n_m {
        return Err(Error::InvalidInput(format!("initial state has length {}, basis has {n_m}", psi0.len())));
    }
    let scale = psi0.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    if active.complement().iter().any(|&q| psi0[q].norm() > 1e-14 * scale) {
        return Err(Error::OutsideActiveSpace);
    }
    let m = active.m();
    let c: Vec<C64> = active.indices().iter().map(|&a| psi0[a]).collect();
    let n_t = report.grid.len();
    let x = &report.x;
    let mut times = report.grid.times();
    times.push(report.grid.total());
    let states = (0..=n_t)
        .into_par_iter()
        .map(|j| {
            let u = &report.propagators.forward[j];
            let v: Vec<C64> = (0..m).map(|r| (0..m).map(|k| u[(r, k)] * c[k]).sum()).collect();
            let mut psi = vec![ZERO; n_m];
            for (k, &a) in active.indices().iter().enumerate() {
                psi[a] = v[k];
            }
            for (p, &vp) in v.iter().enumerate() {
                if vp == ZERO {
                    continue;
                }
                if j < n_t {
                    for (r, z) in psi.iter_mut().enumerate() {
                        *z += x.samples.get(r, p, j) * vp;
                    }
                } else {
                    for (r, z) in psi.iter_mut().enumerate() {
                        *z += x.end[(r, p)] * vp;
                    }
                }
            }
            psi
        })
        .collect();
    Ok(StateSeries { times, states })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn active_space_validation() {
        assert!(ActiveSpace::new(vec![], 3).is_err());
        assert!(ActiveSpace::new(vec![0, 3], 3).is_err());
        assert!(ActiveSpace::new(vec![1, 1], 3).is_err());
        let a = ActiveSpace::new(vec![2, 0], 4).unwrap();
        assert_eq!(a.complement(), vec![1, 3]);
        assert_eq!(a.position(0), Some(1));
        assert!(!a.contains(7));
    }

    #[test]
    fn block_series_layout() {
        let mut b = BlockSeries::zeros(3, 2, 4);
        b.set(2, 1, 3, C64::new(1.0, 2.0));
        assert_eq!(b.series(2, 1)[3], C64::new(1.0, 2.0));
        assert_eq!(b.at(3)[(2, 1)], C64::new(1.0, 2.0));
        assert_eq!(b.max_block_norm(), 5f64.sqrt());
    }
}
