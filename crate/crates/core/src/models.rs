//! Molecular models: potential curves on a Fourier grid, the zeroth-order
//! eigenbasis with its dipole matrix, laser pulses and absorbers.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::waveop::ActiveSpace;

#[derive(Debug, Clone, PartialEq)]
pub enum CurveShape {
    /// `c0 + c1 R + c2 R² + c3 R³ + c4 R⁴`
    Quartic([f64; 5]),
    /// Natural cubic spline through strictly increasing samples.
    Tabulated { r: Vec<f64>, v: Vec<f64> },
    /// `asymptote + depth (e^{−2a(R−Re)} − 2e^{−a(R−Re)})`
    Morse { depth: f64, width: f64, center: f64, asymptote: f64 },
    /// `asymptote + amplitude e^{−rate (R−center)}`
    Exponential { amplitude: f64, rate: f64, center: f64, asymptote: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialCurve {
    pub shape: CurveShape,
    pub mass: f64,
    spline: Option<Vec<f64>>,
}

impl PotentialCurve {
    pub fn quartic(c: [f64; 5], mass: f64) -> Result<Self> {
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("quartic coefficients must be finite".into()));
        }
        Self::checked(CurveShape::Quartic(c), mass)
    }

    pub fn morse(depth: f64, width: f64, center: f64, asymptote: f64, mass: f64) -> Result<Self> {
        Self::checked(CurveShape::Morse { depth, width, center, asymptote }, mass)
    }

    pub fn exponential(amplitude: f64, rate: f64, center: f64, asymptote: f64, mass: f64) -> Result<Self> {
        Self::checked(CurveShape::Exponential { amplitude, rate, center, asymptote }, mass)
    }

    pub fn tabulated(r: Vec<f64>, v: Vec<f64>, mass: f64) -> Result<Self> {
        if r.len() != v.len() || r.len() < 2 {
            return Err(Error::InvalidInput("table needs at least two (r, v) rows".into()));
        }
        if r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("tabulated coordinates must be strictly increasing".into()));
        }
        if v.iter().chain(&r).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("table contains non-finite values".into()));
        }
        let m = natural_spline(&r, &v);
        let mut c = Self::checked(CurveShape::Tabulated { r, v }, mass)?;
        c.spline = Some(m);
        Ok(c)
    }

    /// Two whitespace- or comma-separated columns; `#` starts a comment.
    pub fn from_table_text(text: &str, mass: f64) -> Result<Self> {
        let mut r = Vec::new();
        let mut v = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            if cols.len() != 2 {
                return Err(Error::InvalidInput(format!("line {}: expected two columns", ln + 1)));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::InvalidInput(format!("line {}: bad number '{s}'", ln + 1)));
            r.push(parse(cols[0])?);
            v.push(parse(cols[1])?);
        }
        Self::tabulated(r, v, mass)
    }

    fn checked(shape: CurveShape, mass: f64) -> Result<Self> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidInput(format!("reduced mass must be positive, got {mass}")));
        }
        Ok(PotentialCurve { shape, mass, spline: None })
    }

    /// Potential at `r`; `None` outside a tabulated range.
    pub fn eval(&self, r: f64) -> Option<f64> {
        match &self.shape {
            CurveShape::Quartic(c) => Some(c[0] + r * (c[1] + r * (c[2] + r * (c[3] + r * c[4])))),
            CurveShape::Morse { depth, width, center, asymptote } => {
                let e = (-width * (r - center)).exp();
                Some(asymptote + depth * (e * e - 2.0 * e))
            }
            CurveShape::Exponential { amplitude, rate, center, asymptote } => Some(asymptote + amplitude * (-rate * (r - center)).exp()),
            CurveShape::Tabulated { r: xs, v } => {
                let n = xs.len();
                if r < xs[0] || r > xs[n - 1] {
                    return None;
                }
                let m = self.spline.as_ref()?;
                let i = match xs.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
                    Ok(i) => return Some(v[i]),
                    Err(i) => i - 1,
                };
                let h = xs[i + 1] - xs[i];
                let a = (xs[i + 1] - r) / h;
                let b = (r - xs[i]) / h;
                Some(a * v[i] + b * v[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0)
            }
        }
    }
}

fn natural_spline(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let rhs = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
        c[i] = h1 / diag;
        d[i] = (rhs - h0 * d[i - 1]) / diag;
    }
    for i in (1..n - 1).rev() {
        m[i] = d[i] - c[i] * m[i + 1];
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialCap {
    pub onset: f64,
    pub strength: f64,
    pub exponent: f64,
}

impl RadialCap {
    /// Ramp `strength·((r − onset)/(end − onset))^exponent` above the onset.
    pub fn value(&self, r: f64, end: f64) -> f64 {
        if r <= self.onset || end <= self.onset {
            0.0
        } else {
            self.strength * ((r - self.onset) / (end - self.onset)).powf(self.exponent)
        }
    }
}

/// Periodic uniform coordinate grid `x_k = start + k (end − start)/points`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateGrid {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl CoordinateGrid {
    pub fn dx(&self) -> f64 {
        (self.end - self.start) / self.points as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.points).map(|k| self.start + k as f64 * self.dx()).collect()
    }
}

/// Fourier-grid Hamiltonian: kinetic energy from the discrete second
/// derivative in momentum space plus the local potential and CAP.
pub fn build_grid_hamiltonian(curve: &PotentialCurve, grid: &CoordinateGrid, cap: Option<&RadialCap>, hbar: f64) -> Result<CMat> {
    let n = grid.points;
    if n < 16 {
        return Err(Error::InvalidInput(format!("coordinate grid needs at least 16 points, got {n}")));
    }
    if !(grid.end > grid.start) {
        return Err(Error::InvalidInput("coordinate grid end must exceed start".into()));
    }
    let xs = grid.points();
    let mut v = Vec::with_capacity(n);
    for &x in &xs {
        match curve.eval(x) {
            Some(y) if y.is_finite() => v.push(y),
            _ => return Err(Error::InvalidInput(format!("potential undefined at r = {x}"))),
        }
    }
    let len = grid.end - grid.start;
    let dx = grid.dx();
    let k: Vec<f64> = (0..n)
        .map(|l| {
            let f = if l < n / 2 { l as f64 } else { l as f64 - n as f64 };
            2.0 * PI * f / len
        })
        .collect();
    let pref = hbar * hbar / (2.0 * curve.mass) / n as f64;
    let kin: Vec<f64> = (0..n).map(|d| pref * k.iter().map(|&kl| kl * kl * (kl * d as f64 * dx).cos()).sum::<f64>()).collect();
    Ok(Mat::from_fn(n, n, |i, j| {
        let d = if i >= j { i - j } else { j - i };
        let mut z = C64::new(kin[d], 0.0);
        if i == j {
            z += v[i];
            if let Some(c) = cap {
                z -= C64::new(0.0, c.value(xs[i], grid.end));
            }
        }
        z
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisMode {
    Hermitian,
    ComplexSymmetric,
}

/// Eigenpairs of one surface, sorted by real part.
#[derive(Debug, Clone)]
pub struct Eigenbasis {
    pub energies: Vec<C64>,
    pub vectors: CMat,
    pub mode: BasisMode,
}

pub fn diagonalize_h0(matrix: &CMat, mode: BasisMode) -> Result<Eigenbasis> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::InvalidInput("matrix must be square".into()));
    }
    let tol = 1e-10 * linalg::max_abs(matrix.as_ref()).max(1.0);
    match mode {
        BasisMode::Hermitian => {
            if !linalg::is_hermitian(matrix.as_ref(), tol) {
                return Err(Error::InvalidInput("matrix is not hermitian".into()));
            }
            let (vals, vecs) = linalg::eigh(matrix.as_ref()).ok_or(Error::EigenFailure)?;
            Ok(Eigenbasis { energies: vals.into_iter().map(|e| C64::new(e, 0.0)).collect(), vectors: vecs, mode })
        }
        BasisMode::ComplexSymmetric => {
            if !linalg::is_symmetric(matrix.as_ref(), tol) {
                return Err(Error::InvalidInput("matrix is not complex symmetric".into()));
            }
            let (vals, vecs) = linalg::eig(matrix.as_ref()).ok_or(Error::EigenFailure)?;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| vals[a].re.partial_cmp(&vals[b].re).unwrap().then(vals[a].im.partial_cmp(&vals[b].im).unwrap()));
            let mut out = Mat::zeros(n, n);
            for (jn, &j) in order.iter().enumerate() {
                let c: C64 = (0..n).map(|k| vecs[(k, j)] * vecs[(k, j)]).sum();
                let nrm: f64 = (0..n).map(|k| vecs[(k, j)].norm_sqr()).sum();
                if c.norm() < 1e-12 * nrm {
                    return Err(Error::SelfOrthogonal(jn));
                }
                let s = c.sqrt().inv();
                for k in 0..n {
                    out[(k, jn)] = vecs[(k, j)] * s;
                }
            }
            Ok(Eigenbasis { energies: order.iter().map(|&j| vals[j]).collect(), vectors: out, mode })
        }
    }
}

/// Which surface a basis state belongs to and its index on that surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLabel {
    pub surface: usize,
    pub level: usize,
}

/// The N_m-state zeroth-order basis with the dipole matrix expressed in it.
#[derive(Debug, Clone)]
pub struct ZerothOrderBasis {
    pub energies: Vec<C64>,
    pub mode: BasisMode,
    pub dipole: CMat,
    pub labels: Vec<StateLabel>,
    pub bound: Vec<bool>,
    /// Grid representation of the basis vectors (block per surface), if any.
    pub vectors: Option<CMat>,
}

impl ZerothOrderBasis {
    /// Basis given directly by energies and a dipole matrix.
    pub fn from_parts(energies: Vec<C64>, dipole: CMat, mode: BasisMode) -> Result<Self> {
        let n = energies.len();
        if dipole.nrows() != n || dipole.ncols() != n {
            return Err(Error::InvalidInput("dipole matrix shape does not match energies".into()));
        }
        if mode == BasisMode::Hermitian && energies.iter().any(|e| e.im != 0.0) {
            return Err(Error::InvalidInput("hermitian basis requires real energies".into()));
        }
        let labels = (0..n).map(|level| StateLabel { surface: 0, level }).collect();
        Ok(ZerothOrderBasis { energies, mode, dipole, labels, bound: vec![true; n], vectors: None })
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn index_of(&self, surface: usize, level: usize) -> Option<usize> {
        self.labels.iter().position(|l| l.surface == surface && l.level == level)
    }

    pub fn bound_states(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.bound[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DipoleFunction {
    /// μ(R) = value
    Constant(f64),
    /// μ(R) = slope·R + offset
    Linear { slope: f64, offset: f64 },
    /// μ(R) = (slope·R + offset)·exp(−(R/range)²)
    DampedLinear { slope: f64, offset: f64, range: f64 },
}

impl DipoleFunction {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            DipoleFunction::Constant(c) => c,
            DipoleFunction::Linear { slope, offset } => slope * r + offset,
            DipoleFunction::DampedLinear { slope, offset, range } => (slope * r + offset) * (-(r / range).powi(2)).exp(),
        }
    }
}

/// Two electronic surfaces coupled by a transition dipole.
#[derive(Debug, Clone)]
pub struct MolecularModel {
    pub lower: PotentialCurve,
    pub upper: PotentialCurve,
    pub grid: CoordinateGrid,
    pub cap: Option<RadialCap>,
    pub dipole: DipoleFunction,
    pub dipole_scale: f64,
    pub states: [usize; 2],
    /// Lower-surface states with Re ε below this and |Im ε| < `bound_tolerance` are bound.
    pub dissociation_limit: Option<f64>,
    pub bound_tolerance: f64,
    pub hbar: f64,
}

impl MolecularModel {
    pub fn build(&self) -> Result<ZerothOrderBasis> {
        let mode = if self.cap.is_some() { BasisMode::ComplexSymmetric } else { BasisMode::Hermitian };
        let n = self.grid.points;
        if self.states[0] > n || self.states[1] > n {
            return Err(Error::InvalidInput(format!("at most {n} states per surface on this grid")));
        }
        let hg = build_grid_hamiltonian(&self.lower, &self.grid, self.cap.as_ref(), self.hbar)?;
        let hu = build_grid_hamiltonian(&self.upper, &self.grid, self.cap.as_ref(), self.hbar)?;
        let bg = diagonalize_h0(&hg, mode)?;
        let bu = diagonalize_h0(&hu, mode)?;
        let (ng, nu) = (self.states[0], self.states[1]);
        let nm = ng + nu;
        let xs = self.grid.points();
        let mu: Vec<f64> = xs.iter().map(|&x| self.dipole.eval(x) * self.dipole_scale).collect();
        let mut dipole = Mat::zeros(nm, nm);
        for i in 0..ng {
            for j in 0..nu {
                let mut s = C64::new(0.0, 0.0);
                for k in 0..n {
                    let left = match mode {
                        BasisMode::Hermitian => bg.vectors[(k, i)].conj(),
                        BasisMode::ComplexSymmetric => bg.vectors[(k, i)],
                    };
                    s += left * mu[k] * bu.vectors[(k, j)];
                }
                dipole[(i, ng + j)] = s;
                dipole[(ng + j, i)] = match mode {
                    BasisMode::Hermitian => s.conj(),
                    BasisMode::ComplexSymmetric => s,
                };
            }
        }
        let mut energies: Vec<C64> = bg.energies[..ng].to_vec();
        energies.extend_from_slice(&bu.energies[..nu]);
        if mode == BasisMode::Hermitian {
            energies.iter_mut().for_each(|e| e.im = 0.0);
        }
        let labels = (0..ng).map(|level| StateLabel { surface: 0, level }).chain((0..nu).map(|level| StateLabel { surface: 1, level })).collect();
        let bound = (0..nm)
            .map(|i| match self.dissociation_limit {
                None => true,
                Some(lim) => i < ng && energies[i].re < lim && energies[i].im.abs() < self.bound_tolerance,
            })
            .collect();
        let mut vectors = Mat::zeros(2 * n, nm);
        for k in 0..n {
            for i in 0..ng {
                vectors[(k, i)] = bg.vectors[(k, i)];
            }
            for j in 0..nu {
                vectors[(n + k, ng + j)] = bu.vectors[(k, j)];
            }
        }
        Ok(ZerothOrderBasis { energies, mode, dipole, labels, bound, vectors: Some(vectors) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    pub amplitude: f64,
    pub frequency: f64,
    pub center: f64,
    pub width: f64,
}

impl PulseSpec {
    pub fn eval(&self, t: f64) -> f64 {
        let s = (t - self.center) / self.width;
        self.amplitude * (self.frequency * (t - self.center)).cos() * (-s * s).exp()
    }
}

pub fn eval_field(pulses: &[PulseSpec], t: f64) -> f64 {
    pulses.iter().map(|p| p.eval(t)).sum()
}

/// Imaginary ramp `V_max((t − T₀)/(T − T₀))^p` on `[T₀, T]`, applied to Q₀ only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeAbsorber {
    pub t0: f64,
    pub total: f64,
    pub exponent: f64,
    pub strength: f64,
}

impl TimeAbsorber {
    /// Strength giving `∫_{T₀}^{T} V dt = damping`.
    pub fn with_damping(t0: f64, total: f64, exponent: f64, damping: f64) -> Self {
        let strength = damping * (exponent + 1.0) / (total - t0);
        TimeAbsorber { t0, total, exponent, strength }
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= self.t0 {
            0.0
        } else {
            self.strength * ((t - self.t0) / (self.total - self.t0)).powf(self.exponent)
        }
    }

    /// `∫₀ᵗ V dt′`
    pub fn integral(&self, t: f64) -> f64 {
        if t <= self.t0 {
            0.0
        } else {
            let w = self.total - self.t0;
            self.strength * w / (self.exponent + 1.0) * ((t - self.t0) / w).powf(self.exponent + 1.0)
        }
    }
}

/// Everything the solver needs to evaluate H(t) in the zeroth-order basis.
#[derive(Debug, Clone)]
pub struct Model {
    pub basis: ZerothOrderBasis,
    pub pulses: Vec<PulseSpec>,
    pub absorber: Option<TimeAbsorber>,
    pub hbar: f64,
}

impl Model {
    pub fn new(basis: ZerothOrderBasis, pulses: Vec<PulseSpec>, absorber: Option<TimeAbsorber>) -> Self {
        Model { basis, pulses, absorber, hbar: 1.0 }
    }

    pub fn field(&self, t: f64) -> f64 {
        eval_field(&self.pulses, t)
    }

    pub fn absorber_at(&self, t: f64) -> f64 {
        self.absorber.map_or(0.0, |a| a.value(t))
    }

    pub fn absorber_integral(&self, t: f64) -> f64 {
        self.absorber.map_or(0.0, |a| a.integral(t))
    }

    /// Physical end of the run: T₀ with an absorber, else `total`.
    pub fn physical_end(&self, total: f64) -> f64 {
        self.absorber.map_or(total, |a| a.t0)
    }

    pub fn hamiltonian(&self, active: &ActiveSpace, t: f64) -> CMat {
        assemble_hamiltonian(&self.basis, &self.pulses, self.absorber.as_ref(), active, t)
    }
}

pub fn assemble_hamiltonian(basis: &ZerothOrderBasis, pulses: &[PulseSpec], absorber: Option<&TimeAbsorber>, active: &ActiveSpace, t: f64) -> CMat {
    let n = basis.len();
    let e = eval_field(pulses, t);
    let v = absorber.map_or(0.0, |a| a.value(t));
    let mut h = Mat::from_fn(n, n, |i, j| -basis.dipole[(i, j)] * e);
    for i in 0..n {
        h[(i, i)] += basis.energies[i];
        if v != 0.0 && !active.contains(i) {
            h[(i, i)] -= C64::new(0.0, v);
        }
    }
    h
}
