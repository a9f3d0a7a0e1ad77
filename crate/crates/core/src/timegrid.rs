//! Uniform periodic time grid on `[0, T)` with its signed frequency grid,
//! and the FFT primitives used by the solver.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    total: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(total: f64, n: usize) -> Result<Self> {
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidGrid(format!("duration must be positive, got {total}")));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("N_t must be a power of two >= 2, got {n}")));
        }
        Ok(TimeGrid { total, n })
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dt(&self) -> f64 {
        self.total / self.n as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.total / self.n as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.time(j)).collect()
    }

    /// Signed frequency of bin `k`; the Nyquist bin carries `−N/(2T)`.
    pub fn freq(&self, k: usize) -> f64 {
        if k < self.n / 2 {
            k as f64 / self.total
        } else {
            (k as f64 - self.n as f64) / self.total
        }
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.freq(k)).collect()
    }

    /// Index of the last grid point with `t_j <= t`.
    pub fn index_at_or_before(&self, t: f64) -> usize {
        let j = (t / self.dt() + 1e-9).floor();
        (j.max(0.0) as usize).min(self.n - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Time,
    Frequency,
}

impl Domain {
    fn name(self) -> &'static str {
        match self {
            Domain::Time => "time",
            Domain::Frequency => "frequency",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSeries {
    pub grid: TimeGrid,
    pub domain: Domain,
    pub data: Vec<C64>,
}

impl SpectralSeries {
    pub fn new(grid: TimeGrid, domain: Domain, data: Vec<C64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: data.len() });
        }
        Ok(SpectralSeries { grid, domain, data })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> C64) -> Self {
        let data = grid.times().into_iter().map(f).collect();
        SpectralSeries { grid, domain: Domain::Time, data }
    }

    fn expect(&self, d: Domain) -> Result<()> {
        if self.data.len() != self.grid.len() {
            return Err(Error::LengthMismatch { expected: self.grid.len(), got: self.data.len() });
        }
        if self.domain != d {
            return Err(Error::DomainMismatch { expected: d.name(), found: self.domain.name() });
        }
        Ok(())
    }
}

/// Planned transforms of one length. Cheap to clone and shareable across threads.
#[derive(Clone)]
pub struct Fourier {
    grid: TimeGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    omega: Vec<f64>,
}

impl std::fmt::Debug for Fourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fourier").field("grid", &self.grid).finish()
    }
}

impl Fourier {
    pub fn new(grid: TimeGrid) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid.len());
        let inv = planner.plan_fft_inverse(grid.len());
        let omega = (0..grid.len()).map(|k| 2.0 * PI * grid.freq(k)).collect();
        Fourier { grid, fwd, inv, omega }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Angular frequencies `2πν_k`.
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn scratch(&self) -> Vec<C64> {
        let n = self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len());
        vec![C64::new(0.0, 0.0); n]
    }

    /// Unnormalised forward transform, kernel `e^{−2πijk/N}`.
    pub fn forward_raw(&self, x: &mut [C64], scratch: &mut [C64]) {
        self.fwd.process_with_scratch(x, scratch);
    }

    /// Inverse transform including the `1/N` factor.
    pub fn inverse_raw(&self, x: &mut [C64], scratch: &mut [C64]) {
        self.inv.process_with_scratch(x, scratch);
        let s = 1.0 / x.len() as f64;
        x.iter_mut().for_each(|z| *z *= s);
    }

    /// Prefix integrals `F_j = ∫₀^{t_j} f` in place; returns `∫₀^T f`.
    pub fn integrate_in_place(&self, x: &mut [C64], scratch: &mut [C64]) -> C64 {
        let n = x.len();
        self.forward_raw(x, scratch);
        let mean = x[0] / n as f64;
        x[0] = C64::new(0.0, 0.0);
        for k in 1..n {
            x[k] /= C64::new(0.0, self.omega[k]);
        }
        self.inverse_raw(x, scratch);
        let p0 = x[0];
        let dt = self.grid.dt();
        for (j, z) in x.iter_mut().enumerate() {
            *z = *z - p0 + mean * (j as f64 * dt);
        }
        mean * self.grid.total()
    }

    /// Spectral time derivative in place.
    pub fn differentiate_in_place(&self, x: &mut [C64], scratch: &mut [C64]) {
        self.forward_raw(x, scratch);
        for (z, &w) in x.iter_mut().zip(&self.omega) {
            *z *= C64::new(0.0, w);
        }
        self.inverse_raw(x, scratch);
    }
}

fn check_len(grid: &TimeGrid, s: &SpectralSeries) -> Result<()> {
    if s.grid.len() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), got: s.grid.len() });
    }
    Ok(())
}

/// Unitary forward transform (`1/√N`).
pub fn fft_forward(series: &SpectralSeries) -> Result<SpectralSeries> {
    series.expect(Domain::Time)?;
    let f = Fourier::new(series.grid);
    check_len(f.grid(), series)?;
    let mut data = series.data.clone();
    let mut scratch = f.scratch();
    f.forward_raw(&mut data, &mut scratch);
    let s = 1.0 / (data.len() as f64).sqrt();
    data.iter_mut().for_each(|z| *z *= s);
    Ok(SpectralSeries { grid: series.grid, domain: Domain::Frequency, data })
}

/// Unitary inverse transform (`1/√N`).
pub fn fft_inverse(series: &SpectralSeries) -> Result<SpectralSeries> {
    series.expect(Domain::Frequency)?;
    let f = Fourier::new(series.grid);
    let mut data = series.data.clone();
    let mut scratch = f.scratch();
    f.inverse_raw(&mut data, &mut scratch);
    let s = (data.len() as f64).sqrt();
    data.iter_mut().for_each(|z| *z *= s);
    Ok(SpectralSeries { grid: series.grid, domain: Domain::Time, data })
}

pub fn spectral_cumulative_integral(samples: &SpectralSeries) -> Result<SpectralSeries> {
    samples.expect(Domain::Time)?;
    let f = Fourier::new(samples.grid);
    let mut data = samples.data.clone();
    let mut scratch = f.scratch();
    f.integrate_in_place(&mut data, &mut scratch);
    Ok(SpectralSeries { grid: samples.grid, domain: Domain::Time, data })
}

pub fn spectral_derivative(samples: &SpectralSeries) -> Result<SpectralSeries> {
    samples.expect(Domain::Time)?;
    let f = Fourier::new(samples.grid);
    let mut data = samples.data.clone();
    let mut scratch = f.scratch();
    f.differentiate_in_place(&mut data, &mut scratch);
    Ok(SpectralSeries { grid: samples.grid, domain: Domain::Time, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        let g = TimeGrid::new(8.0, 8).unwrap();
        assert_eq!(g.times(), vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(g.freqs(), vec![0.0, 0.125, 0.25, 0.375, -0.5, -0.375, -0.25, -0.125]);
        let g = TimeGrid::new(1.0, 2).unwrap();
        assert_eq!(g.times(), vec![0.0, 0.5]);
        assert_eq!(g.freqs(), vec![0.0, -1.0]);
        assert_eq!(TimeGrid::new(640.0, 2048).unwrap().dt(), 0.3125);
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(1.0, 7).is_err());
        assert!(TimeGrid::new(1.0, 12).is_err());
        assert!(TimeGrid::new(0.0, 8).is_err());
    }

    #[test]
    fn integral_of_constant_is_linear() {
        let g = TimeGrid::new(3.0, 16).unwrap();
        let s = SpectralSeries::from_fn(g, |_| C64::new(2.5, -1.0));
        let f = spectral_cumulative_integral(&s).unwrap();
        for (j, z) in f.data.iter().enumerate() {
            let want = C64::new(2.5, -1.0) * g.time(j);
            assert!((z - want).norm() < 1e-13, "{j}");
        }
        assert_eq!(f.data[0], C64::new(0.0, 0.0));
    }

    #[test]
    fn integral_of_sine() {
        let t = 5.0;
        let g = TimeGrid::new(t, 64).unwrap();
        let w = 2.0 * PI / t;
        let s = SpectralSeries::from_fn(g, |x| C64::new((w * x).sin(), 0.0));
        let f = spectral_cumulative_integral(&s).unwrap();
        for (j, z) in f.data.iter().enumerate() {
            let want = (1.0 - (w * g.time(j)).cos()) / w;
            assert!((z.re - want).abs() < 1e-12 && z.im.abs() < 1e-12);
        }
    }

    #[test]
    fn forward_concentrates_constant_and_single_mode() {
        let g = TimeGrid::new(2.0, 16).unwrap();
        let c = fft_forward(&SpectralSeries::from_fn(g, |_| C64::new(1.0, 0.0))).unwrap();
        assert!((c.data[0] - C64::new(4.0, 0.0)).norm() < 1e-12);
        assert!(c.data[1..].iter().all(|z| z.norm() < 1e-12));
        let m = fft_forward(&SpectralSeries::from_fn(g, |x| C64::new(0.0, 2.0 * PI * x / 2.0).exp())).unwrap();
        for (k, z) in m.data.iter().enumerate() {
            if (g.freq(k) - 0.5).abs() < 1e-12 {
                assert!((z.norm() - 4.0).abs() < 1e-12);
            } else {
                assert!(z.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn domain_tags_are_checked() {
        let g = TimeGrid::new(1.0, 8).unwrap();
        let s = SpectralSeries::from_fn(g, |_| C64::new(1.0, 0.0));
        assert!(fft_inverse(&s).is_err());
        let f = fft_forward(&s).unwrap();
        assert!(fft_forward(&f).is_err());
        assert!(SpectralSeries::new(g, Domain::Time, vec![C64::new(0.0, 0.0); 4]).is_err());
    }
}
