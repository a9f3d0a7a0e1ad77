//! Run configuration: a TOML document describing model, pulses, grid,
//! active space, absorber, solver and outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tdwo::models::{
    BasisMode, CoordinateGrid, DipoleFunction, MolecularModel, Model, PotentialCurve, PulseSpec, RadialCap, TimeAbsorber, ZerothOrderBasis,
};
use tdwo::timegrid::TimeGrid;
use tdwo::waveop::{ActiveSpace, Shift, SolveOptions};
use tdwo::C64;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub model: ModelSpec,
    #[serde(default)]
    pub pulses: Vec<PulseConfig>,
    pub grid: GridConfig,
    pub active: ActiveConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorber: Option<AbsorberConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Model section of a built-in preset.
    Preset { name: String },
    TwoSurface(TwoSurfaceConfig),
    Explicit(ExplicitConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoSurfaceConfig {
    #[serde(default = "one")]
    pub hbar: f64,
    pub mass: f64,
    pub states: [usize; 2],
    pub coordinates: CoordinateConfig,
    pub lower: CurveConfig,
    pub upper: CurveConfig,
    pub dipole: DipoleConfig,
    #[serde(default = "one")]
    pub dipole_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<CapConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dissociation_limit: Option<f64>,
    #[serde(default = "bound_tol")]
    pub bound_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitConfig {
    #[serde(default = "one")]
    pub hbar: f64,
    pub energies: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub energies_imag: Vec<f64>,
    pub dipole: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordinateConfig {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CurveConfig {
    Quartic { coefficients: [f64; 5] },
    Morse { depth: f64, width: f64, center: f64, #[serde(default)] asymptote: f64 },
    Exponential { amplitude: f64, rate: f64, center: f64, #[serde(default)] asymptote: f64 },
    Tabulated { file: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DipoleConfig {
    Constant { value: f64 },
    Linear { slope: f64, #[serde(default)] offset: f64 },
    DampedLinear { slope: f64, #[serde(default)] offset: f64, range: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapConfig {
    pub onset: f64,
    pub strength: f64,
    #[serde(default = "three")]
    pub exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub amplitude: f64,
    pub frequency: f64,
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub total: f64,
    pub points: usize,
}

/// Active states are the union, in this order, of explicit indices,
/// (surface, level) labels, all bound states, and the longest-lived
/// non-bound states of each surface.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub states: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub bound: bool,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub lower_continuum: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub upper_continuum: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbsorberConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    pub start: f64,
    #[serde(default = "two")]
    pub exponent: f64,
    /// Total damping ∫V dt; ignored when `strength` is set.
    #[serde(default = "damping")]
    pub damping: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShiftConfig {
    Named(String),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "eps")]
    pub eps: f64,
    #[serde(default = "max_iter")]
    pub max_iterations: usize,
    #[serde(default = "guard")]
    pub guard: f64,
    #[serde(default = "shift")]
    pub shift: ShiftConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { eps: eps(), max_iterations: max_iter(), guard: guard(), shift: shift() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "out_dir")]
    pub dir: PathBuf,
    /// (initial, final) basis-index pairs for populations.csv; empty means
    /// every active → active pair.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<[usize; 2]>,
    /// Extra FS-distance columns for sub-spaces of the active space.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fs_subspaces: Vec<Vec<usize>>,
    #[serde(default = "yes")]
    pub floquet: bool,
    /// Write populations every `stride` samples.
    #[serde(default = "one_usize")]
    pub stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: out_dir(), pairs: Vec::new(), fs_subspaces: Vec::new(), floquet: true, stride: 1 }
    }
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn two() -> f64 {
    2.0
}
fn three() -> f64 {
    3.0
}
fn yes() -> bool {
    true
}
fn is_false(b: &bool) -> bool {
    !*b
}
fn is_zero(n: &usize) -> bool {
    *n == 0
}
fn bound_tol() -> f64 {
    1e-6
}
fn damping() -> f64 {
    25.0
}
fn eps() -> f64 {
    1e-7
}
fn max_iter() -> usize {
    30
}
fn guard() -> f64 {
    1e6
}
fn shift() -> ShiftConfig {
    ShiftConfig::Named("auto".into())
}
fn out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let ModelSpec::TwoSurface(ts) = &mut self.model {
            for c in [&mut ts.lower, &mut ts.upper] {
                if let CurveConfig::Tabulated { file } = c {
                    if file.is_relative() {
                        *file = base.join(&*file);
                    }
                }
            }
        }
    }

    /// Replaces a preset reference by the preset's model section.
    pub fn resolved_model(&self) -> Result<ModelSpec, CliError> {
        match &self.model {
            ModelSpec::Preset { name } => {
                let p = crate::presets::preset(name).ok_or_else(|| CliError::Invalid(format!("unknown preset '{name}'")))?;
                p.resolved_model()
            }
            m => Ok(m.clone()),
        }
    }

    pub fn time_grid(&self) -> Result<TimeGrid, CliError> {
        Ok(TimeGrid::new(self.grid.total, self.grid.points)?)
    }

    pub fn options(&self) -> Result<SolveOptions, CliError> {
        let s = &self.solver;
        let shift = match &s.shift {
            ShiftConfig::Named(n) if n == "auto" => Shift::Auto,
            ShiftConfig::Named(n) => return Err(CliError::Invalid(format!("shift must be 'auto' or a number, got '{n}'"))),
            ShiftConfig::Value(v) => Shift::Fixed(*v),
        };
        let o = SolveOptions { eps: s.eps, max_iterations: s.max_iterations, guard: s.guard, shift, ..SolveOptions::default() };
        o.validate()?;
        Ok(o)
    }

    pub fn build(&self) -> Result<Built, CliError> {
        let grid = self.time_grid()?;
        let spec = self.resolved_model()?;
        let (basis, hbar) = build_basis(&spec)?;
        let absorber = match self.absorber {
            Some(a) if a.enabled => {
                if !(a.start < self.grid.total) || a.start < 0.0 {
                    return Err(CliError::Invalid(format!("absorber start {} must lie in [0, T)", a.start)));
                }
                Some(match a.strength {
                    Some(s) => TimeAbsorber { t0: a.start, total: self.grid.total, exponent: a.exponent, strength: s },
                    None => TimeAbsorber::with_damping(a.start, self.grid.total, a.exponent, a.damping),
                })
            }
            _ => None,
        };
        let pulses = self.pulses.iter().map(|p| PulseSpec { amplitude: p.amplitude, frequency: p.frequency, center: p.center, width: p.width }).collect::<Vec<_>>();
        if pulses.iter().any(|p| !(p.width > 0.0)) {
            return Err(CliError::Invalid("pulse widths must be positive".into()));
        }
        let active = self.active_space(&basis)?;
        let mut model = Model::new(basis, pulses, absorber);
        model.hbar = hbar;
        let physical_end = absorber.map_or(self.grid.total, |a| a.t0);
        for pair in &self.output.pairs {
            if !active.contains(pair[0]) || pair[1] >= model.basis.len() {
                return Err(CliError::Invalid(format!("population pair {pair:?} needs an active initial state and a valid final state")));
            }
        }
        for sub in &self.output.fs_subspaces {
            if sub.is_empty() || sub.iter().any(|&i| !active.contains(i)) {
                return Err(CliError::Invalid(format!("FS sub-space {sub:?} must be a non-empty set of active states")));
            }
        }
        Ok(Built { model, grid, active, options: self.options()?, physical_end })
    }

    fn active_space(&self, basis: &ZerothOrderBasis) -> Result<ActiveSpace, CliError> {
        let a = &self.active;
        let mut idx: Vec<usize> = a.states.clone();
        for &[s, v] in &a.levels {
            idx.push(basis.index_of(s, v).ok_or_else(|| CliError::Invalid(format!("no state at surface {s}, level {v}")))?);
        }
        if a.bound {
            idx.extend(basis.bound_states());
        }
        for (surface, count) in [(0, a.lower_continuum), (1, a.upper_continuum)] {
            if count == 0 {
                continue;
            }
            let mut cand: Vec<usize> = (0..basis.len()).filter(|&i| basis.labels[i].surface == surface && !basis.bound[i]).collect();
            cand.sort_by(|&x, &y| basis.energies[x].im.abs().partial_cmp(&basis.energies[y].im.abs()).unwrap().then(x.cmp(&y)));
            if cand.len() < count {
                return Err(CliError::Invalid(format!("surface {surface} has only {} non-bound states", cand.len())));
            }
            let mut chosen = cand[..count].to_vec();
            chosen.sort_unstable();
            idx.extend(chosen);
        }
        let mut seen = std::collections::HashSet::new();
        idx.retain(|i| seen.insert(*i));
        Ok(ActiveSpace::new(idx, basis.len())?)
    }
}

pub struct Built {
    pub model: Model,
    pub grid: TimeGrid,
    pub active: ActiveSpace,
    pub options: SolveOptions,
    pub physical_end: f64,
}

fn curve(c: &CurveConfig, mass: f64) -> Result<PotentialCurve, CliError> {
    Ok(match c {
        CurveConfig::Quartic { coefficients } => PotentialCurve::quartic(*coefficients, mass)?,
        CurveConfig::Morse { depth, width, center, asymptote } => PotentialCurve::morse(*depth, *width, *center, *asymptote, mass)?,
        CurveConfig::Exponential { amplitude, rate, center, asymptote } => PotentialCurve::exponential(*amplitude, *rate, *center, *asymptote, mass)?,
        CurveConfig::Tabulated { file } => {
            let text = std::fs::read_to_string(file).map_err(|e| CliError::Invalid(format!("{}: {e}", file.display())))?;
            PotentialCurve::from_table_text(&text, mass)?
        }
    })
}

pub fn build_basis(spec: &ModelSpec) -> Result<(ZerothOrderBasis, f64), CliError> {
    match spec {
        ModelSpec::Preset { .. } => Err(CliError::Invalid("unresolved preset reference".into())),
        ModelSpec::TwoSurface(ts) => {
            let m = MolecularModel {
                lower: curve(&ts.lower, ts.mass)?,
                upper: curve(&ts.upper, ts.mass)?,
                grid: CoordinateGrid { start: ts.coordinates.start, end: ts.coordinates.end, points: ts.coordinates.points },
                cap: ts.cap.map(|c| RadialCap { onset: c.onset, strength: c.strength, exponent: c.exponent }),
                dipole: match ts.dipole {
                    DipoleConfig::Constant { value } => DipoleFunction::Constant(value),
                    DipoleConfig::Linear { slope, offset } => DipoleFunction::Linear { slope, offset },
                    DipoleConfig::DampedLinear { slope, offset, range } => DipoleFunction::DampedLinear { slope, offset, range },
                },
                dipole_scale: ts.dipole_scale,
                states: ts.states,
                dissociation_limit: ts.dissociation_limit,
                bound_tolerance: ts.bound_tolerance,
                hbar: ts.hbar,
            };
            Ok((m.build()?, ts.hbar))
        }
        ModelSpec::Explicit(ex) => {
            let n = ex.energies.len();
            if n == 0 || ex.dipole.len() != n || ex.dipole.iter().any(|r| r.len() != n) {
                return Err(CliError::Invalid("explicit model needs n energies and an n × n dipole matrix".into()));
            }
            if !ex.energies_imag.is_empty() && ex.energies_imag.len() != n {
                return Err(CliError::Invalid("energies_imag must match energies in length".into()));
            }
            let energies: Vec<C64> = (0..n).map(|i| C64::new(ex.energies[i], ex.energies_imag.get(i).copied().unwrap_or(0.0))).collect();
            let mode = if energies.iter().any(|e| e.im != 0.0) { BasisMode::ComplexSymmetric } else { BasisMode::Hermitian };
            let mu = faer::Mat::from_fn(n, n, |i, j| C64::new(ex.dipole[i][j], 0.0));
            for i in 0..n {
                for j in 0..n {
                    if ex.dipole[i][j] != ex.dipole[j][i] {
                        return Err(CliError::Invalid("explicit dipole matrix must be symmetric".into()));
                    }
                }
            }
            Ok((ZerothOrderBasis::from_parts(energies, mu, mode)?, ex.hbar))
        }
    }
}
