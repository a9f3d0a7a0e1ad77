//! Executes a run configuration and writes the output files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use tdwo::diagnostics::{self, FloquetSet, Populations};
use tdwo::waveop::{self, Outcome, SolveReport};

use crate::config::{Built, RunConfig};
use crate::CliError;

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

pub struct RunResult {
    pub report: SolveReport,
    pub built: Built,
    pub summary: Summary,
}

impl RunResult {
    pub fn exit_code(&self) -> i32 {
        match self.report.outcome {
            Outcome::Converged => EXIT_CONVERGED,
            Outcome::Diverged(_) => EXIT_DIVERGED,
            Outcome::MaxIterations => EXIT_NOT_CONVERGED,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Summary {
    pub text: String,
}

/// 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Builds, solves and writes outputs into `config.output.dir`.
pub fn run(config: &RunConfig) -> Result<RunResult, CliError> {
    let built = config.build()?;
    let report = waveop::solve(&built.model, &built.grid, &built.active, &built.options)?;
    let dir = &config.output.dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    write(dir.join("convergence.csv"), &convergence_csv(&report))?;
    let usable = !report.diverged();
    let mut floquet = None;
    let mut pops = Vec::new();
    if usable {
        pops = populations(config, &built, &report)?;
        write(dir.join("populations.csv"), &populations_csv(config, &built, &report, &pops))?;
        write(dir.join("fs_distance.csv"), &fs_csv(config, &report)?)?;
        if config.output.floquet {
            floquet = diagnostics::floquet_extract(&report, built.model.basis.mode).ok();
        }
    }
    let summary = summary(config, &built, &report, &pops, floquet.as_ref())?;
    write(dir.join("summary.toml"), &summary.text)?;
    Ok(RunResult { report, built, summary })
}

fn write(path: impl AsRef<Path>, text: &str) -> Result<(), CliError> {
    let p = path.as_ref();
    fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
}

pub fn convergence_csv(report: &SolveReport) -> String {
    let mut s = String::from("iteration,factor\n");
    for (n, f) in report.factors.iter().enumerate() {
        let _ = writeln!(s, "{},{}", n + 1, fmt_num(*f));
    }
    s
}

fn pairs(config: &RunConfig, built: &Built) -> Vec<[usize; 2]> {
    if !config.output.pairs.is_empty() {
        return config.output.pairs.clone();
    }
    let a = built.active.indices();
    a.iter().flat_map(|&i| a.iter().map(move |&j| [i, j])).collect()
}

/// Populations for every initial state named in the requested pairs.
pub fn populations(config: &RunConfig, built: &Built, report: &SolveReport) -> Result<Vec<(usize, Populations)>, CliError> {
    let mut initials: Vec<usize> = pairs(config, built).iter().map(|p| p[0]).collect();
    initials.sort_unstable();
    initials.dedup();
    Ok(initials.iter().map(|&i| diagnostics::transition_probabilities(report, i).map(|p| (i, p))).collect::<Result<Vec<_>, _>>()?)
}

pub fn populations_csv(config: &RunConfig, built: &Built, report: &SolveReport, pops: &[(usize, Populations)]) -> String {
    let pairs = pairs(config, built);
    let mut s = String::from("t");
    for p in &pairs {
        let _ = write!(s, ",P_{}_{}", p[0], p[1]);
    }
    s.push('\n');
    let n = report.grid.len();
    let stride = config.output.stride.max(1);
    for k in (0..n).step_by(stride).chain(std::iter::once(n)) {
        s.push_str(&fmt_num(pops[0].1.times[k]));
        for p in &pairs {
            let pop = &pops.iter().find(|(i, _)| *i == p[0]).unwrap().1;
            s.push(',');
            s.push_str(&fmt_num(pop.probabilities[k][p[1]]));
        }
        s.push('\n');
    }
    s
}

pub fn fs_csv(config: &RunConfig, report: &SolveReport) -> Result<String, CliError> {
    let main = diagnostics::fubini_study_series(report)?;
    let subs = config.output.fs_subspaces.iter().map(|sub| diagnostics::fubini_study_subspace_series(report, sub)).collect::<Result<Vec<_>, _>>()?;
    let mut s = String::from("t,fs_distance");
    for sub in &config.output.fs_subspaces {
        let names: Vec<String> = sub.iter().map(|i| i.to_string()).collect();
        let _ = write!(s, ",fs_{}", names.join("_"));
    }
    s.push('\n');
    let stride = config.output.stride.max(1);
    for j in (0..main.len()).step_by(stride) {
        s.push_str(&fmt_num(report.grid.time(j)));
        s.push(',');
        s.push_str(&fmt_num(main[j]));
        for sub in &subs {
            s.push(',');
            s.push_str(&fmt_num(sub[j]));
        }
        s.push('\n');
    }
    Ok(s)
}

fn summary(config: &RunConfig, built: &Built, report: &SolveReport, pops: &[(usize, Populations)], floquet: Option<&FloquetSet>) -> Result<Summary, CliError> {
    let mut s = String::new();
    let _ = writeln!(s, "name = {:?}", config.name);
    let (status, reason) = match &report.outcome {
        Outcome::Converged => ("converged", String::new()),
        Outcome::Diverged(r) => ("diverged", r.clone()),
        Outcome::MaxIterations => ("max-iterations", String::new()),
    };
    let _ = writeln!(s, "status = {status:?}");
    let _ = writeln!(s, "converged = {}", report.converged());
    if !reason.is_empty() {
        let _ = writeln!(s, "reason = {reason:?}");
    }
    let _ = writeln!(s, "iterations = {}", report.iterations());
    if let Some(f) = report.factors.last() {
        let _ = writeln!(s, "final_factor = {}", fmt_num(*f));
    }
    let _ = writeln!(s, "active = {:?}", built.active.indices());
    let _ = writeln!(s, "shift = {}", fmt_num(report.shift));
    let _ = writeln!(s, "relative_residual = {}", fmt_num(report.relative_residual));
    let _ = writeln!(s, "propagator_fallback_steps = {}", report.propagators.fallback_steps);
    if report.diverged() {
        return Ok(Summary { text: s });
    }
    let defect = diagnostics::cyclicity_defect(report);
    let _ = writeln!(s, "\n[cyclicity]\nmax = {}", fmt_num(defect.max));
    let _ = writeln!(s, "per_state = [{}]", defect.per_state.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(", "));

    let _ = writeln!(s, "\n[transfer]\ntime = {}", fmt_num(built.physical_end));
    for p in pairs(config, built) {
        let pop = &pops.iter().find(|(i, _)| *i == p[0]).unwrap().1;
        let _ = writeln!(s, "P_{}_{} = {}", p[0], p[1], fmt_num(pop.at_time(p[1], built.physical_end)));
    }

    let bound = built.model.basis.bound_states();
    if bound.len() < built.model.basis.len() {
        let _ = writeln!(s, "\n[dissociation]");
        for &i in built.active.indices() {
            if built.model.basis.bound[i] {
                let _ = writeln!(s, "P_diss_{} = {}", i, fmt_num(diagnostics::dissociation_probability(report, i, &bound)?));
            }
        }
    }

    if let Some(f) = floquet {
        let _ = writeln!(s, "\n[floquet]\ndegenerate = {}", f.degenerate);
        let _ = writeln!(s, "quasi_energy_re = [{}]", f.quasi_energies.iter().map(|e| fmt_num(e.re)).collect::<Vec<_>>().join(", "));
        let _ = writeln!(s, "quasi_energy_im = [{}]", f.quasi_energies.iter().map(|e| fmt_num(e.im)).collect::<Vec<_>>().join(", "));
        let _ = writeln!(s, "# |<k|lambda_j(0)>|, one row per active state k");
        let _ = writeln!(s, "components = [");
        for k in 0..f.components.nrows() {
            let row: Vec<String> = (0..f.components.ncols()).map(|j| fmt_num(f.components[(k, j)].norm())).collect();
            let _ = writeln!(s, "  [{}],", row.join(", "));
        }
        let _ = writeln!(s, "]");
    }
    Ok(Summary { text: s })
}
