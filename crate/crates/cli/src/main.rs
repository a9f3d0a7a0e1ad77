use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tdwo_cli::run::{EXIT_DIVERGED, EXIT_INVALID};
use tdwo_cli::{preset, presets, run, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "tdwo", version, about = "Global wave-operator propagation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration file.
    Run { config: PathBuf },
    /// Run a built-in preset.
    Preset {
        name: String,
        /// Disable the time absorber.
        #[arg(long)]
        no_absorber: bool,
        /// Number of time samples (power of two).
        #[arg(long)]
        ntime: Option<usize>,
        /// Convergence threshold.
        #[arg(long)]
        eps: Option<f64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the preset configuration instead of running it.
        #[arg(long)]
        dump: bool,
    },
    /// List built-in presets.
    ListPresets,
}

fn execute(cfg: &RunConfig) -> ExitCode {
    eprintln!("running {} (N_t = {})", cfg.name, cfg.grid.points);
    match run(cfg) {
        Ok(r) => {
            for (n, f) in r.report.factors.iter().enumerate() {
                eprintln!("  F_{} = {:.3e}", n + 1, f);
            }
            println!("{}", r.summary.text);
            let code = r.exit_code();
            if code == EXIT_DIVERGED {
                eprintln!("divergence detected");
            }
            ExitCode::from(code as u8)
        }
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_INVALID as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => match RunConfig::load(&config) {
            Ok(cfg) => execute(&cfg),
            Err(e) => fail(e),
        },
        Command::Preset { name, no_absorber, ntime, eps, out, dump } => {
            let Some(mut cfg) = preset(&name) else {
                return fail(CliError::Invalid(format!("unknown preset '{name}' (see list-presets)")));
            };
            if no_absorber {
                if let Some(a) = cfg.absorber.as_mut() {
                    a.enabled = false;
                }
            }
            if let Some(n) = ntime {
                cfg.grid.points = n;
            }
            if let Some(e) = eps {
                cfg.solver.eps = e;
            }
            if let Some(o) = out {
                cfg.output.dir = o;
            }
            if dump {
                print!("{}", cfg.to_toml());
                return ExitCode::SUCCESS;
            }
            execute(&cfg)
        }
        Command::ListPresets => {
            for p in presets() {
                println!("{:<12} {}", p.name, p.description);
            }
            ExitCode::SUCCESS
        }
    }
}
