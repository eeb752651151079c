use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use loopspace_cli::commands::{self, Outcome, Run};
use loopspace_cli::config::{Loaded, RunConfig};
use loopspace_cli::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "loopspace", version, about = "Spectral loop-space experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config (partial, overlaid on the defaults) or a run manifest.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Truncation order J.
    #[arg(long, global = true)]
    modes: Option<usize>,
    /// Regularity split s in (1/2, 1).
    #[arg(long, global = true)]
    s: Option<f64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, Subcommand)]
enum Command {
    /// Eigenvalues and eigenfield sup norms along the configured loop.
    Spectrum,
    /// Intrinsic against embedded norms on the circle winding family.
    MetricsCompare,
    /// Minimax value and classified witness over the r grid.
    OrbitSweep,
    /// Palais-Smale bound report along flow trajectories.
    PsDiagnose,
    /// Finite-difference check of the action gradient.
    GradientCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::MetricsCompare => "metrics-compare",
            Command::OrbitSweep => "orbit-sweep",
            Command::PsDiagnose => "ps-diagnose",
            Command::GradientCheck => "gradient-check",
        }
    }
}

fn execute(cli: &Cli) -> CliResult<Outcome> {
    let (mut config, mut seed) = match &cli.config {
        None => (RunConfig::default(), 0),
        Some(path) => match RunConfig::load(path)? {
            Loaded::Config(c) => (c, 0),
            Loaded::Manifest(m) => {
                if m.command != cli.command.name() {
                    eprintln!("note: manifest was recorded for `{}`", m.command);
                }
                let m = *m;
                (m.config, m.seed)
            }
        },
    };
    if let Some(j) = cli.modes {
        config.modes = j;
    }
    if let Some(s) = cli.s {
        config.s = s;
    }
    if let Some(n) = cli.seed {
        seed = n;
    }
    config.validate()?;
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be positive".into()));
    }
    let run = Run {
        config: &config,
        seed,
        jobs,
        out: &cli.out,
    };
    match cli.command {
        Command::Spectrum => commands::spectrum(&run),
        Command::MetricsCompare => commands::metrics_compare(&run),
        Command::OrbitSweep => commands::orbit_sweep_cmd(&run),
        Command::PsDiagnose => commands::ps_diagnose(&run),
        Command::GradientCheck => commands::gradient_check(&run),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(Outcome { summary, failure: None }) => {
            println!("{}: {summary}", cli.command.name());
            ExitCode::SUCCESS
        }
        Ok(Outcome { summary, failure: Some(why) }) => {
            println!("{}: {summary}", cli.command.name());
            eprintln!("error: {why}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
