//! `vblast`: outage and error-rate curves for ZF-SIC V-BLAST.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 a published formula failed its integrity check (outputs still written).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vblast_core::montecarlo::Estimator;
use vblast_core::report::{
    coefficient_table_text, compare_files, replay, run_custom, run_figure, Bundle, FigureId,
    FigureOptions, OutputKind, Overrides, RunConfig, COMPARISON_LEVELS,
};
use vblast_core::{Error, Modulation, OrderingStrategy, ReceiverKind, SystemDims};

#[derive(Parser, Debug)]
#[command(
    name = "vblast",
    version,
    about = "Outage and error rates of ordered ZF-SIC V-BLAST"
)]
struct Cli {
    /// Base seed of every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Channel trials; 0 skips Monte-Carlo and writes analytic curves only.
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Worker threads: 0 = all cores, 1 = sequential. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Bundle directory [default: vblast-out].
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// TOML run configuration; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Full figure trial budgets instead of the 10x smaller desk defaults.
    #[arg(long, global = true)]
    full: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct SystemArgs {
    /// Receive antennas.
    #[arg(long)]
    n: Option<usize>,
    /// Transmit antennas.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    receiver: Option<ReceiverKind>,
    #[arg(long)]
    ordering: Option<OrderingStrategy>,
    #[arg(long)]
    modulation: Option<Modulation>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a configuration file as written.
    Run,
    /// Closed-form curves only.
    Analytic(SystemArgs),
    /// Monte-Carlo per-step outage (plus analytic references).
    SimulateOutage(SystemArgs),
    /// Monte-Carlo BLER, TBER and per-step error rates (plus analytic references).
    SimulateError {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long)]
        estimator: Option<Estimator>,
        /// Noise/data draws per channel.
        #[arg(long)]
        noise_trials: Option<u64>,
    },
    /// Reproduce a figure bundle: fig2 .. fig6.
    Figure { id: FigureId },
    /// SNR advantage of curve A over curve B at probability levels.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
    },
    /// Print the exact coefficient table of the closed-form first-step bound.
    CoeffTable { n: usize, m: usize },
    /// Re-run the request recorded in a bundle manifest.
    Replay { manifest: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. }
        | Error::InvalidDims(_)
        | Error::InvalidArgument { .. }
        | Error::Unsupported(_)
        | Error::DisjointRanges(_) => 2,
        _ => 1,
    }
}

fn overrides(cli: &Cli) -> Overrides {
    Overrides {
        seed: cli.seed,
        trials: cli.trials,
        threads: cli.threads,
        out_dir: cli.out_dir.clone(),
    }
}

/// Start from the config file if given, else from the command-line system.
fn base_config(cli: &Cli, sys: &SystemArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path)?,
        None => {
            let (n, m) = match (sys.n, sys.m) {
                (Some(n), Some(m)) => (n, m),
                _ => return Err(config_error("dims", "give --n and --m or --config")),
            };
            RunConfig::new(SystemDims::new(n, m).map_err(|e| config_error("dims", e.to_string()))?)
        }
    };
    if cli.config.is_some() && (sys.n.is_some() || sys.m.is_some()) {
        let n = sys.n.unwrap_or(cfg.experiment.dims.n());
        let m = sys.m.unwrap_or(cfg.experiment.dims.m());
        cfg.experiment.dims =
            SystemDims::new(n, m).map_err(|e| config_error("dims", e.to_string()))?;
    }
    let e = &mut cfg.experiment;
    e.receiver = sys.receiver.unwrap_or(e.receiver);
    e.ordering = sys.ordering.unwrap_or(e.ordering);
    e.modulation = sys.modulation.unwrap_or(e.modulation);
    Ok(cfg)
}

fn config_error(path: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        reason: reason.into(),
    }
}

fn custom(
    cli: &Cli,
    mut cfg: RunConfig,
    outputs: Option<Vec<OutputKind>>,
) -> Result<Bundle, Error> {
    if let Some(o) = outputs {
        cfg.outputs = o;
    }
    cfg.apply(&overrides(cli))?;
    let dir = cfg.out_dir.clone().unwrap_or_else(default_dir);
    run_custom(&cfg, &dir)
}

fn default_dir() -> PathBuf {
    PathBuf::from("vblast-out")
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out_dir.clone().unwrap_or_else(default_dir)
}

enum Outcome {
    Bundle(Bundle),
    Printed,
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    use OutputKind::*;
    let bundle = match &cli.command {
        Command::Run => {
            let path = cli
                .config
                .as_deref()
                .ok_or_else(|| config_error("config", "`run` needs --config"))?;
            custom(cli, RunConfig::from_path(path)?, None)?
        }
        Command::Analytic(sys) => custom(cli, base_config(cli, sys)?, Some(vec![Analytic]))?,
        Command::SimulateOutage(sys) => {
            custom(cli, base_config(cli, sys)?, Some(vec![Analytic, Outage]))?
        }
        Command::SimulateError {
            system,
            estimator,
            noise_trials,
        } => {
            let mut cfg = base_config(cli, system)?;
            cfg.experiment.estimator = estimator.unwrap_or(cfg.experiment.estimator);
            cfg.experiment.noise_trials_per_channel =
                noise_trials.unwrap_or(cfg.experiment.noise_trials_per_channel);
            custom(cli, cfg, Some(vec![Analytic, ErrorRates]))?
        }
        Command::Figure { id } => {
            let options = FigureOptions {
                seed: cli.seed.unwrap_or(1),
                trials: cli.trials,
                full: cli.full,
                threads: cli.threads.unwrap_or(0),
            };
            run_figure(*id, &options, &out_dir(cli))?
        }
        Command::Compare { a, b, levels } => {
            let levels = levels.clone().unwrap_or_else(|| COMPARISON_LEVELS.to_vec());
            print!("{}", compare_files(a, b, &levels)?);
            return Ok(Outcome::Printed);
        }
        Command::CoeffTable { n, m } => {
            let dims = SystemDims::new(*n, *m).map_err(|e| config_error("dims", e.to_string()))?;
            print!("{}", coefficient_table_text(dims)?);
            return Ok(Outcome::Printed);
        }
        Command::Replay { manifest } => replay(manifest, &out_dir(cli), cli.threads.unwrap_or(0))?,
    };
    Ok(Outcome::Bundle(bundle))
}

fn report(bundle: &Bundle) {
    let m = &bundle.manifest;
    println!(
        "wrote {} files to {} in {:.1} s",
        m.outputs.len() + 1,
        display(&bundle.dir),
        m.wall_clock_s
    );
    for d in &m.discrepancies {
        eprintln!("discrepancy: {d}");
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Printed) => ExitCode::SUCCESS,
        Ok(Outcome::Bundle(b)) => {
            report(&b);
            if b.has_discrepancies() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
