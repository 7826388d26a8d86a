use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use sjl_cli::commands::{self, Command};
use sjl_cli::config::ExperimentConfig;
use sjl_cli::CliError;

/// Sparse JL experiments: sampling, exact and Monte Carlo moments, tail
/// rates, empirical thresholds and the closed-form bounds.
///
/// Settings come from defaults, then `--config`, then flags. The default
/// seed may be set with the SJL_SEED environment variable.
#[derive(Debug, Parser)]
#[command(name = "sjl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file: `key = value` lines or a JSON object.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (does not change any output).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[arg(long, global = true)]
    n: Option<String>,
    #[arg(long, global = true)]
    m: Option<String>,
    #[arg(long, global = true)]
    s: Option<String>,
    /// uniform or block.
    #[arg(long, global = true)]
    flavor: Option<String>,
    #[arg(long, global = true)]
    eps: Option<String>,
    #[arg(long, global = true)]
    delta: Option<String>,
    /// Comma-separated moment orders.
    #[arg(long, global = true)]
    q: Option<String>,
    #[arg(long, global = true)]
    trials: Option<String>,
    /// Decimal or 0x-prefixed hex.
    #[arg(long, global = true)]
    seed: Option<String>,
    /// e1, hard:<v>, flat:<count>, random:<seed> or values:<a>,<b>,...
    #[arg(long, global = true)]
    x: Option<String>,
    /// Comma-separated levels for threshold sweeps.
    #[arg(long, global = true)]
    v_grid: Option<String>,
    /// Comma-separated dimensions for sweeps.
    #[arg(long, global = true)]
    m_grid: Option<String>,
    /// Comma-separated sparsities for threshold sweeps.
    #[arg(long, global = true)]
    s_grid: Option<String>,
    /// Constant overrides, `name=value,...`.
    #[arg(long, global = true)]
    constants: Option<String>,
    /// Enumeration budget for the exact oracle.
    #[arg(long, global = true)]
    budget: Option<String>,
    /// csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
    #[arg(long, global = true)]
    out: Option<String>,
    /// Matrix file to use instead of sampling (project only).
    #[arg(long, global = true)]
    matrix: Option<String>,
}

impl Cli {
    fn config(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::from_env()?;
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags = [
            ("n", &self.n),
            ("m", &self.m),
            ("s", &self.s),
            ("flavor", &self.flavor),
            ("eps", &self.eps),
            ("delta", &self.delta),
            ("q", &self.q),
            ("trials", &self.trials),
            ("seed", &self.seed),
            ("x", &self.x),
            ("v_grid", &self.v_grid),
            ("m_grid", &self.m_grid),
            ("s_grid", &self.s_grid),
            ("constants", &self.constants),
            ("budget", &self.budget),
            ("format", &self.format),
            ("out", &self.out),
            ("matrix", &self.matrix),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let cfg = cli.config()?;
    let start = Instant::now();
    let output = commands::run(cli.command, &cfg)?;
    commands::emit(&output, &cfg)?;
    eprintln!("{} finished in {:.2?}", cli.command.name(), start.elapsed());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
