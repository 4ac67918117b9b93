mod chart;
mod commands;
mod config;
mod error;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chart::{ChartKind, ChartSpec};
use config::{Overrides, RunConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "asmbench", version, about = "Activated-sludge plant simulation and uncertainty analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; the built-in baseline when absent
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel workers; changes wall time only
    #[arg(long, env = "ASMBENCH_WORKERS")]
    workers: Option<usize>,
    /// Simulated horizon, d
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let flags = Overrides {
            out: self.out.clone(),
            seed: self.seed,
            workers: self.workers,
            t_end: self.t_end,
            rtol: self.rtol,
            atol: self.atol,
        };
        RunConfig::load(self.config.as_deref(), &flags)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dynamic run from the configured initial state -> trajectory.csv
    Simulate(Common),
    /// Steady state, effluent metrics and accounting -> steady.csv, tea_lca.csv
    Steady(Common),
    /// Monte Carlo over the configured distributions -> samples.csv, metrics.csv
    Uncertainty {
        #[command(flatten)]
        common: Common,
        /// Sample count
        #[arg(long)]
        n: Option<usize>,
    },
    /// Morris screening -> morris.csv
    Morris {
        #[command(flatten)]
        common: Common,
        #[arg(long = "n-trajectory")]
        n_trajectory: Option<usize>,
    },
    /// Monte Carlo filtering of a samples/metrics pair -> filter.csv, spearman.csv
    Filter {
        #[command(flatten)]
        common: Common,
        /// Defaults to samples.csv in the output directory
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Defaults to metrics.csv in the output directory
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Two-variable decision grid -> sweep.csv, tea_lca.csv
    Sweep(Common),
    /// Render a CSV as SVG
    Chart {
        #[arg(long, value_enum)]
        kind: ChartKind,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long = "x-label")]
        x_label: Option<String>,
        #[arg(long = "y-label")]
        y_label: Option<String>,
        /// Column(s) to draw, comma separated
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        x: Option<String>,
        #[arg(long)]
        y: Option<String>,
    },
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::Simulate(c) => Ok(vec![commands::simulate(&c.load()?)?]),
        Command::Steady(c) => commands::steady(&c.load()?),
        Command::Uncertainty { common, n } => {
            let mut cfg = common.load()?;
            if let Some(n) = n {
                cfg.run.n = n;
            }
            commands::uncertainty(&cfg)
        }
        Command::Morris { common, n_trajectory } => {
            let mut cfg = common.load()?;
            if let Some(r) = n_trajectory {
                cfg.run.n_trajectory = r;
            }
            Ok(vec![commands::morris_cmd(&cfg)?])
        }
        Command::Filter { common, samples, metrics } => {
            let cfg = common.load()?;
            let samples = samples.unwrap_or_else(|| cfg.run.out.join("samples.csv"));
            let metrics = metrics.unwrap_or_else(|| cfg.run.out.join("metrics.csv"));
            commands::filter(&cfg, &samples, &metrics)
        }
        Command::Sweep(c) => commands::sweep(&c.load()?),
        Command::Chart {
            kind,
            input,
            output,
            x_label,
            y_label,
            columns,
            metric,
            threshold,
            x,
            y,
        } => {
            let spec = ChartSpec {
                kind,
                input,
                output,
                x_label,
                y_label,
                columns,
                metric,
                threshold,
                x,
                y,
            };
            chart::write(&spec)?;
            Ok(vec![spec.output])
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
