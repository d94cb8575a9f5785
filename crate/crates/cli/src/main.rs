//! `mvport`: prepare panels, fit single windows, run backtests and generate
//! synthetic data.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvport::panel::MonthId;
use mvport::pipeline::{self, PipelineConfig};
use mvport::synth::{Scenario, SynthConfig};
use mvport::Method;

#[derive(Parser, Debug)]
#[command(name = "mvport", version, about = "Minimum-variance parametric portfolios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Base seed for stochastic methods and synthetic data.
    #[arg(long)]
    seed: Option<u64>,
    /// Estimation window length in months.
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean and expand the panel and write the binary cache.
    Prepare {
        #[command(flatten)]
        common: Common,
    },
    /// Fit one method on one estimation window.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Method, e.g. `lasso`, `ridge:0.5`, `screening:10`.
        #[arg(long)]
        method: String,
        /// Last month of the window (YYYYMM); default is the last available.
        #[arg(long)]
        end: Option<MonthId>,
    },
    /// Rolling out-of-sample backtest of the configured methods.
    Backtest {
        #[command(flatten)]
        common: Common,
        /// Comma-separated methods, replacing the configured list.
        #[arg(long, value_delimiter = ',')]
        method: Vec<String>,
        /// Comma-separated cost levels in basis points.
        #[arg(long, value_delimiter = ',')]
        cost_bp: Vec<f64>,
    },
    /// Write a synthetic panel with its ground truth.
    Synth {
        #[command(flatten)]
        common: Common,
        /// One of planted-sparse, null, factor-structure.
        scenario: String,
    },
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    msg: String,
}

impl From<mvport::Error> for Failure {
    fn from(e: mvport::Error) -> Self {
        Failure {
            code: if e.is_usage() { 2 } else { 1 },
            msg: e.to_string(),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        msg: msg.into(),
    }
}

fn load_config(path: &Path) -> Result<PipelineConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg: PipelineConfig = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}

fn pipeline_config(common: &Common) -> Result<PipelineConfig, Failure> {
    let path = common.config.as_deref().ok_or_else(|| usage("--config is required"))?;
    let mut cfg = load_config(path)?;
    if let Some(s) = common.seed {
        cfg.horseshoe.seed = Some(s);
    }
    if let Some(w) = common.window {
        cfg.backtest.window = w;
    }
    Ok(cfg)
}

fn set_workers(n: Option<usize>) -> Result<(), Failure> {
    let Some(n) = n else { return Ok(()) };
    if n == 0 {
        return Err(usage("--workers must be positive"));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure {
            code: 1,
            msg: e.to_string(),
        })?;
    #[cfg(not(feature = "parallel"))]
    log::warn!("built without the `parallel` feature; --workers {n} ignored");
    Ok(())
}

fn parse_method(s: &str) -> Result<Method, Failure> {
    s.parse::<Method>().map_err(Failure::from)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Prepare { common } => {
            set_workers(common.workers)?;
            let cfg = pipeline_config(&common)?;
            let summary = pipeline::prepare(&cfg, &common.out_dir)?;
            println!("{summary}");
        }
        Command::Fit { common, method, end } => {
            set_workers(common.workers)?;
            let method = parse_method(&method)?;
            let cfg = pipeline_config(&common)?;
            let rep = pipeline::fit(&cfg, &common.out_dir, method, end)?;
            println!(
                "{} window {}..{}: {} of {} predictors selected, objective {:.6e}{}",
                rep.method,
                rep.window_start,
                rep.window_end,
                rep.n_selected,
                rep.theta.len(),
                rep.objective,
                if rep.converged { "" } else { " (not converged)" }
            );
            for (k, v) in &rep.hyperparameters {
                println!("  {k} = {v:.6e}");
            }
        }
        Command::Backtest {
            common,
            method,
            cost_bp,
        } => {
            set_workers(common.workers)?;
            let mut cfg = pipeline_config(&common)?;
            if !method.is_empty() {
                cfg.backtest.methods = method.iter().map(|m| parse_method(m)).collect::<Result<_, _>>()?;
            }
            if !cost_bp.is_empty() {
                cfg.backtest.costs_bp = cost_bp;
            }
            let reports = pipeline::backtest(&cfg, &common.out_dir)?;
            println!(
                "{:<14} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>9}",
                "method", "cost", "mean", "sigma", "SR", "maxDD", "VaR99", "turnover"
            );
            for r in &reports {
                for (lvl, bp) in r.levels.iter().zip(&cfg.backtest.costs_bp) {
                    let m = &lvl.metrics;
                    println!(
                        "{:<14} {:>6} {:>8.4} {:>8.4} {:>8.3} {:>8.4} {:>8.4} {:>9.4}",
                        r.method,
                        format!("{bp}bp"),
                        m.annual_mean,
                        m.sigma,
                        m.sharpe,
                        m.max_drawdown,
                        m.var99,
                        r.mean_turnover
                    );
                }
            }
        }
        Command::Synth { common, scenario } => {
            let scenario: Scenario = scenario.parse().map_err(Failure::from)?;
            let seed = common.seed.ok_or_else(|| usage("synth needs --seed"))?;
            let config = match &common.config {
                Some(p) => load_config(p)?.synth,
                None => SynthConfig::default(),
            };
            let files = pipeline::synth(scenario, seed, &config, &common.out_dir)?;
            println!("{}", files.panel.display());
            println!("{}", files.metadata.display());
            println!("{}", files.truth.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
