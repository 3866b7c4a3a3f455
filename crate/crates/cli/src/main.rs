use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

mod config;
mod error;
mod ingest;
mod run;

use config::RunConfig;
use error::{config_err, CliError, CliResult};
use ingest::Table;
use run::PredictSource;

/// Multinomial probit regression with exact SUN posteriors and blocked
/// partially-factorized variational Bayes.
#[derive(Parser)]
#[command(name = "sunprobit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the posterior and summarize coefficients.
    Fit(FitArgs),
    /// Log marginal likelihood of the data.
    Evidence(Common),
    /// Predictive class probabilities for new rows.
    Predict(PredictArgs),
    /// Regenerate reference values with the slow oracles.
    #[command(hide = true)]
    Oracle(OracleArgs),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training CSV with a header row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    threads: Option<usize>,
    /// Add wall-clock timing to the output.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// Write posterior draws as CSV.
    #[arg(long)]
    draws_out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    /// Rows to predict.
    #[arg(long)]
    newdata: Option<PathBuf>,
    /// Output of an earlier `fit` to predict from instead of refitting.
    #[arg(long)]
    fitted: Option<PathBuf>,
    /// Cross-validated predictions over the training data.
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
    /// Monte Carlo draws for the kernel fixtures.
    #[arg(long, default_value_t = 10_000_000)]
    count: usize,
}

impl Common {
    fn config(&self) -> CliResult<RunConfig> {
        match &self.config {
            Some(p) => RunConfig::parse(
                &std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("{}: {e}", p.display())))?,
            ),
            None => RunConfig::parse("{}"),
        }
    }

    fn data(&self) -> CliResult<Table> {
        let p = self
            .data
            .as_ref()
            .ok_or_else(|| config_err("--data is required"))?;
        Table::read(p)
    }
}

#[derive(Serialize)]
struct Timed<'a, T: Serialize> {
    #[serde(flatten)]
    inner: &'a T,
    timing: Timing,
}

#[derive(Serialize)]
struct Timing {
    seconds: f64,
}

fn emit<T: Serialize>(value: &T, common: &Common, start: Instant) -> CliResult<()> {
    let text = if common.timing {
        let t = Timed {
            inner: value,
            timing: Timing {
                seconds: start.elapsed().as_secs_f64(),
            },
        };
        serde_json::to_string_pretty(&t)
    } else {
        serde_json::to_string_pretty(value)
    }
    .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    match &common.out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn write_draws(path: &PathBuf, draws: &nalgebra::DMatrix<f64>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    let io = |e: csv::Error| CliError::Io(std::io::Error::other(e));
    w.write_record((1..=draws.ncols()).map(|j| format!("β_{j}")))
        .map_err(io)?;
    for row in draws.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

fn init_threads(common: &Common) -> CliResult<()> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(config_err("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_err(e.to_string()))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> CliResult<()> {
    let start = Instant::now();
    match cli.command {
        Command::Fit(a) => {
            init_threads(&a.common)?;
            let cfg = a.common.config()?;
            let seed = a.common.seed.or(cfg.seed);
            let r = run::fit(&cfg, &a.common.data()?, seed)?;
            if let Some(p) = &a.draws_out {
                let d = r
                    .draws
                    .as_ref()
                    .ok_or_else(|| config_err("--draws-out needs draws > 0"))?;
                write_draws(p, d)?;
            }
            emit(&r.output, &a.common, start)
        }
        Command::Evidence(c) => {
            init_threads(&c)?;
            let cfg = c.config()?;
            let out = run::evidence(&cfg, &c.data()?, c.seed.or(cfg.seed))?;
            emit(&out, &c, start)
        }
        Command::Predict(a) => {
            init_threads(&a.common)?;
            let cfg = a.common.config()?;
            let seed = a.common.seed.or(cfg.seed);
            let out = match (a.folds, &a.newdata) {
                (Some(_), Some(_)) => {
                    return Err(config_err("--folds and --newdata are exclusive"))
                }
                (Some(k), None) => run::cross_validate(&cfg, &a.common.data()?, k, seed)?,
                (None, Some(nd)) => {
                    let newdata = Table::read(nd)?;
                    match &a.fitted {
                        Some(f) => {
                            let fitted = run::load_fitted(&std::fs::read_to_string(f)?)?;
                            run::predict(&cfg, PredictSource::Fitted(fitted), &newdata, seed)?
                        }
                        None => {
                            let train = a.common.data()?;
                            run::predict(&cfg, PredictSource::Data(&train), &newdata, seed)?
                        }
                    }
                }
                (None, None) => return Err(config_err("predict needs --newdata or --folds")),
            };
            emit(&out, &a.common, start)
        }
        Command::Oracle(a) => {
            init_threads(&a.common)?;
            let cfg = a.common.config()?;
            let table = a.common.data.as_ref().map(|p| Table::read(p)).transpose()?;
            let out = run::run_oracle(&cfg, table.as_ref(), a.common.seed.or(cfg.seed), a.count)?;
            emit(&out, &a.common, start)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sunprobit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
