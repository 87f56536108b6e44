use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use upldp::aup::{AupOptions, DEFAULT_T_CAP};
use upldp::data::{generate, generate_kwise, AnyDataset, GenConfig};
use upldp::estimators::FitConfig;
use upldp::harness::{fit_any, run_experiment, write_csv, EstimatorKind, ExperimentSpec};
use upldp::mech::{privacy_account, PrivacyBudget};
use upldp::Error;

/// User-level label-private reward estimation.
#[derive(Parser)]
#[command(name = "upldp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        d: usize,
        #[arg(long = "B")]
        bound: f64,
        #[arg(long = "L")]
        feature_bound: f64,
        /// Ranking arity; 2 gives pairwise comparisons.
        #[arg(long = "K", default_value_t = 2)]
        arity: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit an estimator to a dataset file.
    Fit {
        #[arg(long)]
        estimator: String,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Steps (total across stages for aup).
        #[arg(long = "T")]
        iterations: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        clip: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a benchmark grid and write CSV.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the noise calibration for a DP-SGD run.
    Account {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        batch: usize,
        #[arg(long = "T")]
        iterations: usize,
    },
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("UPLDP_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Failure::Usage(format!("UPLDP_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Runtime(Error::Unsupported(e.to_string())))
}

fn run(command: Command) -> Result<(), Failure> {
    configure_threads()?;
    match command {
        Command::Gen { n, m, d, bound, feature_bound, arity, seed, out } => {
            let cfg = GenConfig::new(n, m, d, bound, feature_bound, seed).with_arity(arity);
            cfg.validate().map_err(usage)?;
            if arity == 2 {
                generate(&cfg)?.0.save(out)?;
            } else {
                generate_kwise(&cfg)?.0.save(out)?;
            }
        }
        Command::Fit { estimator, eps, delta, data, out, iterations, eta, clip, batch, seed } => {
            let kind: EstimatorKind = estimator.parse().map_err(usage)?;
            let budget = PrivacyBudget::new(eps, delta).map_err(usage)?;
            let mut fit = FitConfig { eta, clip, batch_users: batch, seed, ..FitConfig::default() };
            if let Some(t) = iterations {
                fit.iterations = t;
            }
            let aup = AupOptions { t_cap: iterations.unwrap_or(DEFAULT_T_CAP), eta, seed, ..AupOptions::default() };
            let dataset = AnyDataset::load(data)?;
            let result = fit_any(kind, &dataset, &budget, &fit, &aup)?;
            serde_json::to_writer_pretty(BufWriter::new(File::create(out).map_err(Error::from)?), &result)
                .map_err(Error::from)?;
        }
        Command::Bench { spec, out } => {
            let text = std::fs::read_to_string(spec).map_err(Error::from)?;
            let spec: ExperimentSpec = serde_json::from_str(&text).map_err(|e| Failure::Usage(e.to_string()))?;
            spec.validate().map_err(usage)?;
            let rows = run_experiment(&spec)?;
            write_csv(&rows, BufWriter::new(File::create(out).map_err(Error::from)?))?;
        }
        Command::Account { eps, delta, n, batch, iterations } => {
            let budget = PrivacyBudget::new(eps, delta).map_err(usage)?;
            let plan = privacy_account(&budget, n, batch, iterations).map_err(usage)?;
            println!("{}", serde_json::to_string_pretty(&plan).map_err(Error::from)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
