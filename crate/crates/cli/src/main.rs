//! `mvassoc`: estimate and test the association between a covariate vector
//! and a multivariate outcome via cross-validated ensemble learning, with
//! canonical-correlation and PCA baselines and Monte Carlo study drivers.

mod config;
mod ingest;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_folds, AnalysisConfig};
use mvassoc::simulation::McSettings;
use mvassoc::Error;

#[derive(Parser)]
#[command(name = "mvassoc", version, about)]
struct Cli {
    /// Worker threads (default: machine core count).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for reports and tables.
    #[arg(long, global = true, default_value = "mvassoc-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the association on a CSV dataset and write a report.
    Analyze(AnalyzeArgs),
    /// Association restricted to configured covariate groups (importance).
    Importance(AnalyzeArgs),
    /// Run only the canonical-correlation and PCA baseline tests.
    Baselines(AnalyzeArgs),
    /// Monte Carlo studies on the built-in benchmark designs.
    Simulate(SimulateCmd),
    /// Write a synthetic benchmark dataset to CSV.
    EmitData(EmitDataArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// JSON configuration file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV data file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated outcome column names.
    #[arg(long, value_delimiter = ',')]
    outcomes: Vec<String>,
    /// Comma-separated covariate column names (default: all remaining).
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    /// Fold counts K[,K°[,K*]] for the three layers.
    #[arg(long)]
    folds: Option<String>,
    /// Reuse candidate fits across layers (ties K° = K−1, K* = K−2).
    #[arg(long)]
    reuse: bool,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Permutation draws for baseline tests.
    #[arg(long)]
    permutations: Option<usize>,
    /// Baselines to run alongside the analysis (e.g. wilks,pca-f).
    #[arg(long, value_delimiter = ',')]
    baselines: Vec<String>,
    /// Importance group as label=col1;col2 (repeatable).
    #[arg(long = "group")]
    groups: Vec<String>,
}

impl AnalyzeArgs {
    fn resolve(&self) -> Result<AnalysisConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => AnalysisConfig::load(path)?,
            None => AnalysisConfig::default(),
        };
        if let Some(data) = &self.data {
            cfg.data = Some(data.clone());
        }
        if !self.outcomes.is_empty() {
            cfg.outcomes = self.outcomes.clone();
        }
        if !self.covariates.is_empty() {
            cfg.covariates = Some(self.covariates.clone());
        }
        if let Some(folds) = &self.folds {
            cfg.folds = parse_folds(folds)?;
        }
        if self.reuse {
            cfg.reuse = true;
            cfg.folds.weight = cfg.folds.outer.saturating_sub(1);
            cfg.folds.inner = cfg.folds.outer.saturating_sub(2);
        }
        if let Some(alpha) = self.alpha {
            cfg.alpha = alpha;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(b) = self.permutations {
            cfg.permutations = b;
        }
        if !self.baselines.is_empty() {
            cfg.baselines = self.baselines.clone();
        }
        for spec in &self.groups {
            let (label, cols) = spec.split_once('=').ok_or_else(|| {
                Error::Config(format!("cannot parse --group '{spec}' (expected label=col1;col2)"))
            })?;
            cfg.groups.insert(
                label.to_string(),
                cols.split(';').map(str::to_string).collect(),
            );
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateCmd {
    /// Study: sim1-bias-coverage, sim1-importance, or sim2-power.
    study: String,
    /// Scenario for sim2-power: null, linear, or nonlinear.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fold counts K[,K°[,K*]] for the proposed test's layers.
    #[arg(long)]
    folds: Option<String>,
    #[arg(long)]
    reuse: bool,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Permutation draws per baseline test.
    #[arg(long, default_value_t = 200)]
    permutations: usize,
    /// Published scale: 1000 replicates over the full sample-size grid.
    #[arg(long)]
    full: bool,
}

impl SimulateCmd {
    fn resolve(&self) -> Result<run::SimulateArgs, Error> {
        // design 2 runs all layers 5-fold unless told otherwise
        let default_k = if self.study == "sim2-power" { 5 } else { 10 };
        let default_n = if self.study == "sim2-power" { 500 } else { 1000 };
        let folds = match &self.folds {
            Some(f) => parse_folds(f)?,
            None => config::FoldsConfig { outer: default_k, weight: default_k, inner: default_k },
        };
        Ok(run::SimulateArgs {
            study: self.study.clone(),
            scenario: self.scenario.clone(),
            settings: McSettings {
                reps: self.reps.unwrap_or(200),
                n: self.n.unwrap_or(default_n),
                seed: self.seed,
                k_outer: folds.outer,
                k_weight: folds.weight,
                k_inner: folds.inner,
                reuse: self.reuse,
                alpha: self.alpha,
                b_permutations: self.permutations,
            },
            full: self.full,
        })
    }
}

#[derive(Args)]
struct EmitDataArgs {
    /// Rows to generate.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long, default_value = "dgp1.csv")]
    path: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) =
            rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()
        {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Analyze(args) => args
            .resolve()
            .and_then(|cfg| run::run_analyze(&cfg, &cli.out_dir, false)),
        Command::Importance(args) => args.resolve().and_then(|cfg| {
            if cfg.groups.is_empty() {
                return Err(Error::Config(
                    "importance needs at least one --group or configured groups".into(),
                ));
            }
            run::run_analyze(&cfg, &cli.out_dir, true)
        }),
        Command::Baselines(args) => {
            args.resolve().and_then(|cfg| run::run_baselines(&cfg, &cli.out_dir))
        }
        Command::Simulate(cmd) => {
            cmd.resolve().and_then(|args| run::run_simulate(&args, &cli.out_dir))
        }
        Command::EmitData(args) => run::emit_dgp1(args.n, args.seed, &args.path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidHyperparameter { .. }
        | Error::BadFoldCount { .. }
        | Error::EmptyComplement => 2,
        Error::Io(_) | Error::MissingOutcome { .. } | Error::NonFinite { .. } => 3,
        _ => 4,
    }
}
