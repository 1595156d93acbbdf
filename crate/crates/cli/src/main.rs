//! `irha`: survey, train, evaluate, compare and simulate from one binary.
//!
//! Exit status is 0 on success, 1 on a runtime failure and 2 on a usage or
//! configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use irha_core::classifier::ModelKind;

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "irha",
    version,
    about = "Room-level RSSI localization driving appliance relays"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Survey the floorplan and write fingerprints.csv.
    Fingerprint(Common),
    /// Split, train the selected classifier, write model.json and metrics.
    Train(Common),
    /// Score a saved model on the test split of the dataset.
    Eval(Common),
    /// Train tree, naive Bayes and forest on one split and tabulate them.
    Compare(Common),
    /// Run the wearable and control unit over the scenario trajectory.
    Simulate(SimulateArgs),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Floorplan JSON.
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    classifier: Option<ClassifierArg>,
    /// Forest size.
    #[arg(long)]
    trees: Option<usize>,
    /// Train every forest tree on the full training set.
    #[arg(long)]
    no_bootstrap: bool,
    /// Features drawn per forest split: a count, `sqrt` or `all`.
    #[arg(long)]
    features: Option<FeatureArg>,
    #[arg(long)]
    samples_per_room: Option<usize>,
    /// Per-destination frame loss probability.
    #[arg(long)]
    loss: Option<f64>,
    /// Acknowledged delivery with retransmission.
    #[arg(long)]
    reliable: bool,
}

#[derive(Args, Clone)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Locate the user from the floorplan instead of the model.
    #[arg(long)]
    oracle: bool,
    /// Scenario length in seconds.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassifierArg {
    Tree,
    Gnb,
    Forest,
}

#[derive(Clone, Copy)]
enum FeatureArg {
    All,
    Sqrt,
    Count(usize),
}

impl std::str::FromStr for FeatureArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(FeatureArg::All),
            "sqrt" => Ok(FeatureArg::Sqrt),
            n => n
                .parse()
                .ok()
                .filter(|&k| k > 0)
                .map(FeatureArg::Count)
                .ok_or_else(|| format!("expected `all`, `sqrt` or a positive count, got `{n}`")),
        }
    }
}

/// An error with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(env) = &self.env {
            cfg.environment = Some(env.clone());
        }
        if let Some(dataset) = &self.dataset {
            cfg.dataset = Some(dataset.clone());
        }
        if let Some(model) = &self.model {
            cfg.model = Some(model.clone());
        }
        if let Some(kind) = self.classifier {
            cfg.classifier.kind = match kind {
                ClassifierArg::Tree => ModelKind::Tree,
                ClassifierArg::Gnb => ModelKind::Gnb,
                ClassifierArg::Forest => ModelKind::Forest,
            };
        }
        if let Some(trees) = self.trees {
            cfg.classifier.forest.n_trees = trees;
        }
        if self.no_bootstrap {
            cfg.classifier.forest.bootstrap = false;
        }
        if let Some(features) = self.features {
            cfg.classifier.forest.feature_subsample = match features {
                FeatureArg::All => Some(usize::MAX),
                FeatureArg::Sqrt => None,
                FeatureArg::Count(k) => Some(k),
            };
        }
        if let Some(n) = self.samples_per_room {
            cfg.samples_per_room = n;
        }
        if let Some(loss) = self.loss {
            cfg.channel.loss_prob = loss;
        }
        if self.reliable && cfg.scenario.reliable.is_none() {
            cfg.scenario.reliable = Some(Default::default());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Fingerprint(args) => commands::fingerprint(&args.resolve()?),
        Command::Train(args) => commands::train(&args.resolve()?),
        Command::Eval(args) => commands::eval(&args.resolve()?),
        Command::Compare(args) => commands::compare(&args.resolve()?),
        Command::Simulate(args) => {
            let mut cfg = args.common.resolve()?;
            if let Some(d) = args.duration {
                if !(d >= 0.0 && d.is_finite()) {
                    return Err(Failure::config("--duration must be non-negative"));
                }
                cfg.scenario.duration = d;
            }
            commands::simulate(&cfg, args.oracle)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("irha: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
