use std::path::{Path, PathBuf};

use irha_core::classifier::{ForestParams, ModelKind, TrainConfig};
use irha_core::control::ScenarioConfig;
use irha_core::link::ChannelConfig;
use irha_core::{RadioEnvironment, SplitSpec};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Everything a run depends on. Relative paths in a config file resolve
/// against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream derives from it.
    pub seed: u64,
    /// Floorplan JSON; the built-in three-room layout when absent.
    #[serde(default)]
    pub environment: Option<PathBuf>,
    #[serde(default = "default_samples_per_room")]
    pub samples_per_room: usize,
    /// Fingerprint CSV; `<out>/fingerprints.csv` when absent.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Model JSON; `<out>/model.json` when absent.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub channel: LinkConfig,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_samples_per_room() -> usize {
    50
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let spec = SplitSpec::default();
        Self {
            train_fraction: spec.train_fraction,
            stratified: spec.stratified,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub kind: ModelKind,
    pub tree: TrainConfig,
    pub forest: ForestParams,
    /// Confidence below which the wearable sends code 0.
    pub abstain_below: Option<f64>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Tree,
            tree: TrainConfig::default(),
            forest: ForestParams::default(),
            abstain_below: None,
        }
    }
}

/// Channel settings without a seed; the channel stream uses the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub bit_rate: u64,
    pub loss_prob: f64,
    pub latency: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        let c = ChannelConfig::default();
        Self {
            bit_rate: c.bit_rate,
            loss_prob: c.loss_prob,
            latency: c.latency,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            environment: None,
            samples_per_room: default_samples_per_room(),
            dataset: None,
            model: None,
            split: SplitConfig::default(),
            classifier: ClassifierConfig::default(),
            channel: LinkConfig::default(),
            scenario: ScenarioConfig::default(),
            out: default_out(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Failure::config(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.environment.as_mut().map(resolve);
        cfg.dataset.as_mut().map(resolve);
        cfg.model.as_mut().map(resolve);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if self.samples_per_room < 2 {
            return Err(Failure::config("samples_per_room must be at least 2"));
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(Failure::config("split.train_fraction must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.channel.loss_prob) {
            return Err(Failure::config("channel.loss_prob must lie in [0, 1]"));
        }
        if self.channel.bit_rate == 0 {
            return Err(Failure::config("channel.bit_rate must be positive"));
        }
        if !(self.channel.latency >= 0.0 && self.channel.latency.is_finite()) {
            return Err(Failure::config("channel.latency must be non-negative"));
        }
        if self.classifier.forest.n_trees == 0 {
            return Err(Failure::config("classifier.forest.n_trees must be positive"));
        }
        if self.classifier.tree.min_samples_leaf == 0 {
            return Err(Failure::config("classifier.tree.min_samples_leaf must be positive"));
        }
        if !(self.scenario.sample_period > 0.0 && self.scenario.sample_period.is_finite()) {
            return Err(Failure::config("scenario.sample_period must be positive"));
        }
        if !(self.scenario.duration >= 0.0 && self.scenario.duration.is_finite()) {
            return Err(Failure::config("scenario.duration must be non-negative"));
        }
        Ok(())
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.split.train_fraction,
            seed: self.seed,
            stratified: self.split.stratified,
        }
    }

    pub fn channel_config(&self) -> ChannelConfig {
        ChannelConfig {
            bit_rate: self.channel.bit_rate,
            loss_prob: self.channel.loss_prob,
            latency: self.channel.latency,
            seed: self.seed,
        }
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dataset
            .clone()
            .unwrap_or_else(|| self.out.join("fingerprints.csv"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out.join("model.json"))
    }

    /// The floorplan, seeded with the master seed.
    pub fn environment(&self) -> Result<RadioEnvironment, Failure> {
        let mut env = match &self.environment {
            None => RadioEnvironment::default_three_rooms(self.seed),
            Some(path) => {
                if !path.is_file() {
                    return Err(Failure::config(format!(
                        "environment file {} does not exist",
                        path.display()
                    )));
                }
                RadioEnvironment::load(path)
                    .map_err(|e| Failure::config(format!("environment {}: {e}", path.display())))?
            }
        };
        env.seed = self.seed;
        Ok(env)
    }
}
