//! TOML run configuration. Every section is optional; each subcommand reads
//! the sections it needs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arch::{Family, ModelConfig};
use crate::autodiff::LossKind;
use crate::datagen::{SolverConfig, SystemKind};
use crate::error::{Error, Result};
use crate::tensor::PaddingMode;
use crate::trainer::{NormSource, TrainConfig};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub solver: Option<SolverConfig>,
    pub model: Option<ModelSection>,
    pub train: Option<TrainSection>,
    pub data: Option<DataSection>,
    pub rollout: Option<RolloutSection>,
    pub sweep: Option<SweepSection>,
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let cfg = Self::parse(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: Family,
    pub width: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default)]
    pub waves: Option<usize>,
    #[serde(default = "default_padding")]
    pub padding: PaddingMode,
    #[serde(default = "default_norm_groups")]
    pub norm_groups: usize,
}

impl ModelSection {
    pub fn to_config(&self, in_channels: usize, out_channels: usize) -> ModelConfig {
        let mut c = ModelConfig::new(self.family, self.width, in_channels, out_channels)
            .with_levels(self.levels)
            .with_padding(self.padding);
        if let Some(k) = self.waves {
            c = c.with_waves(k);
        }
        c.norm_groups = self.norm_groups;
        c
    }
}

fn default_levels() -> usize {
    ModelConfig::DEFAULT_LEVELS
}

fn default_padding() -> PaddingMode {
    PaddingMode::Periodic
}

fn default_norm_groups() -> usize {
    ModelConfig::DEFAULT_NORM_GROUPS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr_scale")]
    pub lr_scale: f64,
    #[serde(default = "default_history")]
    pub history: usize,
    /// Defaults to MSE for Hasegawa–Wakatani and scaled L2 otherwise.
    #[serde(default)]
    pub loss: Option<LossKind>,
    #[serde(default = "default_norm")]
    pub norm: NormSource,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_batch() -> usize {
    4
}

fn default_lr_scale() -> f64 {
    1.0
}

fn default_history() -> usize {
    1
}

fn default_norm() -> NormSource {
    NormSource::Pooled
}

impl TrainSection {
    pub fn to_config(&self, seed: u64, system: Option<SystemKind>) -> TrainConfig {
        let loss = self.loss.unwrap_or(match system {
            Some(SystemKind::HasegawaWakatani) => LossKind::Mse,
            _ => LossKind::ScaledL2,
        });
        let mut c = TrainConfig::new(self.epochs, self.batch_size, self.lr_scale, seed, self.history, loss);
        c.norm = self.norm;
        c
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default)]
    pub train: Vec<PathBuf>,
    #[serde(default)]
    pub test: Vec<PathBuf>,
    #[serde(default)]
    pub system: Option<SystemKind>,
    /// With generated data: trajectories (from the end) held out for testing.
    #[serde(default = "one")]
    pub test_trajectories: usize,
    /// With a single generated trajectory: fraction of frames used for training.
    #[serde(default = "default_split")]
    pub train_fraction: f64,
}

fn one() -> usize {
    1
}

fn default_split() -> f64 {
    0.8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutSection {
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Leading frames dropped before statistical comparisons.
    #[serde(default)]
    pub discard: Option<usize>,
}

impl Default for RolloutSection {
    fn default() -> Self {
        RolloutSection { steps: default_steps(), discard: None }
    }
}

fn default_steps() -> usize {
    16
}

/// How rollout error is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Frame-wise relative L2 at the first and last rollout step.
    ScaledL2,
    /// Variance-normalized error of time-averaged spectra, per field.
    Spectrum,
}

impl MetricKind {
    pub fn default_for(system: SystemKind) -> Self {
        match system {
            SystemKind::Kolmogorov => MetricKind::ScaledL2,
            SystemKind::HasegawaWakatani => MetricKind::Spectrum,
        }
    }
}

/// Which wall time is the cost axis of a front.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostAxis {
    Train,
    Infer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub system: SystemKind,
    pub families: Vec<Family>,
    #[serde(default = "default_widths")]
    pub widths: Vec<usize>,
    /// Wave grid per multi-wave family name, e.g. `dwnet = [3, 5]`.
    #[serde(default)]
    pub waves: BTreeMap<String, Vec<usize>>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_num_seeds")]
    pub num_seeds: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_padding")]
    pub padding: PaddingMode,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub metric: Option<MetricKind>,
    #[serde(default = "default_cost")]
    pub cost: CostAxis,
}

fn default_widths() -> Vec<usize> {
    vec![4, 8, 16]
}

fn default_num_seeds() -> usize {
    3
}

fn default_cost() -> CostAxis {
    CostAxis::Train
}

/// Seeds `2, 12, 22, ...`.
pub fn default_seeds(n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| 2 + 10 * i).collect()
}

/// A fully resolved sweep grid.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub system: SystemKind,
    pub families: Vec<Family>,
    pub widths: Vec<usize>,
    pub waves: BTreeMap<Family, Vec<usize>>,
    pub seeds: Vec<u64>,
    pub levels: usize,
    pub padding: PaddingMode,
    pub train: TrainSection,
    pub rollout: RolloutSection,
    pub metric: MetricKind,
    pub workers: usize,
    pub cost: CostAxis,
}

impl SweepSpec {
    pub fn from_sections(s: &SweepSection, train: &TrainSection, rollout: &RolloutSection) -> Result<Self> {
        let mut waves = BTreeMap::new();
        for (name, grid) in &s.waves {
            waves.insert(name.parse::<Family>()?, grid.clone());
        }
        let spec = SweepSpec {
            system: s.system,
            families: s.families.clone(),
            widths: s.widths.clone(),
            waves,
            seeds: s.seeds.clone().unwrap_or_else(|| default_seeds(s.num_seeds)),
            levels: s.levels,
            padding: s.padding,
            train: train.clone(),
            rollout: rollout.clone(),
            metric: s.metric.unwrap_or(MetricKind::default_for(s.system)),
            workers: s.workers.max(1),
            cost: s.cost,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() || self.widths.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("sweep needs at least one family, width and seed".into()));
        }
        if self.widths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("widths must be strictly increasing: {:?}", self.widths)));
        }
        for (f, grid) in &self.waves {
            if !f.is_multi_wave() {
                return Err(Error::Config(format!("{f} takes no wave grid")));
            }
            if grid.is_empty() {
                return Err(Error::Config(format!("empty wave grid for {f}")));
            }
        }
        Ok(())
    }

    pub fn waves_for(&self, f: Family) -> Vec<usize> {
        self.waves.get(&f).cloned().unwrap_or_else(|| vec![f.default_waves()])
    }

    /// Cells `(family, width, waves, seed)` in sweep order.
    pub fn cells(&self) -> Vec<(Family, usize, usize, u64)> {
        let mut out = Vec::new();
        for &f in &self.families {
            for &w in &self.widths {
                for k in self.waves_for(f) {
                    for &s in &self.seeds {
                        out.push((f, w, k, s));
                    }
                }
            }
        }
        out
    }
}
