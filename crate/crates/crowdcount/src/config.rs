//! The TOML configuration file. Every key is optional and defaults to the
//! values in [`Config::default`]; unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//!
//! [roi]
//! x_min = 0.3
//! x_max = 12.0
//! y_min = -2.5
//! y_max = 2.5
//! z_min = -2.6
//!
//! [cluster]
//! min_pts = 5
//!
//! [train]
//! epochs = 100
//! ```
//!
//! Relative paths in `[paths]` are resolved against the directory holding the
//! config file.

use std::fs;
use std::path::{Path, PathBuf};

use crowdcount_core::features::SliceSpec;
use crowdcount_core::nn::{Loss, TrainConfig};
use crowdcount_core::pipeline::PipelineConfig;
use crowdcount_core::projection::TARGET_POINTS;
use crowdcount_core::rng::derive_seed;
use crowdcount_core::sim::SimConfig;
use crowdcount_core::RoiConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    pub roi: RoiSection,
    pub cluster: ClusterSection,
    pub features: FeaturesSection,
    pub projection: ProjectionSection,
    pub train: TrainSection,
    pub split: SplitSection,
    pub simulate: SimulateSection,
    pub quantize: QuantizeSection,
    pub bench: BenchSection,
    pub paths: PathsSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiSection {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Ground cut: points below this height are discarded.
    pub z_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub min_pts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub slice_dz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionSection {
    pub target: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub test_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub n_human: usize,
    pub n_clutter: usize,
    /// Empty-walkway captures concatenated into the ground pool.
    pub n_pool_scenes: usize,
    /// Multi-object counting scenes.
    pub n_scenes: usize,
    pub max_humans: usize,
    pub max_clutter: usize,
    /// Minimum free space between object footprints in a scene, meters.
    pub gap: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub fixtures: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizeSection {
    /// Training inputs used to calibrate activation ranges.
    pub representative: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub warmup: usize,
    pub repetitions: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub frames: Option<PathBuf>,
}

impl Default for RoiSection {
    fn default() -> Self {
        let r = RoiConfig::default();
        RoiSection { x_min: r.x_min, x_max: r.x_max, y_min: r.y_min, y_max: r.y_max, z_min: r.z_min }
    }
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection { min_pts: PipelineConfig::default().min_pts }
    }
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection { slice_dz: SliceSpec::default().dz }
    }
}

impl Default for ProjectionSection {
    fn default() -> Self {
        ProjectionSection { target: TARGET_POINTS }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            beta1: t.beta1,
            beta2: t.beta2,
            adam_epsilon: t.adam_epsilon,
        }
    }
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { test_fraction: 0.2 }
    }
}

impl Default for SimulateSection {
    fn default() -> Self {
        let s = SimConfig::default();
        SimulateSection {
            n_human: 500,
            n_clutter: 500,
            n_pool_scenes: 20,
            n_scenes: 100,
            max_humans: 3,
            max_clutter: 2,
            gap: 1.0,
            x_min: s.x_min,
            x_max: s.x_max,
            fixtures: s.fixtures,
        }
    }
}

impl Default for QuantizeSection {
    fn default() -> Self {
        QuantizeSection { representative: 100 }
    }
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { warmup: 20, repetitions: 200 }
    }
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            roi: RoiSection::default(),
            cluster: ClusterSection::default(),
            features: FeaturesSection::default(),
            projection: ProjectionSection::default(),
            train: TrainSection::default(),
            split: SplitSection::default(),
            simulate: SimulateSection::default(),
            quantize: QuantizeSection::default(),
            bench: BenchSection::default(),
            paths: PathsSection::default(),
        }
    }
}

/// Seed streams derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Clusters = 1,
    Pool = 2,
    Scenes = 3,
    Split = 4,
    Train = 5,
    Enlarge = 6,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file, resolving relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.paths.data, &mut cfg.paths.model, &mut cfg.paths.frames].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn seed_for(&self, stream: Stream) -> u64 {
        derive_seed(self.seed, stream as u64)
    }

    pub fn roi(&self) -> RoiConfig {
        let r = &self.roi;
        RoiConfig { x_min: r.x_min, x_max: r.x_max, y_min: r.y_min, y_max: r.y_max, z_min: r.z_min }
    }

    /// Training settings; the loss is set by the architecture being trained.
    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            beta1: t.beta1,
            beta2: t.beta2,
            adam_epsilon: t.adam_epsilon,
            seed: self.seed_for(Stream::Train),
            loss: Loss::Mse,
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            roi: self.roi(),
            min_pts: self.cluster.min_pts,
            slice: SliceSpec { dz: self.features.slice_dz },
            projection_target: self.projection.target,
            train: self.train_config(),
            seed: self.seed_for(Stream::Enlarge),
        }
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            roi: self.roi(),
            min_pts: self.cluster.min_pts,
            x_min: self.simulate.x_min,
            x_max: self.simulate.x_max,
            fixtures: self.simulate.fixtures,
            ..SimConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let core = |e: crowdcount_core::Error| Error::Config(e.to_string());
        self.pipeline().validate().map_err(core)?;
        self.sim().validate().map_err(core)?;
        if !(0.0..1.0).contains(&self.split.test_fraction) {
            return Err(Error::Config("split.test_fraction must be in [0, 1)".into()));
        }
        let s = &self.simulate;
        if !(s.gap.is_finite() && s.gap >= 0.0) {
            return Err(Error::Config("simulate.gap must be a non-negative distance".into()));
        }
        if s.n_pool_scenes == 0 {
            return Err(Error::Config("simulate.n_pool_scenes must be at least 1".into()));
        }
        if self.quantize.representative == 0 {
            return Err(Error::Config("quantize.representative must be at least 1".into()));
        }
        if self.bench.warmup + self.bench.repetitions < 30 || self.bench.repetitions == 0 {
            return Err(Error::Config("bench needs at least 30 warm-up plus measured repetitions".into()));
        }
        Ok(())
    }
}
