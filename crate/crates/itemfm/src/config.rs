//! TOML run configuration. Every key is optional; missing keys take the
//! library defaults and command-line flags override file values.
//!
//! ```toml
//! seed = 7
//! threads = 1
//! encoding = "binary-le"
//!
//! [ingest]
//! min_items_per_user = 5
//!
//! [cooc]
//! radius = 5
//! weighting = "uniform"
//!
//! [train]
//! k = 150
//! lr = 0.05
//!
//! [als]
//! l2 = 100.0
//!
//! [eval]
//! bins = [5, 10, 20, 50, 100, 1000, 5000, 15000]
//!
//! [pipeline]
//! events = "events.tsv"
//! out_dir = "run"
//! ```

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use itemfm_core::als::AlsConfig;
use itemfm_core::cooc::{WindowConfig, WindowMode, Weighting};
use itemfm_core::embed::ComposeMode;
use itemfm_core::eval::{EvalConfig, OccurrenceCount};
use itemfm_core::ingest::IngestConfig;
use itemfm_core::trainer::{Loss, PositiveWeight, TrainConfig};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::formats::Encoding;

pub const CONFIG_ENV: &str = "ITEMFM_CONFIG";

macro_rules! value_enum {
    ($name:ident => $core:ty { $($variant:ident = $core_variant:expr),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, ValueEnum)]
        #[serde(rename_all = "kebab-case")]
        pub enum $name {
            $($variant),+
        }

        impl From<$name> for $core {
            fn from(v: $name) -> $core {
                match v {
                    $($name::$variant => $core_variant),+
                }
            }
        }
    };
}

value_enum!(ModeArg => WindowMode { Track = WindowMode::Track, Time = WindowMode::Time });
value_enum!(WeightingArg => Weighting { Uniform = Weighting::Uniform, InverseDistance = Weighting::InverseDistance });
value_enum!(LossArg => Loss { Logistic = Loss::Logistic, Squared = Loss::Squared });
value_enum!(PositiveWeightArg => PositiveWeight { Unit = PositiveWeight::Unit, CoocWeight = PositiveWeight::CoocWeight });
value_enum!(ComposeArg => ComposeMode {
    TrackPlusSide = ComposeMode::TrackPlusSide,
    TrackOnly = ComposeMode::TrackOnly,
    TrackPlusContextPlusSide = ComposeMode::TrackPlusContextPlusSide,
});
value_enum!(OccurrenceArg => OccurrenceCount {
    Interactions = OccurrenceCount::Interactions,
    CoocRowSum = OccurrenceCount::CoocRowSum,
});

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub threads: usize,
    pub encoding: Encoding,
    pub ingest: IngestSection,
    pub cooc: CoocSection,
    pub train: TrainSection,
    pub als: AlsSection,
    pub eval: EvalSection,
    pub pipeline: PipelineSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 1,
            encoding: Encoding::default(),
            ingest: IngestSection::default(),
            cooc: CoocSection::default(),
            train: TrainSection::default(),
            als: AlsSection::default(),
            eval: EvalSection::default(),
            pipeline: PipelineSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub min_items_per_user: usize,
    pub min_users_per_item: usize,
    pub max_interactions_per_item: usize,
    pub full_listen_fraction: f64,
    pub full_listen_absolute: i64,
}

impl Default for IngestSection {
    fn default() -> Self {
        let d = IngestConfig::default();
        Self {
            min_items_per_user: d.min_items_per_user,
            min_users_per_item: d.min_users_per_item,
            max_interactions_per_item: d.max_interactions_per_item,
            full_listen_fraction: d.full_listen_fraction,
            full_listen_absolute: d.full_listen_absolute,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoocSection {
    pub mode: ModeArg,
    #[serde(alias = "radius_tracks")]
    pub radius: usize,
    pub radius_seconds: i64,
    pub weighting: WeightingArg,
}

impl Default for CoocSection {
    fn default() -> Self {
        let d = WindowConfig::default();
        Self { mode: ModeArg::Track, radius: d.radius_tracks, radius_seconds: d.radius_seconds, weighting: WeightingArg::Uniform }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub loss: LossArg,
    #[serde(alias = "neg")]
    pub negatives: usize,
    pub smoothing_exponent: f64,
    pub epochs: usize,
    #[serde(alias = "learning_rate")]
    pub lr: f64,
    pub l1: f64,
    pub l2: f64,
    pub adagrad_epsilon: f64,
    #[serde(alias = "k")]
    pub dim: usize,
    pub positive_weight: PositiveWeightArg,
    pub include_context_side: bool,
    pub compose: ComposeArg,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            loss: LossArg::Logistic,
            negatives: d.negatives,
            smoothing_exponent: d.smoothing_exponent,
            epochs: d.epochs,
            lr: d.learning_rate,
            l1: d.lambda_bias,
            l2: d.lambda_vector,
            adagrad_epsilon: d.adagrad_epsilon,
            dim: d.dim,
            positive_weight: PositiveWeightArg::Unit,
            include_context_side: d.include_context_side,
            compose: ComposeArg::TrackPlusSide,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlsSection {
    #[serde(alias = "k")]
    pub dim: usize,
    pub sweeps: usize,
    /// Used for both users and items.
    #[serde(alias = "lambda")]
    pub l2: f64,
    pub alpha: Option<f64>,
}

impl Default for AlsSection {
    fn default() -> Self {
        let d = AlsConfig::default();
        Self { dim: d.dim, sweeps: d.sweeps, l2: d.lambda_user, alpha: d.alpha }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub bins: Vec<u64>,
    pub max_eval_tracks_per_query: Option<usize>,
    pub occurrence_count: OccurrenceArg,
}

impl Default for EvalSection {
    fn default() -> Self {
        let d = EvalConfig::default();
        Self { bins: d.bin_edges, max_eval_tracks_per_query: d.max_eval_tracks_per_query, occurrence_count: OccurrenceArg::Interactions }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub events: Option<PathBuf>,
    pub side_features: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Interactions before this time train, the rest test.
    pub split_timestamp: Option<i64>,
    /// Used when `split_timestamp` is unset: the split falls at this
    /// quantile of the sorted interaction timestamps.
    pub split_quantile: f64,
    /// Also fit and evaluate the implicit ALS baseline.
    pub als: bool,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            events: None,
            side_features: None,
            out_dir: PathBuf::from("itemfm-out"),
            split_timestamp: None,
            split_quantile: 0.9,
            als: true,
        }
    }
}

impl Config {
    /// Reads `path`; relative paths in `[pipeline]` resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Config =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.pipeline;
        for slot in [&mut p.events, &mut p.side_features] {
            if let Some(f) = slot.as_mut() {
                *f = base.join(&*f);
            }
        }
        p.out_dir = base.join(&p.out_dir);
        Ok(cfg)
    }

    /// Loads `path` when given, otherwise returns the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Config::default()), Config::load)
    }

    pub fn ingest_config(&self) -> Result<IngestConfig> {
        let s = &self.ingest;
        let cfg = IngestConfig {
            min_items_per_user: s.min_items_per_user,
            min_users_per_item: s.min_users_per_item,
            max_interactions_per_item: s.max_interactions_per_item,
            full_listen_fraction: s.full_listen_fraction,
            full_listen_absolute: s.full_listen_absolute,
            rng_seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn window_config(&self) -> Result<WindowConfig> {
        let s = &self.cooc;
        let cfg = WindowConfig {
            mode: s.mode.into(),
            radius_tracks: s.radius,
            radius_seconds: s.radius_seconds,
            weighting: s.weighting.into(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let s = &self.train;
        let cfg = TrainConfig {
            loss: s.loss.into(),
            negatives: s.negatives,
            smoothing_exponent: s.smoothing_exponent,
            epochs: s.epochs,
            learning_rate: s.lr,
            lambda_bias: s.l1,
            lambda_vector: s.l2,
            adagrad_epsilon: s.adagrad_epsilon,
            seed: self.seed,
            dim: s.dim,
            positive_weight: s.positive_weight.into(),
            include_context_side: s.include_context_side,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn als_config(&self) -> Result<AlsConfig> {
        let s = &self.als;
        let cfg = AlsConfig {
            dim: s.dim,
            lambda_user: s.l2,
            lambda_item: s.l2,
            alpha: s.alpha,
            sweeps: s.sweeps,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eval_config(&self) -> Result<EvalConfig> {
        let s = &self.eval;
        let cfg = EvalConfig {
            bin_edges: s.bins.clone(),
            max_eval_tracks_per_query: s.max_eval_tracks_per_query,
            seed: self.seed,
            occurrence_count: s.occurrence_count.into(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every section, so a pipeline fails before doing any work.
    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        let q = self.pipeline.split_quantile;
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Config("split_quantile must be in (0, 1)".into()));
        }
        self.ingest_config()?;
        self.window_config()?;
        self.train_config()?;
        self.als_config()?;
        self.eval_config()?;
        Ok(())
    }
}
