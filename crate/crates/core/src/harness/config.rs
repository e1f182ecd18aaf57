use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{Condition, EngineConfig};
use crate::error::{Error, Result};
use crate::metrics::Polarity;
use crate::netcore::LossKind;
use crate::tasks::{ImageFamily, SequenceKind, SineFamily};

const DESK_JSON: &str = include_str!("../../configs/desk.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Sine2,
    Sine10,
    SineNoisy5,
    Image2,
    Image10,
}

impl ExperimentKind {
    pub fn tasks(self) -> usize {
        match self {
            Self::Sine2 | Self::Image2 => 2,
            Self::SineNoisy5 => 5,
            Self::Sine10 | Self::Image10 => 10,
        }
    }

    pub fn sequence(self) -> SequenceKind {
        match self {
            Self::Sine2 | Self::Sine10 => SequenceKind::Sine,
            Self::SineNoisy5 => SequenceKind::SineNoisy,
            Self::Image2 | Self::Image10 => SequenceKind::ImageDigits,
        }
    }

    pub fn is_image(self) -> bool {
        matches!(self, Self::Image2 | Self::Image10)
    }

    pub fn loss(self) -> LossKind {
        if self.is_image() {
            LossKind::CrossEntropyWithLogits
        } else {
            LossKind::Mse
        }
    }

    pub fn polarity(self) -> Polarity {
        if self.is_image() {
            Polarity::Accuracy
        } else {
            Polarity::Error
        }
    }

    pub fn default_hidden(self) -> Vec<usize> {
        if self.is_image() {
            vec![512, 64]
        } else {
            vec![64, 64, 64]
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sine2 => "sine2",
            Self::Sine10 => "sine10",
            Self::SineNoisy5 => "sine_noisy5",
            Self::Image2 => "image2",
            Self::Image10 => "image10",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::InvalidConfig(format!("unknown experiment {s:?}")))
    }
}

/// One sweep: every listed condition under every listed seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub conditions: Vec<Condition>,
    pub seeds: Vec<u64>,
    /// Number of tasks; `None` uses the experiment default.
    pub tasks: Option<usize>,
    /// Hidden widths; `None` picks the experiment default.
    pub hidden: Option<Vec<usize>>,
    pub engine: EngineConfig,
    pub sine: SineFamily,
    pub image: ImageFamily,
    pub train_frac: f64,
    pub buffer_capacity: usize,
    pub out_dir: PathBuf,
    /// IDX image/label files; the `MORPHCL_DATA` directory is used when unset.
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    /// Worker threads for the run pool (`0` = one per core).
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Sine10,
            conditions: Condition::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            tasks: None,
            hidden: None,
            engine: EngineConfig::default(),
            sine: SineFamily::default(),
            image: ImageFamily::default(),
            train_frac: 0.8,
            buffer_capacity: 200_000,
            out_dir: PathBuf::from("runs"),
            idx_images: None,
            idx_labels: None,
            workers: 0,
        }
    }
}

impl RunConfig {
    /// The bundled reduced-scale configuration.
    pub fn desk() -> Self {
        serde_json::from_str(DESK_JSON).expect("bundled desk.json parses")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(s)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn task_count(&self) -> usize {
        self.tasks.unwrap_or_else(|| self.experiment.tasks())
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.hidden.clone().unwrap_or_else(|| self.experiment.default_hidden())
    }

    /// Engine settings with the loss implied by the experiment.
    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig { loss: self.experiment.loss(), ..self.engine.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conditions.is_empty() {
            return Err(Error::InvalidConfig("no conditions selected".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("no seeds selected".into()));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::InvalidConfig(format!("train fraction {}", self.train_frac)));
        }
        if self.task_count() == 0 {
            return Err(Error::InvalidConfig("at least one task is required".into()));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::InvalidConfig("replay buffer capacity 0".into()));
        }
        if self.hidden_widths().iter().any(|&w| w == 0) {
            return Err(Error::InvalidConfig("hidden widths must be ≥ 1".into()));
        }
        if self.sine.samples_per_task < 2 {
            return Err(Error::InvalidConfig("sine tasks need at least two samples".into()));
        }
        self.engine.validate()
    }
}
