//! Task-sequence generation and data ingestion.

mod digits;
pub mod idx;
mod sine;
mod transform;

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use digits::synthetic_digits;
pub use idx::{load_idx, load_idx_images, load_idx_labels, write_idx_images, write_idx_labels};
pub use sine::{gen_sine_task, noise_schedule, write_csv, SineTaskSpec};
pub use transform::{transform_rotate_shear, warp_images, WarpOptions, MAX_SHEAR_DEG};

use crate::error::{Error, Result};
use crate::netcore::{one_hot, Matrix};
use crate::seed::derive_seed;

/// Inputs and targets of one task. Classification targets are one-hot rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
    pub task_id: usize,
}

impl Dataset {
    pub fn new(x: Matrix, y: Matrix, task_id: usize) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} inputs vs {} targets",
                x.rows(),
                y.rows()
            )));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::NonFinite("dataset".into()));
        }
        Ok(Self { x, y, task_id })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
            task_id: self.task_id,
        }
    }

    /// Rows of all parts in order; the task id of the first part is kept.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::EmptyDataset("concat with no parts".into()))?;
        let xs: Vec<&Matrix> = parts.iter().map(|d| &d.x).collect();
        let ys: Vec<&Matrix> = parts.iter().map(|d| &d.y).collect();
        Ok(Dataset {
            x: Matrix::vstack(&xs)?,
            y: Matrix::vstack(&ys)?,
            task_id: first.task_id,
        })
    }

    /// Random subset of at most `n` rows.
    pub fn sample_subset(&self, n: usize, seed: u64) -> Dataset {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(n);
        self.subset(&idx)
    }
}

/// Disjoint, exhaustive, seed-deterministic shuffle split into `(train, test)`.
pub fn split(ds: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidConfig(format!("train fraction {train_frac}")));
    }
    let n = ds.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut n_train = (n as f64 * train_frac).round() as usize;
    if n >= 2 {
        n_train = n_train.clamp(1, n - 1);
    }
    let (a, b) = idx.split_at(n_train);
    Ok((ds.subset(a), ds.subset(b)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    Sine,
    SineNoisy,
    ImageDigits,
}

/// Per-task parameter ranges for sine sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SineFamily {
    pub samples_per_task: usize,
    pub domain: (f64, f64),
    pub amplitude_range: (f64, f64),
    pub phase_range: (f64, f64),
    pub frequency: f64,
    /// Noise ramp slope for [`SequenceKind::SineNoisy`].
    pub noise_base: f64,
    /// Divide inputs by `max(|lo|, |hi|)` before they reach the network.
    pub normalize_inputs: bool,
    /// Interpret the domain in degrees.
    pub degrees: bool,
}

impl Default for SineFamily {
    fn default() -> Self {
        Self {
            samples_per_task: 1280,
            domain: (-90.0, 90.0),
            amplitude_range: (0.5, 2.0),
            phase_range: (0.0, 2.0 * PI),
            frequency: 1.0,
            noise_base: 0.02,
            normalize_inputs: true,
            degrees: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImageFamily {
    /// Cap on images kept per task (`0` keeps all).
    pub max_per_task: usize,
    /// Give each task a random rotation+shear angle in `[0, 180]`.
    pub rotate: bool,
    /// Images per class in the synthetic fallback set.
    pub synthetic_per_class: usize,
}

impl Default for ImageFamily {
    fn default() -> Self {
        Self {
            max_per_task: 0,
            rotate: false,
            synthetic_per_class: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageTaskSpec {
    pub digits: Vec<u8>,
    pub theta_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TaskDescriptor {
    Sine(SineTaskSpec),
    Image(ImageTaskSpec),
}

#[derive(Clone, Debug)]
pub struct TaskSequence {
    pub tasks: Vec<Dataset>,
    pub descriptors: Vec<TaskDescriptor>,
}

/// Contiguous digit groups of near-equal size, e.g. `T = 5` gives `{0,1}, {2,3}, …`.
pub fn digit_groups(tasks: usize) -> Result<Vec<Vec<u8>>> {
    if tasks == 0 || tasks > 10 {
        return Err(Error::InvalidConfig(format!("{tasks} image tasks; need 1..=10")));
    }
    Ok((0..tasks)
        .map(|t| ((t * 10 / tasks) as u8..((t + 1) * 10 / tasks) as u8).collect())
        .collect())
}

/// Builds `tasks` datasets. The result depends only on the arguments.
pub fn make_task_sequence(
    kind: SequenceKind,
    tasks: usize,
    seed: u64,
    sine: &SineFamily,
    image: &ImageFamily,
    image_source: Option<(&Matrix, &[u8])>,
) -> Result<TaskSequence> {
    if tasks == 0 {
        return Err(Error::InvalidConfig("task sequence needs at least one task".into()));
    }
    match kind {
        SequenceKind::Sine | SequenceKind::SineNoisy => sine_sequence(kind, tasks, seed, sine),
        SequenceKind::ImageDigits => image_sequence(tasks, seed, image, image_source),
    }
}

fn sine_sequence(kind: SequenceKind, tasks: usize, seed: u64, fam: &SineFamily) -> Result<TaskSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x51AE]));
    let scale = if fam.normalize_inputs {
        1.0 / fam.domain.0.abs().max(fam.domain.1.abs())
    } else {
        1.0
    };
    let mut out = Vec::with_capacity(tasks);
    let mut descriptors = Vec::with_capacity(tasks);
    for t in 0..tasks {
        let spec = SineTaskSpec {
            amplitude: rng.gen_range(fam.amplitude_range.0..=fam.amplitude_range.1),
            frequency: fam.frequency,
            phase: rng.gen_range(fam.phase_range.0..=fam.phase_range.1),
            noise_std: if kind == SequenceKind::SineNoisy {
                noise_schedule(t, fam.noise_base)
            } else {
                0.0
            },
            n_samples: fam.samples_per_task,
            domain: fam.domain,
            degrees: fam.degrees,
        };
        let mut ds = gen_sine_task(&spec, t, derive_seed(seed, &[0x51AE, t as u64]))?;
        ds.x.scale(scale);
        out.push(ds);
        descriptors.push(TaskDescriptor::Sine(spec));
    }
    Ok(TaskSequence { tasks: out, descriptors })
}

fn image_sequence(
    tasks: usize,
    seed: u64,
    fam: &ImageFamily,
    source: Option<(&Matrix, &[u8])>,
) -> Result<TaskSequence> {
    let groups = digit_groups(tasks)?;
    let synthetic;
    let (images, labels) = match source {
        Some(s) => s,
        None => {
            synthetic = synthetic_digits(fam.synthetic_per_class, derive_seed(seed, &[0xD161]));
            (&synthetic.0, synthetic.1.as_slice())
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x1A6E]));
    let mut out = Vec::with_capacity(tasks);
    let mut descriptors = Vec::with_capacity(tasks);
    for (t, digits) in groups.into_iter().enumerate() {
        let mut idx: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| digits.contains(l))
            .map(|(i, _)| i)
            .collect();
        if fam.max_per_task > 0 && idx.len() > fam.max_per_task {
            idx.shuffle(&mut rng);
            idx.truncate(fam.max_per_task);
            idx.sort_unstable();
        }
        if idx.is_empty() {
            return Err(Error::EmptyDataset(format!("no images for digits {digits:?}")));
        }
        let theta = if fam.rotate { rng.gen_range(0.0..=180.0) } else { 0.0 };
        let mut x = images.select_rows(&idx);
        if theta != 0.0 {
            x = transform_rotate_shear(&x, theta)?;
        }
        let lab: Vec<usize> = idx.iter().map(|&i| labels[i] as usize).collect();
        out.push(Dataset::new(x, one_hot(&lab, 10)?, t)?);
        descriptors.push(TaskDescriptor::Image(ImageTaskSpec { digits, theta_deg: theta }));
    }
    Ok(TaskSequence { tasks: out, descriptors })
}
