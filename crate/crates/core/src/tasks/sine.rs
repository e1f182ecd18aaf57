use std::io::Write;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::netcore::Matrix;

/// One regression task `y = a·sin(b·x + φ) + ε`, `ε ~ N(0, σ²)`, `x ~ U[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineTaskSpec {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
    pub noise_std: f64,
    pub n_samples: usize,
    pub domain: (f64, f64),
    /// Read `x` in degrees, i.e. evaluate `sin(b·x·π/180 + φ)`.
    #[serde(default)]
    pub degrees: bool,
}

impl Default for SineTaskSpec {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            frequency: 1.0,
            phase: 0.0,
            noise_std: 0.0,
            n_samples: 1000,
            domain: (-90.0, 90.0),
            degrees: false,
        }
    }
}

impl SineTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("sine task needs at least one sample".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidConfig(format!("noise std {}", self.noise_std)));
        }
        if !(self.domain.0 < self.domain.1) {
            return Err(Error::InvalidConfig(format!("empty domain {:?}", self.domain)));
        }
        Ok(())
    }

    /// Noise-free target at `x`.
    pub fn clean(&self, x: f64) -> f64 {
        let x = if self.degrees { x.to_radians() } else { x };
        self.amplitude * (self.frequency * x + self.phase).sin()
    }
}

/// Samples a task with raw (unscaled) inputs.
pub fn gen_sine_task(spec: &SineTaskSpec, task_id: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = Uniform::new_inclusive(spec.domain.0, spec.domain.1);
    let noise = (spec.noise_std > 0.0)
        .then(|| Normal::new(0.0, spec.noise_std).expect("std checked non-negative"));
    let mut x = Vec::with_capacity(spec.n_samples);
    let mut y = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let xi = xs.sample(&mut rng);
        let eps = noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
        x.push(xi);
        y.push(spec.clean(xi) + eps);
    }
    Ok(Dataset {
        x: Matrix::from_vec(spec.n_samples, 1, x)?,
        y: Matrix::from_vec(spec.n_samples, 1, y)?,
        task_id,
    })
}

/// Linear noise ramp: task 0 is noiseless, task `t` gets `base·t`.
pub fn noise_schedule(t: usize, base: f64) -> f64 {
    base * t as f64
}

/// Writes `x,y` rows for inspection.
pub fn write_csv<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    writeln!(out, "task,x,y")?;
    for r in 0..ds.len() {
        writeln!(out, "{},{},{}", ds.task_id, ds.x.get(r, 0), ds.y.get(r, 0))?;
    }
    Ok(())
}
