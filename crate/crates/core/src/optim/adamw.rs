use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    /// Plain Adam: the same recurrence without decoupled decay.
    pub fn adam() -> Self {
        Self {
            weight_decay: 0.0,
            ..Self::default()
        }
    }
}

/// First/second moment estimates for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub config: AdamWConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step_count: u64,
}

impl AdamWState {
    pub fn new<P: ParamSet + ?Sized>(params: &P, config: AdamWConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            step_count: 0,
        }
    }

    /// One AdamW update of `params` in place:
    /// `p ← p − lr·(m̂/(√v̂ + ε) + λ·p)`.
    pub fn step<P, G>(&mut self, params: &mut P, grads: &G, lr: f64) -> Result<()>
    where
        P: ParamSet + ?Sized,
        G: ParamSet + ?Sized,
    {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {lr}")));
        }
        let g = grads.tensors();
        let mut p = params.tensors_mut();
        let same = p.len() == g.len()
            && p.len() == self.m.len()
            && p.iter().zip(&g).zip(&self.m).all(|((a, b), m)| a.len() == b.len() && a.len() == m.len());
        if !same {
            return Err(Error::ShapeMismatch("optimizer state, parameters and gradients differ".into()));
        }
        if g.iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("gradient".into()));
        }
        let AdamWConfig { beta1, beta2, eps, weight_decay } = self.config;
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((pt, gt), mt), vt) in p.iter_mut().zip(&g).zip(&mut self.m).zip(&mut self.v) {
            for (((pi, &gi), mi), vi) in pt.iter_mut().zip(gt.iter()).zip(mt.iter_mut()).zip(vt.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * *pi);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Scalars(Vec<f64>);

    impl ParamSet for Scalars {
        fn tensors(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn zero_gradient_without_decay_is_noop() {
        let mut p = Scalars(vec![1.5, -2.0]);
        let mut s = AdamWState::new(&p, AdamWConfig::adam());
        s.step(&mut p, &Scalars(vec![0.0, 0.0]), 0.1).unwrap();
        assert_eq!(p.0, vec![1.5, -2.0]);
        assert_eq!(s.m, vec![vec![0.0, 0.0]]);
        assert_eq!(s.v, vec![vec![0.0, 0.0]]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn first_step_is_bias_corrected() {
        // m = 0.1, v = 0.001; m̂ = 1, v̂ = 1 → Δ = −0.1/(1 + 1e-8)
        let mut p = Scalars(vec![0.0]);
        let mut s = AdamWState::new(&p, AdamWConfig::adam());
        s.step(&mut p, &Scalars(vec![1.0]), 0.1).unwrap();
        assert!((p.0[0] - (-0.1 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn decoupled_decay_scales_parameter() {
        let mut p = Scalars(vec![2.0]);
        let cfg = AdamWConfig { weight_decay: 0.01, ..AdamWConfig::default() };
        let mut s = AdamWState::new(&p, cfg);
        s.step(&mut p, &Scalars(vec![0.0]), 0.1).unwrap();
        assert!((p.0[0] - 2.0 * (1.0 - 0.001)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut p = Scalars(vec![0.0]);
        let mut s = AdamWState::new(&p, AdamWConfig::default());
        assert!(s.step(&mut p, &Scalars(vec![f64::NAN]), 0.1).is_err());
        assert!(s.step(&mut p, &Scalars(vec![0.0, 1.0]), 0.1).is_err());
        assert!(s.step(&mut p, &Scalars(vec![0.0]), 0.0).is_err());
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = Scalars(vec![0.3, -0.2]);
            let mut s = AdamWState::new(&p, AdamWConfig::default());
            for k in 0..5 {
                let g = Scalars(vec![k as f64 * 0.1, -0.3]);
                s.step(&mut p, &g, 1e-2).unwrap();
            }
            p.0
        };
        assert_eq!(run(), run());
    }
}
