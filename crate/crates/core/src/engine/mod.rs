//! Replay-driven continual training: Hamiltonian gradient blending, the
//! perturbation regularizer, adaptive weights and the C1–C4 task loops.

mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use train::{
    evaluate_loss, train_task, warmup, EngineConfig, EpochRecord, MorphEvent, Phase, RunState, TaskLog,
};

use crate::error::Result;
use crate::netcore::{loss, loss_and_gradients, Gradients, LossKind, Matrix, Network, ParamSet};
use crate::tasks::Dataset;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for GradWeights {
    fn default() -> Self {
        Self { alpha: 0.4, beta: 0.4, gamma: 0.1 }
    }
}

impl GradWeights {
    pub const CURRENT_ONLY: GradWeights = GradWeights { alpha: 1.0, beta: 0.0, gamma: 0.0 };

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    C1,
    C2,
    C3,
    C4,
}

impl Condition {
    pub const ALL: [Condition; 4] = [Condition::C1, Condition::C2, Condition::C3, Condition::C4];

    /// Warmup, adaptive weights, cosine decay and balanced replay.
    pub fn uses_heuristics(self) -> bool {
        self != Condition::C1
    }

    pub fn searches(self) -> bool {
        matches!(self, Condition::C3 | Condition::C4)
    }

    pub fn transfers(self) -> bool {
        self == Condition::C4
    }

    pub fn name(self) -> &'static str {
        match self {
            Condition::C1 => "C1",
            Condition::C2 => "C2",
            Condition::C3 => "C3",
            Condition::C4 => "C4",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Condition {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "C1" => Ok(Condition::C1),
            "C2" => Ok(Condition::C2),
            "C3" => Ok(Condition::C3),
            "C4" => Ok(Condition::C4),
            other => Err(crate::error::Error::InvalidConfig(format!("unknown condition {other:?}"))),
        }
    }
}

/// Perturbation noise levels, given as variances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Perturbation {
    pub sigma_x2: f64,
    pub sigma_w2: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self { sigma_x2: 1e-4, sigma_w2: 1e-8 }
    }
}

/// Gradient and value of the perturbation term for one Gaussian draw.
#[derive(Clone, Debug)]
pub struct PerturbationTerm {
    pub grads: Gradients,
    /// `[ℓ(w+εw; x+εx) − ℓ(w; x)] / (t+1)`
    pub value: f64,
}

/// `∇[ℓ(w+εw; x+εx) − ℓ(w; x)] / (t+1)` for a single draw
/// `εx ~ N(0, σx²I)`, `εw ~ N(0, σw²I)`.
pub fn perturbation_term(
    net: &Network,
    batch: &Dataset,
    noise: Perturbation,
    t: usize,
    kind: LossKind,
    seed: u64,
) -> Result<PerturbationTerm> {
    if noise.sigma_x2 == 0.0 && noise.sigma_w2 == 0.0 {
        return Ok(PerturbationTerm { grads: Gradients::zeros_like(net), value: 0.0 });
    }
    let (base_loss, base_grads) = loss_and_gradients(net, &batch.x, &batch.y, kind)?;
    let (pert_loss, pert_grads) = perturbed_loss_and_gradients(net, &batch.x, &batch.y, noise, kind, seed)?;
    let scale = 1.0 / (t + 1) as f64;
    let mut grads = pert_grads;
    grads.add_scaled(-1.0, &base_grads)?;
    grads.scale(scale);
    Ok(PerturbationTerm { grads, value: (pert_loss - base_loss) * scale })
}

pub fn perturbation_grad(
    net: &Network,
    batch: &Dataset,
    noise: Perturbation,
    t: usize,
    kind: LossKind,
    seed: u64,
) -> Result<Gradients> {
    perturbation_term(net, batch, noise, t, kind, seed).map(|p| p.grads)
}

fn perturbed_copies(net: &Network, x: &Matrix, noise: Perturbation, seed: u64) -> Result<(Network, Matrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pnet = net.clone();
    let mut px = x.clone();
    if noise.sigma_w2 > 0.0 {
        let dist = Normal::new(0.0, noise.sigma_w2.sqrt()).expect("positive std");
        for t in pnet.tensors_mut() {
            t.iter_mut().for_each(|v| *v += dist.sample(&mut rng));
        }
    }
    if noise.sigma_x2 > 0.0 {
        let dist = Normal::new(0.0, noise.sigma_x2.sqrt()).expect("positive std");
        px.data_mut().iter_mut().for_each(|v| *v += dist.sample(&mut rng));
    }
    Ok((pnet, px))
}

fn perturbed_loss_and_gradients(
    net: &Network,
    x: &Matrix,
    y: &Matrix,
    noise: Perturbation,
    kind: LossKind,
    seed: u64,
) -> Result<(f64, Gradients)> {
    let (pnet, px) = perturbed_copies(net, x, noise, seed)?;
    loss_and_gradients(&pnet, &px, y, kind)
}

/// Loss difference of the perturbation term without gradients.
pub fn perturbation_value(
    net: &Network,
    batch: &Dataset,
    noise: Perturbation,
    t: usize,
    kind: LossKind,
    seed: u64,
) -> Result<f64> {
    if noise.sigma_x2 == 0.0 && noise.sigma_w2 == 0.0 {
        return Ok(0.0);
    }
    let base = loss(&net.forward(&batch.x)?, &batch.y, kind)?;
    let (pnet, px) = perturbed_copies(net, &batch.x, noise, seed)?;
    let pert = loss(&pnet.forward(&px)?, &batch.y, kind)?;
    Ok((pert - base) / (t + 1) as f64)
}

/// Component gradients and losses of one Hamiltonian step.
#[derive(Clone, Debug)]
pub struct HamiltonianParts {
    pub current: Gradients,
    pub current_loss: f64,
    pub replay: Option<Gradients>,
    pub replay_loss: Option<f64>,
    pub perturbation: PerturbationTerm,
}

impl HamiltonianParts {
    /// `α∇c + β∇e + γδV`; the replay term vanishes without a replay batch.
    pub fn blend(&self, w: GradWeights) -> Result<Gradients> {
        let mut g = self.current.clone();
        g.scale(w.alpha);
        if let Some(r) = &self.replay {
            g.add_scaled(w.beta, r)?;
        }
        g.add_scaled(w.gamma, &self.perturbation.grads)?;
        Ok(g)
    }

    /// `α ℓc + β ℓe + γ δV` with the same conventions as [`Self::blend`].
    pub fn value(&self, w: GradWeights) -> f64 {
        w.alpha * self.current_loss + w.beta * self.replay_loss.unwrap_or(0.0) + w.gamma * self.perturbation.value
    }
}

#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_parts(
    net: &Network,
    batch_c: &Dataset,
    batch_e: Option<&Dataset>,
    t: usize,
    kind: LossKind,
    noise: Perturbation,
    seed: u64,
) -> Result<HamiltonianParts> {
    let (current_loss, current) = loss_and_gradients(net, &batch_c.x, &batch_c.y, kind)?;
    let (replay_loss, replay) = match batch_e.filter(|b| !b.is_empty() && t > 0) {
        Some(b) => {
            let (l, g) = loss_and_gradients(net, &b.x, &b.y, kind)?;
            (Some(l), Some(g))
        }
        None => (None, None),
    };
    let perturbation = perturbation_term(net, batch_c, noise, t, kind, seed)?;
    Ok(HamiltonianParts { current, current_loss, replay, replay_loss, perturbation })
}

/// `α∇ℓ(batch_c) + β∇ℓ(batch_e) + γδV`, with δV normalised by `t+1`.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_grad(
    net: &Network,
    batch_c: &Dataset,
    batch_e: Option<&Dataset>,
    w: GradWeights,
    t: usize,
    kind: LossKind,
    noise: Perturbation,
    seed: u64,
) -> Result<Gradients> {
    hamiltonian_parts(net, batch_c, batch_e, t, kind, noise, seed)?.blend(w)
}

/// Loss-ratio driven weights, clamped into `[0, 1]`:
/// `α = min(0.7, 0.3 + 0.4(r−1))`, `β = max(0.2, 0.6 − 0.4(r−1))`, `γ = 0.1`.
pub fn adapt_weights(j_curr: f64, j_prev: f64) -> GradWeights {
    if !(j_prev > 0.0) || !j_curr.is_finite() || !j_prev.is_finite() {
        return GradWeights::default();
    }
    let r = j_curr / j_prev;
    let alpha = (0.3 + 0.4 * (r - 1.0)).min(0.7).clamp(0.0, 1.0);
    let beta = (0.6 - 0.4 * (r - 1.0)).max(0.2).clamp(0.0, 1.0);
    GradWeights { alpha, beta, gamma: 0.1 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{init_network, ActivationKind, Architecture, backward};

    fn batch(n: usize, seed: u64) -> Dataset {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::new(
            Matrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0)),
            Matrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0)),
            0,
        )
        .unwrap()
    }

    fn net() -> Network {
        init_network(&Architecture::new(vec![2, 5, 1]).unwrap(), ActivationKind::Tanh, 3)
    }

    fn close(a: &Gradients, b: &Gradients, tol: f64) -> bool {
        a.tensors().iter().zip(b.tensors()).all(|(x, y)| x.iter().zip(y).all(|(p, q)| (p - q).abs() <= tol))
    }

    #[test]
    fn adapt_weights_substitutions() {
        let w = adapt_weights(1.0, 1.0);
        assert!((w.alpha - 0.3).abs() < 1e-15 && (w.beta - 0.6).abs() < 1e-15);
        let w = adapt_weights(2.0, 1.0);
        assert!((w.alpha - 0.7).abs() < 1e-15 && (w.beta - 0.2).abs() < 1e-15);
        let w = adapt_weights(1.25, 1.0);
        assert!((w.alpha - 0.4).abs() < 1e-12 && (w.beta - 0.5).abs() < 1e-12);
        assert_eq!(adapt_weights(1.0, 0.0), GradWeights::default());
        let w = adapt_weights(0.01, 1.0);
        assert!(w.alpha >= 0.0 && w.beta <= 1.0);
    }

    #[test]
    fn blend_degenerates_to_single_terms() {
        let (n, c, e) = (net(), batch(6, 1), batch(6, 2));
        let noise = Perturbation::default();
        let g = hamiltonian_grad(&n, &c, Some(&e), GradWeights::CURRENT_ONLY, 1, LossKind::Mse, noise, 9).unwrap();
        assert_eq!(g, backward(&n, &c.x, &c.y, LossKind::Mse).unwrap());
        let g = hamiltonian_grad(&n, &c, Some(&c), GradWeights::new(0.0, 1.0, 0.0), 1, LossKind::Mse, noise, 9)
            .unwrap();
        assert!(close(&g, &backward(&n, &c.x, &c.y, LossKind::Mse).unwrap(), 0.0));
    }

    #[test]
    fn blend_matches_hand_sum() {
        let (n, c, e) = (net(), batch(6, 1), batch(6, 2));
        let noise = Perturbation::default();
        let w = GradWeights::default();
        let g = hamiltonian_grad(&n, &c, Some(&e), w, 2, LossKind::Mse, noise, 5).unwrap();
        let gc = backward(&n, &c.x, &c.y, LossKind::Mse).unwrap();
        let ge = backward(&n, &e.x, &e.y, LossKind::Mse).unwrap();
        let dv = perturbation_grad(&n, &c, noise, 2, LossKind::Mse, 5).unwrap();
        let mut want = Gradients::zeros_like(&n);
        want.add_scaled(0.4, &gc).unwrap();
        want.add_scaled(0.4, &ge).unwrap();
        want.add_scaled(0.1, &dv).unwrap();
        assert!(close(&g, &want, 1e-12));
    }

    #[test]
    fn replay_term_absent_at_first_task() {
        let (n, c, e) = (net(), batch(6, 1), batch(6, 2));
        let noise = Perturbation::default();
        let with = hamiltonian_grad(&n, &c, Some(&e), GradWeights::default(), 0, LossKind::Mse, noise, 5).unwrap();
        let without = hamiltonian_grad(&n, &c, None, GradWeights::default(), 0, LossKind::Mse, noise, 5).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn perturbation_scaling() {
        let (n, c) = (net(), batch(8, 4));
        let zero = Perturbation { sigma_x2: 0.0, sigma_w2: 0.0 };
        assert_eq!(perturbation_grad(&n, &c, zero, 0, LossKind::Mse, 1).unwrap().global_norm(), 0.0);
        let p = Perturbation::default();
        let g0 = perturbation_grad(&n, &c, p, 0, LossKind::Mse, 1).unwrap().global_norm();
        let g9 = perturbation_grad(&n, &c, p, 9, LossKind::Mse, 1).unwrap().global_norm();
        assert!(g0 > 0.0);
        assert!((g0 / g9 - 10.0).abs() < 1e-9);
    }

    #[test]
    fn condition_parsing() {
        assert_eq!("c3".parse::<Condition>().unwrap(), Condition::C3);
        assert!("C5".parse::<Condition>().is_err());
        assert!(!Condition::C1.uses_heuristics());
        assert!(Condition::C4.transfers() && Condition::C4.searches());
    }
}
