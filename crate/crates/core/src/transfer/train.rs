use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{apply_transfer, init_ab, plan_ffn_shapes, transfer_norms, TransferPair, TransferPlan};
use crate::error::{Error, Result};
use crate::netcore::{loss, loss_and_gradients, Architecture, LossKind, Matrix, Network};
use crate::optim::{AdamWConfig, AdamWState};
use crate::seed::derive_seed;
use crate::tasks::Dataset;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AbConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for AbConfig {
    fn default() -> Self {
        Self { epochs: 500, lr: 1e-3, batch_size: 1024 }
    }
}

/// Task loss of the transferred network and its gradient with respect to
/// every `A_i` and `B_i`. With `G = ∂ℓ/∂V` and `g = ∂ℓ/∂b'`:
/// `∂ℓ/∂A = G·B·Wᵀ + g·bᵀ`, `∂ℓ/∂B = Gᵀ·A·W`.
pub fn ab_loss_and_grad(
    src: &Network,
    pair: &TransferPair,
    psi_new: &Architecture,
    x: &Matrix,
    y: &Matrix,
    kind: LossKind,
) -> Result<(f64, TransferPair)> {
    let net = apply_transfer(pair, src, psi_new)?;
    let (value, grads) = loss_and_gradients(&net, x, y, kind)?;
    let mut da = Vec::with_capacity(pair.a.len());
    let mut db = Vec::with_capacity(pair.b.len());
    for (i, layer) in src.layers().iter().enumerate() {
        let (a, b) = (&pair.a[i], &pair.b[i]);
        let g = &grads.layers[i];
        let mut ga = g.weight.matmul(b)?.matmul_t(&layer.weight)?;
        for r in 0..ga.rows() {
            let gb = g.bias[r];
            for (v, bo) in ga.row_mut(r).iter_mut().zip(&layer.bias) {
                *v += gb * bo;
            }
        }
        da.push(ga);
        db.push(g.weight.t_matmul(a)?.matmul(&layer.weight)?);
    }
    Ok((value, TransferPair { a: da, b: db }))
}

#[derive(Clone, Debug)]
pub struct AbOutcome {
    pub pair: TransferPair,
    /// Full-data loss of the initial pair.
    pub pre_loss: f64,
    /// Full-data loss of the returned pair.
    pub post_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub diverged: bool,
}

fn full_loss(src: &Network, pair: &TransferPair, psi_new: &Architecture, data: &Dataset, kind: LossKind) -> Result<f64> {
    let net = apply_transfer(pair, src, psi_new)?;
    loss(&net.forward(&data.x)?, &data.y, kind)
}

/// Adam on `A`, `B` only, keeping the pair with the lowest full-data loss seen
/// (the initial pair included), so the returned loss never exceeds `pre_loss`.
pub fn train_ab(
    src: &Network,
    pair: &TransferPair,
    psi_new: &Architecture,
    data: &Dataset,
    cfg: &AbConfig,
    kind: LossKind,
    seed: u64,
) -> Result<AbOutcome> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("A/B training data".into()));
    }
    let pre_loss = full_loss(src, pair, psi_new, data, kind)?;
    let mut best = (pair.clone(), pre_loss, 0usize);
    let mut current = pair.clone();
    let mut opt = AdamWState::new(&current, AdamWConfig::adam());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xAB]));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut diverged = false;
    let mut epochs_run = 0;
    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let b = data.subset(chunk);
            let (l, g) = ab_loss_and_grad(src, &current, psi_new, &b.x, &b.y, kind)?;
            if !l.is_finite() || !g.is_finite() {
                diverged = true;
                break 'epochs;
            }
            opt.step(&mut current, &g, cfg.lr)?;
        }
        epochs_run = epoch;
        let l = full_loss(src, &current, psi_new, data, kind)?;
        if !l.is_finite() || !current.is_finite() {
            diverged = true;
            break;
        }
        if l < best.1 {
            best = (current.clone(), l, epoch);
        }
    }
    if diverged {
        warn!("A/B training diverged after {epochs_run} epochs; keeping epoch {}", best.2);
    }
    Ok(AbOutcome {
        pair: best.0,
        pre_loss,
        post_loss: best.1,
        best_epoch: best.2,
        epochs_run,
        diverged,
    })
}

#[derive(Clone, Debug)]
pub struct MorphOutcome {
    pub net: Network,
    pub plan: TransferPlan,
    /// Loss of the source network before morphing.
    pub source_loss: f64,
    /// Loss straight after the identity-like initialisation.
    pub init_loss: f64,
    /// Loss of the returned network.
    pub post_loss: f64,
    /// `‖A_i W_i B_iᵀ‖_F` per layer.
    pub v_norms: Vec<f64>,
    pub ab: AbOutcome,
}

/// Plan, initialise, train `A`/`B` on `data` and apply.
pub fn morph(
    net: &Network,
    psi_new: &Architecture,
    data: &Dataset,
    cfg: &AbConfig,
    kind: LossKind,
    seed: u64,
) -> Result<MorphOutcome> {
    let plan = plan_ffn_shapes(net.arch(), psi_new)?;
    let pair = init_ab(&plan, derive_seed(seed, &[0x1D]));
    let source_loss = loss(&net.forward(&data.x)?, &data.y, kind)?;
    let ab = train_ab(net, &pair, psi_new, data, cfg, kind, seed)?;
    let out = apply_transfer(&ab.pair, net, psi_new)?;
    Ok(MorphOutcome {
        v_norms: transfer_norms(&ab.pair, net)?,
        init_loss: ab.pre_loss,
        post_loss: ab.post_loss,
        net: out,
        plan,
        source_loss,
        ab,
    })
}
