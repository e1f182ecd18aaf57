//! Neighborhood directional direct search over hidden-layer widths.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::GradWeights;
use crate::error::{Error, Result};
use crate::netcore::{init_network, loss, loss_and_gradients, ActivationKind, Architecture, LossKind};
use crate::optim::{clip_grad, AdamWConfig, AdamWState};
use crate::seed::derive_seed;
use crate::tasks::Dataset;

/// Integer direction vectors over the full width vector. Input and output
/// entries are always zero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionSet {
    dirs: Vec<Vec<i64>>,
}

impl DirectionSet {
    pub fn new(dirs: Vec<Vec<i64>>, arch: &Architecture) -> Result<Self> {
        let n = arch.widths().len();
        if dirs.iter().all(|d| d.iter().all(|&v| v == 0)) {
            return Err(Error::InvalidConfig("direction set has no nonzero direction".into()));
        }
        for d in &dirs {
            if d.len() != n {
                return Err(Error::InvalidConfig(format!(
                    "direction of length {} for a {n}-entry architecture",
                    d.len()
                )));
            }
            if d[0] != 0 || d[n - 1] != 0 {
                return Err(Error::InvalidConfig("directions must not touch input/output widths".into()));
            }
        }
        Ok(Self { dirs })
    }

    /// `+e_i` for every hidden layer.
    pub fn growth(arch: &Architecture) -> Result<Self> {
        Self::axis_multiples(arch, &[1], false)
    }

    /// `±k·e_i` for every hidden layer and every `k` in `ks`.
    pub fn axis(arch: &Architecture, ks: &[i64]) -> Result<Self> {
        Self::axis_multiples(arch, ks, true)
    }

    fn axis_multiples(arch: &Architecture, ks: &[i64], both_signs: bool) -> Result<Self> {
        let n = arch.widths().len();
        let mut dirs = Vec::new();
        for i in 1..n - 1 {
            for &k in ks {
                let signs: &[i64] = if both_signs { &[1, -1] } else { &[1] };
                for &s in signs {
                    let mut d = vec![0; n];
                    d[i] = s * k;
                    dirs.push(d);
                }
            }
        }
        if dirs.is_empty() {
            return Err(Error::InvalidConfig(format!("architecture {arch} has no hidden layer to search")));
        }
        Self::new(dirs, arch)
    }

    pub fn dirs(&self) -> &[Vec<i64>] {
        &self.dirs
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionKind {
    /// `±k·e_i`, `k ∈ {1, 2, 3}`.
    Axis,
    /// `+e_i`.
    Growth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub step_size: usize,
    pub threshold_ratio: f64,
    pub max_rounds: usize,
    pub eval_epochs: usize,
    pub eval_subset_size: usize,
    pub eval_batch_size: usize,
    pub directions: DirectionKind,
    /// Inclusive bounds on every hidden width; candidates outside are dropped.
    pub width_bounds: Option<(usize, usize)>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            step_size: 16,
            threshold_ratio: 0.9,
            max_rounds: 5,
            eval_epochs: 100,
            eval_subset_size: 1024,
            eval_batch_size: 1024,
            directions: DirectionKind::Axis,
            width_bounds: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds < 1 {
            return Err(Error::InvalidConfig("search max_rounds must be ≥ 1".into()));
        }
        if !(self.threshold_ratio > 0.0 && self.threshold_ratio <= 1.0) {
            return Err(Error::InvalidConfig(format!("threshold ratio {}", self.threshold_ratio)));
        }
        if self.eval_subset_size == 0 || self.eval_batch_size == 0 {
            return Err(Error::InvalidConfig("search subset and batch sizes must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn direction_set(&self, arch: &Architecture) -> Result<DirectionSet> {
        match self.directions {
            DirectionKind::Axis => DirectionSet::axis(arch, &[1, 2, 3]),
            DirectionKind::Growth => DirectionSet::growth(arch),
        }
    }
}

/// `{x + α·d}` for every direction, plus pairwise sums when `|D| ≤ 3`.
/// Invalid, out-of-bounds, duplicate and no-op candidates are dropped.
pub fn poll_points(x: &Architecture, dirs: &DirectionSet, step: usize) -> Vec<Architecture> {
    poll_points_bounded(x, dirs, step, None)
}

pub fn poll_points_bounded(
    x: &Architecture,
    dirs: &DirectionSet,
    step: usize,
    bounds: Option<(usize, usize)>,
) -> Vec<Architecture> {
    let mut moves: Vec<Vec<i64>> = dirs.dirs().to_vec();
    if dirs.len() <= 3 {
        for i in 0..dirs.len() {
            for j in i + 1..dirs.len() {
                moves.push(dirs.dirs()[i].iter().zip(&dirs.dirs()[j]).map(|(a, b)| a + b).collect());
            }
        }
    }
    let n = x.widths().len();
    let mut out: Vec<Architecture> = Vec::new();
    for d in moves {
        let widths: Option<Vec<usize>> = x
            .widths()
            .iter()
            .zip(&d)
            .enumerate()
            .map(|(i, (&w, &di))| {
                let v = w as i64 + step as i64 * di;
                let hidden = i > 0 && i < n - 1;
                let in_bounds = match bounds {
                    Some((lo, hi)) if hidden => v >= lo as i64 && v <= hi as i64,
                    _ => true,
                };
                (v >= 1 && in_bounds).then_some(v as usize)
            })
            .collect();
        let Some(widths) = widths else { continue };
        if widths == x.widths() || out.iter().any(|a| a.widths() == widths.as_slice()) {
            continue;
        }
        if let Ok(a) = Architecture::with_filter(widths, x.filter_size()) {
            out.push(a);
        }
    }
    out
}

/// Scores a candidate architecture; lower is better. Non-finite scores are
/// treated as rejected candidates.
pub trait CandidateEvaluator: Sync {
    fn evaluate(&self, arch: &Architecture) -> f64;
}

impl<F: Fn(&Architecture) -> f64 + Sync> CandidateEvaluator for F {
    fn evaluate(&self, arch: &Architecture) -> f64 {
        self(arch)
    }
}

/// Trains a fresh Glorot network on a fixed subset and reports its final loss.
#[derive(Clone, Debug)]
pub struct TrainingEvaluator {
    pub data: Dataset,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub activation: ActivationKind,
    pub loss: LossKind,
    pub adamw: AdamWConfig,
    pub max_grad_norm: f64,
    pub seed: u64,
}

impl TrainingEvaluator {
    /// Seed of the fresh network and the batch order; a function of the widths
    /// so a candidate scores the same whenever it is polled.
    pub fn candidate_seed(&self, arch: &Architecture) -> u64 {
        let tags: Vec<u64> = arch.widths().iter().map(|&w| w as u64).collect();
        derive_seed(self.seed, &tags)
    }
}

impl CandidateEvaluator for TrainingEvaluator {
    fn evaluate(&self, arch: &Architecture) -> f64 {
        evaluate_candidate(arch, self).unwrap_or(f64::INFINITY)
    }
}

/// Final mean loss on the subset after `epochs` passes of current-task
/// training from a fresh initialisation; `+∞` on divergence.
pub fn evaluate_candidate(arch: &Architecture, ev: &TrainingEvaluator) -> Result<f64> {
    if ev.data.is_empty() {
        return Err(Error::EmptyDataset("candidate evaluation subset".into()));
    }
    let seed = ev.candidate_seed(arch);
    let mut net = init_network(arch, ev.activation, seed);
    let mut opt = AdamWState::new(&net, ev.adamw);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xBA7C]));
    let mut order: Vec<usize> = (0..ev.data.len()).collect();
    let w = GradWeights::CURRENT_ONLY;
    for _ in 0..ev.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(ev.batch_size.max(1)) {
            let b = ev.data.subset(chunk);
            let (l, mut g) = loss_and_gradients(&net, &b.x, &b.y, ev.loss)?;
            if !l.is_finite() || !g.is_finite() {
                return Ok(f64::INFINITY);
            }
            g.scale(w.alpha);
            clip_grad(&mut g, ev.max_grad_norm);
            opt.step(&mut net, &g, ev.lr)?;
        }
    }
    let final_loss = loss(&net.forward(&ev.data.x)?, &ev.data.y, ev.loss)?;
    Ok(if final_loss.is_finite() { final_loss } else { f64::INFINITY })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub candidate: Vec<usize>,
    pub loss: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: Architecture,
    pub best_loss: f64,
    pub initial_loss: f64,
    pub rounds: usize,
    pub evaluations: usize,
    /// Accepted architectures in order, starting from the initial one.
    pub path: Vec<Vec<usize>>,
    pub trace: Vec<TraceRow>,
}

/// Greedy poll-and-move search. Each round evaluates every poll point and
/// moves to the best one only if it is strictly better; the search stops
/// when the loss reaches `threshold_ratio ×` the initial loss, after
/// `max_rounds` rounds, or when a round brings no improvement.
pub fn ndds_search(
    psi: &Architecture,
    dirs: &DirectionSet,
    cfg: &SearchConfig,
    evaluator: &dyn CandidateEvaluator,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    let cache: Mutex<HashMap<Vec<usize>, f64>> = Mutex::new(HashMap::new());
    let mut evaluations = 0usize;
    let mut score = |archs: &[Architecture]| -> Vec<f64> {
        let fresh: Vec<&Architecture> = {
            let c = cache.lock().expect("cache lock");
            archs.iter().filter(|a| !c.contains_key(a.widths())).collect()
        };
        evaluations += fresh.len();
        let scored: Vec<(Vec<usize>, f64)> = fresh
            .par_iter()
            .map(|a| {
                let l = evaluator.evaluate(a);
                (a.widths().to_vec(), if l.is_finite() { l } else { f64::INFINITY })
            })
            .collect();
        let mut c = cache.lock().expect("cache lock");
        c.extend(scored);
        archs.iter().map(|a| c[a.widths()]).collect()
    };

    let mut x = psi.clone();
    let initial_loss = score(std::slice::from_ref(psi))[0];
    let mut lx = initial_loss;
    let mut path = vec![x.widths().to_vec()];
    let mut trace = Vec::new();
    let mut rounds = 0;
    let target = cfg.threshold_ratio * initial_loss;
    while rounds < cfg.max_rounds && !(lx <= target) {
        let polls = poll_points_bounded(&x, dirs, cfg.step_size, cfg.width_bounds);
        if polls.is_empty() {
            break;
        }
        rounds += 1;
        let losses = score(&polls);
        let mut best = None;
        for (k, &l) in losses.iter().enumerate() {
            if l.is_finite() && best.map_or(true, |(_, bl)| l < bl) {
                best = Some((k, l));
            }
        }
        let moved = matches!(best, Some((_, l)) if l < lx);
        for (k, (a, &l)) in polls.iter().zip(&losses).enumerate() {
            trace.push(TraceRow {
                round: rounds,
                candidate: a.widths().to_vec(),
                loss: l,
                accepted: moved && best.map(|(b, _)| b) == Some(k),
            });
        }
        match best {
            Some((k, l)) if l < lx => {
                x = polls[k].clone();
                lx = l;
                path.push(x.widths().to_vec());
            }
            _ => break,
        }
    }
    Ok(SearchOutcome {
        best: x,
        best_loss: lx,
        initial_loss,
        rounds,
        evaluations,
        path,
        trace,
    })
}

/// `J_curr / J_prev > θ`; never fires for a non-positive `J_prev`.
pub fn should_change(j_curr: f64, j_prev: f64, theta: f64) -> bool {
    j_prev > 0.0 && j_curr / j_prev > theta
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(w: &[usize]) -> Architecture {
        Architecture::new(w.to_vec()).unwrap()
    }

    #[test]
    fn worked_example_poll_points() {
        let x = arch(&[784, 50, 50, 10]);
        let d = DirectionSet::new(vec![vec![0, 0, 10, 0], vec![0, 10, 0, 0]], &x).unwrap();
        let got: Vec<Vec<usize>> = poll_points(&x, &d, 1).iter().map(|a| a.widths().to_vec()).collect();
        assert_eq!(got.len(), 3);
        for want in [[784, 60, 50, 10], [784, 50, 60, 10], [784, 60, 60, 10]] {
            assert!(got.contains(&want.to_vec()), "{want:?} missing from {got:?}");
        }
    }

    #[test]
    fn zero_step_and_invalid_widths() {
        let x = arch(&[1, 8, 1]);
        let d = DirectionSet::axis(&x, &[1]).unwrap();
        assert!(poll_points(&x, &d, 0).is_empty());
        let got = poll_points(&x, &d, 8);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].widths(), &[1, 16, 1]);
    }

    #[test]
    fn directions_never_touch_io() {
        let x = arch(&[3, 8, 8, 2]);
        assert!(DirectionSet::new(vec![vec![1, 0, 0, 0]], &x).is_err());
        assert!(DirectionSet::new(vec![vec![0, 0, 0, 0]], &x).is_err());
        for p in poll_points(&x, &DirectionSet::axis(&x, &[1, 2, 3]).unwrap(), 16) {
            assert_eq!(p.input_width(), 3);
            assert_eq!(p.output_width(), 2);
        }
    }

    #[test]
    fn should_change_boundary() {
        assert!(!should_change(1.0, 1.0, 1.1));
        assert!(should_change(1.2, 1.0, 1.1));
        assert!(!should_change(1.1, 1.0, 1.1));
        assert!(!should_change(1.0, 0.0, 1.1));
    }

    #[test]
    fn monotone_objective_grows_every_round() {
        let x = arch(&[1, 8, 1]);
        let d = DirectionSet::growth(&x).unwrap();
        let cfg = SearchConfig { step_size: 4, threshold_ratio: 1e-9, ..Default::default() };
        let obj = |a: &Architecture| 1.0 / a.hidden()[0] as f64;
        let out = ndds_search(&x, &d, &cfg, &obj).unwrap();
        assert_eq!(out.best.widths(), &[1, 8 + 5 * 4, 1]);
        assert_eq!(out.rounds, 5);
        assert!(out.best_loss <= out.initial_loss);
    }

    #[test]
    fn ties_keep_incumbent_and_threshold_stops() {
        let x = arch(&[1, 8, 1]);
        let d = DirectionSet::axis(&x, &[1]).unwrap();
        let flat = |_: &Architecture| 1.0;
        let out = ndds_search(&x, &d, &SearchConfig { step_size: 2, ..Default::default() }, &flat).unwrap();
        assert_eq!(out.best, x);
        let cfg = SearchConfig { threshold_ratio: 1.0, ..Default::default() };
        let out = ndds_search(&x, &d, &cfg, &|a: &Architecture| a.hidden()[0] as f64 * -1.0 + 100.0).unwrap();
        assert_eq!(out.rounds, 0);
        assert_eq!(out.best, x);
    }

    #[test]
    fn training_evaluator_is_deterministic() {
        use crate::netcore::Matrix;
        let data = Dataset::new(
            Matrix::from_fn(32, 1, |r, _| r as f64 / 32.0),
            Matrix::from_fn(32, 1, |r, _| (r as f64 / 5.0).sin()),
            0,
        )
        .unwrap();
        let ev = TrainingEvaluator {
            data,
            epochs: 3,
            batch_size: 16,
            lr: 1e-3,
            activation: ActivationKind::Relu,
            loss: LossKind::Mse,
            adamw: AdamWConfig::default(),
            max_grad_norm: 1.0,
            seed: 7,
        };
        let a = arch(&[1, 8, 1]);
        assert_eq!(ev.evaluate(&a), ev.evaluate(&a));
        let at_init = TrainingEvaluator { epochs: 0, ..ev.clone() };
        let net = init_network(&a, ActivationKind::Relu, at_init.candidate_seed(&a));
        let want = loss(&net.forward(&at_init.data.x).unwrap(), &at_init.data.y, LossKind::Mse).unwrap();
        assert_eq!(at_init.evaluate(&a), want);
    }
}
