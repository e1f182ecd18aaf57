use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adapt_weights, hamiltonian_parts, perturbation_value, Condition, GradWeights, Perturbation};
use crate::error::{Error, Result};
use crate::netcore::{init_network, loss, loss_and_gradients, ActivationKind, Architecture, LossKind, Network};
use crate::optim::{clip_grad, schedule_lr, AdamWConfig, AdamWState, ScheduleKind};
use crate::replay::{ReplayBuffer, ReplayQuotas};
use crate::search::{ndds_search, should_change, SearchConfig, SearchOutcome, TrainingEvaluator};
use crate::seed::derive_seed;
use crate::tasks::Dataset;
use crate::transfer::{morph, AbConfig};

const TAG_INIT: u64 = 0x1417;
const TAG_REINIT: u64 = 0x4E1E;
const TAG_SHUFFLE: u64 = 0x5AFF;
const TAG_REPLAY: u64 = 0x4E9A;
const TAG_PERTURB: u64 = 0x9E47;
const TAG_SEARCH: u64 = 0x5EA6;
const TAG_MORPH: u64 = 0x4029;

/// Every training knob of the engine. Defaults are the full-scale settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub epochs_per_task: usize,
    pub batch_size: usize,
    /// Replay batch size; `None` uses `batch_size`.
    pub replay_batch_size: Option<usize>,
    pub lr0: f64,
    pub lr_min: f64,
    pub warmup_epochs: usize,
    pub warmup_lr_factor: f64,
    pub weights: GradWeights,
    pub perturbation: Perturbation,
    pub max_grad_norm: f64,
    pub adamw: AdamWConfig,
    pub quotas: ReplayQuotas,
    pub theta_loss: f64,
    /// Epochs averaged into `J_prev` and `J_curr`.
    pub j_window: usize,
    /// Cadence of the replay test metric inside the epoch loop.
    pub eval_every: usize,
    pub search: SearchConfig,
    pub ab: AbConfig,
    pub activation: ActivationKind,
    pub loss: LossKind,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            epochs_per_task: 500,
            batch_size: 1024,
            replay_batch_size: None,
            lr0: 1e-4,
            lr_min: 1e-6,
            warmup_epochs: 25,
            warmup_lr_factor: 0.1,
            weights: GradWeights::default(),
            perturbation: Perturbation::default(),
            max_grad_norm: 1.0,
            adamw: AdamWConfig::default(),
            quotas: ReplayQuotas::default(),
            theta_loss: 1.1,
            j_window: 10,
            eval_every: 10,
            search: SearchConfig::default(),
            ab: AbConfig::default(),
            activation: ActivationKind::Relu,
            loss: LossKind::Mse,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.batch_size == 0 || self.replay_batch_size == Some(0) {
            return bad("batch sizes must be ≥ 1".into());
        }
        if !(self.lr_min > 0.0 && self.lr0 >= self.lr_min) {
            return bad(format!("need lr0 ≥ lr_min > 0, got {} and {}", self.lr0, self.lr_min));
        }
        if !(self.warmup_lr_factor > 0.0) {
            return bad(format!("warmup lr factor {}", self.warmup_lr_factor));
        }
        if !(self.max_grad_norm > 0.0) {
            return bad(format!("max gradient norm {}", self.max_grad_norm));
        }
        if self.perturbation.sigma_x2 < 0.0 || self.perturbation.sigma_w2 < 0.0 {
            return bad("perturbation variances must be ≥ 0".into());
        }
        for (name, v) in [("alpha", self.weights.alpha), ("beta", self.weights.beta), ("gamma", self.weights.gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("gradient weight {name} = {v} outside [0, 1]"));
            }
        }
        if self.quotas.recent < 0.0 || self.quotas.older < 0.0 || self.quotas.recent + self.quotas.older > 1.0 {
            return bad(format!("replay quotas {:?}", self.quotas));
        }
        if self.j_window == 0 || self.eval_every == 0 {
            return bad("j_window and eval_every must be ≥ 1".into());
        }
        if !(self.ab.lr > 0.0) || self.ab.batch_size == 0 {
            return bad("A/B learning rate and batch size must be positive".into());
        }
        self.search.validate()
    }

    pub fn replay_batch(&self) -> usize {
        self.replay_batch_size.unwrap_or(self.batch_size)
    }

    fn schedule(&self, cond: Condition) -> ScheduleKind {
        if cond.uses_heuristics() {
            ScheduleKind::Cosine { lr0: self.lr0, lr_min: self.lr_min, horizon: self.epochs_per_task.max(1) }
        } else {
            ScheduleKind::Constant { lr: self.lr0 }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    Train,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: Phase,
    pub epoch: usize,
    /// `αℓc + βℓe + γδV` under the weights in use for this epoch.
    pub hamiltonian_loss: f64,
    /// The same blend under the configured reference weights.
    pub reference_loss: f64,
    pub current_loss: f64,
    pub replay_loss: Option<f64>,
    /// Mean test loss over every task seen so far.
    pub replay_test_metric: Option<f64>,
    pub grad_norm: f64,
    pub lr: f64,
    pub arch: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphEvent {
    pub task: usize,
    pub psi_old: Vec<usize>,
    pub psi_new: Vec<usize>,
    pub source_loss: f64,
    pub init_loss: f64,
    pub post_loss: f64,
    pub n_ab: usize,
    pub best_epoch: usize,
    pub v_norms: Vec<f64>,
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskLog {
    pub task: usize,
    pub condition: Condition,
    pub arch_before: Vec<usize>,
    pub arch_after: Vec<usize>,
    pub weights: GradWeights,
    pub j_prev: Option<f64>,
    pub j_curr: Option<f64>,
    pub change_triggered: bool,
    pub search: Option<SearchOutcome>,
    pub search_error: Option<String>,
    pub reinitialized: bool,
    pub morph: Option<MorphEvent>,
    pub epochs: Vec<EpochRecord>,
}

impl TaskLog {
    pub fn train_epochs(&self) -> impl Iterator<Item = &EpochRecord> {
        self.epochs.iter().filter(|e| e.phase == Phase::Train)
    }

    /// Mean Hamiltonian over the last `n` training epochs.
    pub fn tail_hamiltonian(&self, n: usize) -> Option<f64> {
        tail_mean(self.train_epochs().map(|e| e.hamiltonian_loss).collect(), n)
    }

    /// Mean reference-weight loss over the last `n` training epochs.
    pub fn tail_reference(&self, n: usize) -> Option<f64> {
        tail_mean(self.train_epochs().map(|e| e.reference_loss).collect(), n)
    }
}

fn tail_mean(v: Vec<f64>, n: usize) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let tail = &v[v.len().saturating_sub(n.max(1))..];
    Some(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Mutable state carried across the tasks of one run.
#[derive(Clone, Debug)]
pub struct RunState {
    pub net: Network,
    pub opt: AdamWState,
    pub run_seed: u64,
    /// Tail Hamiltonian of the previous task.
    pub j_prev: Option<f64>,
}

impl RunState {
    /// Fresh Glorot network; identical across conditions for one seed.
    pub fn new(arch: &Architecture, cfg: &EngineConfig, run_seed: u64) -> Self {
        let net = init_network(arch, cfg.activation, derive_seed(run_seed, &[TAG_INIT]));
        let opt = AdamWState::new(&net, cfg.adamw);
        Self { net, opt, run_seed, j_prev: None }
    }

    fn reset_optimizer(&mut self, cfg: &EngineConfig) {
        self.opt = AdamWState::new(&self.net, cfg.adamw);
    }
}

pub fn evaluate_loss(net: &Network, ds: &Dataset, kind: LossKind) -> Result<f64> {
    loss(&net.forward(&ds.x)?, &ds.y, kind)
}

fn mean_eval(net: &Network, sets: &[Dataset], kind: LossKind) -> Result<Option<f64>> {
    if sets.is_empty() {
        return Ok(None);
    }
    let mut s = 0.0;
    for d in sets {
        s += evaluate_loss(net, d, kind)?;
    }
    Ok(Some(s / sets.len() as f64))
}

#[derive(Clone, Copy)]
enum ReplayMode {
    Uniform,
    Balanced,
}

struct LoopSpec<'a> {
    phase: Phase,
    epochs: usize,
    schedule: ScheduleKind,
    weights: GradWeights,
    replay: Option<(&'a ReplayBuffer, ReplayMode)>,
    t: usize,
}

fn run_epochs(
    state: &mut RunState,
    spec: LoopSpec<'_>,
    train: &Dataset,
    eval_sets: &[Dataset],
    cfg: &EngineConfig,
) -> Result<Vec<EpochRecord>> {
    let kind = cfg.loss;
    let t = spec.t;
    let phase_tag = spec.phase as u64;
    let mut records = Vec::with_capacity(spec.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..spec.epochs {
        let lr = schedule_lr(&spec.schedule, epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(state.run_seed, &[TAG_SHUFFLE, t as u64, phase_tag, epoch as u64]));
        order.shuffle(&mut rng);
        let (mut refsum, mut blend, mut cur, mut rep, mut norm) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut rep_n = 0usize;
        let chunks: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        for (step, chunk) in chunks.iter().enumerate() {
            let tags = [t as u64, phase_tag, epoch as u64, step as u64];
            let batch_c = train.subset(chunk);
            let batch_e = match spec.replay {
                Some((buf, mode)) if !buf.is_empty() => {
                    let seed = derive_seed(state.run_seed, &[&[TAG_REPLAY][..], &tags].concat());
                    let b = match mode {
                        ReplayMode::Uniform => buf.sample_uniform(cfg.replay_batch(), seed)?,
                        ReplayMode::Balanced => buf.sample_balanced(cfg.replay_batch(), t, cfg.quotas, seed)?,
                    };
                    Some(b.data)
                }
                _ => None,
            };
            let pseed = derive_seed(state.run_seed, &[&[TAG_PERTURB][..], &tags].concat());
            let (reference, used, current_loss, replay_loss, mut grads) = if spec.phase == Phase::Warmup {
                // Current-task gradient only; replay and δV are measured but not trained on.
                let (lc, g) = loss_and_gradients(&state.net, &batch_c.x, &batch_c.y, kind)?;
                let le = match &batch_e {
                    Some(b) if t > 0 => Some(evaluate_loss(&state.net, b, kind)?),
                    _ => None,
                };
                let dv = perturbation_value(&state.net, &batch_c, cfg.perturbation, t, kind, pseed)?;
                let w = cfg.weights;
                let reference = w.alpha * lc + w.beta * le.unwrap_or(0.0) + w.gamma * dv;
                let mut g = g;
                g.scale(spec.weights.alpha);
                (reference, spec.weights.alpha * lc, lc, le, g)
            } else {
                let parts = hamiltonian_parts(&state.net, &batch_c, batch_e.as_ref(), t, kind, cfg.perturbation, pseed)?;
                let g = parts.blend(spec.weights)?;
                (parts.value(cfg.weights), parts.value(spec.weights), parts.current_loss, parts.replay_loss, g)
            };
            if !reference.is_finite() || !grads.is_finite() {
                return Err(Error::NonFinite(format!("{:?} loss at task {t}, epoch {epoch}", spec.phase)));
            }
            norm += clip_grad(&mut grads, cfg.max_grad_norm);
            state.opt.step(&mut state.net, &grads, lr)?;
            refsum += reference;
            blend += used;
            cur += current_loss;
            if let Some(l) = replay_loss {
                rep += l;
                rep_n += 1;
            }
        }
        let n = chunks.len().max(1) as f64;
        let last = epoch + 1 == spec.epochs;
        let replay_test_metric = if spec.phase == Phase::Train && (epoch % cfg.eval_every == cfg.eval_every - 1 || last) {
            mean_eval(&state.net, eval_sets, kind)?
        } else {
            None
        };
        records.push(EpochRecord {
            phase: spec.phase,
            epoch,
            hamiltonian_loss: blend / n,
            reference_loss: refsum / n,
            current_loss: cur / n,
            replay_loss: (rep_n > 0).then(|| rep / rep_n as f64),
            replay_test_metric,
            grad_norm: norm / n,
            lr,
            arch: state.net.arch().widths().to_vec(),
        });
    }
    Ok(records)
}

/// Current-task training at `warmup_lr_factor · lr0` with weights `(1, 0, 0)`.
/// The replay buffer, when given, only enters the logged Hamiltonian.
pub fn warmup(
    state: &mut RunState,
    train: &Dataset,
    buf: Option<&ReplayBuffer>,
    n_epochs: usize,
    cfg: &EngineConfig,
    t: usize,
) -> Result<Vec<EpochRecord>> {
    let spec = LoopSpec {
        phase: Phase::Warmup,
        epochs: n_epochs,
        schedule: ScheduleKind::Constant { lr: cfg.warmup_lr_factor * cfg.lr0 },
        weights: GradWeights::CURRENT_ONLY,
        replay: buf.map(|b| (b, ReplayMode::Balanced)),
        t,
    };
    run_epochs(state, spec, train, &[], cfg)
}

/// Trains one task under `cond` and then appends its data to the buffer.
/// `eval_sets` are the test splits of tasks `0..=t`, used for the in-loop
/// replay test metric.
pub fn train_task(
    cond: Condition,
    state: &mut RunState,
    train: &Dataset,
    eval_sets: &[Dataset],
    buf: &mut ReplayBuffer,
    cfg: &EngineConfig,
    t: usize,
) -> Result<TaskLog> {
    if train.is_empty() {
        return Err(Error::EmptyDataset(format!("training data of task {t}")));
    }
    let arch_before = state.net.arch().widths().to_vec();
    let mut log = TaskLog {
        task: t,
        condition: cond,
        arch_before: arch_before.clone(),
        arch_after: arch_before,
        weights: cfg.weights,
        j_prev: state.j_prev,
        j_curr: None,
        change_triggered: false,
        search: None,
        search_error: None,
        reinitialized: false,
        morph: None,
        epochs: Vec::new(),
    };

    if t > 0 && cond.uses_heuristics() {
        let records = warmup(state, train, Some(buf), cfg.warmup_epochs, cfg, t)?;
        let j_curr = tail_mean(records.iter().map(|r| r.reference_loss).collect(), cfg.j_window);
        log.epochs.extend(records);
        log.j_curr = j_curr;
        if let (Some(jc), Some(jp)) = (j_curr, state.j_prev) {
            log.weights = adapt_weights(jc, jp);
            log.change_triggered = cond.searches() && should_change(jc, jp, cfg.theta_loss);
        }
        debug!("task {t} {cond}: J_curr={j_curr:?} J_prev={:?} weights={:?}", state.j_prev, log.weights);
    }

    if log.change_triggered {
        change_architecture(cond, state, train, buf, cfg, t, &mut log)?;
    }

    let spec = LoopSpec {
        phase: Phase::Train,
        epochs: cfg.epochs_per_task,
        schedule: cfg.schedule(cond),
        weights: log.weights,
        replay: Some((&*buf, if cond.uses_heuristics() { ReplayMode::Balanced } else { ReplayMode::Uniform })),
        t,
    };
    let records = run_epochs(state, spec, train, eval_sets, cfg)?;
    log.epochs.extend(records);
    log.arch_after = state.net.arch().widths().to_vec();
    state.j_prev = log.tail_reference(cfg.j_window);
    buf.add_task(train, t)?;
    Ok(log)
}

fn change_architecture(
    cond: Condition,
    state: &mut RunState,
    train: &Dataset,
    buf: &ReplayBuffer,
    cfg: &EngineConfig,
    t: usize,
    log: &mut TaskLog,
) -> Result<()> {
    let seed = derive_seed(state.run_seed, &[TAG_SEARCH, t as u64]);
    let pool = match buf.all_data() {
        Some(old) => Dataset::concat(&[train, &old])?,
        None => train.clone(),
    };
    let evaluator = TrainingEvaluator {
        data: pool.sample_subset(cfg.search.eval_subset_size, seed),
        epochs: cfg.search.eval_epochs,
        batch_size: cfg.search.eval_batch_size,
        lr: cfg.lr0,
        activation: cfg.activation,
        loss: cfg.loss,
        adamw: cfg.adamw,
        max_grad_norm: cfg.max_grad_norm,
        seed,
    };
    let psi = state.net.arch().clone();
    let outcome = cfg
        .search
        .direction_set(&psi)
        .and_then(|dirs| ndds_search(&psi, &dirs, &cfg.search, &evaluator));
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            warn!("task {t} {cond}: architecture search failed, keeping {psi}: {e}");
            log.search_error = Some(e.to_string());
            return Ok(());
        }
    };
    let psi_star = outcome.best.clone();
    info!(
        "task {t} {cond}: search {} -> {} ({} evaluations, loss {:.5} -> {:.5})",
        psi, psi_star, outcome.evaluations, outcome.initial_loss, outcome.best_loss
    );
    if !outcome.best_loss.is_finite() {
        log.search_error = Some("no trainable candidate".into());
    }
    log.search = Some(outcome);
    if log.search_error.is_some() || (psi_star == psi && !cond.transfers()) {
        return Ok(());
    }
    if cond.transfers() {
        let m = morph(&state.net, &psi_star, train, &cfg.ab, cfg.loss, derive_seed(state.run_seed, &[TAG_MORPH, t as u64]))?;
        log.morph = Some(MorphEvent {
            task: t,
            psi_old: psi.widths().to_vec(),
            psi_new: psi_star.widths().to_vec(),
            source_loss: m.source_loss,
            init_loss: m.init_loss,
            post_loss: m.post_loss,
            n_ab: cfg.ab.epochs,
            best_epoch: m.ab.best_epoch,
            v_norms: m.v_norms,
            diverged: m.ab.diverged,
        });
        state.net = m.net;
    } else {
        state.net = init_network(&psi_star, cfg.activation, derive_seed(state.run_seed, &[TAG_REINIT, t as u64]));
        log.reinitialized = true;
    }
    state.reset_optimizer(cfg);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{make_task_sequence, split, ImageFamily, SequenceKind, SineFamily};

    fn small_cfg() -> EngineConfig {
        EngineConfig {
            epochs_per_task: 6,
            batch_size: 32,
            warmup_epochs: 3,
            j_window: 3,
            eval_every: 2,
            search: SearchConfig { eval_epochs: 2, eval_subset_size: 32, eval_batch_size: 32, step_size: 4, max_rounds: 2, ..Default::default() },
            ab: AbConfig { epochs: 3, batch_size: 32, ..Default::default() },
            ..Default::default()
        }
    }

    fn tasks() -> Vec<(Dataset, Dataset)> {
        let fam = SineFamily { samples_per_task: 80, ..Default::default() };
        let seq = make_task_sequence(SequenceKind::Sine, 3, 5, &fam, &ImageFamily::default(), None).unwrap();
        seq.tasks.iter().map(|d| split(d, 0.8, 1).unwrap()).collect()
    }

    #[test]
    fn c1_lr_is_constant_and_buffer_grows() {
        let cfg = small_cfg();
        let arch = Architecture::new(vec![1, 8, 8, 1]).unwrap();
        let mut st = RunState::new(&arch, &cfg, 0);
        let mut buf = ReplayBuffer::new(10_000, 0);
        let data = tasks();
        for (t, (tr, _)) in data.iter().enumerate() {
            let evals: Vec<Dataset> = data[..=t].iter().map(|d| d.1.clone()).collect();
            let log = train_task(Condition::C1, &mut st, tr, &evals, &mut buf, &cfg, t).unwrap();
            assert!(log.epochs.iter().all(|e| e.lr == 1e-4 && e.phase == Phase::Train));
            assert_eq!(buf.task_count(), t + 1);
        }
    }

    #[test]
    fn first_task_is_condition_independent() {
        let cfg = small_cfg();
        let arch = Architecture::new(vec![1, 8, 1]).unwrap();
        let (tr, te) = &tasks()[0];
        let mut outs = Vec::new();
        for cond in [Condition::C2, Condition::C3, Condition::C4] {
            let mut st = RunState::new(&arch, &cfg, 3);
            let mut buf = ReplayBuffer::new(1000, 0);
            train_task(cond, &mut st, tr, std::slice::from_ref(te), &mut buf, &cfg, 0).unwrap();
            outs.push(st.net);
        }
        assert_eq!(outs[0], outs[1]);
        assert_eq!(outs[1], outs[2]);
    }

    #[test]
    fn warmup_with_zero_epochs_is_a_no_op() {
        let cfg = small_cfg();
        let arch = Architecture::new(vec![1, 8, 1]).unwrap();
        let mut st = RunState::new(&arch, &cfg, 3);
        let before = st.net.clone();
        let (tr, _) = &tasks()[0];
        assert!(warmup(&mut st, tr, None, 0, &cfg, 0).unwrap().is_empty());
        assert_eq!(st.net, before);
    }

    #[test]
    fn c4_always_triggered_changes_arch_smoothly() {
        let mut cfg = small_cfg();
        cfg.theta_loss = 0.0;
        cfg.search.directions = crate::search::DirectionKind::Growth;
        let arch = Architecture::new(vec![1, 8, 1]).unwrap();
        let mut st = RunState::new(&arch, &cfg, 1);
        let mut buf = ReplayBuffer::new(10_000, 0);
        let data = tasks();
        let mut morphs = 0;
        for (t, (tr, te)) in data.iter().enumerate() {
            let log = train_task(Condition::C4, &mut st, tr, std::slice::from_ref(te), &mut buf, &cfg, t).unwrap();
            if t > 0 {
                assert!(log.change_triggered);
            }
            if let Some(m) = &log.morph {
                morphs += 1;
                assert!(m.post_loss <= m.init_loss);
            }
        }
        assert_eq!(st.net.arch().input_width(), 1);
        assert!(morphs <= 2);
    }
}
