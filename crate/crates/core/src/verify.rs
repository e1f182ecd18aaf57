//! Acceptance checks shared by the `acceptance` test target and the
//! `verify` command. Every check returns a [`CriterionResult`]; none panics.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::Condition;
use crate::error::{Error, Result};
use crate::harness::{run_sweep, ExperimentKind, RunConfig, RunSummary};
use crate::metrics::{avg_perf, bwt, forgetting, spearman, task_divergence, PerfMatrix, Polarity};
use crate::netcore::{
    grad_check, init_network, loss, loss_and_gradients, max_relative_error, numeric_gradient, ActivationKind,
    Architecture, LossKind, Matrix, Network,
};
use crate::optim::{clip_grad, AdamWConfig, AdamWState};
use crate::replay::{QuotaGroup, ReplayBuffer, ReplayQuotas};
use crate::search::{ndds_search, DirectionSet, SearchConfig};
use crate::seed::derive_seed;
use crate::tasks::{make_task_sequence, Dataset, ImageFamily, SequenceKind, SineFamily};
use crate::transfer::{
    ab_loss_and_grad, apply_transfer, init_ab, morph, plan_conv_shapes, plan_feed_shapes, plan_ffn_shapes,
    transfer_filters, AbConfig, LayerPlan, TransferPair,
};

pub const GRAD_TOL: f64 = 1e-5;
pub const ALGEBRA_TOL: f64 = 1e-12;
pub const METRIC_TOL: f64 = 1e-12;
pub const QUOTA_TOL: f64 = 0.03;
pub const SINE2_MIN_GAIN: f64 = 0.15;
pub const SINE10_MAX_RATIO: f64 = 0.8;
pub const SPEARMAN_MIN: f64 = 0.5;
pub const FULL_EPOCHS: usize = 500;

#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {} {} ({:.1}s): {}", self.id, self.name, self.seconds, self.detail)
    }
}

type Check = fn() -> Result<(bool, String)>;

pub const CRITERIA: [(usize, &str, Check); 9] = [
    (1, "gradient correctness", gradient_correctness),
    (2, "transfer algebra", transfer_algebra),
    (3, "identity morph fixed point", identity_morph),
    (4, "search oracle equivalence", search_oracle),
    (5, "sine 2-task ordering", sine2_ordering),
    (6, "sine 10-task metrics", sine10_metrics),
    (7, "metrics and quota oracles", metric_oracles),
    (8, "A/B epoch ablation", ab_ablation),
    (9, "divergence probe", divergence_probe),
];

pub fn run_criterion(id: usize) -> CriterionResult {
    let (id, name, check) = CRITERIA
        .iter()
        .copied()
        .find(|c| c.0 == id)
        .unwrap_or((id, "unknown", || Err(Error::InvalidConfig("no such criterion".into()))));
    let start = Instant::now();
    let (passed, detail) = match check() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionResult { id, name, passed, detail, seconds: start.elapsed().as_secs_f64() }
}

/// Runs the selected criteria (all when `only` is `None`) in id order.
pub fn run_acceptance(only: Option<&[usize]>) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .filter(|c| only.map_or(true, |o| o.contains(&c.0)))
        .map(|c| run_criterion(c.0))
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, s: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-s..s))
}

fn random_arch(rng: &mut ChaCha8Rng, depth: usize, max_w: usize) -> Architecture {
    let widths = (0..=depth).map(|_| rng.gen_range(1..=max_w)).collect();
    Architecture::new(widths).expect("positive widths")
}

fn on_kink(net: &Network, x: &Matrix) -> Result<bool> {
    let cache = net.forward_cached(x)?;
    let kinks = net.hidden_activation().kinks();
    Ok(cache.pre[..cache.pre.len().saturating_sub(1)]
        .iter()
        .any(|z| z.data().iter().any(|v| kinks.iter().any(|k| (v - k).abs() < 1e-4))))
}

fn gradient_correctness() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let mut worst_net: f64 = 0.0;
    let mut nets = 0;
    for i in 0..64 {
        let act = ActivationKind::ALL[i % ActivationKind::ALL.len()];
        let depth = rng.gen_range(1..=3);
        let arch = random_arch(&mut rng, depth, 5);
        let kind = if i % 4 == 3 && arch.output_width() > 1 {
            LossKind::CrossEntropyWithLogits
        } else {
            LossKind::Mse
        };
        let net = init_network(&arch, act, rng.gen());
        let mut x = uniform(&mut rng, 4, arch.input_width(), 1.0);
        while on_kink(&net, &x)? {
            x = uniform(&mut rng, 4, arch.input_width(), 1.0);
        }
        let y = match kind {
            LossKind::Mse => uniform(&mut rng, 4, arch.output_width(), 1.0),
            _ => {
                let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..arch.output_width())).collect();
                crate::netcore::one_hot(&labels, arch.output_width())?
            }
        };
        worst_net = worst_net.max(grad_check(&net, &x, &y, kind, 1e-6)?);
        nets += 1;
    }
    let mut worst_ab: f64 = 0.0;
    let mut pairs = 0;
    for _ in 0..20 {
        let old = random_arch(&mut rng, 2, 4);
        let mut new_w = old.widths().to_vec();
        new_w[1] = rng.gen_range(1..=6);
        let new = Architecture::new(new_w)?;
        let mut src = init_network(&old, ActivationKind::Tanh, rng.gen());
        for l in src.layers_mut() {
            l.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.3..0.3));
        }
        let mut pair = init_ab(&plan_ffn_shapes(&old, &new)?, rng.gen());
        for m in pair.a.iter_mut().chain(pair.b.iter_mut()) {
            m.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
        }
        let x = uniform(&mut rng, 5, old.input_width(), 1.0);
        let y = uniform(&mut rng, 5, old.output_width(), 1.0);
        let (_, g) = ab_loss_and_grad(&src, &pair, &new, &x, &y, LossKind::Mse)?;
        let num = numeric_gradient(&pair, 1e-6, |p: &TransferPair| {
            apply_transfer(p, &src, &new)
                .and_then(|n| n.forward(&x))
                .and_then(|o| loss(&o, &y, LossKind::Mse))
                .unwrap_or(f64::NAN)
        });
        let analytic: Vec<&[f64]> = g.a.iter().chain(&g.b).map(|m| m.data()).collect();
        worst_ab = worst_ab.max(max_relative_error(&analytic, &num));
        pairs += 1;
    }
    let ok = worst_net <= GRAD_TOL && worst_ab <= GRAD_TOL && nets >= 50;
    Ok((ok, format!("{nets} nets worst {worst_net:.2e}, {pairs} A/B pairs worst {worst_ab:.2e} (tol {GRAD_TOL:.0e})")))
}

/// `Σ_k Σ_l A[i][k]·W[k][l]·B[j][l]` with plain loops.
fn triple_loop(a: &Matrix, w: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), b.rows(), |i, j| {
        let mut s = 0.0;
        for k in 0..w.rows() {
            for l in 0..w.cols() {
                s += a.get(i, k) * w.get(k, l) * b.get(j, l);
            }
        }
        s
    })
}

fn transfer_algebra() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let depth = rng.gen_range(1..=3);
        let old = random_arch(&mut rng, depth, 8);
        let new_w: Vec<usize> = old
            .widths()
            .iter()
            .enumerate()
            .map(|(i, &w)| if i == 0 || i == old.depth() { w } else { rng.gen_range(1..=8) })
            .collect();
        let new = Architecture::new(new_w)?;
        let mut src = init_network(&old, ActivationKind::Relu, rng.gen());
        for l in src.layers_mut() {
            l.bias.iter_mut().for_each(|b| *b = rng.gen_range(-1.0..1.0));
        }
        let plan = plan_ffn_shapes(&old, &new)?;
        let pair = TransferPair {
            a: plan.layers.iter().map(|p| uniform(&mut rng, p.a.0, p.a.1, 1.0)).collect(),
            b: plan.layers.iter().map(|p| uniform(&mut rng, p.b.0, p.b.1, 1.0)).collect(),
        };
        let out = apply_transfer(&pair, &src, &new)?;
        for (i, (l_new, l_old)) in out.layers().iter().zip(src.layers()).enumerate() {
            let v = triple_loop(&pair.a[i], &l_old.weight, &pair.b[i]);
            for (p, q) in l_new.weight.data().iter().zip(v.data()) {
                worst = worst.max((p - q).abs());
            }
            for r in 0..pair.a[i].rows() {
                let mut s = 0.0;
                for k in 0..l_old.bias.len() {
                    s += pair.a[i].get(r, k) * l_old.bias[k];
                }
                worst = worst.max((l_new.bias[r] - s).abs());
            }
        }
    }
    let a = |w: &[usize]| Architecture::new(w.to_vec());
    let p = plan_ffn_shapes(&a(&[64, 128, 128, 10])?, &a(&[64, 256, 256, 10])?)?;
    let table = p.layers
        == vec![
            LayerPlan { a: (256, 128), b: (64, 64) },
            LayerPlan { a: (256, 128), b: (256, 128) },
            LayerPlan { a: (10, 10), b: (256, 128) },
        ];
    let f = plan_conv_shapes(3, 5)?;
    let filters = vec![uniform(&mut rng, 3, 3, 1.0)];
    let v = transfer_filters(&filters, &f, &uniform(&mut rng, 5, 3, 1.0), &uniform(&mut rng, 5, 3, 1.0))?;
    let conv = f.a == (5, 3) && f.b == (5, 3) && v[0].shape() == (5, 5);
    let feed = plan_feed_shapes(2304, 1600, 128, 128)? == LayerPlan { a: (128, 128), b: (1600, 2304) };
    let ok = worst <= ALGEBRA_TOL && table && conv && feed;
    Ok((ok, format!("200 triples worst |Δ| {worst:.1e} (tol {ALGEBRA_TOL:.0e}); ffn table {table}, conv 5x3→5x5 {conv}, feed {feed}")))
}

fn identity_morph() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
    let mut mismatched = 0;
    let mut nets = 0;
    for act in ActivationKind::ALL {
        let arch = random_arch(&mut rng, 3, 9);
        let net = init_network(&arch, act, rng.gen());
        let data = Dataset::new(
            uniform(&mut rng, 32, arch.input_width(), 1.0),
            uniform(&mut rng, 32, arch.output_width(), 1.0),
            0,
        )?;
        let cfg = AbConfig { epochs: 0, ..Default::default() };
        let m = morph(&net, &arch, &data, &cfg, LossKind::Mse, rng.gen())?;
        let x = uniform(&mut rng, 100, arch.input_width(), 3.0);
        let (p, q) = (net.forward(&x)?, m.net.forward(&x)?);
        if p.data().iter().zip(q.data()).any(|(a, b)| a.to_bits() != b.to_bits()) {
            mismatched += 1;
        }
        nets += 1;
    }
    Ok((mismatched == 0, format!("{nets} nets × 100 inputs, {mismatched} with differing bits")))
}

/// Greedy walk over a lookup table, written without the search module:
/// polls the grid neighbours `±step` along each hidden axis.
fn greedy_oracle(table: &dyn Fn(usize, usize) -> f64, start: (usize, usize), step: usize, bounds: (usize, usize), ratio: f64, max_rounds: usize) -> Vec<(usize, usize)> {
    let mut x = start;
    let l0 = table(x.0, x.1);
    let mut lx = l0;
    let mut path = vec![x];
    for _ in 0..max_rounds {
        if lx <= ratio * l0 {
            break;
        }
        let mut best: Option<((usize, usize), f64)> = None;
        for (d0, d1) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
            let c0 = x.0 as i64 + d0 * step as i64;
            let c1 = x.1 as i64 + d1 * step as i64;
            if c0 < bounds.0 as i64 || c0 > bounds.1 as i64 || c1 < bounds.0 as i64 || c1 > bounds.1 as i64 {
                continue;
            }
            let c = (c0 as usize, c1 as usize);
            let l = table(c.0, c.1);
            if best.map_or(true, |(_, bl)| l < bl) {
                best = Some((c, l));
            }
        }
        match best {
            Some((c, l)) if l < lx => {
                x = c;
                lx = l;
                path.push(x);
            }
            _ => break,
        }
    }
    path
}

fn search_oracle() -> Result<(bool, String)> {
    let grid = [8usize, 16, 24, 32];
    let mut agree = 0;
    let mut lens = Vec::new();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0xC4, &[seed]));
        let values: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..1.0)).collect();
        let table = move |a: usize, b: usize| values[(a / 8 - 1) * 4 + (b / 8 - 1)];
        let start = (grid[rng.gen_range(0..4)], grid[rng.gen_range(0..4)]);
        let cfg = SearchConfig {
            step_size: 8,
            threshold_ratio: 0.1,
            max_rounds: 6,
            width_bounds: Some((8, 32)),
            ..Default::default()
        };
        let psi = Architecture::new(vec![3, start.0, start.1, 1])?;
        let dirs = DirectionSet::axis(&psi, &[1])?;
        let t = table.clone();
        let eval = move |a: &Architecture| t(a.widths()[1], a.widths()[2]);
        let out = ndds_search(&psi, &dirs, &cfg, &eval)?;
        let got: Vec<(usize, usize)> = out.path.iter().map(|w| (w[1], w[2])).collect();
        let want = greedy_oracle(&table, start, 8, (8, 32), cfg.threshold_ratio, cfg.max_rounds);
        if got == want {
            agree += 1;
        }
        lens.push(want.len());
    }
    Ok((agree == 10, format!("{agree}/10 trajectories match; oracle path lengths {lens:?}")))
}

fn condition_means(summaries: &[RunSummary], f: impl Fn(&RunSummary) -> Option<f64>) -> Result<Vec<(Condition, f64)>> {
    let mut out = Vec::new();
    for c in Condition::ALL {
        let vals: Vec<f64> = summaries.iter().filter(|s| s.condition == c).filter_map(&f).collect();
        if !vals.is_empty() {
            out.push((c, vals.iter().sum::<f64>() / vals.len() as f64));
        }
    }
    Ok(out)
}

fn collect(cfg: &RunConfig) -> Result<Vec<RunSummary>> {
    let mut out = Vec::new();
    for r in run_sweep(cfg)? {
        out.push(r?.summary);
    }
    Ok(out)
}

fn mean_of(means: &[(Condition, f64)], c: Condition) -> Result<f64> {
    means
        .iter()
        .find(|m| m.0 == c)
        .map(|m| m.1)
        .ok_or_else(|| Error::InvalidConfig(format!("no {c} runs")))
}

/// The bundled desk configuration for `experiment`.
pub fn desk_config(experiment: ExperimentKind) -> RunConfig {
    RunConfig { experiment, ..RunConfig::desk() }
}

fn sine2_ordering() -> Result<(bool, String)> {
    let cfg = desk_config(ExperimentKind::Sine2);
    let runs = collect(&cfg)?;
    let h = condition_means(&runs, |s| s.final_hamiltonian)?;
    let (c1, c3, c4) = (mean_of(&h, Condition::C1)?, mean_of(&h, Condition::C3)?, mean_of(&h, Condition::C4)?);
    let gain = (c1 - c4) / c1;
    let ok = c4 < c3 && c3 <= c1 && gain >= SINE2_MIN_GAIN;
    let all = h.iter().map(|(c, v)| format!("{c} {v:.4}")).collect::<Vec<_>>().join(", ");
    Ok((ok, format!("final H {all}; C4 gain over C1 {:.1}% (need ≥ {:.0}%)", gain * 100.0, SINE2_MIN_GAIN * 100.0)))
}

fn sine10_ratios(cfg: &RunConfig) -> Result<(f64, f64)> {
    let runs = collect(cfg)?;
    let avg = condition_means(&runs, |s| s.avg)?;
    let fgt = condition_means(&runs, |s| s.forgetting)?;
    Ok((
        mean_of(&avg, Condition::C4)? / mean_of(&avg, Condition::C1)?,
        mean_of(&fgt, Condition::C4)? / mean_of(&fgt, Condition::C1)?,
    ))
}

fn sine10_metrics() -> Result<(bool, String)> {
    let cfg = RunConfig { conditions: vec![Condition::C1, Condition::C4], ..desk_config(ExperimentKind::Sine10) };
    let pass = |r: (f64, f64)| r.0 <= SINE10_MAX_RATIO && r.1 <= SINE10_MAX_RATIO;
    let desk = sine10_ratios(&cfg)?;
    let mut detail = format!("desk avg ratio {:.3}, forgetting ratio {:.3} (need ≤ {SINE10_MAX_RATIO})", desk.0, desk.1);
    if pass(desk) {
        return Ok((true, detail));
    }
    let mut full = cfg.clone();
    full.engine.epochs_per_task = FULL_EPOCHS;
    let full_ratios = sine10_ratios(&full)?;
    detail += &format!("; at {FULL_EPOCHS} epochs avg ratio {:.3}, forgetting ratio {:.3}", full_ratios.0, full_ratios.1);
    Ok((pass(full_ratios), detail))
}

/// `R[j][i]` for `j ≥ i`, drawn uniformly.
fn random_perf(rng: &mut ChaCha8Rng, t: usize) -> Vec<Vec<f64>> {
    (0..t).map(|j| (0..=j).map(|_| rng.gen_range(0.0..1.0)).collect()).collect()
}

fn metric_oracles() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC7);
    let mut worst: f64 = 0.0;
    let mut nulls_ok = true;
    for n in 0..1000 {
        let t = rng.gen_range(1..=8);
        let polarity = if n % 2 == 0 { Polarity::Error } else { Polarity::Accuracy };
        let rows = random_perf(&mut rng, t);
        let mut m = PerfMatrix::new(t, polarity);
        for (j, row) in rows.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                m.set(j, i, v)?;
            }
        }
        let last = &rows[t - 1];
        let mut avg = 0.0;
        for v in last {
            avg += v;
        }
        avg /= t as f64;
        worst = worst.max((avg_perf(&m)? - avg).abs());
        if t == 1 {
            nulls_ok &= bwt(&m)?.is_none() && forgetting(&m)?.is_none();
            continue;
        }
        let mut b = 0.0;
        let mut f = 0.0;
        for i in 0..t - 1 {
            b += rows[i][i] - last[i];
            let mut best = rows[i][i];
            for row in rows.iter().take(t).skip(i) {
                best = match polarity {
                    Polarity::Error => best.min(row[i]),
                    Polarity::Accuracy => best.max(row[i]),
                };
            }
            let drop = match polarity {
                Polarity::Error => last[i] - best,
                Polarity::Accuracy => best - last[i],
            };
            f += if drop > 0.0 { drop } else { 0.0 };
        }
        b /= (t - 1) as f64;
        f /= (t - 1) as f64;
        worst = worst.max((bwt(&m)?.unwrap_or(f64::NAN) - b).abs());
        worst = worst.max((forgetting(&m)?.unwrap_or(f64::NAN) - f).abs());
    }
    if worst.is_nan() {
        worst = f64::INFINITY;
    }

    let mut buf = ReplayBuffer::new(100_000, 7);
    for task in 0..5 {
        let x = Matrix::from_fn(2000, 1, |r, _| r as f64);
        buf.add_task(&Dataset::new(x.clone(), x, task)?, task)?;
    }
    let mut counts = [0usize; 3];
    let mut total = 0usize;
    for k in 0..100u64 {
        let batch = buf.sample_balanced(100, 5, ReplayQuotas::default(), k)?;
        for g in &batch.groups {
            counts[match g {
                QuotaGroup::Recent => 0,
                QuotaGroup::Older => 1,
                QuotaGroup::Random => 2,
            }] += 1;
        }
        total += batch.groups.len();
    }
    let frac: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let quota_ok = total == 10_000 && frac.iter().zip([0.1, 0.8, 0.1]).all(|(f, q)| (f - q).abs() <= QUOTA_TOL);
    let ok = worst <= METRIC_TOL && nulls_ok && quota_ok;
    Ok((
        ok,
        format!(
            "1000 matrices worst |Δ| {worst:.1e} (tol {METRIC_TOL:.0e}), single-task nulls {nulls_ok}; quota fractions {:.3}/{:.3}/{:.3} over {total}",
            frac[0], frac[1], frac[2]
        ),
    ))
}

fn ab_ablation() -> Result<(bool, String)> {
    let base = RunConfig { conditions: vec![Condition::C4], ..desk_config(ExperimentKind::Sine2) };
    let sweep = [0usize, 50, 200];
    let mut per_seed: Vec<Vec<f64>> = vec![Vec::new(); base.seeds.len()];
    let mut morphed = vec![true; base.seeds.len()];
    for &n_ab in &sweep {
        let mut cfg = base.clone();
        cfg.engine.ab.epochs = n_ab;
        let mut runs = collect(&cfg)?;
        runs.sort_by_key(|s| s.seed);
        for (k, s) in runs.iter().enumerate() {
            per_seed[k].push(s.forgetting.unwrap_or(f64::NAN));
            morphed[k] &= !s.morphs.is_empty();
        }
    }
    let monotone: Vec<bool> = per_seed.iter().map(|f| f.windows(2).all(|w| w[1] <= w[0])).collect();
    let hits = monotone.iter().filter(|&&m| m).count();
    let ok = 2 * hits > per_seed.len();
    let rows = per_seed
        .iter()
        .zip(&base.seeds)
        .zip(&morphed)
        .map(|((f, s), m)| format!("seed {s}{}: {}", if *m { "" } else { " (no morph)" }, f.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" → ")))
        .collect::<Vec<_>>()
        .join("; ");
    Ok((ok, format!("forgetting over N_AB {sweep:?}: {rows}; non-increasing for {hits}/{}", per_seed.len())))
}

/// Trains a small regressor on one task for the divergence probe.
fn fit(data: &Dataset, seed: u64) -> Result<Network> {
    let arch = Architecture::new(vec![data.x.cols(), 32, 32, data.y.cols()])?;
    let mut net = init_network(&arch, ActivationKind::Relu, seed);
    let mut opt = AdamWState::new(&net, AdamWConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..150 {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for chunk in order.chunks(64) {
            let b = data.subset(chunk);
            let (_, mut g) = loss_and_gradients(&net, &b.x, &b.y, LossKind::Mse)?;
            clip_grad(&mut g, 1.0);
            opt.step(&mut net, &g, 3e-3)?;
        }
    }
    Ok(net)
}

fn divergence_probe() -> Result<(bool, String)> {
    let fam = SineFamily { samples_per_task: 600, ..Default::default() };
    let mut deltas = Vec::new();
    let mut gaps = Vec::new();
    for seed in 0..20u64 {
        let seq = make_task_sequence(SequenceKind::Sine, 2, derive_seed(0xC9, &[seed]), &fam, &ImageFamily::default(), None)?;
        let (a, b) = (&seq.tasks[0], &seq.tasks[1]);
        deltas.push(task_divergence(a, b, 16)?);
        let net = fit(a, seed)?;
        let la = loss(&net.forward(&a.x)?, &a.y, LossKind::Mse)?;
        let lb = loss(&net.forward(&b.x)?, &b.y, LossKind::Mse)?;
        gaps.push((lb - la).abs());
    }
    let rho = spearman(&deltas, &gaps)?;
    Ok((rho >= SPEARMAN_MIN, format!("Spearman(δ̂, |loss gap|) = {rho:.3} over 20 pairs (need ≥ {SPEARMAN_MIN})")))
}
