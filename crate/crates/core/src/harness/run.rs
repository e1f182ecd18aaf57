use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{error, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::RunConfig;
use crate::engine::{evaluate_loss, train_task, Condition, MorphEvent, RunState, TaskLog};
use crate::error::{Error, Result};
use crate::metrics::{avg_perf, bwt, forgetting, fwt, PerfMatrix, Polarity};
use crate::netcore::{accuracy, Architecture, Matrix};
use crate::replay::ReplayBuffer;
use crate::seed::derive_seed;
use crate::tasks::{load_idx, make_task_sequence, split, Dataset};

pub const DATA_ENV: &str = "MORPHCL_DATA";

/// Train/test splits of every task for one seed.
#[derive(Clone, Debug)]
pub struct PreparedTasks {
    pub train: Vec<Dataset>,
    pub test: Vec<Dataset>,
}

fn image_source(cfg: &RunConfig) -> Result<Option<(Matrix, Vec<u8>)>> {
    let (images, labels) = match (&cfg.idx_images, &cfg.idx_labels) {
        (Some(i), Some(l)) => (i.clone(), l.clone()),
        _ => match std::env::var_os(DATA_ENV) {
            Some(dir) => {
                let dir = PathBuf::from(dir);
                (dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))
            }
            None => return Ok(None),
        },
    };
    load_idx(images, labels).map(Some)
}

/// Builds the task sequence for `seed`; identical for every condition.
pub fn prepare_tasks(cfg: &RunConfig, seed: u64) -> Result<PreparedTasks> {
    let source = if cfg.experiment.is_image() { image_source(cfg)? } else { None };
    let seq = make_task_sequence(
        cfg.experiment.sequence(),
        cfg.task_count(),
        seed,
        &cfg.sine,
        &cfg.image,
        source.as_ref().map(|(m, l)| (m, l.as_slice())),
    )?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (t, ds) in seq.tasks.iter().enumerate() {
        let (a, b) = split(ds, cfg.train_frac, derive_seed(seed, &[0x5917, t as u64]))?;
        train.push(a);
        test.push(b);
    }
    Ok(PreparedTasks { train, test })
}

pub fn network_architecture(cfg: &RunConfig, tasks: &PreparedTasks) -> Result<Architecture> {
    let first = &tasks.train[0];
    let mut widths = vec![first.x.cols()];
    widths.extend(cfg.hidden_widths());
    widths.push(first.y.cols());
    Architecture::new(widths)
}

/// Per-task performance: MSE for regression, accuracy for classification.
pub fn task_performance(net: &crate::netcore::Network, ds: &Dataset, polarity: Polarity, cfg: &RunConfig) -> Result<f64> {
    match polarity {
        Polarity::Error => evaluate_loss(net, ds, cfg.experiment.loss()),
        Polarity::Accuracy => accuracy(&net.forward(&ds.x)?, &ds.y),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment: String,
    pub condition: Condition,
    pub seed: u64,
    pub ok: bool,
    pub error: Option<String>,
    pub perf: Option<PerfMatrix>,
    pub avg: Option<f64>,
    pub bwt: Option<f64>,
    pub fwt: Option<f64>,
    pub forgetting: Option<f64>,
    /// Mean reference Hamiltonian over the closing epochs of the last task.
    pub final_hamiltonian: Option<f64>,
    /// Reference Hamiltonian of every training epoch, tasks concatenated.
    pub hamiltonian_curve: Vec<f64>,
    pub replay_test_curve: Vec<(usize, f64)>,
    pub archs: Vec<Vec<usize>>,
    pub morphs: Vec<MorphEvent>,
    pub searches: usize,
    pub log_file: String,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub logs: Vec<TaskLog>,
}

/// Runs every task of one `(condition, seed)` pair in memory.
pub fn run_single(cfg: &RunConfig, cond: Condition, seed: u64, tasks: &PreparedTasks) -> Result<RunOutcome> {
    let engine = cfg.engine_config();
    let arch = network_architecture(cfg, tasks)?;
    let polarity = cfg.experiment.polarity();
    let n = tasks.train.len();
    let mut state = RunState::new(&arch, &engine, seed);
    let mut buf = ReplayBuffer::new(cfg.buffer_capacity, derive_seed(seed, &[0xB0F]));
    let mut perf = PerfMatrix::new(n, polarity);
    let mut logs = Vec::with_capacity(n);
    for t in 0..n {
        let log = train_task(cond, &mut state, &tasks.train[t], &tasks.test[..=t], &mut buf, &engine, t)?;
        for i in 0..=t {
            perf.set(t, i, task_performance(&state.net, &tasks.test[i], polarity, cfg)?)?;
        }
        info!(
            "{} {cond} seed {seed}: task {t} done, arch {:?}, R[{t}][{t}] = {:.5}",
            cfg.experiment.name(),
            log.arch_after,
            perf.get(t, t).unwrap_or(f64::NAN)
        );
        logs.push(log);
    }
    let summary = summarize(cfg, cond, seed, &perf, &logs, engine.j_window)?;
    Ok(RunOutcome { summary, logs })
}

fn summarize(cfg: &RunConfig, cond: Condition, seed: u64, perf: &PerfMatrix, logs: &[TaskLog], window: usize) -> Result<RunSummary> {
    let mut hamiltonian_curve = Vec::new();
    let mut replay_test_curve = Vec::new();
    for log in logs {
        for e in log.train_epochs() {
            if let Some(m) = e.replay_test_metric {
                replay_test_curve.push((hamiltonian_curve.len(), m));
            }
            hamiltonian_curve.push(e.hamiltonian_loss);
        }
    }
    Ok(RunSummary {
        experiment: cfg.experiment.name().to_string(),
        condition: cond,
        seed,
        ok: true,
        error: None,
        perf: Some(perf.clone()),
        avg: Some(avg_perf(perf)?),
        bwt: bwt(perf)?,
        fwt: fwt(perf),
        forgetting: forgetting(perf)?,
        final_hamiltonian: logs.last().and_then(|l| l.tail_hamiltonian(window)),
        hamiltonian_curve,
        replay_test_curve,
        archs: logs.iter().map(|l| l.arch_after.clone()).collect(),
        morphs: logs.iter().filter_map(|l| l.morph.clone()).collect(),
        searches: logs.iter().filter(|l| l.search.is_some()).count(),
        log_file: run_stem(cond, seed) + ".jsonl",
    })
}

pub fn run_stem(cond: Condition, seed: u64) -> String {
    format!("{cond}_seed{seed}")
}

fn failed_summary(cfg: &RunConfig, cond: Condition, seed: u64, err: &Error) -> RunSummary {
    RunSummary {
        experiment: cfg.experiment.name().to_string(),
        condition: cond,
        seed,
        ok: false,
        error: Some(err.to_string()),
        perf: None,
        avg: None,
        bwt: None,
        fwt: None,
        forgetting: None,
        final_hamiltonian: None,
        hamiltonian_curve: Vec::new(),
        replay_test_curve: Vec::new(),
        archs: Vec::new(),
        morphs: Vec::new(),
        searches: 0,
        log_file: run_stem(cond, seed) + ".jsonl",
    }
}

/// One JSON object per line: epochs, search trace rows, morph events and
/// task summaries, in training order.
pub fn write_jsonl(path: &Path, logs: &[TaskLog]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for log in logs {
        for e in &log.epochs {
            let mut v = serde_json::to_value(e)?;
            v["type"] = json!("epoch");
            v["task"] = json!(log.task);
            writeln!(w, "{}", serde_json::to_string(&v)?)?;
        }
        if let Some(s) = &log.search {
            for row in &s.trace {
                let mut v = serde_json::to_value(row)?;
                v["type"] = json!("search");
                v["task"] = json!(log.task);
                writeln!(w, "{}", serde_json::to_string(&v)?)?;
            }
        }
        if let Some(m) = &log.morph {
            let mut v = serde_json::to_value(m)?;
            v["type"] = json!("morph");
            writeln!(w, "{}", serde_json::to_string(&v)?)?;
        }
        let v = json!({
            "type": "task",
            "task": log.task,
            "arch_before": log.arch_before,
            "arch_after": log.arch_after,
            "weights": log.weights,
            "j_prev": log.j_prev,
            "j_curr": log.j_curr,
            "change_triggered": log.change_triggered,
            "reinitialized": log.reinitialized,
            "search_error": log.search_error,
        });
        writeln!(w, "{}", serde_json::to_string(&v)?)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SweepArtifact {
    pub out_dir: PathBuf,
    pub summaries: Vec<RunSummary>,
}

impl SweepArtifact {
    pub fn all_ok(&self) -> bool {
        self.summaries.iter().all(|s| s.ok)
    }
}

/// Runs every `(condition, seed)` pair on a worker pool without touching disk.
pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<Result<RunOutcome>>> {
    cfg.validate()?;
    let mut prepared = Vec::new();
    for &seed in &cfg.seeds {
        prepared.push((seed, prepare_tasks(cfg, seed)?));
    }
    let jobs: Vec<(Condition, u64, &PreparedTasks)> = cfg
        .conditions
        .iter()
        .flat_map(|&c| prepared.iter().map(move |(s, p)| (c, *s, p)))
        .collect();
    let work = || jobs.par_iter().map(|&(c, s, p)| run_single(cfg, c, s, p)).collect::<Vec<_>>();
    let results = if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?
            .install(work)
    } else {
        work()
    };
    Ok(results)
}

/// Runs the sweep and writes per-run logs, summaries and the reports.
pub fn run_experiment(cfg: &RunConfig) -> Result<SweepArtifact> {
    let results = run_sweep(cfg)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let jobs: Vec<(Condition, u64)> = cfg
        .conditions
        .iter()
        .flat_map(|&c| cfg.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let mut summaries = Vec::new();
    for ((cond, seed), res) in jobs.into_iter().zip(results) {
        let stem = run_stem(cond, seed);
        let summary = match res {
            Ok(out) => {
                write_jsonl(&cfg.out_dir.join(format!("{stem}.jsonl")), &out.logs)?;
                out.summary
            }
            Err(e) => {
                error!("{cond} seed {seed} failed: {e}");
                fs::write(cfg.out_dir.join(format!("{stem}.jsonl")), "")?;
                failed_summary(cfg, cond, seed, &e)
            }
        };
        fs::write(
            cfg.out_dir.join(format!("{stem}.summary.json")),
            serde_json::to_string_pretty(&summary)?,
        )?;
        summaries.push(summary);
    }
    fs::write(cfg.out_dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    super::report::emit_reports(&cfg.out_dir, &summaries)?;
    Ok(SweepArtifact { out_dir: cfg.out_dir.clone(), summaries })
}
