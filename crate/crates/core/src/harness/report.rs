use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use super::run::RunSummary;
use crate::engine::Condition;
use crate::error::Result;
use crate::metrics::mean_std;

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.6e}"),
        _ => "null".to_string(),
    }
}

/// One row per run: `condition,seed,avg,bwt,fwt,forgetting`.
pub fn metrics_csv(summaries: &[RunSummary]) -> String {
    let mut s = String::from("condition,seed,avg,bwt,fwt,forgetting\n");
    for r in summaries {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.condition, r.seed, cell(r.avg), cell(r.bwt), cell(r.fwt), cell(r.forgetting));
    }
    s
}

fn grouped(summaries: &[RunSummary]) -> BTreeMap<Condition, Vec<&RunSummary>> {
    let mut g: BTreeMap<Condition, Vec<&RunSummary>> = BTreeMap::new();
    for r in summaries.iter().filter(|r| r.ok) {
        g.entry(r.condition).or_default().push(r);
    }
    g
}

fn stat(vals: Vec<Option<f64>>) -> (String, String) {
    let v: Vec<f64> = vals.into_iter().flatten().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return ("null".into(), "null".into());
    }
    let (m, s) = mean_std(&v);
    (format!("{m:.6e}"), format!("{s:.6e}"))
}

/// Mean and sample std per condition, columns in Avg, BWT, FWT, Forgetting order.
pub fn summary_csv(summaries: &[RunSummary]) -> String {
    let mut s = String::from("condition,runs,avg_mean,avg_std,bwt_mean,bwt_std,fwt_mean,fwt_std,forgetting_mean,forgetting_std\n");
    for (cond, rows) in grouped(summaries) {
        let cols = [
            stat(rows.iter().map(|r| r.avg).collect()),
            stat(rows.iter().map(|r| r.bwt).collect()),
            stat(rows.iter().map(|r| r.fwt).collect()),
            stat(rows.iter().map(|r| r.forgetting).collect()),
        ];
        let _ = write!(s, "{cond},{}", rows.len());
        for (m, sd) in cols {
            let _ = write!(s, ",{m},{sd}");
        }
        s.push('\n');
    }
    s
}

/// `condition,seed,task,psi_old,psi_new,init_loss,post_loss`.
pub fn morph_table(summaries: &[RunSummary]) -> String {
    let mut s = String::from("condition,seed,task,psi_old,psi_new,source_loss,init_loss,post_loss\n");
    let fmt = |w: &[usize]| w.iter().map(usize::to_string).collect::<Vec<_>>().join("-");
    for r in summaries {
        for m in &r.morphs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.6e},{:.6e},{:.6e}",
                r.condition,
                r.seed,
                m.task,
                fmt(&m.psi_old),
                fmt(&m.psi_new),
                m.source_loss,
                m.init_loss,
                m.post_loss
            );
        }
    }
    s
}

/// Element-wise mean of the per-seed curves, truncated to the shortest.
fn mean_curve(rows: &[&RunSummary]) -> Vec<f64> {
    let n = rows.iter().map(|r| r.hamiltonian_curve.len()).min().unwrap_or(0);
    (0..n)
        .map(|i| rows.iter().map(|r| r.hamiltonian_curve[i]).sum::<f64>() / rows.len() as f64)
        .collect()
}

/// Log-scale polyline of the seed-averaged Hamiltonian.
pub fn curve_svg(title: &str, curve: &[f64]) -> String {
    let (w, h, pad) = (640.0, 360.0, 40.0);
    let logs: Vec<f64> = curve.iter().map(|v| v.max(1e-12).log10()).collect();
    let lo = logs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = logs.len().max(2) - 1;
    let mut pts = String::new();
    for (i, v) in logs.iter().enumerate() {
        let x = pad + (w - 2.0 * pad) * i as f64 / n as f64;
        let y = h - pad - (h - 2.0 * pad) * (v - lo) / span;
        let _ = write!(pts, "{x:.1},{y:.1} ");
    }
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{pad}" y="24" font-family="sans-serif" font-size="14">{title}</text>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{y0}" stroke="black"/>"#,
        y0 = h - pad,
        x1 = w - pad
    );
    if logs.is_empty() {
        let _ = writeln!(s, r#"<text x="{pad}" y="{}" font-size="12">no data</text>"#, h / 2.0);
    } else {
        let _ = writeln!(s, r#"<text x="4" y="{}" font-size="10">1e{hi:.1}</text>"#, pad + 4.0);
        let _ = writeln!(s, r#"<text x="4" y="{}" font-size="10">1e{lo:.1}</text>"#, h - pad);
        let _ = writeln!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#, pts.trim_end());
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `metrics.csv`, `summary.csv`, `morphs.csv` and one SVG per condition.
/// Runs whose JSONL log is missing are reported but still tabulated.
pub fn emit_reports(dir: &Path, summaries: &[RunSummary]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    for r in summaries {
        if !dir.join(&r.log_file).exists() {
            warn!("log {} for {} seed {} is missing", r.log_file, r.condition, r.seed);
        }
        if !r.ok {
            warn!("{} seed {} failed: {}", r.condition, r.seed, r.error.as_deref().unwrap_or("unknown"));
        }
    }
    let mut out = Vec::new();
    for (name, body) in [
        ("metrics.csv", metrics_csv(summaries)),
        ("summary.csv", summary_csv(summaries)),
        ("morphs.csv", morph_table(summaries)),
    ] {
        let p = dir.join(name);
        fs::write(&p, body)?;
        out.push(p);
    }
    for (cond, rows) in grouped(summaries) {
        let p = dir.join(format!("hamiltonian_{cond}.svg"));
        fs::write(&p, curve_svg(&format!("{cond} Hamiltonian ({} seeds)", rows.len()), &mean_curve(&rows)))?;
        out.push(p);
    }
    Ok(out)
}

/// Reads every `*.summary.json` in `dir`, sorted by condition then seed.
pub fn load_summaries(dir: &Path) -> Result<Vec<RunSummary>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".summary.json")) {
            match serde_json::from_str::<RunSummary>(&fs::read_to_string(&p)?) {
                Ok(s) => out.push(s),
                Err(e) => warn!("skipping {}: {e}", p.display()),
            }
        }
    }
    out.sort_by(|a, b| (a.condition, a.seed).cmp(&(b.condition, b.seed)));
    Ok(out)
}
