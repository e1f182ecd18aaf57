//! Continual-learning metrics over a performance matrix, plus a task
//! divergence probe.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::Dataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Lower is better (MSE, cross-entropy).
    Error,
    /// Higher is better.
    Accuracy,
}

/// `r[j][i]`: performance on task `i` after training task `j`, for `i ≤ j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerfMatrix {
    pub tasks: usize,
    pub polarity: Polarity,
    pub r: Vec<Vec<Option<f64>>>,
}

impl PerfMatrix {
    pub fn new(tasks: usize, polarity: Polarity) -> Self {
        Self {
            tasks,
            polarity,
            r: vec![vec![None; tasks]; tasks],
        }
    }

    /// Builds a matrix from complete lower-triangular rows.
    pub fn from_rows(rows: &[Vec<f64>], polarity: Polarity) -> Result<Self> {
        let t = rows.len();
        let mut m = Self::new(t, polarity);
        for (j, row) in rows.iter().enumerate() {
            if row.len() < j + 1 {
                return Err(Error::InvalidConfig(format!("row {j} has {} entries", row.len())));
            }
            for (i, &v) in row.iter().take(j + 1).enumerate() {
                m.set(j, i, v)?;
            }
        }
        Ok(m)
    }

    pub fn set(&mut self, after: usize, task: usize, value: f64) -> Result<()> {
        if task > after || after >= self.tasks {
            return Err(Error::InvalidConfig(format!(
                "R[{after}][{task}] outside the lower triangle of a {} task matrix",
                self.tasks
            )));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("R[{after}][{task}]")));
        }
        self.r[after][task] = Some(value);
        Ok(())
    }

    pub fn get(&self, after: usize, task: usize) -> Option<f64> {
        self.r.get(after).and_then(|row| row.get(task)).copied().flatten()
    }

    fn at(&self, after: usize, task: usize) -> Result<f64> {
        self.get(after, task)
            .ok_or_else(|| Error::InvalidConfig(format!("R[{after}][{task}] missing")))
    }

    pub fn final_row(&self) -> Result<Vec<f64>> {
        if self.tasks == 0 {
            return Err(Error::InvalidConfig("empty performance matrix".into()));
        }
        (0..self.tasks).map(|i| self.at(self.tasks - 1, i)).collect()
    }
}

/// Mean final-row performance over all tasks.
pub fn avg_perf(r: &PerfMatrix) -> Result<f64> {
    let row = r.final_row()?;
    Ok(row.iter().sum::<f64>() / row.len() as f64)
}

/// `(1/(T−1)) Σ_{i<T−1} (R[i][i] − R[T−1][i])`; `None` for a single task.
/// For errors a positive value means earlier tasks improved.
pub fn bwt(r: &PerfMatrix) -> Result<Option<f64>> {
    let t = r.tasks;
    if t < 2 {
        return Ok(None);
    }
    let mut s = 0.0;
    for i in 0..t - 1 {
        s += r.at(i, i)? - r.at(t - 1, i)?;
    }
    Ok(Some(s / (t - 1) as f64))
}

/// Average regression from each earlier task's best recorded value;
/// `None` for a single task.
pub fn forgetting(r: &PerfMatrix) -> Result<Option<f64>> {
    let t = r.tasks;
    if t < 2 {
        return Ok(None);
    }
    let mut s = 0.0;
    for i in 0..t - 1 {
        let column: Vec<f64> = (i..t).map(|j| r.at(j, i)).collect::<Result<_>>()?;
        let last = column[column.len() - 1];
        let drop = match r.polarity {
            Polarity::Error => last - column.iter().copied().fold(f64::INFINITY, f64::min),
            Polarity::Accuracy => column.iter().copied().fold(f64::NEG_INFINITY, f64::max) - last,
        };
        s += drop.max(0.0);
    }
    Ok(Some(s / (t - 1) as f64))
}

/// Placeholder forward-transfer column, always zero when defined.
pub fn fwt(r: &PerfMatrix) -> Option<f64> {
    (r.tasks >= 2).then_some(0.0)
}

/// Total-variation distance between joint histograms of `(x, y)` rows,
/// `n_bins` per dimension over the bounding box shared by both datasets.
pub fn task_divergence(a: &Dataset, b: &Dataset, n_bins: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyDataset("task_divergence input".into()));
    }
    if a.x.cols() != b.x.cols() || a.y.cols() != b.y.cols() {
        return Err(Error::ShapeMismatch("datasets have different dimensions".into()));
    }
    if n_bins == 0 {
        return Err(Error::InvalidConfig("task_divergence needs at least one bin".into()));
    }
    let dims = a.x.cols() + a.y.cols();
    let point = |ds: &Dataset, r: usize, d: usize| {
        if d < ds.x.cols() {
            ds.x.get(r, d)
        } else {
            ds.y.get(r, d - ds.x.cols())
        }
    };
    let mut lo = vec![f64::INFINITY; dims];
    let mut hi = vec![f64::NEG_INFINITY; dims];
    for ds in [a, b] {
        for r in 0..ds.len() {
            for d in 0..dims {
                let v = point(ds, r, d);
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
    }
    let cell = |ds: &Dataset, r: usize| -> Vec<usize> {
        (0..dims)
            .map(|d| {
                let span = hi[d] - lo[d];
                if span <= 0.0 {
                    0
                } else {
                    (((point(ds, r, d) - lo[d]) / span * n_bins as f64) as usize).min(n_bins - 1)
                }
            })
            .collect()
    };
    let mut hist: std::collections::HashMap<Vec<usize>, (f64, f64)> = std::collections::HashMap::new();
    for r in 0..a.len() {
        hist.entry(cell(a, r)).or_default().0 += 1.0 / a.len() as f64;
    }
    for r in 0..b.len() {
        hist.entry(cell(b, r)).or_default().1 += 1.0 / b.len() as f64;
    }
    let tv = hist.values().map(|(p, q)| (p - q).abs()).sum::<f64>() / 2.0;
    Ok(tv.clamp(0.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidConfig("spearman needs two equal series of length ≥ 2".into()));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && v[order[end + 1]] == v[order[k]] {
            end += 1;
        }
        let rank = (k + end) as f64 / 2.0 + 1.0;
        for &i in &order[k..=end] {
            out[i] = rank;
        }
        k = end + 1;
    }
    out
}

/// Mean and sample standard deviation (`0` for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::Matrix;

    fn ds(x: Vec<f64>, y: Vec<f64>) -> Dataset {
        let n = x.len();
        Dataset::new(Matrix::from_vec(n, 1, x).unwrap(), Matrix::from_vec(n, 1, y).unwrap(), 0).unwrap()
    }

    #[test]
    fn spec_arithmetic() {
        let r = PerfMatrix::from_rows(&[vec![0.1], vec![0.05, 0.02]], Polarity::Error).unwrap();
        assert!((bwt(&r).unwrap().unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(forgetting(&r).unwrap(), Some(0.0));
        let r = PerfMatrix::from_rows(&[vec![0.05], vec![0.08, 0.03]], Polarity::Error).unwrap();
        assert!((forgetting(&r).unwrap().unwrap() - 0.03).abs() < 1e-15);
        let r = PerfMatrix::from_rows(&[vec![0.07], vec![0.02, 0.03]], Polarity::Error).unwrap();
        assert!((avg_perf(&r).unwrap() - 0.025).abs() < 1e-15);
        let single = PerfMatrix::from_rows(&[vec![0.3]], Polarity::Error).unwrap();
        assert_eq!(avg_perf(&single).unwrap(), 0.3);
        assert_eq!(bwt(&single).unwrap(), None);
        assert_eq!(fwt(&single), None);
    }

    #[test]
    fn accuracy_forgetting_uses_best_max() {
        let r = PerfMatrix::from_rows(&[vec![0.9], vec![0.7, 0.95]], Polarity::Accuracy).unwrap();
        assert!((forgetting(&r).unwrap().unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn incomplete_rows_are_errors() {
        let mut r = PerfMatrix::new(2, Polarity::Error);
        r.set(0, 0, 1.0).unwrap();
        assert!(avg_perf(&r).is_err());
        assert!(r.set(0, 1, 1.0).is_err());
        assert!(r.set(1, 0, f64::NAN).is_err());
    }

    #[test]
    fn divergence_bounds() {
        let a = ds(vec![0.0, 0.1, 0.2], vec![0.0, 0.1, 0.2]);
        assert_eq!(task_divergence(&a, &a, 16).unwrap(), 0.0);
        let b = ds(vec![5.0, 5.1], vec![5.0, 5.1]);
        assert!((task_divergence(&a, &b, 16).unwrap() - 1.0).abs() < 1e-12);
        let empty = Dataset::new(Matrix::zeros(0, 1), Matrix::zeros(0, 1), 0).unwrap();
        assert!(matches!(task_divergence(&a, &empty, 16), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn spearman_handles_ties_and_reversal() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
    }
}
