use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean over every element of `(pred - target)^2`.
    Mse,
    /// Softmax cross-entropy on raw logits, averaged over the batch. Targets
    /// are one-hot (or any probability vector) rows.
    CrossEntropyWithLogits,
}

fn check(pred: &Matrix, target: &Matrix) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.rows() == 0 {
        return Err(Error::EmptyDataset("loss over an empty batch".into()));
    }
    if !pred.is_finite() {
        return Err(Error::NonFinite("prediction".into()));
    }
    if !target.is_finite() {
        return Err(Error::NonFinite("target".into()));
    }
    Ok(())
}

/// Max-shifted log-sum-exp of one row of logits.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn loss(pred: &Matrix, target: &Matrix, kind: LossKind) -> Result<f64> {
    check(pred, target)?;
    Ok(match kind {
        LossKind::Mse => {
            let n = pred.data().len() as f64;
            pred.data()
                .iter()
                .zip(target.data())
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / n
        }
        LossKind::CrossEntropyWithLogits => {
            let mut total = 0.0;
            for r in 0..pred.rows() {
                let lse = log_sum_exp(pred.row(r));
                total += pred
                    .row(r)
                    .iter()
                    .zip(target.row(r))
                    .map(|(z, t)| t * (lse - z))
                    .sum::<f64>();
            }
            total / pred.rows() as f64
        }
    })
}

/// Loss value together with `∂loss/∂pred`.
pub fn loss_and_grad(pred: &Matrix, target: &Matrix, kind: LossKind) -> Result<(f64, Matrix)> {
    let value = loss(pred, target, kind)?;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    match kind {
        LossKind::Mse => {
            let s = 2.0 / pred.data().len() as f64;
            for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
                *g = s * (p - t);
            }
        }
        LossKind::CrossEntropyWithLogits => {
            let n = pred.rows() as f64;
            for r in 0..pred.rows() {
                let row = pred.row(r);
                let lse = log_sum_exp(row);
                let mass: f64 = target.row(r).iter().sum();
                let t = target.row(r).to_vec();
                for (c, g) in grad.row_mut(r).iter_mut().enumerate() {
                    *g = (mass * (row[c] - lse).exp() - t[c]) / n;
                }
            }
        }
    }
    Ok((value, grad))
}

pub fn one_hot(labels: &[usize], classes: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(labels.len(), classes);
    for (r, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::ShapeMismatch(format!(
                "label {l} outside {classes} classes"
            )));
        }
        m.set(r, l, 1.0);
    }
    Ok(m)
}

/// Fraction of rows whose arg-max matches the arg-max of the target row.
pub fn accuracy(pred: &Matrix, target: &Matrix) -> Result<f64> {
    check(pred, target)?;
    let argmax = |row: &[f64]| {
        row.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    };
    let hits = (0..pred.rows())
        .filter(|&r| argmax(pred.row(r)) == argmax(target.row(r)))
        .count();
    Ok(hits as f64 / pred.rows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mse_zero_at_target() {
        let p = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        assert_eq!(loss(&p, &p, LossKind::Mse).unwrap(), 0.0);
    }

    #[test]
    fn uniform_logits_give_ln2() {
        let p = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let t = one_hot(&[0], 2).unwrap();
        let v = loss(&p, &t, LossKind::CrossEntropyWithLogits).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = Matrix::from_fn(4, 3, |_, _| rng.gen_range(-2.0..2.0));
        let t = Matrix::from_fn(4, 3, |_, _| rng.gen_range(-2.0..2.0));
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..3 {
                let d = p.get(i, j) - t.get(i, j);
                acc += d * d;
            }
        }
        assert!((loss(&p, &t, LossKind::Mse).unwrap() - acc / 12.0).abs() < 1e-12);

        let labels = [2usize, 0, 1, 1];
        let oh = one_hot(&labels, 3).unwrap();
        let mut ce = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            let z: f64 = (0..3).map(|j| p.get(i, j).exp()).sum();
            ce += -(p.get(i, l).exp() / z).ln();
        }
        let v = loss(&p, &oh, LossKind::CrossEntropyWithLogits).unwrap();
        assert!((v - ce / 4.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_is_lse_minus_true_logit() {
        let p = Matrix::from_rows(&[vec![700.0, -3.0, 699.5]]).unwrap();
        let t = one_hot(&[2], 3).unwrap();
        let v = loss(&p, &t, LossKind::CrossEntropyWithLogits).unwrap();
        assert!(v.is_finite());
        assert!((v - (log_sum_exp(p.row(0)) - 699.5)).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let a = Matrix::zeros(2, 2);
        assert!(loss(&a, &Matrix::zeros(2, 3), LossKind::Mse).is_err());
        let mut b = Matrix::zeros(2, 2);
        b.set(0, 0, f64::NAN);
        assert!(matches!(loss(&b, &a, LossKind::Mse), Err(Error::NonFinite(_))));
    }
}
