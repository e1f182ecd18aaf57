//! Low-rank weight transfer between architectures: `V = A·W·Bᵀ` with the
//! source weights `W` frozen and only `A`, `B` trained.

mod plan;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

pub use plan::{plan_conv_shapes, plan_feed_shapes, plan_ffn_shapes, FilterPlan, LayerPlan, TransferPlan};
pub use train::{ab_loss_and_grad, morph, train_ab, AbConfig, AbOutcome, MorphOutcome};

use crate::error::{Error, Result};
use crate::netcore::{glorot_bound, Architecture, Layer, Matrix, Network, ParamSet};

/// Trainable `(A_i, B_i)` per dense layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferPair {
    pub a: Vec<Matrix>,
    pub b: Vec<Matrix>,
}

impl ParamSet for TransferPair {
    fn tensors(&self) -> Vec<&[f64]> {
        self.a.iter().chain(&self.b).map(|m| m.data()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.a.iter_mut().chain(self.b.iter_mut()).map(|m| m.data_mut()).collect()
    }
}

impl TransferPair {
    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.b).all(Matrix::is_finite)
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        Self {
            a: self.a.iter().map(z).collect(),
            b: self.b.iter().map(z).collect(),
        }
    }
}

/// Identity on the leading square block; every other entry is drawn from
/// `U(±0.01·L)` with `L` the Glorot bound of the matrix.
pub fn identity_like(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    if rows == cols {
        return Matrix::identity(rows);
    }
    let bound = 0.01 * glorot_bound(cols, rows);
    let dist = Uniform::new_inclusive(-bound, bound);
    Matrix::from_fn(rows, cols, |r, c| {
        let noise = dist.sample(rng);
        if r == c {
            1.0
        } else if r < cols && c < rows {
            0.0
        } else {
            noise
        }
    })
}

pub fn init_ab(plan: &TransferPlan, seed: u64) -> TransferPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Vec::with_capacity(plan.layers.len());
    let mut b = Vec::with_capacity(plan.layers.len());
    for l in &plan.layers {
        a.push(identity_like(l.a.0, l.a.1, &mut rng));
        b.push(identity_like(l.b.0, l.b.1, &mut rng));
    }
    TransferPair { a, b }
}

/// `A·W·Bᵀ` for one layer.
pub fn transfer_weight(a: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.matmul(w)?.matmul_t(b)
}

/// Maps every layer of `src` into `psi_new`: `V_i = A_i W_i B_iᵀ`, `b'_i = A_i b_i`.
pub fn apply_transfer(pair: &TransferPair, src: &Network, psi_new: &Architecture) -> Result<Network> {
    let depth = src.layers().len();
    if pair.a.len() != depth || pair.b.len() != depth || psi_new.depth() != depth {
        return Err(Error::Plan(format!(
            "{} A and {} B matrices for {depth} source layers and {} target layers",
            pair.a.len(),
            pair.b.len(),
            psi_new.depth()
        )));
    }
    let mut layers = Vec::with_capacity(depth);
    for (i, l) in src.layers().iter().enumerate() {
        let (a, b) = (&pair.a[i], &pair.b[i]);
        let want = psi_new.layer_shape(i);
        if a.cols() != l.weight.rows() || b.cols() != l.weight.cols() || (a.rows(), b.rows()) != want {
            return Err(Error::LayerMismatch {
                layer: i,
                detail: format!(
                    "A {:?}, W {:?}, B {:?} cannot produce a {want:?} layer",
                    a.shape(),
                    l.weight.shape(),
                    b.shape()
                ),
            });
        }
        layers.push(Layer {
            weight: transfer_weight(a, &l.weight, b)?,
            bias: a.matvec(&l.bias)?,
            activation: l.activation,
        });
    }
    Network::from_layers(psi_new.clone(), layers)
}

/// Applies one shared `(A, B)` to every `k_old × k_old` filter slice of a
/// convolutional layer.
pub fn transfer_filters(filters: &[Matrix], plan: &FilterPlan, a: &Matrix, b: &Matrix) -> Result<Vec<Matrix>> {
    if a.shape() != plan.a || b.shape() != plan.b {
        return Err(Error::Plan(format!(
            "filter transform wants A {:?}, B {:?}; got {:?}, {:?}",
            plan.a,
            plan.b,
            a.shape(),
            b.shape()
        )));
    }
    filters
        .iter()
        .map(|w| {
            if w.shape() != (plan.k_old, plan.k_old) {
                return Err(Error::ShapeMismatch(format!(
                    "filter {:?}, expected {k}x{k}",
                    w.shape(),
                    k = plan.k_old
                )));
            }
            transfer_weight(a, w, b)
        })
        .collect()
}

/// Frobenius norm of every transferred weight `A_i W_i B_iᵀ`.
pub fn transfer_norms(pair: &TransferPair, src: &Network) -> Result<Vec<f64>> {
    src.layers()
        .iter()
        .zip(pair.a.iter().zip(&pair.b))
        .map(|(l, (a, b))| transfer_weight(a, &l.weight, b).map(|v| v.frobenius_norm()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{init_network, ActivationKind};

    fn arch(w: &[usize]) -> Architecture {
        Architecture::new(w.to_vec()).unwrap()
    }

    #[test]
    fn identity_region_of_rectangular_a() {
        let plan = plan_ffn_shapes(&arch(&[64, 128, 128, 10]), &arch(&[64, 256, 256, 10])).unwrap();
        let pair = init_ab(&plan, 1);
        let a0 = &pair.a[0];
        assert_eq!(a0.shape(), (256, 128));
        for r in 0..128 {
            for c in 0..128 {
                assert_eq!(a0.get(r, c), if r == c { 1.0 } else { 0.0 });
            }
        }
        let bound = 0.01 * glorot_bound(128, 256);
        assert!((128..256).all(|r| (0..128).all(|c| a0.get(r, c).abs() <= bound)));
        assert_eq!(init_ab(&plan, 1), pair);
    }

    #[test]
    fn square_transfer_is_exact() {
        let a = arch(&[3, 6, 2]);
        let net = init_network(&a, ActivationKind::Elu, 4);
        let pair = init_ab(&plan_ffn_shapes(&a, &a).unwrap(), 9);
        assert_eq!(apply_transfer(&pair, &net, &a).unwrap(), net);
    }

    #[test]
    fn output_shapes_follow_target() {
        let (old, new) = (arch(&[64, 128, 128, 10]), arch(&[64, 256, 256, 10]));
        let net = init_network(&old, ActivationKind::Relu, 0);
        let pair = init_ab(&plan_ffn_shapes(&old, &new).unwrap(), 0);
        let out = apply_transfer(&pair, &net, &new).unwrap();
        let shapes: Vec<_> = out.layers().iter().map(|l| l.weight.shape()).collect();
        assert_eq!(shapes, vec![(256, 64), (256, 256), (10, 256)]);
    }

    #[test]
    fn mismatched_pair_names_the_layer() {
        let (old, new) = (arch(&[2, 4, 1]), arch(&[2, 8, 1]));
        let net = init_network(&old, ActivationKind::Relu, 0);
        let mut pair = init_ab(&plan_ffn_shapes(&old, &new).unwrap(), 0);
        pair.b[1] = Matrix::identity(3);
        assert!(matches!(apply_transfer(&pair, &net, &new), Err(Error::LayerMismatch { layer: 1, .. })));
    }

    #[test]
    fn filter_expansion() {
        let plan = plan_conv_shapes(3, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = identity_like(5, 3, &mut rng);
        let b = identity_like(5, 3, &mut rng);
        let filters = vec![Matrix::from_fn(3, 3, |r, c| (r * 3 + c) as f64); 4];
        let out = transfer_filters(&filters, &plan, &a, &b).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|v| v.shape() == (5, 5)));
        for r in 0..3 {
            for c in 0..3 {
                assert!((out[0].get(r, c) - filters[0].get(r, c)).abs() < 1e-12);
            }
        }
    }
}
