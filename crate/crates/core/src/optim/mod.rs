//! AdamW, learning-rate schedules and global-norm gradient clipping.

mod adamw;
mod schedule;

pub use adamw::{AdamWConfig, AdamWState};
pub use schedule::{schedule_lr, ScheduleKind};

use crate::netcore::ParamSet;

/// Root of the summed squares of every entry.
pub fn global_norm<G: ParamSet + ?Sized>(grads: &G) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` in place to global norm `max_norm` when it is larger.
/// Returns the norm before clipping.
pub fn clip_grad<G: ParamSet + ?Sized>(grads: &mut G, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for t in grads.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{init_network, ActivationKind, Architecture, Gradients};
    use proptest::prelude::*;

    fn grads_with(values: &[f64]) -> Gradients {
        let net = init_network(&Architecture::new(vec![values.len(), 1]).unwrap(), ActivationKind::Relu, 0);
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weight.data_mut().copy_from_slice(values);
        g
    }

    #[test]
    fn below_threshold_unchanged() {
        let mut g = grads_with(&[0.3, 0.4]);
        let before = g.clone();
        assert!((clip_grad(&mut g, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(g, before);
    }

    #[test]
    fn above_threshold_scaled() {
        let mut g = grads_with(&[1.2, 1.6]);
        clip_grad(&mut g, 1.0);
        assert!((global_norm(&g) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn clip_bounds_norm_and_keeps_direction(v in proptest::collection::vec(-10.0f64..10.0, 1..20), max in 0.01f64..5.0) {
            let orig = grads_with(&v);
            let mut g = orig.clone();
            clip_grad(&mut g, max);
            let n = global_norm(&g);
            prop_assert!(n <= max * (1.0 + 1e-12));
            let n0 = global_norm(&orig);
            if n0 > 0.0 && n > 0.0 {
                let cos = g.dot(&orig) / (n * n0);
                prop_assert!((cos - 1.0).abs() < 1e-12);
            }
            let once = g.clone();
            clip_grad(&mut g, max);
            for (a, b) in g.tensors().iter().zip(once.tensors()) {
                for (x, y) in a.iter().zip(b) {
                    prop_assert!((x - y).abs() <= 1e-15 * y.abs().max(1.0));
                }
            }
        }
    }
}
