use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::Architecture;

/// `A` is `new_out × old_out`, `B` is `new_in × old_in`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub a: (usize, usize),
    pub b: (usize, usize),
}

impl LayerPlan {
    pub fn between(old: (usize, usize), new: (usize, usize)) -> Self {
        let ((old_out, old_in), (new_out, new_in)) = (old, new);
        Self {
            a: (new_out, old_out),
            b: (new_in, old_in),
        }
    }

    /// Shape of `A·W·Bᵀ`.
    pub fn output_shape(&self) -> (usize, usize) {
        (self.a.0, self.b.0)
    }
}

/// Per-filter transform for a kernel size change: `A`, `B` both `k_new × k_old`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterPlan {
    pub k_old: usize,
    pub k_new: usize,
    pub a: (usize, usize),
    pub b: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferPlan {
    pub layers: Vec<LayerPlan>,
    pub filter: Option<FilterPlan>,
}

impl TransferPlan {
    pub fn is_identity(&self) -> bool {
        self.layers.iter().all(|l| l.a.0 == l.a.1 && l.b.0 == l.b.1)
            && self.filter.map_or(true, |f| f.k_old == f.k_new)
    }
}

pub fn plan_ffn_shapes(old: &Architecture, new: &Architecture) -> Result<TransferPlan> {
    if old.depth() != new.depth() {
        return Err(Error::Plan(format!("depth changes from {} to {} layers", old.depth(), new.depth())));
    }
    if old.input_width() != new.input_width() || old.output_width() != new.output_width() {
        return Err(Error::Plan(format!(
            "input/output widths change: {old} -> {new}"
        )));
    }
    let layers = (0..old.depth())
        .map(|i| LayerPlan::between(old.layer_shape(i), new.layer_shape(i)))
        .collect();
    let filter = match (old.filter_size(), new.filter_size()) {
        (Some(k_old), Some(k_new)) => Some(plan_conv_shapes(k_old, k_new)?),
        (None, None) => None,
        _ => return Err(Error::Plan("filter size present on only one side".into())),
    };
    Ok(TransferPlan { layers, filter })
}

pub fn plan_conv_shapes(k_old: usize, k_new: usize) -> Result<FilterPlan> {
    if k_old == 0 || k_new == 0 {
        return Err(Error::Plan(format!("kernel sizes {k_old} -> {k_new}")));
    }
    Ok(FilterPlan {
        k_old,
        k_new,
        a: (k_new, k_old),
        b: (k_new, k_old),
    })
}

/// Dense layer fed by a flattened convolutional stack whose flatten size
/// changes from `flat_old` to `flat_new`.
pub fn plan_feed_shapes(flat_old: usize, flat_new: usize, out_old: usize, out_new: usize) -> Result<LayerPlan> {
    if [flat_old, flat_new, out_old, out_new].contains(&0) {
        return Err(Error::Plan("feed layer sizes must be positive".into()));
    }
    Ok(LayerPlan::between((out_old, flat_old), (out_new, flat_new)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(w: &[usize]) -> Architecture {
        Architecture::new(w.to_vec()).unwrap()
    }

    #[test]
    fn dimension_table() {
        let p = plan_ffn_shapes(&arch(&[64, 128, 128, 10]), &arch(&[64, 256, 256, 10])).unwrap();
        assert_eq!(p.layers[0], LayerPlan { a: (256, 128), b: (64, 64) });
        assert_eq!(p.layers[1], LayerPlan { a: (256, 128), b: (256, 128) });
        assert_eq!(p.layers[2], LayerPlan { a: (10, 10), b: (256, 128) });
        assert_eq!(p.layers.iter().map(LayerPlan::output_shape).collect::<Vec<_>>(), vec![(256, 64), (256, 256), (10, 256)]);
    }

    #[test]
    fn shrink_and_identity() {
        let p = plan_ffn_shapes(&arch(&[64, 256, 10]), &arch(&[64, 128, 10])).unwrap();
        assert_eq!(p.layers[0], LayerPlan { a: (128, 256), b: (64, 64) });
        let a = arch(&[3, 7, 2]);
        assert!(plan_ffn_shapes(&a, &a).unwrap().is_identity());
    }

    #[test]
    fn planner_errors() {
        assert!(plan_ffn_shapes(&arch(&[2, 3, 1]), &arch(&[2, 3, 3, 1])).is_err());
        assert!(plan_ffn_shapes(&arch(&[2, 3, 1]), &arch(&[2, 3, 2])).is_err());
        assert!(plan_conv_shapes(0, 3).is_err());
    }

    #[test]
    fn conv_and_feed_plans() {
        let f = plan_conv_shapes(3, 5).unwrap();
        assert_eq!((f.a, f.b), ((5, 3), (5, 3)));
        let f = plan_conv_shapes(5, 3).unwrap();
        assert_eq!(f.a, (3, 5));
        let feed = plan_feed_shapes(2304, 1600, 128, 128).unwrap();
        assert_eq!(feed, LayerPlan { a: (128, 128), b: (1600, 2304) });
    }
}
