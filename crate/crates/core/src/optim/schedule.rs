use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Learning-rate schedules indexed by epoch within a task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant { lr: f64 },
    Cosine { lr0: f64, lr_min: f64, horizon: usize },
    /// Multiply by `gamma` every `every` epochs.
    Step { lr0: f64, gamma: f64, every: usize, lr_min: f64 },
    Exponential { lr0: f64, gamma: f64, lr_min: f64 },
    Linear { lr0: f64, lr_min: f64, horizon: usize },
}

impl ScheduleKind {
    pub fn base(&self) -> f64 {
        match *self {
            Self::Constant { lr } => lr,
            Self::Cosine { lr0, .. }
            | Self::Step { lr0, .. }
            | Self::Exponential { lr0, .. }
            | Self::Linear { lr0, .. } => lr0,
        }
    }
}

/// Learning rate at `epoch`. Past the horizon, decaying schedules sit at their floor.
pub fn schedule_lr(kind: &ScheduleKind, epoch: usize) -> f64 {
    match *kind {
        ScheduleKind::Constant { lr } => lr,
        ScheduleKind::Cosine { lr0, lr_min, horizon } => {
            if epoch >= horizon {
                lr_min
            } else {
                let frac = epoch as f64 / horizon.max(1) as f64;
                lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (PI * frac).cos())
            }
        }
        ScheduleKind::Step { lr0, gamma, every, lr_min } => {
            (lr0 * gamma.powi((epoch / every.max(1)) as i32)).max(lr_min)
        }
        ScheduleKind::Exponential { lr0, gamma, lr_min } => (lr0 * gamma.powi(epoch as i32)).max(lr_min),
        ScheduleKind::Linear { lr0, lr_min, horizon } => {
            if epoch >= horizon {
                lr_min
            } else {
                lr0 + (lr_min - lr0) * epoch as f64 / horizon.max(1) as f64
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const COS: ScheduleKind = ScheduleKind::Cosine { lr0: 1e-4, lr_min: 1e-6, horizon: 500 };

    #[test]
    fn cosine_endpoints() {
        assert_eq!(schedule_lr(&COS, 0), 1e-4);
        assert!((schedule_lr(&COS, 500) - 1e-6).abs() < 1e-20);
        assert!((schedule_lr(&COS, 250) - (1e-4 + 1e-6) / 2.0).abs() < 1e-18);
        assert_eq!(schedule_lr(&COS, 10_000), 1e-6);
    }

    #[test]
    fn cosine_is_monotone() {
        let lrs: Vec<f64> = (0..=500).map(|e| schedule_lr(&COS, e)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn other_kinds() {
        assert_eq!(schedule_lr(&ScheduleKind::Constant { lr: 3e-4 }, 77), 3e-4);
        let step = ScheduleKind::Step { lr0: 1.0, gamma: 0.5, every: 10, lr_min: 0.1 };
        assert_eq!(schedule_lr(&step, 9), 1.0);
        assert_eq!(schedule_lr(&step, 10), 0.5);
        assert_eq!(schedule_lr(&step, 100), 0.1);
        let lin = ScheduleKind::Linear { lr0: 1.0, lr_min: 0.0, horizon: 4 };
        assert_eq!(schedule_lr(&lin, 2), 0.5);
        let exp = ScheduleKind::Exponential { lr0: 1.0, gamma: 0.5, lr_min: 0.0 };
        assert_eq!(schedule_lr(&exp, 3), 0.125);
    }
}
