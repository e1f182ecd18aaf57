use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Shape parameter `a` of ISRU/ISRLU.
pub const ISR_ALPHA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Elu,
    Softsign,
    Isrlu,
    Isru,
    Sigmoid,
    Tanh,
    Identity,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 8] = [
        ActivationKind::Relu,
        ActivationKind::Elu,
        ActivationKind::Softsign,
        ActivationKind::Isrlu,
        ActivationKind::Isru,
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::Identity,
    ];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Relu => x.max(0.0),
            Self::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Self::Softsign => x / (1.0 + x.abs()),
            Self::Isrlu => {
                if x >= 0.0 {
                    x
                } else {
                    x / (1.0 + ISR_ALPHA * x * x).sqrt()
                }
            }
            Self::Isru => x / (1.0 + ISR_ALPHA * x * x).sqrt(),
            Self::Sigmoid => sigmoid(x),
            Self::Tanh => x.tanh(),
            Self::Identity => x,
        }
    }

    /// First derivative at `x`. ReLU takes subgradient 0 at the kink.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Self::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            Self::Softsign => {
                let d = 1.0 + x.abs();
                1.0 / (d * d)
            }
            Self::Isrlu => {
                if x >= 0.0 {
                    1.0
                } else {
                    (1.0 + ISR_ALPHA * x * x).powf(-1.5)
                }
            }
            Self::Isru => (1.0 + ISR_ALPHA * x * x).powf(-1.5),
            Self::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Self::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Self::Identity => 1.0,
        }
    }

    /// Points where the derivative is discontinuous.
    pub fn kinks(self) -> &'static [f64] {
        match self {
            Self::Relu => &[0.0],
            _ => &[],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Relu => "relu",
            Self::Elu => "elu",
            Self::Softsign => "softsign",
            Self::Isrlu => "isrlu",
            Self::Isru => "isru",
            Self::Sigmoid => "sigmoid",
            Self::Tanh => "tanh",
            Self::Identity => "identity",
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown activation `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-6;
        for kind in ActivationKind::ALL {
            for &x in &[-2.3, -0.7, -0.01, 0.02, 0.4, 1.9] {
                let fd = (kind.apply(x + h) - kind.apply(x - h)) / (2.0 * h);
                let an = kind.derivative(x);
                assert!((fd - an).abs() < 1e-7, "{kind} at {x}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn relu_kink_subgradient_is_zero() {
        assert_eq!(ActivationKind::Relu.derivative(0.0), 0.0);
        assert_eq!(ActivationKind::Relu.apply(0.0), 0.0);
    }

    #[test]
    fn names_round_trip() {
        for kind in ActivationKind::ALL {
            assert_eq!(kind.name().parse::<ActivationKind>().unwrap(), kind);
        }
        assert!("gelu".parse::<ActivationKind>().is_err());
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert!(ActivationKind::Sigmoid.apply(-800.0).is_finite());
        assert_eq!(ActivationKind::Sigmoid.apply(800.0), 1.0);
    }
}
