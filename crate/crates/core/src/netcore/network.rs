//! Feedforward networks: architecture, Glorot initialization, forward pass
//! and exact reverse-mode gradients.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grad, LossKind};
use super::{ActivationKind, Matrix};
use crate::error::{Error, Result};

/// Layer widths `[input, hidden.., output]` plus an optional conv kernel side.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    widths: Vec<usize>,
    filter_size: Option<usize>,
}

impl Architecture {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        Self::with_filter(widths, None)
    }

    pub fn with_filter(widths: Vec<usize>, filter_size: Option<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArchitecture(format!(
                "need at least input and output widths, got {widths:?}"
            )));
        }
        if let Some(i) = widths.iter().position(|&w| w == 0) {
            return Err(Error::InvalidArchitecture(format!(
                "width {i} is zero in {widths:?}"
            )));
        }
        if let Some(k) = filter_size {
            if k == 0 || k % 2 == 0 {
                return Err(Error::InvalidArchitecture(format!(
                    "filter size must be odd and positive, got {k}"
                )));
            }
        }
        Ok(Self {
            widths,
            filter_size,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn filter_size(&self) -> Option<usize> {
        self.filter_size
    }

    /// Number of weight layers.
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn hidden(&self) -> &[usize] {
        &self.widths[1..self.widths.len() - 1]
    }

    /// `(out, in)` shape of the weight of layer `i`.
    pub fn layer_shape(&self, i: usize) -> (usize, usize) {
        (self.widths[i + 1], self.widths[i])
    }

    pub fn parameter_count(&self) -> usize {
        (0..self.depth())
            .map(|i| {
                let (o, n) = self.layer_shape(i);
                o * n + o
            })
            .sum()
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.widths)?;
        if let Some(k) = self.filter_size {
            write!(f, "/k{k}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out × in`
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: ActivationKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    arch: Architecture,
    layers: Vec<Layer>,
}

/// Parameter tensors exposed as flat slices in a fixed order, so optimizers
/// and gradient utilities can treat networks, gradients and transfer
/// matrices uniformly.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn parameter_total(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Glorot-uniform network with zero biases. Hidden layers use `activation`;
/// the output layer is linear.
pub fn init_network(arch: &Architecture, activation: ActivationKind, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = arch.depth();
    let layers = (0..depth)
        .map(|i| {
            let (out, inp) = arch.layer_shape(i);
            let bound = glorot_bound(inp, out);
            let dist = Uniform::new(-bound, bound);
            Layer {
                weight: Matrix::from_fn(out, inp, |_, _| dist.sample(&mut rng)),
                bias: vec![0.0; out],
                activation: if i + 1 == depth {
                    ActivationKind::Identity
                } else {
                    activation
                },
            }
        })
        .collect();
    Network {
        arch: arch.clone(),
        layers,
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input of every layer; `inputs[0]` is the batch itself.
    pub inputs: Vec<Matrix>,
    /// Pre-activation of every layer.
    pub pre: Vec<Matrix>,
    pub output: Matrix,
}

impl Network {
    /// Assembles a network from explicit layers, checking every shape against `arch`.
    pub fn from_layers(arch: Architecture, layers: Vec<Layer>) -> Result<Self> {
        if layers.len() != arch.depth() {
            return Err(Error::InvalidArchitecture(format!(
                "{} layers for architecture {arch}",
                layers.len()
            )));
        }
        for (i, l) in layers.iter().enumerate() {
            let want = arch.layer_shape(i);
            if l.weight.shape() != want {
                return Err(Error::LayerMismatch {
                    layer: i,
                    detail: format!("weight is {:?}, architecture wants {want:?}", l.weight.shape()),
                });
            }
            if l.bias.len() != want.0 {
                return Err(Error::LayerMismatch {
                    layer: i,
                    detail: format!("bias has {} entries, want {}", l.bias.len(), want.0),
                });
            }
        }
        Ok(Self { arch, layers })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Activation used by the hidden layers (identity for a single-layer net).
    pub fn hidden_activation(&self) -> ActivationKind {
        if self.layers.len() > 1 {
            self.layers[0].activation
        } else {
            ActivationKind::Identity
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut a = self.check_input(x)?;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = affine(&a, layer, i)?;
            z.data_mut()
                .iter_mut()
                .for_each(|v| *v = layer.activation.apply(*v));
            a = z;
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<ForwardCache> {
        let mut a = self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let z = affine(&a, layer, i)?;
            let mut next = z.clone();
            next.data_mut()
                .iter_mut()
                .for_each(|v| *v = layer.activation.apply(*v));
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        Ok(ForwardCache {
            inputs,
            pre,
            output: a,
        })
    }

    /// Backpropagates `∂loss/∂output` through a cached forward pass.
    pub fn backward_from(&self, cache: &ForwardCache, d_output: &Matrix) -> Result<Gradients> {
        if d_output.shape() != cache.output.shape() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient {:?} vs output {:?}",
                d_output.shape(),
                cache.output.shape()
            )));
        }
        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        let mut upstream = d_output.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let mut delta = upstream;
            for (d, z) in delta.data_mut().iter_mut().zip(cache.pre[i].data()) {
                *d *= layer.activation.derivative(*z);
            }
            let weight = delta.t_matmul(&cache.inputs[i])?;
            let mut bias = vec![0.0; delta.cols()];
            for r in 0..delta.rows() {
                for (b, d) in bias.iter_mut().zip(delta.row(r)) {
                    *b += d;
                }
            }
            upstream = if i > 0 {
                delta.matmul(&layer.weight)?
            } else {
                Matrix::zeros(0, 0)
            };
            grads.push(LayerGrad { weight, bias });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    fn check_input(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.arch.input_width() {
            return Err(Error::LayerMismatch {
                layer: 0,
                detail: format!(
                    "input has {} columns, layer expects {}",
                    x.cols(),
                    self.arch.input_width()
                ),
            });
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(x.clone())
    }
}

fn affine(a: &Matrix, layer: &Layer, i: usize) -> Result<Matrix> {
    if a.cols() != layer.weight.cols() {
        return Err(Error::LayerMismatch {
            layer: i,
            detail: format!(
                "input has {} columns, weight is {:?}",
                a.cols(),
                layer.weight.shape()
            ),
        });
    }
    let mut z = a.matmul_t(&layer.weight)?;
    for r in 0..z.rows() {
        for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }
    Ok(z)
}

/// Loss on `(x, target)` together with the exact parameter gradient.
pub fn loss_and_gradients(
    net: &Network,
    x: &Matrix,
    target: &Matrix,
    kind: LossKind,
) -> Result<(f64, Gradients)> {
    let cache = net.forward_cached(x)?;
    let (value, d_out) = loss_and_grad(&cache.output, target, kind)?;
    Ok((value, net.backward_from(&cache, &d_out)?))
}

pub fn backward(net: &Network, x: &Matrix, target: &Matrix, kind: LossKind) -> Result<Gradients> {
    loss_and_gradients(net, x, target, kind).map(|(_, g)| g)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Per-layer gradients with the same shapes as the network they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: f64, other: &Gradients) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} gradient layers vs {}",
                self.layers.len(),
                other.layers.len()
            )));
        }
        for (i, (a, b)) in self.layers.iter_mut().zip(&other.layers).enumerate() {
            if a.weight.shape() != b.weight.shape() || a.bias.len() != b.bias.len() {
                return Err(Error::LayerMismatch {
                    layer: i,
                    detail: "gradient shapes differ".into(),
                });
            }
        }
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
        Ok(())
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn dot(&self, other: &Gradients) -> f64 {
        self.tensors()
            .iter()
            .zip(other.tensors())
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .map(|(x, y)| x * y)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

impl ParamSet for Network {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), l.bias.as_mut_slice()])
            .collect()
    }
}

impl ParamSet for Gradients {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), l.bias.as_mut_slice()])
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    arch: Vec<usize>,
    filter_size: Option<usize>,
    activation: ActivationKind,
    layers: Vec<LayerDoc>,
}

impl Network {
    /// JSON checkpoint: `{arch, filter_size, activation, layers: [{w, b}]}`.
    pub fn to_json(&self) -> Result<String> {
        let doc = NetworkDoc {
            arch: self.arch.widths().to_vec(),
            filter_size: self.arch.filter_size(),
            activation: self.hidden_activation(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerDoc {
                    w: l.weight.to_rows(),
                    b: l.bias.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: NetworkDoc = serde_json::from_str(s)?;
        let arch = Architecture::with_filter(doc.arch, doc.filter_size)?;
        let depth = doc.layers.len();
        let layers = doc
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let weight = if l.w.is_empty() {
                    Matrix::zeros(0, 0)
                } else {
                    Matrix::from_rows(&l.w)?
                };
                Ok(Layer {
                    weight,
                    bias: l.b,
                    activation: if i + 1 == depth {
                        ActivationKind::Identity
                    } else {
                        doc.activation
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let net = Network::from_layers(arch, layers)?;
        if !net.is_finite() {
            return Err(Error::NonFinite("checkpoint weights".into()));
        }
        Ok(net)
    }
}
