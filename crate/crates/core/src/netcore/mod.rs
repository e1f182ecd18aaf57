//! Dense matrices, feedforward networks, losses and backpropagation.

mod activation;
pub mod gradcheck;
mod loss;
mod matrix;
mod network;

pub use activation::{ActivationKind, ISR_ALPHA};
pub use gradcheck::{grad_check, max_relative_error, numeric_gradient, relative_error};
pub use loss::{accuracy, log_sum_exp, loss, loss_and_grad, one_hot, LossKind};
pub use matrix::Matrix;
pub use network::{
    backward, glorot_bound, init_network, loss_and_gradients, Architecture, ForwardCache,
    Gradients, Layer, LayerGrad, Network, ParamSet,
};
