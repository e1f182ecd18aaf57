//! Continual learning that adapts both the weights and the layer widths of a
//! feedforward network across a task sequence.
//!
//! Training blends current-task, replay and perturbation gradients; a
//! directional direct search proposes new widths at task boundaries; and
//! weights move into a new architecture through trained low-rank maps
//! `V = A·W·Bᵀ`.

pub mod engine;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod netcore;
pub mod optim;
pub mod replay;
pub mod search;
pub mod seed;
pub mod tasks;
pub mod transfer;
pub mod verify;

pub use error::{Error, Result};
