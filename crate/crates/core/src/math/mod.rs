//! Dense tensors, a reverse-mode autodiff graph and the Adam optimizer.

mod adam;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{clip_grad_norm, grad_norm, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use gradcheck::finite_difference_check;
pub use graph::{Bindings, Gradients, Graph, NodeId, ATTENTION_MASK, LAYER_NORM_EPS};
pub use tensor::{Real, Tensor};

pub(crate) use graph::sigmoid;

use rand::Rng;

/// Uniform `(-1/√fan_in, 1/√fan_in)` initialisation.
pub fn init_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    Tensor::uniform(shape, 1.0 / (fan_in.max(1) as f64).sqrt(), rng)
}

#[cfg(test)]
mod tests;
