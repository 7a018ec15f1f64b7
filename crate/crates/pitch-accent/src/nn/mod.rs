//! Minimal numerical core: tensors, the four layer types the
//! architecture needs, softmax loss with L2, Adam, and gradient
//! verification against finite differences.
//!
//! Everything is 64-bit and CPU-side. Forward passes return the caches
//! their paired backward passes need; gradients are exact analytic
//! derivatives, checked by [`grad_check`].

mod adam;
mod conv;
mod dense;
mod dropout;
mod gradcheck;
mod loss;
mod pool;

pub use adam::{adam_step, AdamState};
pub use conv::{
    conv2d, conv2d_backward, conv2d_depthwise, conv2d_depthwise_backward, conv_output_len,
    ConvGrads, ConvLayerParams,
};
pub use dense::{dense_backward, dense_forward, Activation, DenseCache, DenseGrads, DenseLayerParams};
pub use dropout::dropout;
pub use gradcheck::grad_check;
pub use loss::{add_l2_grads, l2_penalty, softmax, softmax_xent, softmax_xent_l2};
pub use pool::{maxpool_over_time, maxpool_over_time_backward};

use crate::error::{Error, Result};

/// Train/eval switch for dropout and the model forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Dense row-major tensor of up to 4 dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        assert!(!shape.is_empty() && shape.len() <= 4, "rank must be 1..=4");
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(Error::Shape(format!("rank must be 1..=4, got {}", shape.len())));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("non-finite value at index {i}")));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Uniform init in `[-sqrt(6/(fan_in+fan_out)), +...]`.
    pub fn glorot_uniform(
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl rand::Rng,
    ) -> Tensor {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut t = Tensor::zeros(shape);
        for v in &mut t.data {
            *v = rng.gen_range(-bound..bound);
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    /// Sum of squared entries, the L2 building block.
    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}
