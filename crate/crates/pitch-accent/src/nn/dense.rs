//! Fully connected layer with optional ReLU.

use crate::error::{Error, Result};

use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
        }
    }

    fn grad(self, pre: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Weights `[out, in]` and bias of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayerParams {
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl DenseLayerParams {
    pub fn init(out: usize, input: usize, rng: &mut impl rand::Rng) -> DenseLayerParams {
        DenseLayerParams {
            weights: Tensor::glorot_uniform(&[out, input], input, out, rng),
            bias: vec![0.0; out],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[1]
    }
}

/// Forward cache: pre-activation and activated output.
#[derive(Debug, Clone)]
pub struct DenseCache {
    pub pre: Vec<f64>,
    pub out: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub d_weights: Tensor,
    pub d_bias: Vec<f64>,
}

/// Computes `activation(W x + b)`.
pub fn dense_forward(
    params: &DenseLayerParams,
    input: &[f64],
    activation: Activation,
) -> Result<DenseCache> {
    let (out_dim, in_dim) = (params.out_dim(), params.in_dim());
    if input.len() != in_dim {
        return Err(Error::Shape(format!(
            "dense input length {} does not match weight columns {in_dim}",
            input.len()
        )));
    }
    let w = params.weights.data();
    let mut pre = Vec::with_capacity(out_dim);
    for o in 0..out_dim {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let dot: f64 = row.iter().zip(input).map(|(a, b)| a * b).sum();
        pre.push(dot + params.bias[o]);
    }
    let out = pre.iter().map(|&v| activation.apply(v)).collect();
    Ok(DenseCache { pre, out })
}

/// Gradients w.r.t. input, weights and bias given `d_out`.
pub fn dense_backward(
    params: &DenseLayerParams,
    input: &[f64],
    cache: &DenseCache,
    activation: Activation,
    d_out: &[f64],
) -> Result<(Vec<f64>, DenseGrads)> {
    let (out_dim, in_dim) = (params.out_dim(), params.in_dim());
    if d_out.len() != out_dim || input.len() != in_dim {
        return Err(Error::Shape("dense backward dimension mismatch".into()));
    }
    let w = params.weights.data();
    let mut d_input = vec![0.0; in_dim];
    let mut d_weights = Tensor::zeros(&[out_dim, in_dim]);
    let mut d_bias = vec![0.0; out_dim];
    let dw = d_weights.data_mut();
    for o in 0..out_dim {
        let d_pre = d_out[o] * activation.grad(cache.pre[o]);
        d_bias[o] = d_pre;
        let row = o * in_dim;
        for i in 0..in_dim {
            dw[row + i] = d_pre * input[i];
            d_input[i] += d_pre * w[row + i];
        }
    }
    Ok((d_input, DenseGrads { d_weights, d_bias }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_weight_matrix_passes_through() {
        let n = 4;
        let mut weights = Tensor::zeros(&[n, n]);
        for i in 0..n {
            weights.data_mut()[i * n + i] = 1.0;
        }
        let params = DenseLayerParams { weights, bias: vec![0.0; n] };
        let input = vec![0.3, -1.2, 0.0, 5.5];
        let cache = dense_forward(&params, &input, Activation::Identity).unwrap();
        assert_eq!(cache.out, input);
    }

    #[test]
    fn relu_clips_negatives() {
        let params = DenseLayerParams {
            weights: Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            bias: vec![0.0, 0.0],
        };
        let cache = dense_forward(&params, &[-1.0, 2.0], Activation::Relu).unwrap();
        assert_eq!(cache.out, vec![0.0, 2.0]);
    }

    #[test]
    fn matches_matvec_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let out_dim = rng.gen_range(1..8);
            let in_dim = rng.gen_range(1..10);
            let params = DenseLayerParams {
                weights: Tensor::from_vec(
                    &[out_dim, in_dim],
                    (0..out_dim * in_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
                .unwrap(),
                bias: (0..out_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            };
            let input: Vec<f64> = (0..in_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cache = dense_forward(&params, &input, Activation::Identity).unwrap();
            for o in 0..out_dim {
                let mut acc = params.bias[o];
                for i in 0..in_dim {
                    acc += params.weights.data()[o * in_dim + i] * input[i];
                }
                assert!((cache.out[o] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = DenseLayerParams {
            weights: Tensor::from_vec(&[3, 4], (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap(),
            bias: vec![0.1, -0.3, 0.2],
        };
        let input: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let probe: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for activation in [Activation::Identity, Activation::Relu] {
            let loss = |par: &DenseLayerParams, inp: &[f64]| {
                dense_forward(par, inp, activation)
                    .unwrap()
                    .out
                    .iter()
                    .zip(&probe)
                    .map(|(o, c)| o * c)
                    .sum::<f64>()
            };
            let cache = dense_forward(&params, &input, activation).unwrap();
            let (d_input, grads) =
                dense_backward(&params, &input, &cache, activation, &probe).unwrap();
            let eps = 1e-6;
            for i in 0..input.len() {
                let mut plus = input.clone();
                plus[i] += eps;
                let mut minus = input.clone();
                minus[i] -= eps;
                let numeric = (loss(&params, &plus) - loss(&params, &minus)) / (2.0 * eps);
                assert!((d_input[i] - numeric).abs() < 1e-6);
            }
            for i in 0..params.weights.len() {
                let mut plus = params.clone();
                plus.weights.data_mut()[i] += eps;
                let mut minus = params.clone();
                minus.weights.data_mut()[i] -= eps;
                let numeric = (loss(&plus, &input) - loss(&minus, &input)) / (2.0 * eps);
                assert!((grads.d_weights.data()[i] - numeric).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn dimension_mismatch_errors() {
        let params = DenseLayerParams {
            weights: Tensor::zeros(&[2, 3]),
            bias: vec![0.0, 0.0],
        };
        assert!(dense_forward(&params, &[1.0, 2.0], Activation::Identity).is_err());
    }
}
