//! 2-D convolution (cross-correlation, valid padding) with analytic
//! gradients, in full-channel and depthwise variants.

use crate::error::{Error, Result};

use super::Tensor;

/// Kernels, bias and stride of one convolution layer.
///
/// Kernel layout is `[out_channels, in_channels, kh, kw]`; the depthwise
/// variant uses `in_channels = 1` and applies kernel `c` to input
/// channel `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerParams {
    pub kernels: Tensor,
    pub bias: Vec<f64>,
    pub stride: (usize, usize),
}

impl ConvLayerParams {
    /// Glorot-initialized layer.
    pub fn init(
        out_channels: usize,
        in_channels: usize,
        kh: usize,
        kw: usize,
        stride: (usize, usize),
        rng: &mut impl rand::Rng,
    ) -> ConvLayerParams {
        assert!(stride.0 >= 1 && stride.1 >= 1 && kh >= 1 && kw >= 1);
        let fan_in = in_channels * kh * kw;
        let fan_out = out_channels * kh * kw;
        ConvLayerParams {
            kernels: Tensor::glorot_uniform(&[out_channels, in_channels, kh, kw], fan_in, fan_out, rng),
            bias: vec![0.0; out_channels],
            stride,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernels.shape()[2], self.kernels.shape()[3])
    }
}

/// Output length of a valid convolution along one axis.
pub fn conv_output_len(input: usize, kernel: usize, stride: usize) -> Result<usize> {
    if kernel > input {
        return Err(Error::Shape(format!(
            "kernel size {kernel} larger than input extent {input}"
        )));
    }
    Ok((input - kernel) / stride + 1)
}

/// Gradients of a convolution layer's parameters.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub d_kernels: Tensor,
    pub d_bias: Vec<f64>,
}

fn check_input(input: &Tensor, params: &ConvLayerParams, depthwise: bool) -> Result<(usize, usize, usize, usize, usize)> {
    let &[c_in, h, w] = input.shape() else {
        return Err(Error::Shape(format!(
            "conv input must be [channels, h, w], got {:?}",
            input.shape()
        )));
    };
    if depthwise {
        if params.in_channels() != 1 || params.out_channels() != c_in {
            return Err(Error::Shape(format!(
                "depthwise kernels must be [{c_in}, 1, kh, kw], got {:?}",
                params.kernels.shape()
            )));
        }
    } else if params.in_channels() != c_in {
        return Err(Error::Shape(format!(
            "input has {c_in} channels, kernels expect {}",
            params.in_channels()
        )));
    }
    let (kh, kw) = params.kernel_size();
    let h_out = conv_output_len(h, kh, params.stride.0)?;
    let w_out = conv_output_len(w, kw, params.stride.1)?;
    Ok((c_in, h, w, h_out, w_out))
}

/// Valid cross-correlation of a `[c_in, h, w]` input.
pub fn conv2d(input: &Tensor, params: &ConvLayerParams) -> Result<Tensor> {
    let (c_in, h, w, h_out, w_out) = check_input(input, params, false)?;
    let (kh, kw) = params.kernel_size();
    let (sh, sw) = params.stride;
    let c_out = params.out_channels();
    let x = input.data();
    let k = params.kernels.data();

    let mut out = Tensor::zeros(&[c_out, h_out, w_out]);
    let o = out.data_mut();
    for co in 0..c_out {
        for y in 0..h_out {
            for xw in 0..w_out {
                let mut acc = params.bias[co];
                for ci in 0..c_in {
                    let x_base = ci * h * w;
                    let k_base = (co * c_in + ci) * kh * kw;
                    for p in 0..kh {
                        let x_row = x_base + (y * sh + p) * w + xw * sw;
                        let k_row = k_base + p * kw;
                        for q in 0..kw {
                            acc += x[x_row + q] * k[k_row + q];
                        }
                    }
                }
                o[(co * h_out + y) * w_out + xw] = acc;
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] w.r.t. input, kernels and bias, given the
/// gradient of the loss w.r.t. the output.
pub fn conv2d_backward(
    input: &Tensor,
    params: &ConvLayerParams,
    d_out: &Tensor,
) -> Result<(Tensor, ConvGrads)> {
    let (c_in, h, w, h_out, w_out) = check_input(input, params, false)?;
    let (kh, kw) = params.kernel_size();
    let (sh, sw) = params.stride;
    let c_out = params.out_channels();
    if d_out.shape() != [c_out, h_out, w_out] {
        return Err(Error::Shape(format!(
            "d_out shape {:?} does not match conv output [{c_out}, {h_out}, {w_out}]",
            d_out.shape()
        )));
    }
    let x = input.data();
    let k = params.kernels.data();
    let g = d_out.data();

    let mut d_input = Tensor::zeros(&[c_in, h, w]);
    let mut d_kernels = Tensor::zeros(params.kernels.shape());
    let mut d_bias = vec![0.0; c_out];
    let di = d_input.data_mut();
    let dk = d_kernels.data_mut();
    for co in 0..c_out {
        for y in 0..h_out {
            for xw in 0..w_out {
                let gv = g[(co * h_out + y) * w_out + xw];
                d_bias[co] += gv;
                for ci in 0..c_in {
                    let x_base = ci * h * w;
                    let k_base = (co * c_in + ci) * kh * kw;
                    for p in 0..kh {
                        let x_row = x_base + (y * sh + p) * w + xw * sw;
                        let k_row = k_base + p * kw;
                        for q in 0..kw {
                            dk[k_row + q] += gv * x[x_row + q];
                            di[x_row + q] += gv * k[k_row + q];
                        }
                    }
                }
            }
        }
    }
    Ok((d_input, ConvGrads { d_kernels, d_bias }))
}

/// Depthwise valid cross-correlation: kernel `c` convolves input
/// channel `c` only. Kernel layout `[channels, 1, kh, kw]`.
pub fn conv2d_depthwise(input: &Tensor, params: &ConvLayerParams) -> Result<Tensor> {
    let (c, h, w, h_out, w_out) = check_input(input, params, true)?;
    let (kh, kw) = params.kernel_size();
    let (sh, sw) = params.stride;
    let x = input.data();
    let k = params.kernels.data();

    let mut out = Tensor::zeros(&[c, h_out, w_out]);
    let o = out.data_mut();
    for co in 0..c {
        let x_base = co * h * w;
        let k_base = co * kh * kw;
        for y in 0..h_out {
            for xw in 0..w_out {
                let mut acc = params.bias[co];
                for p in 0..kh {
                    let x_row = x_base + (y * sh + p) * w + xw * sw;
                    let k_row = k_base + p * kw;
                    for q in 0..kw {
                        acc += x[x_row + q] * k[k_row + q];
                    }
                }
                o[(co * h_out + y) * w_out + xw] = acc;
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d_depthwise`].
pub fn conv2d_depthwise_backward(
    input: &Tensor,
    params: &ConvLayerParams,
    d_out: &Tensor,
) -> Result<(Tensor, ConvGrads)> {
    let (c, h, w, h_out, w_out) = check_input(input, params, true)?;
    let (kh, kw) = params.kernel_size();
    let (sh, sw) = params.stride;
    if d_out.shape() != [c, h_out, w_out] {
        return Err(Error::Shape(format!(
            "d_out shape {:?} does not match conv output [{c}, {h_out}, {w_out}]",
            d_out.shape()
        )));
    }
    let x = input.data();
    let k = params.kernels.data();
    let g = d_out.data();

    let mut d_input = Tensor::zeros(&[c, h, w]);
    let mut d_kernels = Tensor::zeros(params.kernels.shape());
    let mut d_bias = vec![0.0; c];
    let di = d_input.data_mut();
    let dk = d_kernels.data_mut();
    for co in 0..c {
        let x_base = co * h * w;
        let k_base = co * kh * kw;
        for y in 0..h_out {
            for xw in 0..w_out {
                let gv = g[(co * h_out + y) * w_out + xw];
                d_bias[co] += gv;
                for p in 0..kh {
                    let x_row = x_base + (y * sh + p) * w + xw * sw;
                    let k_row = k_base + p * kw;
                    for q in 0..kw {
                        dk[k_row + q] += gv * x[x_row + q];
                        di[x_row + q] += gv * k[k_row + q];
                    }
                }
            }
        }
    }
    Ok((d_input, ConvGrads { d_kernels, d_bias }))
}
