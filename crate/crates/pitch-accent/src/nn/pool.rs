//! Global max pooling over the time axis.

use crate::error::{Error, Result};

use super::Tensor;

/// Per-channel maximum over the time axis of a `[c, h, 1]` tensor.
/// Returns the pooled vector and the argmax index per channel (the
/// earliest maximum, which also fixes the backward routing on ties).
pub fn maxpool_over_time(input: &Tensor) -> Result<(Vec<f64>, Vec<usize>)> {
    let &[c, h, w] = input.shape() else {
        return Err(Error::Shape(format!(
            "maxpool input must be [channels, h, 1], got {:?}",
            input.shape()
        )));
    };
    if w != 1 || h == 0 {
        return Err(Error::Shape(format!(
            "maxpool input must be [channels, h>=1, 1], got {:?}",
            input.shape()
        )));
    }
    let x = input.data();
    let mut pooled = Vec::with_capacity(c);
    let mut argmax = Vec::with_capacity(c);
    for ch in 0..c {
        let col = &x[ch * h..(ch + 1) * h];
        let mut best = col[0];
        let mut best_i = 0;
        for (i, &v) in col.iter().enumerate().skip(1) {
            if v > best {
                best = v;
                best_i = i;
            }
        }
        pooled.push(best);
        argmax.push(best_i);
    }
    Ok((pooled, argmax))
}

/// Routes each channel's gradient to its argmax position.
pub fn maxpool_over_time_backward(
    input_shape: &[usize],
    argmax: &[usize],
    d_pooled: &[f64],
) -> Tensor {
    let (c, h) = (input_shape[0], input_shape[1]);
    debug_assert_eq!(argmax.len(), c);
    let mut d_input = Tensor::zeros(input_shape);
    for ch in 0..c {
        d_input.data_mut()[ch * h + argmax[ch]] = d_pooled[ch];
    }
    d_input
}
