//! Temporal convolution (cross-correlation) with "same" zero padding.
//!
//! For kernel length `k` the window covers `t − ⌊(k−1)/2⌋ ..= t + ⌈(k−1)/2⌉`,
//! so even kernels look one step further ahead than behind.

use crate::activation::Activation;
use crate::error::{NnError, Result};
use crate::tensor::{gemm, Tensor};

pub(crate) struct ConvCache {
    batch: usize,
    steps: usize,
    /// im2col rows `[B·T × k·input]`.
    cols: Vec<f64>,
    pub(crate) output: Vec<f64>,
}

pub fn pad_left(kernel: usize) -> usize {
    (kernel - 1) / 2
}

fn im2col(x: &[f64], batch: usize, steps: usize, input: usize, kernel: usize) -> Vec<f64> {
    let width = kernel * input;
    let pl = pad_left(kernel) as isize;
    let mut cols = vec![0.0; batch * steps * width];
    for b in 0..batch {
        for t in 0..steps {
            let row = &mut cols[(b * steps + t) * width..(b * steps + t + 1) * width];
            for j in 0..kernel {
                let src = t as isize + j as isize - pl;
                if src >= 0 && (src as usize) < steps {
                    let s = (b * steps + src as usize) * input;
                    row[j * input..(j + 1) * input].copy_from_slice(&x[s..s + input]);
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn forward_raw(
    x: &[f64],
    batch: usize,
    steps: usize,
    input: usize,
    kernel_size: usize,
    kernel: &[f64],
    bias: &[f64],
    act: Activation,
) -> Result<ConvCache> {
    if kernel_size > steps {
        return Err(NnError::Shape(format!(
            "kernel length {kernel_size} exceeds sequence length {steps}"
        )));
    }
    let filters = bias.len();
    let cols = im2col(x, batch, steps, input, kernel_size);
    let rows = batch * steps;
    let mut output = Vec::with_capacity(rows * filters);
    for _ in 0..rows {
        output.extend_from_slice(bias);
    }
    gemm(rows, kernel_size * input, filters, &cols, false, kernel, false, &mut output, 1.0);
    if act != Activation::Linear {
        for v in &mut output {
            *v = act.apply(*v);
        }
    }
    Ok(ConvCache {
        batch,
        steps,
        cols,
        output,
    })
}

/// Returns `(dx, d_kernel, d_bias)`.
pub(crate) fn backward_raw(
    cache: &ConvCache,
    input: usize,
    kernel_size: usize,
    kernel: &[f64],
    act: Activation,
    grad_out: &[f64],
    need_input_grad: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (batch, steps) = (cache.batch, cache.steps);
    let rows = batch * steps;
    let width = kernel_size * input;
    let filters = kernel.len() / width;
    let dz: Vec<f64> = grad_out
        .iter()
        .zip(&cache.output)
        .map(|(g, y)| g * act.derivative_from_output(*y))
        .collect();
    let mut dk = vec![0.0; width * filters];
    gemm(width, rows, filters, &cache.cols, true, &dz, false, &mut dk, 0.0);
    let mut db = vec![0.0; filters];
    for r in 0..rows {
        for (d, v) in db.iter_mut().zip(&dz[r * filters..(r + 1) * filters]) {
            *d += v;
        }
    }
    let dx = if need_input_grad {
        let mut dcols = vec![0.0; rows * width];
        gemm(rows, filters, width, &dz, false, kernel, true, &mut dcols, 0.0);
        let pl = pad_left(kernel_size) as isize;
        let mut dx = vec![0.0; rows * input];
        for b in 0..batch {
            for t in 0..steps {
                let row = &dcols[(b * steps + t) * width..(b * steps + t + 1) * width];
                for j in 0..kernel_size {
                    let src = t as isize + j as isize - pl;
                    if src >= 0 && (src as usize) < steps {
                        let d = (b * steps + src as usize) * input;
                        for c in 0..input {
                            dx[d + c] += row[j * input + c];
                        }
                    }
                }
            }
        }
        dx
    } else {
        Vec::new()
    };
    (dx, dk, db)
}

/// `act(conv(input, kernels) + bias)` for `input` `[batch × T × in]` and
/// `kernels` `[k × in × filters]`; output `[batch × T × filters]`.
pub fn conv1d_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    act: Activation,
) -> Result<Tensor> {
    let (batch, steps, width) = match input.shape() {
        [b, t, f] => (*b, *t, *f),
        s => return Err(NnError::Shape(format!("conv1d input must be 3-D, got {s:?}"))),
    };
    let (k, kin, filters) = match kernels.shape() {
        [k, i, f] => (*k, *i, *f),
        s => return Err(NnError::Shape(format!("conv1d kernel must be 3-D, got {s:?}"))),
    };
    if kin != width || bias.shape() != [filters] || k == 0 {
        return Err(NnError::Shape(format!(
            "conv1d input {:?}, kernel {:?}, bias {:?}",
            input.shape(),
            kernels.shape(),
            bias.shape()
        )));
    }
    let cache = forward_raw(input.data(), batch, steps, width, k, kernels.data(), bias.data(), act)?;
    Tensor::from_vec(&[batch, steps, filters], cache.output)
}

pub struct Conv1dGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Tensor,
}

pub fn conv1d_backward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    act: Activation,
    grad_out: &Tensor,
) -> Result<Conv1dGrads> {
    let (batch, steps, width) = match input.shape() {
        [b, t, f] => (*b, *t, *f),
        s => return Err(NnError::Shape(format!("conv1d input must be 3-D, got {s:?}"))),
    };
    let k = kernels.shape()[0];
    let cache = forward_raw(input.data(), batch, steps, width, k, kernels.data(), bias.data(), act)?;
    if grad_out.len() != cache.output.len() {
        return Err(NnError::Shape("conv1d gradient does not match output".into()));
    }
    let (dx, dk, db) = backward_raw(&cache, width, k, kernels.data(), act, grad_out.data(), true);
    Ok(Conv1dGrads {
        input: Tensor::from_vec(input.shape(), dx)?,
        kernel: Tensor::from_vec(kernels.shape(), dk)?,
        bias: Tensor::from_vec(bias.shape(), db)?,
    })
}
