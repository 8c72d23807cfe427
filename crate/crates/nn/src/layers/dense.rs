//! Fully connected layer over the last axis; leading axes are flattened
//! into rows, which also makes it the time-distributed head.

use crate::activation::Activation;
use crate::error::{NnError, Result};
use crate::tensor::{gemm, Tensor};

pub struct DenseGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

fn check(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize)> {
    let (in_w, out_w) = match weight.shape() {
        [i, o] => (*i, *o),
        s => return Err(NnError::Shape(format!("dense weight must be 2-D, got {s:?}"))),
    };
    if input.cols() != in_w || bias.shape() != [out_w] {
        return Err(NnError::Shape(format!(
            "dense input {:?}, weight {:?}, bias {:?}",
            input.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    Ok((input.rows(), in_w, out_w))
}

pub(crate) fn forward_raw(
    input: &[f64],
    rows: usize,
    in_w: usize,
    weight: &[f64],
    bias: &[f64],
    act: Activation,
) -> Vec<f64> {
    let out_w = bias.len();
    let mut out = Vec::with_capacity(rows * out_w);
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
    gemm(rows, in_w, out_w, input, false, weight, false, &mut out, 1.0);
    if act != Activation::Linear {
        for v in &mut out {
            *v = act.apply(*v);
        }
    }
    out
}

/// Returns `(grad_input, grad_weight, grad_bias)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_raw(
    input: &[f64],
    output: &[f64],
    rows: usize,
    in_w: usize,
    weight: &[f64],
    act: Activation,
    grad_out: &[f64],
    need_input_grad: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let out_w = weight.len() / in_w.max(1);
    let dz: Vec<f64> = match act {
        Activation::Linear => grad_out.to_vec(),
        _ => grad_out
            .iter()
            .zip(output)
            .map(|(g, y)| g * act.derivative_from_output(*y))
            .collect(),
    };
    let mut gw = vec![0.0; in_w * out_w];
    gemm(in_w, rows, out_w, input, true, &dz, false, &mut gw, 0.0);
    let mut gb = vec![0.0; out_w];
    for r in 0..rows {
        for (b, d) in gb.iter_mut().zip(&dz[r * out_w..(r + 1) * out_w]) {
            *b += d;
        }
    }
    let gi = if need_input_grad {
        let mut gi = vec![0.0; rows * in_w];
        gemm(rows, out_w, in_w, &dz, false, weight, true, &mut gi, 0.0);
        gi
    } else {
        Vec::new()
    };
    (gi, gw, gb)
}

/// `act(input · weight + bias)` row by row.
pub fn dense_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    act: Activation,
) -> Result<Tensor> {
    let (rows, in_w, out_w) = check(input, weight, bias)?;
    let out = forward_raw(input.data(), rows, in_w, weight.data(), bias.data(), act);
    let mut shape = input.shape().to_vec();
    *shape.last_mut().expect("rank ≥ 1") = out_w;
    Tensor::from_vec(&shape, out)
}

/// Exact gradients given the forward output and upstream gradient.
pub fn dense_backward(
    input: &Tensor,
    output: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    act: Activation,
    grad_out: &Tensor,
) -> Result<DenseGrads> {
    let (rows, in_w, out_w) = check(input, weight, bias)?;
    if grad_out.shape() != output.shape() || output.len() != rows * out_w {
        return Err(NnError::Shape("dense gradient does not match output".into()));
    }
    let (gi, gw, gb) = backward_raw(
        input.data(),
        output.data(),
        rows,
        in_w,
        weight.data(),
        act,
        grad_out.data(),
        true,
    );
    Ok(DenseGrads {
        input: Tensor::from_vec(input.shape(), gi)?,
        weight: Tensor::from_vec(weight.shape(), gw)?,
        bias: Tensor::from_vec(bias.shape(), gb)?,
    })
}
