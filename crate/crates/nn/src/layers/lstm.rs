//! Standard LSTM cell with forget gate.
//!
//! ```text
//! z  = x·K + h·R + b           (blocks i, f, g, o)
//! c' = σ(f)⊙c + σ(i)⊙tanh(g)
//! h' = σ(o)⊙tanh(c')
//! ```
//!
//! Sequences are unrolled time-major internally so that the input
//! projection for all steps is a single matrix product and only the
//! recurrent product runs per step.

use crate::activation::sigmoid;
use crate::error::{NnError, Result};
use crate::params::LayerParams;
use crate::tensor::{gemm, Tensor};

/// Hidden and cell state, both `[batch × units]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub hidden: Tensor,
    pub cell: Tensor,
}

impl LstmState {
    pub fn zeros(batch: usize, units: usize) -> Self {
        Self {
            hidden: Tensor::zeros(&[batch, units]),
            cell: Tensor::zeros(&[batch, units]),
        }
    }

    pub fn batch(&self) -> usize {
        self.hidden.shape()[0]
    }

    pub fn units(&self) -> usize {
        self.hidden.shape()[1]
    }

    pub fn reset(&mut self) {
        self.hidden.data_mut().fill(0.0);
        self.cell.data_mut().fill(0.0);
    }
}

/// Borrowed view of one layer's LSTM weights.
#[derive(Clone, Copy)]
pub struct LstmWeights<'a> {
    pub kernel: &'a [f64],
    pub recurrent: &'a [f64],
    pub bias: &'a [f64],
    pub input: usize,
    pub units: usize,
}

impl<'a> LstmWeights<'a> {
    pub fn from_params(params: &'a LayerParams) -> Result<Self> {
        match params {
            LayerParams::Lstm {
                kernel,
                recurrent,
                bias,
            } => {
                let (input, four_h) = match kernel.shape() {
                    [i, g] => (*i, *g),
                    s => return Err(NnError::Shape(format!("lstm kernel {s:?}"))),
                };
                let units = four_h / 4;
                if four_h % 4 != 0
                    || recurrent.shape() != [units, four_h]
                    || bias.shape() != [four_h]
                {
                    return Err(NnError::Shape(format!(
                        "lstm kernel {:?}, recurrent {:?}, bias {:?}",
                        kernel.shape(),
                        recurrent.shape(),
                        bias.shape()
                    )));
                }
                Ok(Self {
                    kernel: kernel.data(),
                    recurrent: recurrent.data(),
                    bias: bias.data(),
                    input,
                    units,
                })
            }
            _ => Err(NnError::Shape("expected lstm parameters".into())),
        }
    }
}

/// Everything the backward pass needs from one unrolled forward pass.
pub(crate) struct LstmCache {
    batch: usize,
    steps: usize,
    return_sequences: bool,
    /// `[T·B × input]`, time-major.
    x_tm: Vec<f64>,
    /// Activated gates `[T × B × 4H]`.
    gates: Vec<f64>,
    /// `[(T+1) × B × H]`; slot 0 is the initial state.
    cells: Vec<f64>,
    hiddens: Vec<f64>,
}

pub(crate) struct LstmOutput {
    /// `[B × T × H]` or `[B × H]` when only the last step is returned.
    pub output: Vec<f64>,
    pub final_hidden: Vec<f64>,
    pub final_cell: Vec<f64>,
    pub cache: LstmCache,
}

/// Unrolls the cell over `x` (`[B × T × input]`, batch-major).
pub(crate) fn forward_raw(
    w: LstmWeights<'_>,
    x: &[f64],
    batch: usize,
    steps: usize,
    init_hidden: Option<&[f64]>,
    init_cell: Option<&[f64]>,
    return_sequences: bool,
) -> LstmOutput {
    let h = w.units;
    let g4 = 4 * h;
    let bh = batch * h;

    let mut x_tm = vec![0.0; steps * batch * w.input];
    for b in 0..batch {
        for t in 0..steps {
            let src = (b * steps + t) * w.input;
            let dst = (t * batch + b) * w.input;
            x_tm[dst..dst + w.input].copy_from_slice(&x[src..src + w.input]);
        }
    }

    let mut gates = Vec::with_capacity(steps * batch * g4);
    for _ in 0..steps * batch {
        gates.extend_from_slice(w.bias);
    }
    gemm(steps * batch, w.input, g4, &x_tm, false, w.kernel, false, &mut gates, 1.0);

    let mut cells = vec![0.0; (steps + 1) * bh];
    let mut hiddens = vec![0.0; (steps + 1) * bh];
    if let Some(hs) = init_hidden {
        hiddens[..bh].copy_from_slice(hs);
    }
    if let Some(cs) = init_cell {
        cells[..bh].copy_from_slice(cs);
    }

    for t in 0..steps {
        let z = &mut gates[t * batch * g4..(t + 1) * batch * g4];
        let (h_prev_all, h_next_all) = hiddens.split_at_mut((t + 1) * bh);
        let h_prev = &h_prev_all[t * bh..];
        gemm(batch, h, g4, h_prev, false, w.recurrent, false, z, 1.0);
        let (c_prev_all, c_next_all) = cells.split_at_mut((t + 1) * bh);
        let c_prev = &c_prev_all[t * bh..];
        let c_next = &mut c_next_all[..bh];
        let h_next = &mut h_next_all[..bh];
        for b in 0..batch {
            let zb = &mut z[b * g4..(b + 1) * g4];
            for j in 0..h {
                let i = sigmoid(zb[j]);
                let f = sigmoid(zb[h + j]);
                let g = zb[2 * h + j].tanh();
                let o = sigmoid(zb[3 * h + j]);
                let c = f * c_prev[b * h + j] + i * g;
                c_next[b * h + j] = c;
                h_next[b * h + j] = o * c.tanh();
                zb[j] = i;
                zb[h + j] = f;
                zb[2 * h + j] = g;
                zb[3 * h + j] = o;
            }
        }
    }

    let output = if return_sequences {
        let mut out = vec![0.0; batch * steps * h];
        for t in 0..steps {
            for b in 0..batch {
                let src = (t + 1) * bh + b * h;
                let dst = (b * steps + t) * h;
                out[dst..dst + h].copy_from_slice(&hiddens[src..src + h]);
            }
        }
        out
    } else {
        hiddens[steps * bh..].to_vec()
    };

    LstmOutput {
        output,
        final_hidden: hiddens[steps * bh..].to_vec(),
        final_cell: cells[steps * bh..].to_vec(),
        cache: LstmCache {
            batch,
            steps,
            return_sequences,
            x_tm,
            gates,
            cells,
            hiddens,
        },
    }
}

/// Backpropagation through time. Returns `(dx, d_kernel, d_recurrent, d_bias)`,
/// `dx` batch-major. The initial state is treated as a constant.
pub(crate) fn backward_raw(
    w: LstmWeights<'_>,
    cache: &LstmCache,
    grad_out: &[f64],
    need_input_grad: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = w.units;
    let g4 = 4 * h;
    let (batch, steps) = (cache.batch, cache.steps);
    let bh = batch * h;

    let mut dz = vec![0.0; steps * batch * g4];
    let mut dh_next = vec![0.0; bh];
    let mut dc_next = vec![0.0; bh];

    for t in (0..steps).rev() {
        if cache.return_sequences {
            for b in 0..batch {
                let src = (b * steps + t) * h;
                for j in 0..h {
                    dh_next[b * h + j] += grad_out[src + j];
                }
            }
        } else if t == steps - 1 {
            for (d, g) in dh_next.iter_mut().zip(grad_out) {
                *d += g;
            }
        }
        let gz = &cache.gates[t * batch * g4..(t + 1) * batch * g4];
        let c_prev = &cache.cells[t * bh..(t + 1) * bh];
        let c_cur = &cache.cells[(t + 1) * bh..(t + 2) * bh];
        let dzt = &mut dz[t * batch * g4..(t + 1) * batch * g4];
        for b in 0..batch {
            for j in 0..h {
                let k = b * h + j;
                let base = b * g4;
                let (i, f, g, o) = (gz[base + j], gz[base + h + j], gz[base + 2 * h + j], gz[base + 3 * h + j]);
                let tc = c_cur[k].tanh();
                let dh = dh_next[k];
                let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
                dzt[base + j] = dc * g * i * (1.0 - i);
                dzt[base + h + j] = dc * c_prev[k] * f * (1.0 - f);
                dzt[base + 2 * h + j] = dc * i * (1.0 - g * g);
                dzt[base + 3 * h + j] = dh * tc * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
        }
        if t > 0 {
            gemm(batch, g4, h, dzt, false, w.recurrent, true, &mut dh_next, 0.0);
        }
    }

    let rows = steps * batch;
    let mut dk = vec![0.0; w.input * g4];
    gemm(w.input, rows, g4, &cache.x_tm, true, &dz, false, &mut dk, 0.0);
    let mut dr = vec![0.0; h * g4];
    gemm(h, rows, g4, &cache.hiddens[..rows * h], true, &dz, false, &mut dr, 0.0);
    let mut db = vec![0.0; g4];
    for r in 0..rows {
        for (d, v) in db.iter_mut().zip(&dz[r * g4..(r + 1) * g4]) {
            *d += v;
        }
    }

    let dx = if need_input_grad {
        let mut dx_tm = vec![0.0; rows * w.input];
        gemm(rows, g4, w.input, &dz, false, w.kernel, true, &mut dx_tm, 0.0);
        let mut dx = vec![0.0; rows * w.input];
        for t in 0..steps {
            for b in 0..batch {
                let src = (t * batch + b) * w.input;
                let dst = (b * steps + t) * w.input;
                dx[dst..dst + w.input].copy_from_slice(&dx_tm[src..src + w.input]);
            }
        }
        dx
    } else {
        Vec::new()
    };
    (dx, dk, dr, db)
}

fn state_slices(state: &LstmState, batch: usize, units: usize) -> Result<(&[f64], &[f64])> {
    if state.hidden.shape() != [batch, units] || state.cell.shape() != [batch, units] {
        return Err(NnError::Shape(format!(
            "state {:?} does not match batch {batch} × units {units}",
            state.hidden.shape()
        )));
    }
    Ok((state.hidden.data(), state.cell.data()))
}

/// One cell update for `x_t` of shape `[batch × input]`.
pub fn lstm_step(
    x_t: &Tensor,
    state: &LstmState,
    params: &LayerParams,
) -> Result<(Tensor, LstmState)> {
    let w = LstmWeights::from_params(params)?;
    let batch = x_t.rows();
    if x_t.cols() != w.input {
        return Err(NnError::Shape(format!(
            "input width {} vs kernel {}",
            x_t.cols(),
            w.input
        )));
    }
    let (hs, cs) = state_slices(state, batch, w.units)?;
    let out = forward_raw(w, x_t.data(), batch, 1, Some(hs), Some(cs), false);
    let hidden = Tensor::from_vec(&[batch, w.units], out.final_hidden)?;
    Ok((
        hidden.clone(),
        LstmState {
            hidden,
            cell: Tensor::from_vec(&[batch, w.units], out.final_cell)?,
        },
    ))
}

/// Runs the layer over `inputs` (`[batch × T × input]`).
///
/// With `stateful` the supplied state (zero when absent) seeds the
/// recurrence; otherwise the recurrence always starts from zero. Returns the
/// outputs and the final state for the caller to persist.
pub fn lstm_sequence(
    inputs: &Tensor,
    state: Option<&LstmState>,
    stateful: bool,
    return_sequences: bool,
    params: &LayerParams,
) -> Result<(Tensor, LstmState)> {
    let w = LstmWeights::from_params(params)?;
    let (batch, steps, width) = match inputs.shape() {
        [b, t, f] => (*b, *t, *f),
        s => return Err(NnError::Shape(format!("lstm input must be 3-D, got {s:?}"))),
    };
    if width != w.input {
        return Err(NnError::Shape(format!("input width {width} vs kernel {}", w.input)));
    }
    let init = match (stateful, state) {
        (true, Some(s)) => Some(state_slices(s, batch, w.units)?),
        _ => None,
    };
    let out = forward_raw(
        w,
        inputs.data(),
        batch,
        steps,
        init.map(|(h, _)| h),
        init.map(|(_, c)| c),
        return_sequences,
    );
    let shape: Vec<usize> = if return_sequences {
        vec![batch, steps, w.units]
    } else {
        vec![batch, w.units]
    };
    Ok((
        Tensor::from_vec(&shape, out.output)?,
        LstmState {
            hidden: Tensor::from_vec(&[batch, w.units], out.final_hidden)?,
            cell: Tensor::from_vec(&[batch, w.units], out.final_cell)?,
        },
    ))
}
