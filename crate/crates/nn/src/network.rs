//! Layer chains over `[batch × T × features]` tensors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activation::Activation;
use crate::error::{NnError, Result};
use crate::layers::{conv1d, dense, dropout, lstm};
use crate::layers::lstm::{LstmState, LstmWeights};
use crate::loss::mse_slices;
use crate::params::{init_weights, LayerParams, NetworkParams};
use crate::spec::{LayerSpec, NetworkSpec};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

enum LayerTape {
    Dense {
        input: Vec<f64>,
        output: Vec<f64>,
        rows: usize,
        activation: Activation,
    },
    Lstm(lstm::LstmCache),
    Conv {
        cache: conv1d::ConvCache,
        activation: Activation,
        kernel_size: usize,
    },
    Dropout(Option<Vec<f64>>),
}

/// Per-layer intermediate values of one forward pass.
pub struct Tape {
    layers: Vec<LayerTape>,
    input_shape: [usize; 3],
}

/// Gradients of one backward pass.
pub struct Gradients {
    pub params: NetworkParams,
    /// Gradient with respect to the network input, `[batch × T × width]`.
    pub input: Tensor,
}

#[derive(Clone, Debug)]
pub struct Network {
    spec: NetworkSpec,
    params: NetworkParams,
    states: Vec<Option<LstmState>>,
}

impl Network {
    pub fn new(spec: NetworkSpec, params: NetworkParams) -> Result<Self> {
        params.check_against(&spec)?;
        let states = vec![None; spec.layers.len()];
        Ok(Self {
            spec,
            params,
            states,
        })
    }

    pub fn from_seed(spec: NetworkSpec, seed: u64) -> Self {
        let params = init_weights(&spec, seed);
        Self::new(spec, params).expect("initialised parameters fit their spec")
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    /// Replaces the weights after verifying every tensor shape.
    pub fn set_params(&mut self, params: NetworkParams) -> Result<()> {
        params.check_against(&self.spec)?;
        self.params = params;
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut NetworkParams {
        &mut self.params
    }

    pub fn into_params(self) -> NetworkParams {
        self.params
    }

    /// Clears the persisted state of every stateful LSTM layer.
    pub fn reset_states(&mut self) {
        self.states.iter_mut().for_each(|s| *s = None);
    }

    /// Persisted state of layer `index`, if any.
    pub fn state(&self, index: usize) -> Option<&LstmState> {
        self.states.get(index).and_then(Option::as_ref)
    }

    /// Batch size of the persisted recurrent state, if any is held.
    pub fn state_batch(&self) -> Option<usize> {
        self.states.iter().flatten().next().map(LstmState::batch)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.parameter_count()
    }

    /// Inference forward pass; stateful layers read and update their state.
    pub fn predict(&mut self, input: &Tensor) -> Result<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(input, Mode::Infer, &mut rng, false)?.0)
    }

    /// Forward pass that records what `backward` needs.
    pub fn forward_with_tape<R: Rng + ?Sized>(
        &mut self,
        input: &Tensor,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Tensor, Tape)> {
        let (out, tape) = self.forward(input, mode, rng, true)?;
        Ok((out, tape.expect("tape requested")))
    }

    fn forward<R: Rng + ?Sized>(
        &mut self,
        input: &Tensor,
        mode: Mode,
        rng: &mut R,
        record: bool,
    ) -> Result<(Tensor, Option<Tape>)> {
        let (batch, mut steps, width) = match input.shape() {
            [b, t, f] => (*b, *t, *f),
            s => return Err(NnError::Shape(format!("network input must be 3-D, got {s:?}"))),
        };
        if width != self.spec.input_width {
            return Err(NnError::Shape(format!(
                "input width {width}, network expects {}",
                self.spec.input_width
            )));
        }
        if batch == 0 || steps == 0 {
            return Err(NnError::EmptyData("empty batch".into()));
        }
        let mut x = input.data().to_vec();
        let mut width = width;
        let mut tapes = Vec::with_capacity(if record { self.spec.layers.len() } else { 0 });

        for (idx, layer) in self.spec.layers.iter().enumerate() {
            let params = &self.params.layers[idx];
            match (layer, params) {
                (
                    LayerSpec::Dense { activation, .. } | LayerSpec::TimeDistributedDense { activation, .. },
                    LayerParams::Dense { weight, bias },
                ) => {
                    let rows = batch * steps;
                    let out = dense::forward_raw(&x, rows, width, weight.data(), bias.data(), *activation);
                    width = bias.len();
                    if record {
                        tapes.push(LayerTape::Dense {
                            input: std::mem::take(&mut x),
                            output: out.clone(),
                            rows,
                            activation: *activation,
                        });
                    }
                    x = out;
                }
                (
                    LayerSpec::Lstm {
                        units,
                        stateful,
                        return_sequences,
                    },
                    LayerParams::Lstm { .. },
                ) => {
                    let w = LstmWeights::from_params(params)?;
                    let init = if *stateful {
                        match &self.states[idx] {
                            Some(s) if s.batch() != batch => {
                                return Err(NnError::Shape(format!(
                                    "persisted state has batch {}, input has batch {batch}",
                                    s.batch()
                                )))
                            }
                            Some(s) => Some((s.hidden.data(), s.cell.data())),
                            None => None,
                        }
                    } else {
                        None
                    };
                    let out = lstm::forward_raw(
                        w,
                        &x,
                        batch,
                        steps,
                        init.map(|(h, _)| h),
                        init.map(|(_, c)| c),
                        *return_sequences,
                    );
                    if *stateful {
                        self.states[idx] = Some(LstmState {
                            hidden: Tensor::from_vec(&[batch, *units], out.final_hidden)?,
                            cell: Tensor::from_vec(&[batch, *units], out.final_cell)?,
                        });
                    }
                    if !*return_sequences {
                        steps = 1;
                    }
                    width = *units;
                    x = out.output;
                    if record {
                        tapes.push(LayerTape::Lstm(out.cache));
                    }
                }
                (
                    LayerSpec::Conv1d {
                        kernel_size,
                        activation,
                        ..
                    },
                    LayerParams::Conv1d { kernel, bias },
                ) => {
                    let cache = conv1d::forward_raw(
                        &x,
                        batch,
                        steps,
                        width,
                        *kernel_size,
                        kernel.data(),
                        bias.data(),
                        *activation,
                    )?;
                    width = bias.len();
                    if record {
                        x = cache.output.clone();
                        tapes.push(LayerTape::Conv {
                            cache,
                            activation: *activation,
                            kernel_size: *kernel_size,
                        });
                    } else {
                        x = cache.output;
                    }
                }
                (LayerSpec::Dropout { rate }, LayerParams::None) => {
                    let mask = dropout::mask(x.len(), *rate, mode == Mode::Train, rng);
                    if let Some(m) = &mask {
                        for (v, k) in x.iter_mut().zip(m) {
                            *v *= k;
                        }
                    }
                    if record {
                        tapes.push(LayerTape::Dropout(mask));
                    }
                }
                _ => return Err(NnError::Shape(format!("layer {idx}: parameters do not match spec"))),
            }
        }
        let out = Tensor::from_vec(&[batch, steps, width], x)?;
        let tape = record.then(|| Tape {
            layers: tapes,
            input_shape: [batch, input.shape()[1], input.shape()[2]],
        });
        Ok((out, tape))
    }

    /// Backpropagates `grad_out` (same shape as the forward output).
    pub fn backward(&self, tape: &Tape, grad_out: &Tensor) -> Result<Gradients> {
        let mut grads = self.params.zeros_like();
        let mut g = grad_out.data().to_vec();
        let input_width = self.spec.input_width;
        let widths = self.spec.layer_inputs();
        for idx in (0..self.spec.layers.len()).rev() {
            let params = &self.params.layers[idx];
            let in_w = widths[idx];
            match (&tape.layers[idx], params, &mut grads.layers[idx]) {
                (
                    LayerTape::Dense {
                        input,
                        output,
                        rows,
                        activation,
                    },
                    LayerParams::Dense { weight, .. },
                    LayerParams::Dense {
                        weight: gw,
                        bias: gb,
                    },
                ) => {
                    let (gi, w, b) =
                        dense::backward_raw(input, output, *rows, in_w, weight.data(), *activation, &g, true);
                    gw.data_mut().copy_from_slice(&w);
                    gb.data_mut().copy_from_slice(&b);
                    g = gi;
                }
                (
                    LayerTape::Lstm(cache),
                    LayerParams::Lstm { .. },
                    LayerParams::Lstm {
                        kernel: gk,
                        recurrent: gr,
                        bias: gb,
                    },
                ) => {
                    let w = LstmWeights::from_params(params)?;
                    let (dx, dk, dr, db) = lstm::backward_raw(w, cache, &g, true);
                    gk.data_mut().copy_from_slice(&dk);
                    gr.data_mut().copy_from_slice(&dr);
                    gb.data_mut().copy_from_slice(&db);
                    g = dx;
                }
                (
                    LayerTape::Conv {
                        cache,
                        activation,
                        kernel_size,
                    },
                    LayerParams::Conv1d { kernel, .. },
                    LayerParams::Conv1d {
                        kernel: gk,
                        bias: gb,
                    },
                ) => {
                    let (dx, dk, db) =
                        conv1d::backward_raw(cache, in_w, *kernel_size, kernel.data(), *activation, &g, true);
                    gk.data_mut().copy_from_slice(&dk);
                    gb.data_mut().copy_from_slice(&db);
                    g = dx;
                }
                (LayerTape::Dropout(mask), LayerParams::None, LayerParams::None) => {
                    if let Some(m) = mask {
                        for (v, k) in g.iter_mut().zip(m) {
                            *v *= k;
                        }
                    }
                }
                _ => return Err(NnError::Shape(format!("layer {idx}: tape does not match network"))),
            }
        }
        debug_assert_eq!(g.len(), tape.input_shape.iter().product::<usize>());
        let [b, t, _] = tape.input_shape;
        Ok(Gradients {
            params: grads,
            input: Tensor::from_vec(&[b, t, input_width], g)?,
        })
    }

    /// MSE loss of one batch and its exact gradients.
    pub fn loss_and_gradients<R: Rng + ?Sized>(
        &mut self,
        input: &Tensor,
        target: &Tensor,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(f64, Gradients)> {
        let (out, tape) = self.forward_with_tape(input, mode, rng)?;
        if out.len() != target.len() {
            return Err(NnError::Shape(format!(
                "output {:?} vs target {:?}",
                out.shape(),
                target.shape()
            )));
        }
        let (loss, grad) = mse_slices(out.data(), target.data());
        let grad = Tensor::from_vec(out.shape(), grad)?;
        Ok((loss, self.backward(&tape, &grad)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lstm_net(stateful: bool) -> Network {
        let spec = NetworkSpec::new(
            2,
            vec![
                LayerSpec::Lstm {
                    units: 4,
                    stateful,
                    return_sequences: true,
                },
                LayerSpec::TimeDistributedDense {
                    units: 3,
                    activation: Activation::Linear,
                },
            ],
        )
        .unwrap();
        Network::from_seed(spec, 3)
    }

    fn seq(b: usize, t: usize) -> Tensor {
        Tensor::from_vec(&[b, t, 2], (0..b * t * 2).map(|i| (i as f64 * 0.41).cos()).collect()).unwrap()
    }

    #[test]
    fn stateful_state_persists_until_reset() {
        let mut net = lstm_net(true);
        let x = seq(1, 6);
        let first = net.predict(&x).unwrap();
        let second = net.predict(&x).unwrap();
        assert_ne!(first, second);
        net.reset_states();
        assert_eq!(net.predict(&x).unwrap(), first);
    }

    #[test]
    fn non_stateful_is_memoryless() {
        let mut net = lstm_net(false);
        let x = seq(2, 5);
        assert_eq!(net.predict(&x).unwrap(), net.predict(&x).unwrap());
    }

    #[test]
    fn stateful_batch_change_without_reset_fails() {
        let mut net = lstm_net(true);
        net.predict(&seq(2, 3)).unwrap();
        assert!(net.predict(&seq(1, 3)).is_err());
        net.reset_states();
        assert!(net.predict(&seq(1, 3)).is_ok());
    }

    #[test]
    fn wrong_width_is_rejected() {
        let mut net = lstm_net(false);
        let x = Tensor::zeros(&[1, 3, 5]);
        assert!(net.predict(&x).is_err());
    }
}
