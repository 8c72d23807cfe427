use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::spec::{LayerSpec, NetworkSpec};
use crate::tensor::Tensor;

/// Trainable tensors of one layer. LSTM gate blocks are laid out as
/// `[input | forget | candidate | output]` along the last axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerParams {
    Dense {
        weight: Tensor,
        bias: Tensor,
    },
    Lstm {
        kernel: Tensor,
        recurrent: Tensor,
        bias: Tensor,
    },
    Conv1d {
        kernel: Tensor,
        bias: Tensor,
    },
    None,
}

impl LayerParams {
    pub fn tensors(&self) -> Vec<&Tensor> {
        match self {
            LayerParams::Dense { weight, bias } => vec![weight, bias],
            LayerParams::Lstm {
                kernel,
                recurrent,
                bias,
            } => vec![kernel, recurrent, bias],
            LayerParams::Conv1d { kernel, bias } => vec![kernel, bias],
            LayerParams::None => vec![],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            LayerParams::Dense { weight, bias } => vec![weight, bias],
            LayerParams::Lstm {
                kernel,
                recurrent,
                bias,
            } => vec![kernel, recurrent, bias],
            LayerParams::Conv1d { kernel, bias } => vec![kernel, bias],
            LayerParams::None => vec![],
        }
    }

    fn zeros_like(&self) -> Self {
        let z = |t: &Tensor| Tensor::zeros(t.shape());
        match self {
            LayerParams::Dense { weight, bias } => LayerParams::Dense {
                weight: z(weight),
                bias: z(bias),
            },
            LayerParams::Lstm {
                kernel,
                recurrent,
                bias,
            } => LayerParams::Lstm {
                kernel: z(kernel),
                recurrent: z(recurrent),
                bias: z(bias),
            },
            LayerParams::Conv1d { kernel, bias } => LayerParams::Conv1d {
                kernel: z(kernel),
                bias: z(bias),
            },
            LayerParams::None => LayerParams::None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
}

impl NetworkParams {
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| l.tensors())
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(LayerParams::zeros_like).collect(),
        }
    }

    /// Expected tensor shapes for `spec`, in declaration order.
    pub fn expected_shapes(spec: &NetworkSpec) -> Vec<Vec<Vec<usize>>> {
        spec.layers
            .iter()
            .zip(spec.layer_inputs())
            .map(|(layer, input)| match *layer {
                LayerSpec::Dense { units, .. } | LayerSpec::TimeDistributedDense { units, .. } => {
                    vec![vec![input, units], vec![units]]
                }
                LayerSpec::Lstm { units, .. } => vec![
                    vec![input, 4 * units],
                    vec![units, 4 * units],
                    vec![4 * units],
                ],
                LayerSpec::Conv1d {
                    filters,
                    kernel_size,
                    ..
                } => vec![vec![kernel_size, input, filters], vec![filters]],
                LayerSpec::Dropout { .. } => vec![],
            })
            .collect()
    }

    /// Verifies that these parameters fit `spec` tensor by tensor.
    pub fn check_against(&self, spec: &NetworkSpec) -> Result<()> {
        let expected = Self::expected_shapes(spec);
        if expected.len() != self.layers.len() {
            return Err(NnError::Shape(format!(
                "spec has {} layers, parameters have {}",
                expected.len(),
                self.layers.len()
            )));
        }
        for (i, (shapes, layer)) in expected.iter().zip(&self.layers).enumerate() {
            let kind_ok = matches!(
                (&spec.layers[i], layer),
                (LayerSpec::Dense { .. }, LayerParams::Dense { .. })
                    | (LayerSpec::TimeDistributedDense { .. }, LayerParams::Dense { .. })
                    | (LayerSpec::Lstm { .. }, LayerParams::Lstm { .. })
                    | (LayerSpec::Conv1d { .. }, LayerParams::Conv1d { .. })
                    | (LayerSpec::Dropout { .. }, LayerParams::None)
            );
            let actual: Vec<Vec<usize>> = layer.tensors().iter().map(|t| t.shape().to_vec()).collect();
            if !kind_ok || &actual != shapes {
                return Err(NnError::Shape(format!(
                    "layer {i}: expected shapes {shapes:?}, found {actual:?}"
                )));
            }
        }
        Ok(())
    }
}

fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::from_vec(shape, data).expect("shape product matches")
}

/// Glorot-uniform kernels, zero biases, unit forget-gate bias for LSTMs.
pub fn init_weights(spec: &NetworkSpec, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = spec
        .layers
        .iter()
        .zip(spec.layer_inputs())
        .map(|(layer, input)| match *layer {
            LayerSpec::Dense { units, .. } | LayerSpec::TimeDistributedDense { units, .. } => {
                LayerParams::Dense {
                    weight: glorot(&[input, units], input, units, &mut rng),
                    bias: Tensor::zeros(&[units]),
                }
            }
            LayerSpec::Lstm { units, .. } => {
                let kernel = glorot(&[input, 4 * units], input, 4 * units, &mut rng);
                let recurrent = glorot(&[units, 4 * units], units, 4 * units, &mut rng);
                let mut bias = Tensor::zeros(&[4 * units]);
                bias.data_mut()[units..2 * units].fill(1.0);
                LayerParams::Lstm {
                    kernel,
                    recurrent,
                    bias,
                }
            }
            LayerSpec::Conv1d {
                filters,
                kernel_size,
                ..
            } => LayerParams::Conv1d {
                kernel: glorot(
                    &[kernel_size, input, filters],
                    kernel_size * input,
                    kernel_size * filters,
                    &mut rng,
                ),
                bias: Tensor::zeros(&[filters]),
            },
            LayerSpec::Dropout { .. } => LayerParams::None,
        })
        .collect();
    NetworkParams { layers }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;

    fn spec() -> NetworkSpec {
        NetworkSpec::new(
            3,
            vec![
                LayerSpec::Dropout { rate: 0.1 },
                LayerSpec::Lstm {
                    units: 4,
                    stateful: false,
                    return_sequences: true,
                },
                LayerSpec::Conv1d {
                    filters: 2,
                    kernel_size: 3,
                    activation: Activation::Relu,
                },
                LayerSpec::Dense {
                    units: 5,
                    activation: Activation::Linear,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let s = spec();
        let a = init_weights(&s, 7);
        let b = init_weights(&s, 7);
        let c = init_weights(&s, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.check_against(&s).unwrap();
        // 4·4·(3+4+1) + (3·4·2 + 2) + (2·5 + 5)
        assert_eq!(a.parameter_count(), 128 + 26 + 15);
        if let LayerParams::Lstm { bias, .. } = &a.layers[1] {
            assert_eq!(&bias.data()[4..8], &[1.0; 4]);
            assert!(bias.data()[..4].iter().all(|&v| v == 0.0));
        } else {
            panic!("expected lstm params");
        }
    }

    #[test]
    fn shape_check_rejects_other_spec() {
        let s = spec();
        let p = init_weights(&s, 1);
        let mut other = s.clone();
        other.input_width = 4;
        assert!(p.check_against(&other).is_err());
    }
}
