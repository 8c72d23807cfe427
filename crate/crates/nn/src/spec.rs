//! Layer chain descriptions. A [`NetworkSpec`] plus [`crate::NetworkParams`]
//! fully determine a network.

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{NnError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Affine map applied to every row of the last axis.
    Dense { units: usize, activation: Activation },
    /// Same computation as `Dense`; kept distinct to mark per-timestep heads.
    TimeDistributedDense { units: usize, activation: Activation },
    Lstm {
        units: usize,
        stateful: bool,
        return_sequences: bool,
    },
    /// Same-padded temporal convolution.
    Conv1d {
        filters: usize,
        kernel_size: usize,
        activation: Activation,
    },
    Dropout { rate: f64 },
}

impl LayerSpec {
    pub fn output_width(&self, input_width: usize) -> usize {
        match *self {
            LayerSpec::Dense { units, .. }
            | LayerSpec::TimeDistributedDense { units, .. }
            | LayerSpec::Lstm { units, .. } => units,
            LayerSpec::Conv1d { filters, .. } => filters,
            LayerSpec::Dropout { .. } => input_width,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(NnError::Config(msg.to_string()));
        match *self {
            LayerSpec::Dense { units, .. }
            | LayerSpec::TimeDistributedDense { units, .. }
            | LayerSpec::Lstm { units, .. }
                if units == 0 =>
            {
                bad("layer with zero units")
            }
            LayerSpec::Conv1d {
                filters,
                kernel_size,
                ..
            } if filters == 0 || kernel_size == 0 => bad("conv1d needs filters ≥ 1 and kernel ≥ 1"),
            LayerSpec::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                bad("dropout rate must lie in [0, 1)")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_width: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_width == 0 {
            return Err(NnError::Config("input width must be positive".into()));
        }
        for layer in &layers {
            layer.validate()?;
        }
        Ok(Self {
            input_width,
            layers,
        })
    }

    /// Input width seen by each layer, in order.
    pub fn layer_inputs(&self) -> Vec<usize> {
        let mut width = self.input_width;
        self.layers
            .iter()
            .map(|l| {
                let w = width;
                width = l.output_width(width);
                w
            })
            .collect()
    }

    pub fn output_width(&self) -> usize {
        self.layers
            .iter()
            .fold(self.input_width, |w, l| l.output_width(w))
    }

    /// True when the output keeps one row per input timestep.
    pub fn is_sequence_output(&self) -> bool {
        !self.layers.iter().any(|l| {
            matches!(
                l,
                LayerSpec::Lstm {
                    return_sequences: false,
                    ..
                }
            )
        })
    }

    pub fn has_stateful_layers(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, LayerSpec::Lstm { stateful: true, .. }))
    }

    pub fn largest_kernel(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Conv1d { kernel_size, .. } => Some(*kernel_size),
                _ => None,
            })
            .max()
            .unwrap_or(1)
    }
}
