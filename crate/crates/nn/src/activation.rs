use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Activation applied after an affine or convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// Elementwise `max(x, 0)`.
pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn relu_definition_cases() {
        let t = Tensor::from_vec(&[3], vec![0.0, -3.2, 3.2]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 0.0, 3.2]);
    }

    proptest! {
        #[test]
        fn relu_is_idempotent(xs in proptest::collection::vec(-1e3f64..1e3, 1..64)) {
            let t = Tensor::from_vec(&[xs.len()], xs).unwrap();
            let once = relu(&t);
            prop_assert_eq!(relu(&once), once);
        }
    }
}
