use rand::Rng;

use crate::tensor::Tensor;

/// Inverted dropout: during training each element is zeroed with
/// probability `rate` and survivors are scaled by `1 / (1 − rate)`;
/// inference is the identity.
pub fn dropout<R: Rng + ?Sized>(input: &Tensor, rate: f64, training: bool, rng: &mut R) -> Tensor {
    match mask(input.len(), rate, training, rng) {
        None => input.clone(),
        Some(m) => {
            let data = input.data().iter().zip(&m).map(|(x, k)| x * k).collect();
            Tensor::from_vec(input.shape(), data).expect("same shape")
        }
    }
}

/// Per-element multipliers, or `None` when the layer is the identity.
pub(crate) fn mask<R: Rng + ?Sized>(
    len: usize,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Option<Vec<f64>> {
    if !training || rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    )
}
