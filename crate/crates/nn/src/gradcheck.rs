//! Central finite-difference check of [`Network::loss_and_gradients`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::loss::mse_loss;
use crate::network::{Mode, Network};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    pub checked: usize,
}

fn loss_at(net: &Network, input: &Tensor, target: &Tensor) -> Result<f64> {
    let mut n = net.clone();
    n.reset_states();
    Ok(mse_loss(&n.predict(input)?, target)?.0)
}

/// Compares the analytic gradient of the MSE loss with respect to every
/// parameter and input element against central differences with step `h`.
/// States are reset before every evaluation; dropout is inactive.
pub fn check_gradients(net: &Network, input: &Tensor, target: &Tensor, h: f64, floor: f64) -> Result<GradCheck> {
    let mut base = net.clone();
    base.reset_states();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (_, grads) = base.loss_and_gradients(input, target, Mode::Infer, &mut rng)?;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut record = |analytic: f64, numeric: f64| {
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        worst = worst.max(rel);
        checked += 1;
    };

    let params = net.params().clone();
    let analytic: Vec<f64> = grads.params.tensors().flat_map(|t| t.data().to_vec()).collect();
    let mut k = 0;
    let mut probe = net.clone();
    for (ti, t) in params.tensors().enumerate() {
        for i in 0..t.len() {
            let mut shifted = |delta: f64| -> Result<f64> {
                let mut p = params.clone();
                p.tensors_mut().nth(ti).expect("tensor").data_mut()[i] += delta;
                probe.set_params(p)?;
                loss_at(&probe, input, target)
            };
            let numeric = (shifted(h)? - shifted(-h)?) / (2.0 * h);
            record(analytic[k], numeric);
            k += 1;
        }
    }

    for i in 0..input.len() {
        let shifted = |delta: f64| -> Result<f64> {
            let mut x = input.clone();
            x.data_mut()[i] += delta;
            loss_at(net, &x, target)
        };
        let numeric = (shifted(h)? - shifted(-h)?) / (2.0 * h);
        record(grads.input.data()[i], numeric);
    }
    Ok(GradCheck {
        max_rel_error: worst,
        checked,
    })
}
