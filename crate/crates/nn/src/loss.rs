use crate::error::{NnError, Result};
use crate::tensor::Tensor;

/// Mean squared error over all elements and its gradient `2 (pred − target) / n`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(NnError::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let (loss, grad) = mse_slices(pred.data(), target.data());
    Ok((loss, Tensor::from_vec(pred.shape(), grad)?))
}

pub(crate) fn mse_slices(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len().max(1) as f64;
    let mut sum = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            sum += d * d;
            2.0 * d / n
        })
        .collect();
    (sum / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_when_equal() {
        let t = Tensor::from_vec(&[2, 2], vec![0.3, -1.0, 2.0, 0.0]).unwrap();
        assert_eq!(mse_loss(&t, &t).unwrap().0, 0.0);
    }

    #[test]
    fn hand_value() {
        let p = Tensor::zeros(&[2]);
        let t = Tensor::filled(&[2], 1.0);
        let (loss, grad) = mse_loss(&p, &t).unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(grad.data(), &[-1.0, -1.0]);
    }

    #[test]
    fn shape_mismatch() {
        assert!(mse_loss(&Tensor::zeros(&[2]), &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let pred: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let target: Vec<f64> = (0..12).map(|i| (i as f64 * 0.3).cos()).collect();
        let (_, grad) = mse_slices(&pred, &target);
        let h = 1e-5;
        for i in 0..pred.len() {
            let mut up = pred.clone();
            up[i] += h;
            let mut dn = pred.clone();
            dn[i] -= h;
            let fd = (mse_slices(&up, &target).0 - mse_slices(&dn, &target).0) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-12);
            assert!(rel < 1e-6, "element {i}: fd {fd} analytic {}", grad[i]);
        }
    }
}
