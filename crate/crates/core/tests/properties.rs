use myosynth::evaluation::{mse, mse_zero, z_score};
use myosynth::nn::Tensor;
use myosynth::signal::{
    apply_normalization, fit_normalization, forward_difference, invert_normalization, remove_outliers, rms_envelope,
    savgol_smooth, SampledSignal, TargetRange,
};
use proptest::collection::vec;
use proptest::prelude::*;

fn signal(col: Vec<f64>, rate: f64) -> SampledSignal {
    SampledSignal::from_columns_unnamed(&[col], rate).unwrap()
}

fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
    Tensor::from_vec(&[rows, cols], data).unwrap()
}

fn values(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    vec(-10.0f64..10.0, len)
}

proptest! {
    #[test]
    fn rms_is_non_negative_and_sign_invariant(xs in values(20..200), window in 2.0f64..40.0) {
        let a = rms_envelope(&signal(xs.clone(), 1000.0), window, 250.0).unwrap();
        let b = rms_envelope(&signal(xs.iter().map(|v| -v).collect(), 1000.0), window, 250.0).unwrap();
        prop_assert!(a.samples().iter().all(|v| *v >= 0.0));
        prop_assert_eq!(a.samples(), b.samples());
    }

    #[test]
    fn savgol_is_exact_on_low_degree_polynomials(
        coeffs in vec(-2.0f64..2.0, 4),
        degree in 0usize..=3,
        half in 2usize..12,
        extra in 0usize..20,
    ) {
        let window = 2 * half + 1;
        let n = window + extra;
        let p = |x: f64| (0..=degree).map(|k| coeffs[k] * x.powi(k as i32)).sum::<f64>();
        let xs: Vec<f64> = (0..n).map(|i| p(i as f64 / n as f64)).collect();
        let scale = xs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for order in degree.max(1)..=3 {
            if window <= order {
                continue;
            }
            let s = savgol_smooth(&signal(xs.clone(), 60.0), order, window).unwrap();
            for (got, want) in s.samples().iter().zip(&xs) {
                prop_assert!((got - want).abs() <= 1e-9 * scale, "order {order} window {window}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn difference_undoes_cumulative_sum(xs in values(2..100)) {
        let cumsum: Vec<f64> = xs.iter().scan(0.0, |acc, v| { *acc += v; Some(*acc) }).collect();
        let d = forward_difference(&signal(cumsum, 60.0)).unwrap();
        let d = d.samples();
        for t in 0..xs.len() - 1 {
            prop_assert!((d[t] - xs[t + 1]).abs() <= 1e-9);
        }
        prop_assert_eq!(d[xs.len() - 1], d[xs.len() - 2]);
    }

    #[test]
    fn normalization_lands_in_range_and_inverts(
        fit in vec(-50.0f64..50.0, 2..60),
        other in vec(-50.0f64..50.0, 1..60),
        symmetric in any::<bool>(),
    ) {
        let range = if symmetric { TargetRange::MinusOneOne } else { TargetRange::ZeroOne };
        let (lo, hi) = range.bounds();
        let s = signal(fit, 60.0);
        let params = fit_normalization(&[&s], range).unwrap();
        let n = apply_normalization(&s, &params).unwrap();
        prop_assert!(n.samples().iter().all(|v| (lo..=hi).contains(v)));
        if !params.is_degenerate(0) {
            let o = signal(other, 60.0);
            let back = invert_normalization(&apply_normalization(&o, &params).unwrap(), &params).unwrap();
            for (a, b) in back.samples().iter().zip(o.samples()) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn outlier_removal_keeps_clean_samples(
        xs in values(10..200),
        spikes in vec((0usize..200, 50.0f64..500.0), 0..4),
    ) {
        let mut xs = xs;
        for (i, h) in spikes {
            let i = i % xs.len();
            xs[i] += h;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let out = remove_outliers(&signal(xs.clone(), 60.0), 6.0).unwrap();
        for (a, b) in out.samples().iter().zip(&xs) {
            if (b - mean).abs() <= 6.0 * sd {
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn scaled_prediction_gives_closed_form_z(target in vec(0.01f64..1.0, 3 * 8), k in 0usize..=3) {
        let y = matrix(3, 8, target.clone());
        let pred = matrix(3, 8, target.iter().map(|v| v * k as f64).collect());
        let z = z_score(&pred, &y).unwrap();
        let want = 100.0 * (1.0 - ((k as f64) - 1.0).powi(2));
        for c in z.per_channel {
            prop_assert!((c.unwrap() - want).abs() <= 1e-9);
        }
    }

    #[test]
    fn z_is_invariant_under_joint_row_permutation(
        rows in vec((vec(0.0f64..1.0, 3), vec(0.0f64..1.0, 3)), 2..30),
        seed in any::<u64>(),
    ) {
        let n = rows.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let flat = |idx: &[usize], pick: fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| {
            matrix(n, 3, idx.iter().flat_map(|&i| pick(&rows[i]).clone()).collect())
        };
        let ident: Vec<usize> = (0..n).collect();
        let a = z_score(&flat(&ident, |r| &r.0), &flat(&ident, |r| &r.1)).unwrap();
        let b = z_score(&flat(&order, |r| &r.0), &flat(&order, |r| &r.1)).unwrap();
        for (x, y) in a.per_channel.iter().zip(&b.per_channel) {
            match (x, y) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs())),
                _ => prop_assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn z_peaks_at_unit_scale(target in vec(0.01f64..1.0, 10 * 2)) {
        let y = matrix(10, 2, target.clone());
        let z = |k: f64| z_score(&matrix(10, 2, target.iter().map(|v| v * k).collect()), &y).unwrap().average.unwrap();
        let ks: Vec<f64> = (0..=40).map(|i| i as f64 * 0.05).collect();
        let best = ks.iter().copied().max_by(|a, b| z(*a).total_cmp(&z(*b))).unwrap();
        prop_assert!((best - 1.0).abs() < 1e-12);
        for w in ks.windows(3) {
            prop_assert!(z(w[0]) + z(w[2]) < 2.0 * z(w[1]));
        }
    }

    #[test]
    fn mse_zero_equals_mse_against_zeros(target in vec(-1.0f64..1.0, 4 * 8)) {
        let y = matrix(4, 8, target);
        prop_assert_eq!(mse_zero(&y).unwrap(), mse(&Tensor::zeros(&[4, 8]), &y).unwrap());
    }
}

#[test]
fn z_identity_examples() {
    let y = matrix(2, 1, vec![0.5, 0.5]);
    assert_eq!(mse_zero(&y).unwrap(), vec![0.25]);
    assert_eq!(mse(&Tensor::filled(&[3, 1], 0.1), &Tensor::zeros(&[3, 1])).unwrap()[0], 0.1 * 0.1);
    assert_eq!(z_score(&y, &y).unwrap().average, Some(100.0));
    assert_eq!(z_score(&Tensor::zeros(&[2, 1]), &y).unwrap().average, Some(0.0));
    let zero_channel = matrix(2, 2, vec![0.5, 0.0, 0.5, 0.0]);
    let z = z_score(&zero_channel, &zero_channel).unwrap();
    assert_eq!(z.unscorable, vec![1]);
    assert_eq!(z.average, Some(100.0));
}
