use nalgebra::{DMatrix, DVector};

use super::spline::NaturalCubicSpline;
use super::SampledSignal;
use crate::error::{Error, Result};

/// Subtracts, per channel, the mean over the samples selected by `rest_mask`.
pub fn baseline_correct(signal: &SampledSignal, rest_mask: &[bool]) -> Result<SampledSignal> {
    if rest_mask.len() != signal.len() {
        return Err(Error::Parameter(format!(
            "rest mask has {} entries for {} samples",
            rest_mask.len(),
            signal.len()
        )));
    }
    let count = rest_mask.iter().filter(|&&r| r).count();
    if count == 0 {
        return Err(Error::NoRestBaseline);
    }
    signal.map_columns(|_, col| {
        let mean = col
            .iter()
            .zip(rest_mask)
            .filter(|(_, &r)| r)
            .map(|(v, _)| v)
            .sum::<f64>()
            / count as f64;
        Ok(col.iter().map(|v| v - mean).collect())
    })
}

/// Number of clean samples used on each side of an outlier run.
const SPLINE_ANCHORS: usize = 2;

fn outlier_flags(col: &[f64], k_sigma: f64) -> Vec<bool> {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    col.iter().map(|v| (v - mean).abs() > k_sigma * sd).collect()
}

/// Replaces samples further than `k_sigma` standard deviations from the
/// channel mean by a cubic spline through the nearest clean samples on each
/// side of the run. Clean samples are never modified.
pub fn remove_outliers(signal: &SampledSignal, k_sigma: f64) -> Result<SampledSignal> {
    if signal.len() < 5 {
        return Err(Error::Parameter(format!(
            "outlier removal needs at least 5 samples, got {}",
            signal.len()
        )));
    }
    if !(k_sigma > 0.0) {
        return Err(Error::Parameter("k_sigma must be positive".into()));
    }
    signal.map_columns(|c, col| {
        let flags = outlier_flags(col, k_sigma);
        let flagged = flags.iter().filter(|&&f| f).count();
        if 2 * flagged > col.len() {
            return Err(Error::ChannelUnusable(format!(
                "channel {} has {flagged} of {} samples beyond {k_sigma}σ",
                signal.channel_names()[c],
                col.len()
            )));
        }
        let mut out = col.to_vec();
        let mut t = 0;
        while t < col.len() {
            if !flags[t] {
                t += 1;
                continue;
            }
            let start = t;
            while t < col.len() && flags[t] {
                t += 1;
            }
            let end = t; // exclusive
            let mut knots: Vec<usize> = (0..start).rev().filter(|&i| !flags[i]).take(SPLINE_ANCHORS).collect();
            knots.reverse();
            knots.extend((end..col.len()).filter(|&i| !flags[i]).take(SPLINE_ANCHORS));
            let xs: Vec<f64> = knots.iter().map(|&i| i as f64).collect();
            let ys: Vec<f64> = knots.iter().map(|&i| col[i]).collect();
            let spline = NaturalCubicSpline::new(&xs, &ys)?;
            for (i, v) in out.iter_mut().enumerate().take(end).skip(start) {
                *v = spline.eval(i as f64);
            }
        }
        Ok(out)
    })
}

/// Windowed root mean square, resampled onto `out_rate_hz`.
///
/// Output sample `j` sits at `t_j = j / out_rate_hz` and aggregates every
/// input sample whose timestamp lies in `[t_j − w/2, t_j + w/2]`, truncated
/// at the signal edges.
pub fn rms_envelope(signal: &SampledSignal, window_ms: f64, out_rate_hz: f64) -> Result<SampledSignal> {
    let rate = signal.rate_hz();
    if signal.is_empty() {
        return Err(Error::Parameter("empty signal".into()));
    }
    if !(window_ms * rate / 1000.0 >= 1.0) {
        return Err(Error::Parameter(format!(
            "window of {window_ms} ms covers less than one sample at {rate} Hz"
        )));
    }
    if !(out_rate_hz > 0.0 && out_rate_hz <= rate) {
        return Err(Error::Parameter(format!(
            "output rate {out_rate_hz} Hz must lie in (0, {rate}]"
        )));
    }
    let n = signal.len();
    let half = window_ms / 2000.0;
    let last = (n - 1) as f64 / rate;
    let n_out = (last * out_rate_hz + 1e-9).floor() as usize + 1;
    let ts = |i: usize| i as f64 / rate;

    let mut bounds = Vec::with_capacity(n_out);
    for j in 0..n_out {
        let centre = j as f64 / out_rate_hz;
        let (a, b) = (centre - half, centre + half);
        let mut lo = ((a * rate).ceil().max(0.0) as usize).min(n);
        while lo > 0 && ts(lo - 1) >= a {
            lo -= 1;
        }
        while lo < n && ts(lo) < a {
            lo += 1;
        }
        let mut hi = ((b * rate).floor().max(0.0) as usize).min(n - 1);
        while hi + 1 < n && ts(hi + 1) <= b {
            hi += 1;
        }
        while hi > 0 && ts(hi) > b {
            hi -= 1;
        }
        if lo > hi || ts(hi) > b {
            return Err(Error::Parameter(format!("empty RMS window at output sample {j}")));
        }
        bounds.push((lo, hi));
    }

    let cols: Vec<Vec<f64>> = signal
        .columns()
        .iter()
        .map(|col| {
            bounds
                .iter()
                .map(|&(lo, hi)| {
                    let sq: f64 = col[lo..=hi].iter().map(|v| v * v).sum();
                    (sq / (hi - lo + 1) as f64).sqrt()
                })
                .collect()
        })
        .collect();
    SampledSignal::from_columns(&cols, out_rate_hz, signal.channel_names().to_vec())
}

/// Weights that evaluate, at window position `eval_pos`, the least-squares
/// polynomial of degree `poly_order` fitted to a window of `window_len`
/// samples.
pub fn savgol_coefficients(window_len: usize, poly_order: usize, eval_pos: usize) -> Result<Vec<f64>> {
    if window_len <= poly_order || eval_pos >= window_len {
        return Err(Error::Parameter(format!(
            "window {window_len}, order {poly_order}, position {eval_pos}"
        )));
    }
    let half = ((window_len - 1) as f64 / 2.0).max(1.0);
    let centre = (window_len - 1) as f64 / 2.0;
    let u = |i: usize| (i as f64 - centre) / half;
    let cols = poly_order + 1;
    let v = DMatrix::from_fn(window_len, cols, |i, k| u(i).powi(k as i32));
    let gram = v.transpose() * &v;
    let phi = DVector::from_fn(cols, |k, _| u(eval_pos).powi(k as i32));
    let solved = gram
        .lu()
        .solve(&phi)
        .ok_or_else(|| Error::Parameter("singular Savitzky-Golay system".into()))?;
    Ok((v * solved).iter().copied().collect())
}

/// Savitzky-Golay smoothing. Interior samples use the centred window; the
/// first and last `window_len / 2` samples evaluate the polynomial fitted
/// over the full-length window flush against the signal edge.
pub fn savgol_smooth(signal: &SampledSignal, poly_order: usize, window_len: usize) -> Result<SampledSignal> {
    let n = signal.len();
    if window_len % 2 == 0 || window_len <= poly_order || window_len > n {
        return Err(Error::Parameter(format!(
            "Savitzky-Golay needs an odd window > order {poly_order} and ≤ length {n}, got {window_len}"
        )));
    }
    let half = window_len / 2;
    let weights: Vec<Vec<f64>> = (0..window_len)
        .map(|p| savgol_coefficients(window_len, poly_order, p))
        .collect::<Result<_>>()?;
    signal.map_columns(|_, col| {
        Ok((0..n)
            .map(|i| {
                let (start, pos) = if i < half {
                    (0, i)
                } else if i + half >= n {
                    (n - window_len, i + window_len - n)
                } else {
                    (i - half, half)
                };
                weights[pos]
                    .iter()
                    .zip(&col[start..start + window_len])
                    .map(|(w, x)| w * x)
                    .sum()
            })
            .collect())
    })
}

/// `Δf(n) = f(n+1) − f(n)`; the last value is repeated so the length is kept.
pub fn forward_difference(signal: &SampledSignal) -> Result<SampledSignal> {
    if signal.len() < 2 {
        return Err(Error::Parameter(format!(
            "forward difference needs at least 2 samples, got {}",
            signal.len()
        )));
    }
    signal.map_columns(|_, col| {
        let mut d: Vec<f64> = col.windows(2).map(|w| w[1] - w[0]).collect();
        d.push(*d.last().expect("length ≥ 2"));
        Ok(d)
    })
}
