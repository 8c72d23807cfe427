use serde::{Deserialize, Serialize};

use super::SampledSignal;
use crate::error::{Error, Result};

/// Channels narrower than this are treated as constant.
const DEGENERATE_SPAN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRange {
    ZeroOne,
    MinusOneOne,
}

impl TargetRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            TargetRange::ZeroOne => (0.0, 1.0),
            TargetRange::MinusOneOne => (-1.0, 1.0),
        }
    }
}

/// Per-channel min/max of one subject's data and the range it maps onto.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub channel_names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub target_range: TargetRange,
}

impl NormalizationParams {
    pub fn channels(&self) -> usize {
        self.min.len()
    }

    pub fn is_degenerate(&self, c: usize) -> bool {
        self.max[c] - self.min[c] < DEGENERATE_SPAN
    }

    /// Parameters restricted to the given channel indices.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            channel_names: idx.iter().map(|&i| self.channel_names[i].clone()).collect(),
            min: idx.iter().map(|&i| self.min[i]).collect(),
            max: idx.iter().map(|&i| self.max[i]).collect(),
            target_range: self.target_range,
        }
    }

    fn check(&self, signal: &SampledSignal) -> Result<()> {
        if signal.channels() != self.channels() {
            return Err(Error::Data(format!(
                "normalization has {} channels, signal has {}",
                self.channels(),
                signal.channels()
            )));
        }
        Ok(())
    }
}

pub fn fit_normalization(signals: &[&SampledSignal], target_range: TargetRange) -> Result<NormalizationParams> {
    let first = signals
        .first()
        .ok_or_else(|| Error::Data("no signals to fit normalization on".into()))?;
    let channels = first.channels();
    let mut min = vec![f64::INFINITY; channels];
    let mut max = vec![f64::NEG_INFINITY; channels];
    for s in signals {
        if s.channels() != channels {
            return Err(Error::Data("signals differ in channel count".into()));
        }
        for t in 0..s.len() {
            for (c, v) in s.row(t).iter().enumerate() {
                min[c] = min[c].min(*v);
                max[c] = max[c].max(*v);
            }
        }
    }
    if min.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("cannot fit normalization on empty signals".into()));
    }
    Ok(NormalizationParams {
        channel_names: first.channel_names().to_vec(),
        min,
        max,
        target_range,
    })
}

pub fn apply_normalization(signal: &SampledSignal, params: &NormalizationParams) -> Result<SampledSignal> {
    params.check(signal)?;
    let (lo, hi) = params.target_range.bounds();
    signal.map_columns(|c, col| {
        if params.is_degenerate(c) {
            return Ok(vec![(lo + hi) / 2.0; col.len()]);
        }
        let scale = (hi - lo) / (params.max[c] - params.min[c]);
        Ok(col.iter().map(|v| lo + (v - params.min[c]) * scale).collect())
    })
}

/// Inverse of [`apply_normalization`]; degenerate channels return their
/// fitted constant.
pub fn invert_normalization(signal: &SampledSignal, params: &NormalizationParams) -> Result<SampledSignal> {
    params.check(signal)?;
    let (lo, hi) = params.target_range.bounds();
    signal.map_columns(|c, col| {
        if params.is_degenerate(c) {
            return Ok(vec![(params.min[c] + params.max[c]) / 2.0; col.len()]);
        }
        let scale = (params.max[c] - params.min[c]) / (hi - lo);
        Ok(col.iter().map(|v| params.min[c] + (v - lo) * scale).collect())
    })
}
