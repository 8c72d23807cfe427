//! Signal types and the preprocessing pipeline that turns recordings into
//! aligned, normalized model inputs and EMG targets.

mod features;
mod filters;
mod normalize;
mod spline;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use features::{
    build_features, motion_streams, process_emg, process_trial, rest_mask, InputConfig,
    PipelineConfig, ProcessedTrial, MOTION_STREAM_NAMES,
};
pub use filters::{
    baseline_correct, forward_difference, remove_outliers, rms_envelope, savgol_coefficients,
    savgol_smooth,
};
pub use normalize::{apply_normalization, fit_normalization, invert_normalization, NormalizationParams, TargetRange};
pub use spline::NaturalCubicSpline;

pub const EMG_CHANNELS: [&str; 8] = [
    "deltoid_posterior",
    "deltoid_lateral",
    "deltoid_anterior",
    "biceps_short_head",
    "triceps_lateral_head",
    "extensor_carpi_radialis",
    "pronator_teres",
    "flexor_carpi_ulnaris",
];

pub const JOINT_CHANNELS: [&str; 6] = [
    "shoulder_abduction",
    "shoulder_flexion",
    "elbow_flexion",
    "elbow_rotation",
    "wrist_abduction",
    "wrist_flexion",
];

pub const EEF_CHANNELS: [&str; 7] = ["pos_x", "pos_y", "pos_z", "quat_w", "quat_x", "quat_y", "quat_z"];

/// Multichannel signal sampled at a fixed rate, stored row-major
/// `[time × channels]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    samples: Vec<f64>,
    channels: usize,
    rate_hz: f64,
    channel_names: Vec<String>,
}

impl SampledSignal {
    pub fn new(samples: Vec<f64>, channels: usize, rate_hz: f64, channel_names: Vec<String>) -> Result<Self> {
        if !(rate_hz > 0.0) || !rate_hz.is_finite() {
            return Err(Error::Parameter(format!("sample rate must be positive, got {rate_hz}")));
        }
        if channels == 0 || samples.len() % channels != 0 {
            return Err(Error::Data(format!(
                "{} values do not form rows of {channels} channels",
                samples.len()
            )));
        }
        if channel_names.len() != channels {
            return Err(Error::Data(format!(
                "{} channel names for {channels} channels",
                channel_names.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite sample at flat index {i}")));
        }
        Ok(Self {
            samples,
            channels,
            rate_hz,
            channel_names,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], rate_hz: f64, channel_names: Vec<String>) -> Result<Self> {
        let channels = channel_names.len();
        if let Some(r) = rows.iter().position(|r| r.len() != channels) {
            return Err(Error::Data(format!("row {r} does not have {channels} channels")));
        }
        Self::new(rows.concat(), channels, rate_hz, channel_names)
    }

    pub fn from_columns(columns: &[Vec<f64>], rate_hz: f64, channel_names: Vec<String>) -> Result<Self> {
        let len = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != len) {
            return Err(Error::Data("columns differ in length".into()));
        }
        let channels = columns.len();
        let mut samples = vec![0.0; len * channels];
        for (c, col) in columns.iter().enumerate() {
            for (t, v) in col.iter().enumerate() {
                samples[t * channels + c] = *v;
            }
        }
        Self::new(samples, channels, rate_hz, channel_names)
    }

    /// Convenience constructor with generated channel names `ch0, ch1, …`.
    pub fn from_columns_unnamed(columns: &[Vec<f64>], rate_hz: f64) -> Result<Self> {
        let names = (0..columns.len()).map(|i| format!("ch{i}")).collect();
        Self::from_columns(columns, rate_hz, names)
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.samples[t * self.channels + c]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.samples[t * self.channels..(t + 1) * self.channels]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.samples.iter().skip(c).step_by(self.channels).copied().collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.channels).map(|c| self.column(c)).collect()
    }

    /// Applies `f` to every channel independently, keeping names and rate.
    pub fn map_columns(&self, mut f: impl FnMut(usize, &[f64]) -> Result<Vec<f64>>) -> Result<Self> {
        let cols = self
            .columns()
            .iter()
            .enumerate()
            .map(|(c, col)| f(c, col))
            .collect::<Result<Vec<_>>>()?;
        Self::from_columns(&cols, self.rate_hz, self.channel_names.clone())
    }

    pub fn truncate(&mut self, len: usize) {
        self.samples.truncate(len * self.channels);
    }

    /// Selects channels by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let cols: Vec<Vec<f64>> = idx.iter().map(|&c| self.column(c)).collect();
        let names = idx.iter().map(|&c| self.channel_names[c].clone()).collect();
        Self::from_columns(&cols, self.rate_hz, names)
    }

    /// Horizontal concatenation of equally long signals at the same rate.
    pub fn concat_channels(parts: &[&SampledSignal]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Data("nothing to concatenate".into()))?;
        let mut cols = Vec::new();
        let mut names = Vec::new();
        for p in parts {
            if p.len() != first.len() || p.rate_hz != first.rate_hz {
                return Err(Error::Data("signals differ in length or rate".into()));
            }
            cols.extend(p.columns());
            names.extend(p.channel_names.iter().cloned());
        }
        Self::from_columns(&cols, first.rate_hz, names)
    }

    pub fn timestamp(&self, t: usize) -> f64 {
        t as f64 / self.rate_hz
    }
}

/// How the EMG stream of a recording was sampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmgKind {
    /// Raw zero-mean surface EMG (nominally 2222 Hz).
    #[default]
    Raw,
    /// Already an activation envelope at the motion rate.
    Envelope,
}

/// One repetition of one motion by one subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecording {
    pub subject_id: String,
    pub motion_id: String,
    pub repetition: u32,
    pub emg: SampledSignal,
    pub emg_kind: EmgKind,
    /// Six joint angles in degrees at 60 Hz.
    pub joints: SampledSignal,
    /// Hand position (3) and orientation quaternion (4) at 60 Hz.
    pub eef: SampledSignal,
    /// Rest interval `[start, end)` in seconds, when the protocol marks one.
    pub rest_window: Option<(f64, f64)>,
}

impl TrialRecording {
    pub fn trial_id(&self) -> String {
        trial_id(&self.subject_id, &self.motion_id, self.repetition)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |s: &SampledSignal, n: usize, what: &str| {
            if s.channels() != n {
                Err(Error::Data(format!("{what} must have {n} channels, found {}", s.channels())))
            } else {
                Ok(())
            }
        };
        check(&self.emg, 8, "emg")?;
        check(&self.joints, 6, "joints")?;
        check(&self.eef, 7, "eef")?;
        if !(1..=18).contains(&self.repetition) {
            return Err(Error::Data(format!("repetition {} outside 1..18", self.repetition)));
        }
        if self.joints.len() != self.eef.len() || self.joints.rate_hz() != self.eef.rate_hz() {
            return Err(Error::Data("joint and end-effector streams are not aligned".into()));
        }
        Ok(())
    }
}

pub fn trial_id(subject: &str, motion: &str, repetition: u32) -> String {
    format!("{subject}_{motion}_R{repetition:02}")
}
