use serde::{Deserialize, Serialize};

use super::filters::{baseline_correct, forward_difference, remove_outliers, rms_envelope, savgol_smooth};
use super::normalize::{apply_normalization, NormalizationParams};
use super::{EmgKind, SampledSignal, TrialRecording, EEF_CHANNELS, JOINT_CHANNELS};
use crate::error::{Error, Result};

/// Which motion channels feed the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputConfig {
    /// Angles ∥ velocities ∥ accelerations.
    #[default]
    All,
    Ang,
    Vel,
    Acc,
    /// Hand position ∥ orientation quaternion.
    Eef,
    /// Eef ∥ its first difference ∥ its second difference.
    EefPlus,
}

impl InputConfig {
    pub const VARIANTS: [InputConfig; 6] = [
        InputConfig::All,
        InputConfig::Ang,
        InputConfig::Vel,
        InputConfig::Acc,
        InputConfig::Eef,
        InputConfig::EefPlus,
    ];

    pub fn feature_width(self) -> usize {
        self.stream_indices().len()
    }

    /// Columns of [`motion_streams`] used by this variant, in output order.
    pub fn stream_indices(self) -> Vec<usize> {
        match self {
            InputConfig::All => (0..18).collect(),
            InputConfig::Ang => (0..6).collect(),
            InputConfig::Vel => (6..12).collect(),
            InputConfig::Acc => (12..18).collect(),
            InputConfig::Eef => (18..25).collect(),
            InputConfig::EefPlus => (18..39).collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InputConfig::All => "all",
            InputConfig::Ang => "ang",
            InputConfig::Vel => "vel",
            InputConfig::Acc => "acc",
            InputConfig::Eef => "eef",
            InputConfig::EefPlus => "eefplus",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::VARIANTS
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("eef_plus") && *v == InputConfig::EefPlus))
            .ok_or_else(|| Error::Config(format!("unknown input config {s:?}")))
    }
}

/// Names of the 39 derived motion streams, in column order.
pub static MOTION_STREAM_NAMES: std::sync::LazyLock<Vec<String>> = std::sync::LazyLock::new(|| {
    let mut names = Vec::with_capacity(39);
    for prefix in ["ang", "vel", "acc"] {
        names.extend(JOINT_CHANNELS.iter().map(|j| format!("{prefix}_{j}")));
    }
    for prefix in ["eef", "d_eef", "dd_eef"] {
        names.extend(EEF_CHANNELS.iter().map(|e| format!("{prefix}_{e}")));
    }
    names
});

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub savgol_window: usize,
    pub savgol_order: usize,
    pub rms_window_ms: f64,
    pub outlier_k_sigma: f64,
    pub motion_rate_hz: f64,
    /// Rest assumed at the start of a trial when no rest window is marked.
    pub default_rest_s: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            savgol_window: 31,
            savgol_order: 3,
            rms_window_ms: 200.0,
            outlier_k_sigma: 6.0,
            motion_rate_hz: 60.0,
            default_rest_s: 1.0,
        }
    }
}

/// A trial after filtering but before normalization: 39 motion streams and
/// the 8-channel EMG envelope, aligned at the motion rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessedTrial {
    pub subject_id: String,
    pub motion_id: String,
    pub repetition: u32,
    pub motion: SampledSignal,
    pub emg: SampledSignal,
}

impl ProcessedTrial {
    pub fn trial_id(&self) -> String {
        super::trial_id(&self.subject_id, &self.motion_id, self.repetition)
    }

    pub fn len(&self) -> usize {
        self.motion.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motion.is_empty()
    }
}

/// Samples inside the marked rest window, or inside the first
/// `default_rest_s` seconds when none is marked.
pub fn rest_mask(signal: &SampledSignal, rest_window: Option<(f64, f64)>, default_rest_s: f64) -> Vec<bool> {
    let (a, b) = rest_window.unwrap_or((0.0, default_rest_s));
    (0..signal.len())
        .map(|t| {
            let ts = signal.timestamp(t);
            ts >= a && ts < b
        })
        .collect()
}

/// Baseline → outliers → RMS envelope at the motion rate. Envelope-kind
/// input skips the RMS stage.
pub fn process_emg(trial: &TrialRecording, cfg: &PipelineConfig) -> Result<SampledSignal> {
    let mask = rest_mask(&trial.emg, trial.rest_window, cfg.default_rest_s);
    let corrected = baseline_correct(&trial.emg, &mask)?;
    let cleaned = remove_outliers(&corrected, cfg.outlier_k_sigma)?;
    match trial.emg_kind {
        EmgKind::Raw => rms_envelope(&cleaned, cfg.rms_window_ms, cfg.motion_rate_hz),
        EmgKind::Envelope => Ok(cleaned),
    }
}

/// Smoothed angles and end-effector pose with their first and second
/// forward differences, 39 columns named by [`MOTION_STREAM_NAMES`].
pub fn motion_streams(joints: &SampledSignal, eef: &SampledSignal, cfg: &PipelineConfig) -> Result<SampledSignal> {
    if joints.channels() != JOINT_CHANNELS.len() || eef.channels() != EEF_CHANNELS.len() {
        return Err(Error::Data("motion streams need 6 joint and 7 end-effector channels".into()));
    }
    if joints.len() != eef.len() {
        return Err(Error::Data("joint and end-effector streams differ in length".into()));
    }
    let ang = savgol_smooth(joints, cfg.savgol_order, cfg.savgol_window)?;
    let vel = forward_difference(&ang)?;
    let acc = forward_difference(&vel)?;
    let pose = savgol_smooth(eef, cfg.savgol_order, cfg.savgol_window)?;
    let d_pose = forward_difference(&pose)?;
    let dd_pose = forward_difference(&d_pose)?;
    let all = SampledSignal::concat_channels(&[&ang, &vel, &acc, &pose, &d_pose, &dd_pose])?;
    SampledSignal::new(all.samples().to_vec(), 39, all.rate_hz(), MOTION_STREAM_NAMES.clone())
}

/// Full per-trial pipeline; every stream is cut to the shortest aligned
/// length.
pub fn process_trial(trial: &TrialRecording, cfg: &PipelineConfig) -> Result<ProcessedTrial> {
    trial.validate()?;
    if (trial.joints.rate_hz() - cfg.motion_rate_hz).abs() > 1e-9 {
        return Err(Error::Data(format!(
            "motion stream sampled at {} Hz, pipeline expects {}",
            trial.joints.rate_hz(),
            cfg.motion_rate_hz
        )));
    }
    let mut emg = process_emg(trial, cfg)?;
    if (emg.rate_hz() - cfg.motion_rate_hz).abs() > 1e-9 {
        return Err(Error::Data(format!(
            "EMG envelope at {} Hz does not match the motion rate",
            emg.rate_hz()
        )));
    }
    let mut motion = motion_streams(&trial.joints, &trial.eef, cfg)?;
    let len = emg.len().min(motion.len());
    emg.truncate(len);
    motion.truncate(len);
    Ok(ProcessedTrial {
        subject_id: trial.subject_id.clone(),
        motion_id: trial.motion_id.clone(),
        repetition: trial.repetition,
        motion,
        emg,
    })
}

/// Selects the columns of `config` from 39-column motion streams and maps
/// them to [−1, 1] with `norm` (fitted on the same 39 streams).
pub fn build_features(streams: &SampledSignal, config: InputConfig, norm: &NormalizationParams) -> Result<SampledSignal> {
    if streams.channels() != MOTION_STREAM_NAMES.len() || streams.channel_names() != MOTION_STREAM_NAMES.as_slice() {
        return Err(Error::Data(format!(
            "expected the {} derived motion streams, got {} channels",
            MOTION_STREAM_NAMES.len(),
            streams.channels()
        )));
    }
    if norm.channel_names != *MOTION_STREAM_NAMES {
        return Err(Error::Data("normalization was not fitted on motion streams".into()));
    }
    let idx = config.stream_indices();
    apply_normalization(&streams.select(&idx)?, &norm.select(&idx))
}
