//! On-disk trial format, per-subject normalization and assembly of model
//! sequences.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use myosynth_nn::Tensor;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Sequence;
use crate::regimes::{rep_roles, Role};
use crate::signal::{
    apply_normalization, build_features, fit_normalization, process_trial, EmgKind, InputConfig, NormalizationParams,
    PipelineConfig, ProcessedTrial, SampledSignal, TargetRange, TrialRecording,
};
use crate::synthetic::DatasetManifest;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Sidecar metadata of one raw trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub subject_id: String,
    pub motion_id: String,
    pub repetition: u32,
    pub emg_rate_hz: f64,
    pub motion_rate_hz: f64,
    #[serde(default)]
    pub emg_kind: EmgKind,
    #[serde(default)]
    pub rest_window: Option<(f64, f64)>,
}

/// Writes `time,<channels…>` rows. Values use the shortest representation
/// that parses back to the same double.
pub fn write_signal_csv(path: &Path, signal: &SampledSignal) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["time".to_string()];
    header.extend(signal.channel_names().iter().cloned());
    w.write_record(&header)?;
    for t in 0..signal.len() {
        let mut rec = vec![signal.timestamp(t).to_string()];
        rec.extend(signal.row(t).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_signal_csv(path: &Path, rate_hz: f64) -> Result<SampledSignal> {
    if !path.exists() {
        return Err(Error::Missing(format!("signal file {}", path.display())));
    }
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Data(format!("{}: needs a time column and at least one channel", path.display())));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut samples = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Data(format!("{}: row {} has {} fields", path.display(), i + 1, rec.len())));
        }
        for field in rec.iter().skip(1) {
            samples.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Data(format!("{}: row {}: {e}", path.display(), i + 1)))?,
            );
        }
    }
    SampledSignal::new(samples, names.len(), rate_hz, names)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_string_pretty(value)?)?;
    fs::rename(tmp, path)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::Missing(format!("{}", path.display())));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn trial_path(dir: &Path, id: &str, suffix: &str) -> PathBuf {
    dir.join("trials").join(format!("{id}_{suffix}"))
}

pub fn write_trial(dir: &Path, trial: &TrialRecording) -> Result<()> {
    fs::create_dir_all(dir.join("trials"))?;
    let id = trial.trial_id();
    write_signal_csv(&trial_path(dir, &id, "emg.csv"), &trial.emg)?;
    write_signal_csv(&trial_path(dir, &id, "joints.csv"), &trial.joints)?;
    write_signal_csv(&trial_path(dir, &id, "eef.csv"), &trial.eef)?;
    let meta = TrialMeta {
        subject_id: trial.subject_id.clone(),
        motion_id: trial.motion_id.clone(),
        repetition: trial.repetition,
        emg_rate_hz: trial.emg.rate_hz(),
        motion_rate_hz: trial.joints.rate_hz(),
        emg_kind: trial.emg_kind,
        rest_window: trial.rest_window,
    };
    write_json(&trial_path(dir, &id, "meta.json"), &meta)
}

pub fn read_trial(dir: &Path, id: &str) -> Result<TrialRecording> {
    let meta: TrialMeta = read_json(&trial_path(dir, id, "meta.json"))?;
    let trial = TrialRecording {
        emg: read_signal_csv(&trial_path(dir, id, "emg.csv"), meta.emg_rate_hz)?,
        joints: read_signal_csv(&trial_path(dir, id, "joints.csv"), meta.motion_rate_hz)?,
        eef: read_signal_csv(&trial_path(dir, id, "eef.csv"), meta.motion_rate_hz)?,
        subject_id: meta.subject_id,
        motion_id: meta.motion_id,
        repetition: meta.repetition,
        emg_kind: meta.emg_kind,
        rest_window: meta.rest_window,
    };
    trial.validate()?;
    if trial.trial_id() != id {
        return Err(Error::Data(format!("metadata of {id} describes {}", trial.trial_id())));
    }
    Ok(trial)
}

pub fn write_raw_dataset(dir: &Path, manifest: &DatasetManifest, trials: &[TrialRecording]) -> Result<()> {
    fs::create_dir_all(dir)?;
    trials.par_iter().map(|t| write_trial(dir, t)).collect::<Result<Vec<_>>>()?;
    write_json(&dir.join(MANIFEST_FILE), manifest)
}

pub fn read_raw_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<TrialRecording>)> {
    let manifest: DatasetManifest = read_json(&dir.join(MANIFEST_FILE))?;
    let trials = manifest
        .trials
        .par_iter()
        .map(|id| read_trial(dir, id))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, trials))
}

/// Runs the preprocessing pipeline over every trial.
pub fn process_trials(trials: &[TrialRecording], pipeline: &PipelineConfig) -> Result<Vec<ProcessedTrial>> {
    trials.par_iter().map(|t| process_trial(t, pipeline)).collect()
}

/// Which trials the per-subject min/max are taken from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormScope {
    /// Only the subject's training repetitions of the retained motions.
    #[default]
    TrainSplit,
    /// Every trial of the subject.
    AllData,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectNorm {
    /// Over the 39 derived motion streams, onto [−1, 1].
    pub motion: NormalizationParams,
    /// Over the 8 EMG envelopes, onto [0, 1].
    pub emg: NormalizationParams,
}

pub fn fit_subject_norms(
    processed: &[ProcessedTrial],
    scope: NormScope,
    split_seed: u64,
    held_out_motion: Option<&str>,
) -> Result<BTreeMap<String, SubjectNorm>> {
    let mut by_subject: BTreeMap<&str, Vec<&ProcessedTrial>> = BTreeMap::new();
    for t in processed {
        by_subject.entry(&t.subject_id).or_default();
        let keep = match scope {
            NormScope::AllData => true,
            NormScope::TrainSplit => {
                held_out_motion != Some(t.motion_id.as_str())
                    && rep_roles(split_seed, &t.subject_id, &t.motion_id).get(&t.repetition) == Some(&Role::Train)
            }
        };
        if keep {
            by_subject.get_mut(t.subject_id.as_str()).expect("inserted").push(t);
        }
    }
    by_subject
        .into_iter()
        .map(|(s, trials)| {
            if trials.is_empty() {
                return Err(Error::Data(format!("subject {s} has no trials to fit normalization on")));
            }
            let motion: Vec<&SampledSignal> = trials.iter().map(|t| &t.motion).collect();
            let emg: Vec<&SampledSignal> = trials.iter().map(|t| &t.emg).collect();
            Ok((
                s.to_string(),
                SubjectNorm {
                    motion: fit_normalization(&motion, TargetRange::MinusOneOne)?,
                    emg: fit_normalization(&emg, TargetRange::ZeroOne)?,
                },
            ))
        })
        .collect()
}

fn to_tensor(s: &SampledSignal) -> Result<Tensor> {
    Ok(Tensor::from_vec(&[s.len(), s.channels()], s.samples().to_vec())?)
}

pub fn assemble_sequence(trial: &ProcessedTrial, norm: &SubjectNorm, input: InputConfig) -> Result<Sequence> {
    let features = build_features(&trial.motion, input, &norm.motion)?;
    let targets = apply_normalization(&trial.emg, &norm.emg)?;
    Sequence::new(trial.trial_id(), to_tensor(&features)?, to_tensor(&targets)?)
}

/// Normalized model sequences of a dataset for one input variant.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub manifest: DatasetManifest,
    pub input: InputConfig,
    pub norm_scope: NormScope,
    pub split_seed: u64,
    pub held_out_motion: Option<String>,
    pub norms: BTreeMap<String, SubjectNorm>,
    sequences: Vec<Sequence>,
    index: HashMap<String, usize>,
}

impl PreparedData {
    pub fn prepare(
        manifest: &DatasetManifest,
        processed: &[ProcessedTrial],
        input: InputConfig,
        norm_scope: NormScope,
        split_seed: u64,
        held_out_motion: Option<&str>,
    ) -> Result<Self> {
        let norms = fit_subject_norms(processed, norm_scope, split_seed, held_out_motion)?;
        let sequences = processed
            .par_iter()
            .map(|t| assemble_sequence(t, &norms[&t.subject_id], input))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(manifest.clone(), input, norm_scope, split_seed, held_out_motion.map(str::to_string), norms, sequences)
    }

    pub fn from_parts(
        manifest: DatasetManifest,
        input: InputConfig,
        norm_scope: NormScope,
        split_seed: u64,
        held_out_motion: Option<String>,
        norms: BTreeMap<String, SubjectNorm>,
        sequences: Vec<Sequence>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(sequences.len());
        for (i, s) in sequences.iter().enumerate() {
            if index.insert(s.trial_id.clone(), i).is_some() {
                return Err(Error::Data(format!("trial {} appears twice", s.trial_id)));
            }
        }
        Ok(Self {
            manifest,
            input,
            norm_scope,
            split_seed,
            held_out_motion,
            norms,
            sequences,
            index,
        })
    }

    pub fn all(&self) -> &[Sequence] {
        &self.sequences
    }

    pub fn get(&self, trial_id: &str) -> Result<&Sequence> {
        self.index
            .get(trial_id)
            .map(|&i| &self.sequences[i])
            .ok_or_else(|| Error::Missing(format!("trial {trial_id} is not in the dataset")))
    }

    /// Sequences for `ids`, in the given order.
    pub fn sequences(&self, ids: &[String]) -> Result<Vec<Sequence>> {
        ids.iter().map(|id| self.get(id).cloned()).collect()
    }

    pub fn feature_width(&self) -> usize {
        self.input.feature_width()
    }
}

/// Manifest of a processed dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessedManifest {
    pub dataset: DatasetManifest,
    pub input: InputConfig,
    pub pipeline: PipelineConfig,
    pub norm_scope: NormScope,
    pub split_seed: u64,
    pub held_out_motion: Option<String>,
    pub norms: BTreeMap<String, SubjectNorm>,
    pub trials: Vec<String>,
}

pub fn write_processed(dir: &Path, data: &PreparedData, pipeline: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(dir.join("features"))?;
    fs::create_dir_all(dir.join("targets"))?;
    let feature_names: Vec<String> = {
        let idx = data.input.stream_indices();
        let any = data.norms.values().next().ok_or_else(|| Error::Data("no subjects".into()))?;
        idx.iter().map(|&i| any.motion.channel_names[i].clone()).collect()
    };
    let emg_names: Vec<String> = crate::signal::EMG_CHANNELS.iter().map(|s| s.to_string()).collect();
    data.all()
        .par_iter()
        .map(|s| {
            write_signal_csv(&dir.join("features").join(format!("{}.csv", s.trial_id)), &tensor_signal(&s.features, &feature_names, pipeline.motion_rate_hz)?)?;
            write_signal_csv(&dir.join("targets").join(format!("{}.csv", s.trial_id)), &tensor_signal(&s.targets, &emg_names, pipeline.motion_rate_hz)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = ProcessedManifest {
        dataset: data.manifest.clone(),
        input: data.input,
        pipeline: pipeline.clone(),
        norm_scope: data.norm_scope,
        split_seed: data.split_seed,
        held_out_motion: data.held_out_motion.clone(),
        norms: data.norms.clone(),
        trials: data.all().iter().map(|s| s.trial_id.clone()).collect(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn tensor_signal(t: &Tensor, names: &[String], rate_hz: f64) -> Result<SampledSignal> {
    SampledSignal::new(t.data().to_vec(), t.cols(), rate_hz, names.to_vec())
}

pub fn read_processed(dir: &Path) -> Result<(ProcessedManifest, PreparedData)> {
    let m: ProcessedManifest = read_json(&dir.join(MANIFEST_FILE))?;
    let rate = m.pipeline.motion_rate_hz;
    let sequences = m
        .trials
        .par_iter()
        .map(|id| {
            let f = read_signal_csv(&dir.join("features").join(format!("{id}.csv")), rate)?;
            let y = read_signal_csv(&dir.join("targets").join(format!("{id}.csv")), rate)?;
            if f.channels() != m.input.feature_width() {
                return Err(Error::Data(format!("{id}: feature width {} does not match {:?}", f.channels(), m.input)));
            }
            Sequence::new(id.clone(), to_tensor(&f)?, to_tensor(&y)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let data = PreparedData::from_parts(
        m.dataset.clone(),
        m.input,
        m.norm_scope,
        m.split_seed,
        m.held_out_motion.clone(),
        m.norms.clone(),
        sequences,
    )?;
    Ok((m, data))
}
