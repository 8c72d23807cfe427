//! Dataset splits, the general / pre-trained / subject-specific training
//! regimes, and evolutionary hyperparameter search.

mod split;
mod tune;

use myosynth_nn::{FitReport, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::dataset::PreparedData;
use crate::error::{Error, Result};
use crate::models::{ArchConfig, Model};

pub use split::{
    audit_split, check_repetitions, make_split, motion_trials, parse_trial_id, rep_roles, subject_split, Role,
    SplitAudit, SplitPlan, REPS_PER_MOTION, TEST_REPS, TRAIN_REPS, VAL_REPS,
};
pub use tune::{evaluate_candidate, tune, Candidate, SearchSpace, TrialResult, TuneConfig, TuneResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeId {
    General,
    Pretrain,
    SubjectSpecific,
}

impl RegimeId {
    pub fn name(self) -> &'static str {
        match self {
            RegimeId::General => "general",
            RegimeId::Pretrain => "pretrain",
            RegimeId::SubjectSpecific => "subject",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "general" => Ok(RegimeId::General),
            "pretrain" | "pre_train" | "pretrained" | "finetune" => Ok(RegimeId::Pretrain),
            "subject" | "subject_specific" => Ok(RegimeId::SubjectSpecific),
            _ => Err(Error::Config(format!("unknown regime {s:?}"))),
        }
    }
}

/// Architecture, optimiser settings and initialisation seed of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeConfig {
    pub arch: ArchConfig,
    pub train: TrainConfig,
    /// Fine-tuning learning rate relative to `train.learning_rate`.
    #[serde(default = "default_finetune_factor")]
    pub finetune_lr_factor: f64,
    #[serde(default)]
    pub init_seed: u64,
}

fn default_finetune_factor() -> f64 {
    0.1
}

impl RegimeConfig {
    /// Architecture defaults for `arch`, seeded with `seed`.
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Self> {
        let probe = Model::new(arch.clone(), seed)?;
        let mut train = probe.default_train_config();
        train.seed = seed;
        Ok(Self {
            arch,
            train,
            finetune_lr_factor: default_finetune_factor(),
            init_seed: seed,
        })
    }
}

fn fit_on(model: &mut Model, data: &PreparedData, plan: &SplitPlan, cfg: &TrainConfig) -> Result<FitReport> {
    if plan.train.is_empty() || plan.val.is_empty() {
        return Err(Error::Data("plan has no training or validation trials".into()));
    }
    let train = data.sequences(&plan.train)?;
    let val = data.sequences(&plan.val)?;
    model.fit(&train, &val, cfg)
}

/// Fits a fresh model on every retained subject's training split. The plan
/// is audited first, so a held-out subject can never leak in.
pub fn train_general(data: &PreparedData, plan: &SplitPlan, cfg: &RegimeConfig) -> Result<(Model, FitReport)> {
    audit_split(plan)?;
    let mut model = Model::new(cfg.arch.clone(), cfg.init_seed)?;
    let report = fit_on(&mut model, data, plan, &cfg.train)?;
    Ok((model, report))
}

/// Continues training `general` on one subject's split with every layer
/// trainable and a reduced learning rate.
pub fn finetune(general: &Model, data: &PreparedData, subject_plan: &SplitPlan, cfg: &RegimeConfig) -> Result<(Model, FitReport)> {
    if general.config() != &cfg.arch {
        return Err(Error::Config("general weights were trained for a different architecture".into()));
    }
    audit_split(subject_plan)?;
    let mut model = general.clone();
    let mut train = cfg.train.clone();
    train.learning_rate *= cfg.finetune_lr_factor;
    let report = fit_on(&mut model, data, subject_plan, &train)?;
    Ok((model, report))
}

/// Fits a fresh model on one subject only.
pub fn train_subject_specific(data: &PreparedData, subject_plan: &SplitPlan, cfg: &RegimeConfig) -> Result<(Model, FitReport)> {
    audit_split(subject_plan)?;
    if subject_plan.subjects.len() != 1 {
        return Err(Error::Config("a subject-specific plan covers exactly one subject".into()));
    }
    let mut model = Model::new(cfg.arch.clone(), cfg.init_seed)?;
    let report = fit_on(&mut model, data, subject_plan, &cfg.train)?;
    Ok((model, report))
}
