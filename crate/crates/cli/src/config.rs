use std::path::Path;

use myosynth::dataset::NormScope;
use myosynth::evaluation::{Aggregation, TableMetric};
use myosynth::models::{ArchConfig, ArchitectureId};
use myosynth::regimes::{SearchSpace, TuneConfig};
use myosynth::signal::PipelineConfig;
use myosynth::synthetic::GeneratorConfig;
use myosynth::{Error, Result};
use myosynth::nn::TrainConfig;
use serde::{Deserialize, Serialize};

/// Optional settings read from `--config`; command-line flags win.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub generator: Option<GeneratorConfig>,
    pub pipeline: Option<PipelineConfig>,
    pub norm_scope: Option<NormScope>,
    pub held_out_subject: Option<String>,
    pub held_out_motion: Option<String>,
    /// Subject for the subject-specific and pre-train regimes.
    pub subject: Option<String>,
    pub arch: ArchOverrides,
    pub train: TrainOverrides,
    pub finetune_lr_factor: Option<f64>,
    pub tune: TuneSection,
    pub evaluate: EvaluateSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchOverrides {
    pub input_dropout: Option<f64>,
    pub hidden_dropout: Option<f64>,
    pub lstm_units: Option<Vec<usize>>,
    pub dense_units: Option<Vec<usize>>,
    pub conv_filters: Option<Vec<usize>>,
    pub conv_kernels: Option<Vec<usize>>,
    pub warmup_k: Option<u32>,
    pub lags: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub learning_rate: Option<f64>,
    pub shuffle: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub space: Option<SearchSpace>,
    pub budget: Option<usize>,
    pub population: Option<usize>,
    pub max_epochs: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub aggregation: Option<Aggregation>,
    pub metric: Option<TableMetric>,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        if !path.exists() {
            return Err(Error::Missing(format!("config file {}", path.display())));
        }
        serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn arch_config(&self, arch: ArchitectureId, feature_width: usize) -> Result<ArchConfig> {
        let mut a = ArchConfig::new(arch, feature_width);
        let o = &self.arch;
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = &o.$f { a.$f = v.clone(); } )*};
        }
        set!(input_dropout, hidden_dropout, lstm_units, dense_units, conv_filters, conv_kernels, warmup_k, lags);
        a.validate()?;
        Ok(a)
    }

    pub fn apply_train(&self, t: &mut TrainConfig) {
        let o = &self.train;
        if let Some(v) = o.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = o.max_epochs {
            t.max_epochs = v;
        }
        if let Some(v) = o.patience {
            t.patience = v;
        }
        if let Some(v) = o.learning_rate {
            t.learning_rate = v;
        }
        if let Some(v) = o.shuffle {
            t.shuffle = v;
        }
    }

    pub fn tune_config(&self, seed: u64) -> TuneConfig {
        let d = TuneConfig::default();
        TuneConfig {
            budget: self.tune.budget.unwrap_or(d.budget),
            population: self.tune.population.unwrap_or(d.population),
            seed,
            ..d
        }
    }
}

/// Search space used when the config gives none.
pub fn default_space(arch: ArchitectureId) -> SearchSpace {
    let batch_size = match arch {
        ArchitectureId::Rnn | ArchitectureId::Cnn => vec![4, 8, 16],
        _ => vec![32, 128, 256],
    };
    SearchSpace {
        batch_size,
        n_layers: vec![1, 2, 3],
        units: vec![64, 128, 256, 512],
        dropout: vec![0.0, 0.1, 0.2],
        filters: vec![32, 64, 128],
        kernel_size: vec![4, 8, 16, 32],
    }
}
