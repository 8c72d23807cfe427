//! The five architectures, their input shaping, and a `Model` wrapper that
//! trains and predicts whole `[T × features] → [T × 8]` sequences.

use std::collections::VecDeque;
use std::path::Path;

use myosynth_nn::{
    fit_with, weights, Activation, Control, EpochRecord, FitReport, LayerSpec, Network, NetworkParams, NetworkSpec,
    Sample, Tensor, TrainConfig, WeightHeader,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OUTPUT_CHANNELS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureId {
    Rnn,
    RnnSeq,
    Fnn,
    FnnSeq,
    Cnn,
}

impl ArchitectureId {
    pub const ALL: [ArchitectureId; 5] = [
        ArchitectureId::Rnn,
        ArchitectureId::RnnSeq,
        ArchitectureId::Fnn,
        ArchitectureId::FnnSeq,
        ArchitectureId::Cnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArchitectureId::Rnn => "rnn",
            ArchitectureId::RnnSeq => "rnnseq",
            ArchitectureId::Fnn => "fnn",
            ArchitectureId::FnnSeq => "fnnseq",
            ArchitectureId::Cnn => "cnn",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ArchitectureId::Rnn => "RNN",
            ArchitectureId::RnnSeq => "RNNseq",
            ArchitectureId::Fnn => "FNN",
            ArchitectureId::FnnSeq => "FNNseq",
            ArchitectureId::Cnn => "CNN",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown architecture {s:?}")))
    }
}

/// Layer sizes and input shaping of one architecture. Fields that do not
/// apply to `arch` are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub arch: ArchitectureId,
    pub feature_width: usize,
    pub input_dropout: f64,
    /// Dropout after every hidden layer; 0 disables it.
    pub hidden_dropout: f64,
    pub lstm_units: Vec<usize>,
    pub dense_units: Vec<usize>,
    pub conv_filters: Vec<usize>,
    pub conv_kernels: Vec<usize>,
    /// Largest warm-up lag exponent of RNNseq sub-sequences.
    pub warmup_k: u32,
    /// FNNseq lags (in samples) appended to the current row.
    pub lags: Vec<usize>,
}

impl ArchConfig {
    pub fn new(arch: ArchitectureId, feature_width: usize) -> Self {
        let lstm_units = match arch {
            ArchitectureId::RnnSeq => vec![128],
            _ => vec![256, 128, 64],
        };
        Self {
            arch,
            feature_width,
            input_dropout: 0.1,
            hidden_dropout: 0.0,
            lstm_units,
            dense_units: vec![512, 256, 128],
            conv_filters: vec![128, 128, 128, 128, 64],
            conv_kernels: vec![32, 8, 8, 4, 4],
            warmup_k: 5,
            lags: vec![1, 2, 4, 8],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("{}: {m}", self.arch.name())));
        if self.feature_width == 0 {
            return bad("feature width must be positive");
        }
        if !(0.0..1.0).contains(&self.input_dropout) || !(0.0..1.0).contains(&self.hidden_dropout) {
            return bad("dropout rates must lie in [0, 1)");
        }
        match self.arch {
            ArchitectureId::Rnn | ArchitectureId::RnnSeq if self.lstm_units.is_empty() || self.lstm_units.contains(&0) => {
                bad("needs at least one non-empty LSTM layer")
            }
            ArchitectureId::Fnn | ArchitectureId::FnnSeq if self.dense_units.contains(&0) => bad("empty dense layer"),
            ArchitectureId::FnnSeq if self.lags.is_empty() || self.lags.contains(&0) => bad("lags must be positive"),
            ArchitectureId::Cnn
                if self.conv_filters.is_empty()
                    || self.conv_filters.len() != self.conv_kernels.len()
                    || self.conv_filters.contains(&0)
                    || self.conv_kernels.contains(&0) =>
            {
                bad("filters and kernels must be non-empty, positive and of equal length")
            }
            _ => Ok(()),
        }
    }

    /// Width of one network input row.
    pub fn input_width(&self) -> usize {
        match self.arch {
            ArchitectureId::FnnSeq => self.feature_width * (1 + self.lags.len()),
            _ => self.feature_width,
        }
    }

    /// Minibatch size the architecture is trained with by default.
    pub fn default_batch_size(&self) -> usize {
        match self.arch {
            ArchitectureId::Fnn | ArchitectureId::FnnSeq => 128,
            ArchitectureId::RnnSeq => 128,
            ArchitectureId::Rnn | ArchitectureId::Cnn => 8,
        }
    }

    /// Shortest sequence the architecture accepts.
    pub fn min_sequence_len(&self) -> usize {
        match self.arch {
            ArchitectureId::Cnn => self.conv_kernels.iter().copied().max().unwrap_or(1),
            _ => 1,
        }
    }

    fn push_dropout(layers: &mut Vec<LayerSpec>, rate: f64) {
        if rate > 0.0 {
            layers.push(LayerSpec::Dropout { rate });
        }
    }

    fn lstm_stack(&self, stateful: bool, last_returns_sequences: bool) -> Vec<LayerSpec> {
        let mut layers = Vec::new();
        Self::push_dropout(&mut layers, self.input_dropout);
        for (i, &units) in self.lstm_units.iter().enumerate() {
            let last = i + 1 == self.lstm_units.len();
            layers.push(LayerSpec::Lstm {
                units,
                stateful,
                return_sequences: !last || last_returns_sequences,
            });
            if !last {
                Self::push_dropout(&mut layers, self.hidden_dropout);
            }
        }
        layers
    }

    /// Network used for training.
    pub fn train_spec(&self) -> Result<NetworkSpec> {
        self.validate()?;
        let out = |td: bool| {
            if td {
                LayerSpec::TimeDistributedDense {
                    units: OUTPUT_CHANNELS,
                    activation: Activation::Linear,
                }
            } else {
                LayerSpec::Dense {
                    units: OUTPUT_CHANNELS,
                    activation: Activation::Linear,
                }
            }
        };
        let layers = match self.arch {
            ArchitectureId::Rnn => {
                let mut l = self.lstm_stack(true, true);
                l.push(out(true));
                l
            }
            ArchitectureId::RnnSeq => {
                let mut l = self.lstm_stack(false, false);
                l.push(out(false));
                l
            }
            ArchitectureId::Fnn | ArchitectureId::FnnSeq => {
                let mut l = Vec::new();
                Self::push_dropout(&mut l, self.input_dropout);
                for &units in &self.dense_units {
                    l.push(LayerSpec::Dense {
                        units,
                        activation: Activation::Relu,
                    });
                    Self::push_dropout(&mut l, self.hidden_dropout);
                }
                l.push(out(false));
                l
            }
            ArchitectureId::Cnn => {
                let mut l = Vec::new();
                Self::push_dropout(&mut l, self.input_dropout);
                for (&filters, &kernel_size) in self.conv_filters.iter().zip(&self.conv_kernels) {
                    l.push(LayerSpec::Conv1d {
                        filters,
                        kernel_size,
                        activation: Activation::Relu,
                    });
                    Self::push_dropout(&mut l, self.hidden_dropout);
                }
                l.push(out(true));
                l
            }
        };
        Ok(NetworkSpec::new(self.input_width(), layers)?)
    }

    /// Network used for prediction. Identical to [`Self::train_spec`]
    /// except for RNNseq, whose recurrent layers become stateful and emit
    /// every step so the sequence can be fed one row at a time.
    pub fn predict_spec(&self) -> Result<NetworkSpec> {
        match self.arch {
            ArchitectureId::RnnSeq => {
                let mut l = self.lstm_stack(true, true);
                l.push(LayerSpec::TimeDistributedDense {
                    units: OUTPUT_CHANNELS,
                    activation: Activation::Linear,
                });
                Ok(NetworkSpec::new(self.input_width(), l)?)
            }
            _ => self.train_spec(),
        }
    }
}

pub fn build_rnn(feature_width: usize) -> Result<NetworkSpec> {
    ArchConfig::new(ArchitectureId::Rnn, feature_width).train_spec()
}

/// Training and prediction networks of RNNseq; both take the same
/// parameters.
pub fn build_rnnseq_pair(feature_width: usize) -> Result<(NetworkSpec, NetworkSpec)> {
    let cfg = ArchConfig::new(ArchitectureId::RnnSeq, feature_width);
    Ok((cfg.train_spec()?, cfg.predict_spec()?))
}

pub fn build_fnn(feature_width: usize) -> Result<NetworkSpec> {
    ArchConfig::new(ArchitectureId::Fnn, feature_width).train_spec()
}

pub fn build_fnnseq(feature_width: usize) -> Result<NetworkSpec> {
    ArchConfig::new(ArchitectureId::FnnSeq, feature_width).train_spec()
}

pub fn build_cnn(feature_width: usize) -> Result<NetworkSpec> {
    ArchConfig::new(ArchitectureId::Cnn, feature_width).train_spec()
}

/// Number of input steps one CNN output depends on.
pub fn receptive_field(kernels: &[usize]) -> usize {
    1 + kernels.iter().map(|k| k - 1).sum::<usize>()
}

/// One trial as model input and target: `features [T × F]`,
/// `targets [T × 8]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub trial_id: String,
    pub features: Tensor,
    pub targets: Tensor,
}

impl Sequence {
    pub fn new(trial_id: impl Into<String>, features: Tensor, targets: Tensor) -> Result<Self> {
        if features.shape().len() != 2 || targets.shape().len() != 2 || features.rows() != targets.rows() {
            return Err(Error::Data(format!(
                "features {:?} and targets {:?} are not aligned [T × _] matrices",
                features.shape(),
                targets.shape()
            )));
        }
        Ok(Self {
            trial_id: trial_id.into(),
            features,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Warm-up history and current row for predicting one timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct SubSequence {
    pub t: usize,
    /// Indices of the warm-up rows, ascending.
    pub warmup: Vec<usize>,
    /// Warm-up rows followed by the row at `t`, `[w_eff + 1 × F]`.
    pub input: Tensor,
    /// Target at `t`, `[1 × 8]`.
    pub target: Tensor,
}

/// Indices `t − 2^k, …, t − 2, t − 1` that exist, ascending.
pub fn warmup_indices(t: usize, k: u32) -> Vec<usize> {
    (0..=k).rev().filter_map(|i| t.checked_sub(1usize << i)).collect()
}

pub fn make_subsequences(features: &Tensor, targets: &Tensor, k: u32) -> Result<Vec<SubSequence>> {
    let (n, f) = (features.rows(), features.cols());
    if n == 0 || targets.rows() != n {
        return Err(Error::Data("sub-sequences need aligned, non-empty features and targets".into()));
    }
    (0..n)
        .map(|t| {
            let warmup = warmup_indices(t, k);
            let mut rows = Vec::with_capacity((warmup.len() + 1) * f);
            for &i in warmup.iter().chain(std::iter::once(&t)) {
                rows.extend_from_slice(features.row(i));
            }
            Ok(SubSequence {
                t,
                input: Tensor::from_vec(&[warmup.len() + 1, f], rows)?,
                target: Tensor::from_vec(&[1, targets.cols()], targets.row(t).to_vec())?,
                warmup,
            })
        })
        .collect()
}

/// Rows `t ∥ t − l₁ ∥ t − l₂ ∥ …`, lags clamped at the first row.
pub fn make_lagged_features(features: &Tensor, lags: &[usize]) -> Result<Tensor> {
    let (n, f) = (features.rows(), features.cols());
    let width = f * (1 + lags.len());
    let mut out = Vec::with_capacity(n * width);
    for t in 0..n {
        out.extend_from_slice(features.row(t));
        for &l in lags {
            out.extend_from_slice(features.row(t.saturating_sub(l)));
        }
    }
    Ok(Tensor::from_vec(&[n, width], out)?)
}

/// A built network together with its architecture description.
#[derive(Clone, Debug)]
pub struct Model {
    config: ArchConfig,
    net: Network,
}

impl Model {
    pub fn new(config: ArchConfig, seed: u64) -> Result<Self> {
        let spec = config.train_spec()?;
        Ok(Self {
            net: Network::from_seed(spec, seed),
            config,
        })
    }

    pub fn from_params(config: ArchConfig, params: NetworkParams) -> Result<Self> {
        let spec = config.train_spec()?;
        Ok(Self {
            net: Network::new(spec, params)?,
            config,
        })
    }

    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    pub fn params(&self) -> &NetworkParams {
        self.net.params()
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn parameter_count(&self) -> usize {
        self.net.parameter_count()
    }

    fn check(&self, seq: &Sequence) -> Result<()> {
        if seq.features.cols() != self.config.feature_width {
            return Err(Error::Data(format!(
                "{}: features have width {}, model expects {}",
                seq.trial_id,
                seq.features.cols(),
                self.config.feature_width
            )));
        }
        if seq.len() < self.config.min_sequence_len() {
            return Err(Error::SequenceTooShort {
                len: seq.len(),
                need: self.config.min_sequence_len(),
            });
        }
        Ok(())
    }

    /// Training samples in dataset order: whole sequences for RNN and CNN,
    /// sub-sequences for RNNseq, single (lagged) rows for FNN and FNNseq.
    pub fn samples(&self, sequences: &[Sequence]) -> Result<Vec<Sample>> {
        let mut out = Vec::new();
        for seq in sequences {
            self.check(seq)?;
            match self.config.arch {
                ArchitectureId::Rnn | ArchitectureId::Cnn => out.push(Sample {
                    input: seq.features.clone(),
                    target: seq.targets.clone(),
                }),
                ArchitectureId::RnnSeq => {
                    for s in make_subsequences(&seq.features, &seq.targets, self.config.warmup_k)? {
                        out.push(Sample {
                            input: s.input,
                            target: s.target,
                        });
                    }
                }
                ArchitectureId::Fnn | ArchitectureId::FnnSeq => {
                    let rows = if self.config.arch == ArchitectureId::FnnSeq {
                        make_lagged_features(&seq.features, &self.config.lags)?
                    } else {
                        seq.features.clone()
                    };
                    for t in 0..rows.rows() {
                        out.push(Sample {
                            input: Tensor::from_vec(&[1, rows.cols()], rows.row(t).to_vec())?,
                            target: Tensor::from_vec(&[1, seq.targets.cols()], seq.targets.row(t).to_vec())?,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Training configuration defaults for this architecture. RNN samples
    /// are kept in dataset order so stateful slots follow one another.
    pub fn default_train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.config.default_batch_size(),
            shuffle: self.config.arch != ArchitectureId::Rnn,
            ..TrainConfig::default()
        }
    }

    pub fn fit(&mut self, train: &[Sequence], val: &[Sequence], cfg: &TrainConfig) -> Result<FitReport> {
        self.fit_with(train, val, cfg, |_| Control::Continue)
    }

    pub fn fit_with(
        &mut self,
        train: &[Sequence],
        val: &[Sequence],
        cfg: &TrainConfig,
        observer: impl FnMut(&EpochRecord) -> Control,
    ) -> Result<FitReport> {
        let train = self.samples(train)?;
        let val = self.samples(val)?;
        Ok(fit_with(&mut self.net, &train, &val, cfg, observer)?)
    }

    fn prediction_network(&self) -> Result<Network> {
        match self.config.arch {
            ArchitectureId::RnnSeq => Ok(Network::new(self.config.predict_spec()?, self.net.params().clone())?),
            _ => {
                let mut n = self.net.clone();
                n.reset_states();
                Ok(n)
            }
        }
    }

    /// Whole-sequence prediction `[T × 8]` from a reset state. RNNseq
    /// restores its state from each timestep's warm-up rows, exactly as in
    /// training.
    pub fn predict(&self, features: &Tensor) -> Result<Tensor> {
        let seq = Sequence::new("", features.clone(), Tensor::zeros(&[features.rows(), OUTPUT_CHANNELS]))?;
        self.check(&seq)?;
        let mut net = self.prediction_network()?;
        let (n, f) = (features.rows(), features.cols());
        let out = match self.config.arch {
            ArchitectureId::Rnn | ArchitectureId::Cnn => net.predict(&Tensor::from_vec(&[1, n, f], features.data().to_vec())?)?,
            ArchitectureId::RnnSeq => {
                let mut out = Vec::with_capacity(n * OUTPUT_CHANNELS);
                for t in 0..n {
                    let warmup = warmup_indices(t, self.config.warmup_k);
                    let mut rows = Vec::with_capacity((warmup.len() + 1) * f);
                    for &i in warmup.iter().chain(std::iter::once(&t)) {
                        rows.extend_from_slice(features.row(i));
                    }
                    net.reset_states();
                    let y = net.predict(&Tensor::from_vec(&[1, warmup.len() + 1, f], rows)?)?;
                    out.extend_from_slice(&y.data()[warmup.len() * OUTPUT_CHANNELS..]);
                }
                Tensor::from_vec(&[n, OUTPUT_CHANNELS], out)?
            }
            ArchitectureId::Fnn => net.predict(&Tensor::from_vec(&[n, 1, f], features.data().to_vec())?)?,
            ArchitectureId::FnnSeq => {
                let lagged = make_lagged_features(features, &self.config.lags)?;
                net.predict(&Tensor::from_vec(&[n, 1, lagged.cols()], lagged.into_data())?)?
            }
        };
        Ok(Tensor::from_vec(&[n, OUTPUT_CHANNELS], out.into_data())?)
    }

    /// Row-by-row prediction through a batch-one stateful network. Only
    /// recurrent architectures support it; the result matches
    /// [`Model::predict`].
    pub fn predict_online(&self, features: &Tensor) -> Result<Tensor> {
        let mut session = OnlineSession::new(self)?;
        let mut out = Vec::with_capacity(features.rows() * OUTPUT_CHANNELS);
        for t in 0..features.rows() {
            out.extend(session.step(features.row(t))?);
        }
        Ok(Tensor::from_vec(&[features.rows(), OUTPUT_CHANNELS], out)?)
    }

    /// Output of the training network on single samples (no dropout).
    pub fn predict_sample(&self, input: &Tensor) -> Result<Tensor> {
        let mut net = self.net.clone();
        net.reset_states();
        let shape = [1, input.rows(), input.cols()];
        let out = net.predict(&Tensor::from_vec(&shape, input.data().to_vec())?)?;
        net.reset_states();
        Ok(out)
    }

    pub fn header(&self, seed: u64) -> Result<WeightHeader> {
        let mut h = WeightHeader::new(self.net.spec().clone(), seed);
        h.extra = serde_json::json!({ "arch": self.config });
        Ok(h)
    }

    pub fn save(&self, path: &Path, seed: u64, normalization_ref: Option<String>) -> Result<()> {
        let mut h = self.header(seed)?;
        h.normalization_ref = normalization_ref;
        self.save_header(path, &h)
    }

    /// Saves with a caller-built header, e.g. one from [`Model::header`]
    /// with extra metadata added.
    pub fn save_header(&self, path: &Path, header: &WeightHeader) -> Result<()> {
        if header.spec != *self.net.spec() {
            return Err(Error::Config("header describes a different network".into()));
        }
        Ok(weights::save(path, header, self.net.params())?)
    }

    pub fn load(path: &Path) -> Result<(Self, WeightHeader)> {
        if !path.exists() {
            return Err(Error::Missing(format!("weights file {}", path.display())));
        }
        let (header, params) = weights::load(path)?;
        let config: ArchConfig = serde_json::from_value(
            header
                .extra
                .get("arch")
                .cloned()
                .ok_or_else(|| Error::Data("weights file lacks an architecture description".into()))?,
        )?;
        if config.train_spec()? != header.spec {
            return Err(Error::Data("stored architecture does not match the stored network".into()));
        }
        Ok((Self::from_params(config, params)?, header))
    }
}

/// Stateful batch-one predictor fed one feature row at a time.
///
/// The RNN carries its state across rows. RNNseq keeps the last `2^k`
/// rows and, for each new row, resets its state and replays the warm-up
/// rows one step at a time before emitting.
pub struct OnlineSession {
    net: Network,
    width: usize,
    warmup_k: Option<u32>,
    history: VecDeque<Vec<f64>>,
}

impl OnlineSession {
    pub fn new(model: &Model) -> Result<Self> {
        let warmup_k = match model.config.arch {
            ArchitectureId::Rnn => None,
            ArchitectureId::RnnSeq => Some(model.config.warmup_k),
            other => {
                return Err(Error::Config(format!(
                    "online prediction needs a recurrent architecture, not {}",
                    other.name()
                )))
            }
        };
        Ok(Self {
            net: model.prediction_network()?,
            width: model.config.feature_width,
            warmup_k,
            history: VecDeque::new(),
        })
    }

    fn feed(&mut self, row: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .net
            .predict(&Tensor::from_vec(&[1, 1, self.width], row.to_vec())?)?
            .into_data())
    }

    pub fn step(&mut self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.width {
            return Err(Error::Data(format!("row has {} features, expected {}", row.len(), self.width)));
        }
        let Some(k) = self.warmup_k else {
            return self.feed(row);
        };
        let t = self.history.len();
        let warmup: Vec<Vec<f64>> = warmup_indices(t, k).iter().map(|&i| self.history[i].clone()).collect();
        self.net.reset_states();
        for w in &warmup {
            self.feed(w)?;
        }
        let out = self.feed(row)?;
        self.history.push_back(row.to_vec());
        let keep = 1usize << k;
        if self.history.len() > keep {
            self.history.pop_front();
        }
        Ok(out)
    }

    /// Clears the recurrent state and history; call between sequences.
    pub fn reset(&mut self) {
        self.net.reset_states();
        self.history.clear();
    }
}
