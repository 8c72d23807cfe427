//! Minibatch training with Adam and early stopping on validation loss.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamConfig};
use crate::error::{NnError, Result};
use crate::network::{Mode, Network};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            seed: 42,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 {
            return Err(NnError::Config("patience must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(NnError::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(NnError::Config("batch size must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// One training example: `input` is `[T × features]`, `target` is
/// `[T_out × outputs]` (`T_out` is 1 for last-step models).
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Tensor,
    pub target: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub history: Vec<EpochRecord>,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub stopped_by_observer: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Groups sample indices into batches of identical shape. Without shuffling
/// the batches follow dataset order, which keeps stateful slots aligned
/// from one batch to the next.
pub fn make_batches(
    samples: &[Sample],
    batch_size: usize,
    shuffle: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut buckets: BTreeMap<(Vec<usize>, Vec<usize>), Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        buckets
            .entry((s.input.shape().to_vec(), s.target.shape().to_vec()))
            .or_default()
            .push(i);
    }
    let mut batches = Vec::new();
    for (_, mut idx) in buckets {
        if shuffle {
            idx.shuffle(rng);
        }
        batches.extend(idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec));
    }
    if shuffle {
        batches.shuffle(rng);
    } else {
        batches.sort_by_key(|b| b[0]);
    }
    batches
}

/// Stacks samples into `[B × T × F]` inputs and matching targets.
pub fn stack(samples: &[Sample], idx: &[usize]) -> Result<(Tensor, Tensor)> {
    let first = &samples[idx[0]];
    let (t, f) = (first.input.rows(), first.input.cols());
    let (to, o) = (first.target.rows(), first.target.cols());
    let mut x = Vec::with_capacity(idx.len() * t * f);
    let mut y = Vec::with_capacity(idx.len() * to * o);
    for &i in idx {
        let s = &samples[i];
        if s.input.len() != t * f || s.target.len() != to * o {
            return Err(NnError::Shape("samples in one batch differ in shape".into()));
        }
        x.extend_from_slice(s.input.data());
        y.extend_from_slice(s.target.data());
    }
    Ok((
        Tensor::from_vec(&[idx.len(), t, f], x)?,
        Tensor::from_vec(&[idx.len(), to, o], y)?,
    ))
}

/// Mean squared error over every element of `samples`, evaluated in dataset
/// order from a freshly reset state.
pub fn evaluate_loss(net: &mut Network, samples: &[Sample], batch_size: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(NnError::EmptyData("no samples to evaluate".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batches = make_batches(samples, batch_size, false, &mut rng);
    net.reset_states();
    let (mut sum, mut count) = (0.0, 0usize);
    for idx in &batches {
        if net.state_batch().is_some_and(|b| b != idx.len()) {
            net.reset_states();
        }
        let (x, y) = stack(samples, idx)?;
        let out = net.predict(&x)?;
        if out.len() != y.len() {
            return Err(NnError::Shape(format!(
                "output {:?} vs target {:?}",
                out.shape(),
                y.shape()
            )));
        }
        for (p, t) in out.data().iter().zip(y.data()) {
            sum += (p - t) * (p - t);
        }
        count += y.len();
    }
    net.reset_states();
    Ok(sum / count as f64)
}

pub fn fit(net: &mut Network, train: &[Sample], val: &[Sample], cfg: &TrainConfig) -> Result<FitReport> {
    fit_with(net, train, val, cfg, |_| Control::Continue)
}

/// Trains `net` in place and leaves it holding the best-validation weights.
///
/// `observer` sees every finished epoch and may stop training (used for
/// pruning during hyperparameter search).
pub fn fit_with(
    net: &mut Network,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord) -> Control,
) -> Result<FitReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(NnError::EmptyData("training set is empty".into()));
    }
    if val.is_empty() {
        return Err(NnError::EmptyData("validation set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(net.params(), cfg.adam());
    let mut best = net.params().clone();
    let mut report = FitReport {
        history: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
        stopped_by_observer: false,
    };
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        net.reset_states();
        let batches = make_batches(train, cfg.batch_size, cfg.shuffle, &mut rng);
        let (mut sum, mut count) = (0.0, 0usize);
        for idx in &batches {
            if net.state_batch().is_some_and(|b| b != idx.len()) {
                net.reset_states();
            }
            let (x, y) = stack(train, idx)?;
            let (loss, grads) = net.loss_and_gradients(&x, &y, Mode::Train, &mut rng)?;
            if !loss.is_finite() {
                return Err(NnError::NonFinite(format!("training loss at epoch {epoch}")));
            }
            adam.step(net.params_mut(), &grads.params);
            sum += loss * y.len() as f64;
            count += y.len();
        }
        let val_loss = evaluate_loss(net, val, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(NnError::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            train_loss: sum / count as f64,
            val_loss,
        };
        report.history.push(record);
        if val_loss < report.best_val_loss {
            report.best_val_loss = val_loss;
            report.best_epoch = epoch;
            best = net.params().clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        if observer(&record) == Control::Stop {
            report.stopped_by_observer = true;
            break;
        }
        if since_best >= cfg.patience {
            report.stopped_early = true;
            break;
        }
    }
    net.set_params(best)?;
    net.reset_states();
    Ok(report)
}

/// Early-stopping rule on a recorded validation curve: returns
/// `(stop_epoch, best_epoch)`, both 1-based.
pub fn early_stopping_trace(val_losses: &[f64], patience: usize) -> (usize, usize) {
    let (mut best, mut best_epoch, mut since) = (f64::INFINITY, 0, 0);
    for (i, &v) in val_losses.iter().enumerate() {
        if v < best {
            best = v;
            best_epoch = i + 1;
            since = 0;
        } else {
            since += 1;
        }
        if since >= patience {
            return (i + 1, best_epoch);
        }
    }
    (val_losses.len(), best_epoch)
}
