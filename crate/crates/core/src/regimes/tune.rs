use std::collections::BTreeSet;

use myosynth_nn::{Control, TrainConfig};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ArchConfig, ArchitectureId, Model, Sequence};

/// Discrete values for each tunable field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub batch_size: Vec<usize>,
    pub n_layers: Vec<usize>,
    /// Width of the first hidden layer; deeper layers halve it.
    pub units: Vec<usize>,
    pub dropout: Vec<f64>,
    pub filters: Vec<usize>,
    pub kernel_size: Vec<usize>,
}

type Genome = [usize; 6];

impl SearchSpace {
    fn dims(&self) -> [usize; 6] {
        [
            self.batch_size.len(),
            self.n_layers.len(),
            self.units.len(),
            self.dropout.len(),
            self.filters.len(),
            self.kernel_size.len(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims().contains(&0) {
            return Err(Error::Config("empty search space: every field needs at least one value".into()));
        }
        if self.batch_size.contains(&0) || self.n_layers.contains(&0) || self.units.contains(&0) {
            return Err(Error::Config("batch sizes, layer counts and widths must be positive".into()));
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.dims().iter().product()
    }

    fn candidate(&self, g: &Genome) -> Candidate {
        Candidate {
            batch_size: self.batch_size[g[0]],
            n_layers: self.n_layers[g[1]],
            units: self.units[g[2]],
            dropout: self.dropout[g[3]],
            filters: self.filters[g[4]],
            kernel_size: self.kernel_size[g[5]],
        }
    }

    /// Every candidate, in lexicographic index order.
    pub fn all_candidates(&self) -> Vec<Candidate> {
        let dims = self.dims();
        let mut out = Vec::with_capacity(self.size());
        let mut g = [0usize; 6];
        if dims.contains(&0) {
            return out;
        }
        loop {
            out.push(self.candidate(&g));
            let mut i = 5;
            loop {
                g[i] += 1;
                if g[i] < dims[i] {
                    break;
                }
                g[i] = 0;
                if i == 0 {
                    return out;
                }
                i -= 1;
            }
        }
    }

    fn random(&self, rng: &mut impl Rng) -> Genome {
        let d = self.dims();
        std::array::from_fn(|i| rng.random_range(0..d[i]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub batch_size: usize,
    pub n_layers: usize,
    pub units: usize,
    pub dropout: f64,
    pub filters: usize,
    pub kernel_size: usize,
}

impl Candidate {
    /// Resolves the candidate against base settings.
    pub fn apply(&self, arch: &ArchConfig, train: &TrainConfig) -> (ArchConfig, TrainConfig) {
        let mut a = arch.clone();
        let widths: Vec<usize> = (0..self.n_layers).map(|i| (self.units >> i).max(1)).collect();
        match a.arch {
            ArchitectureId::Rnn | ArchitectureId::RnnSeq => a.lstm_units = widths,
            ArchitectureId::Fnn | ArchitectureId::FnnSeq => a.dense_units = widths,
            ArchitectureId::Cnn => {
                a.conv_filters = vec![self.filters; self.n_layers];
                a.conv_kernels = vec![self.kernel_size; self.n_layers];
            }
        }
        a.hidden_dropout = self.dropout;
        let t = TrainConfig {
            batch_size: self.batch_size,
            ..train.clone()
        };
        (a, t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub budget: usize,
    pub population: usize,
    /// Chance that the mutated field jumps to any other value instead of a
    /// neighbouring one.
    pub jump_prob: f64,
    /// Epochs at which median pruning is checked.
    pub prune_epochs: Vec<usize>,
    /// Completed reports needed at an epoch before pruning applies there.
    pub startup_trials: usize,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            budget: 20,
            population: 8,
            jump_prob: 0.3,
            prune_epochs: vec![2, 4, 8],
            startup_trials: 3,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub id: usize,
    pub generation: usize,
    pub candidate: Candidate,
    pub val_losses: Vec<f64>,
    /// Best validation loss reached.
    pub score: f64,
    pub pruned: bool,
    pub pruned_at: Option<usize>,
    /// The median and incumbent loss that triggered pruning.
    pub prune_reference: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: Candidate,
    pub best_score: f64,
    pub log: Vec<TrialResult>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Fully trains one candidate and returns its best validation loss.
pub fn evaluate_candidate(
    candidate: &Candidate,
    arch: &ArchConfig,
    train_cfg: &TrainConfig,
    train: &[Sequence],
    val: &[Sequence],
) -> Result<(f64, Vec<f64>)> {
    let (a, t) = candidate.apply(arch, train_cfg);
    let mut model = Model::new(a, t.seed)?;
    let report = model.fit(train, val, &t)?;
    Ok((report.best_val_loss, report.history.iter().map(|r| r.val_loss).collect()))
}

/// Evolutionary search with median pruning.
///
/// Each generation evaluates up to `population` unseen candidates by a
/// short fit. A running candidate is stopped at a check epoch when its
/// validation loss is above both the median of earlier reports at that
/// epoch and the incumbent's loss there, so the incumbent itself could
/// never have been pruned by the same rule. Children of the best quarter are
/// produced by uniform crossover followed by a perturbation of one field.
pub fn tune(
    space: &SearchSpace,
    arch: &ArchConfig,
    train_cfg: &TrainConfig,
    train: &[Sequence],
    val: &[Sequence],
    cfg: &TuneConfig,
) -> Result<TuneResult> {
    space.validate()?;
    if cfg.population == 0 || cfg.budget < cfg.population {
        return Err(Error::Config(format!(
            "budget {} must be at least the population {}",
            cfg.budget, cfg.population
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let budget = cfg.budget.min(space.size());
    let mut seen: BTreeSet<Genome> = BTreeSet::new();
    let mut log: Vec<TrialResult> = Vec::new();
    let mut genomes: Vec<Genome> = Vec::new();
    let mut generation = 0;

    let fresh = |rng: &mut ChaCha8Rng, seen: &BTreeSet<Genome>| -> Option<Genome> {
        for _ in 0..64 {
            let g = space.random(rng);
            if !seen.contains(&g) {
                return Some(g);
            }
        }
        space
            .all_candidates()
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let d = space.dims();
                let mut rest = i;
                let mut g = [0; 6];
                for k in (0..6).rev() {
                    g[k] = rest % d[k];
                    rest /= d[k];
                }
                g
            })
            .find(|g| !seen.contains(g))
    };

    while log.len() < budget {
        let slots = cfg.population.min(budget - log.len());
        let mut batch: Vec<Genome> = Vec::with_capacity(slots);
        let elite: Vec<Genome> = {
            let mut done: Vec<(f64, Genome)> = log
                .iter()
                .zip(&genomes)
                .filter(|(t, _)| !t.pruned)
                .map(|(t, g)| (t.score, *g))
                .collect();
            done.sort_by(|a, b| a.0.total_cmp(&b.0));
            let keep = (done.len() / 4).max(2).min(done.len());
            done.into_iter().take(keep).map(|(_, g)| g).collect()
        };
        while batch.len() < slots {
            let child = if generation == 0 || elite.len() < 2 {
                fresh(&mut rng, &seen)
            } else {
                let mut found = None;
                for _ in 0..32 {
                    let a = elite.choose(&mut rng).expect("elite");
                    let b = elite.choose(&mut rng).expect("elite");
                    let d = space.dims();
                    let mut g: Genome = std::array::from_fn(|i| if rng.random_bool(0.5) { a[i] } else { b[i] });
                    let open: Vec<usize> = (0..6).filter(|&i| d[i] > 1).collect();
                    if let Some(&i) = open.choose(&mut rng) {
                        g[i] = if rng.random_bool(cfg.jump_prob) {
                            (g[i] + rng.random_range(1..d[i])) % d[i]
                        } else if g[i] == 0 || (g[i] + 1 < d[i] && rng.random_bool(0.5)) {
                            g[i] + 1
                        } else {
                            g[i] - 1
                        };
                    }
                    if !seen.contains(&g) {
                        found = Some(g);
                        break;
                    }
                }
                found.or_else(|| fresh(&mut rng, &seen))
            };
            match child {
                Some(g) => {
                    seen.insert(g);
                    batch.push(g);
                }
                None => break,
            }
        }
        if batch.is_empty() {
            break;
        }
        for g in batch {
            let result = run_trial(space, &g, arch, train_cfg, train, val, cfg, &log, log.len(), generation)?;
            log.push(result);
            genomes.push(g);
        }
        generation += 1;
    }

    let best = log
        .iter()
        .filter(|t| !t.pruned)
        .min_by(|a, b| a.score.total_cmp(&b.score))
        .ok_or_else(|| Error::Data("every candidate was pruned".into()))?;
    Ok(TuneResult {
        best: best.candidate.clone(),
        best_score: best.score,
        log,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    space: &SearchSpace,
    g: &Genome,
    arch: &ArchConfig,
    train_cfg: &TrainConfig,
    train: &[Sequence],
    val: &[Sequence],
    cfg: &TuneConfig,
    log: &[TrialResult],
    id: usize,
    generation: usize,
) -> Result<TrialResult> {
    let candidate = space.candidate(g);
    let (a, t) = candidate.apply(arch, train_cfg);
    let mut model = Model::new(a, t.seed)?;
    let incumbent = log
        .iter()
        .filter(|r| !r.pruned)
        .min_by(|a, b| a.score.total_cmp(&b.score));
    let mut pruned_at = None;
    let mut reference = None;
    let report = model.fit_with(train, val, &t, |rec| {
        if !cfg.prune_epochs.contains(&rec.epoch) {
            return Control::Continue;
        }
        let mut at_e: Vec<f64> = log.iter().filter_map(|r| r.val_losses.get(rec.epoch - 1).copied()).collect();
        if at_e.len() < cfg.startup_trials.max(1) {
            return Control::Continue;
        }
        let Some(inc) = incumbent.and_then(|r| r.val_losses.get(rec.epoch - 1).copied()) else {
            return Control::Continue;
        };
        let med = median(&mut at_e);
        if rec.val_loss > med && rec.val_loss > inc {
            pruned_at = Some(rec.epoch);
            reference = Some((med, inc));
            Control::Stop
        } else {
            Control::Continue
        }
    })?;
    Ok(TrialResult {
        id,
        generation,
        candidate,
        val_losses: report.history.iter().map(|r| r.val_loss).collect(),
        score: report.best_val_loss,
        pruned: pruned_at.is_some(),
        pruned_at,
        prune_reference: reference,
    })
}
