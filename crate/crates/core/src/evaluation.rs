//! Mean squared error, the error of the all-zero prediction, the zero-line
//! score `Z = 100 · (1 − MSE / MSE₀)`, and table-shaped reports.

use std::fmt::Write as _;

use myosynth_nn::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Model, Sequence};
use crate::signal::EMG_CHANNELS;

pub const REPORT_VERSION: u32 = 1;

fn check_pair(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() || pred.shape().len() != 2 {
        return Err(Error::Data(format!(
            "prediction {:?} and target {:?} must be equal [n × channels] matrices",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.rows() == 0 {
        return Err(Error::Data("no samples to score".into()));
    }
    Ok(())
}

fn channel_sums(pred: Option<&Tensor>, target: &Tensor) -> Vec<f64> {
    let c = target.cols();
    let mut sums = vec![0.0; c];
    for t in 0..target.rows() {
        let y = target.row(t);
        for ch in 0..c {
            let p = pred.map_or(0.0, |p| p.row(t)[ch]);
            sums[ch] += (y[ch] - p) * (y[ch] - p);
        }
    }
    sums
}

/// Per-channel mean squared error over the rows of `[n × channels]`.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<Vec<f64>> {
    check_pair(pred, target)?;
    let n = target.rows() as f64;
    Ok(channel_sums(Some(pred), target).into_iter().map(|s| s / n).collect())
}

/// Per-channel mean squared target, the error of predicting zero.
pub fn mse_zero(target: &Tensor) -> Result<Vec<f64>> {
    check_pair(target, target)?;
    let n = target.rows() as f64;
    Ok(channel_sums(None, target).into_iter().map(|s| s / n).collect())
}

/// Zero-line score of one channel; `None` when the target is identically
/// zero.
pub fn z_value(mse: f64, mse0: f64) -> Option<f64> {
    (mse0 > 0.0).then(|| 100.0 * (1.0 - mse / mse0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScores {
    pub per_channel: Vec<Option<f64>>,
    /// Mean of the scorable channels.
    pub average: Option<f64>,
    pub unscorable: Vec<usize>,
}

pub fn z_score(pred: &Tensor, target: &Tensor) -> Result<ZScores> {
    let m = mse(pred, target)?;
    let m0 = mse_zero(target)?;
    let per_channel: Vec<Option<f64>> = m.iter().zip(&m0).map(|(a, b)| z_value(*a, *b)).collect();
    Ok(ZScores {
        average: mean_defined(&per_channel),
        unscorable: per_channel.iter().enumerate().filter(|(_, z)| z.is_none()).map(|(i, _)| i).collect(),
        per_channel,
    })
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// How trial-level errors are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Concatenate every trial, then score once.
    #[default]
    Concatenate,
    /// Score each trial, then average the per-trial values.
    PerTrial,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub arch: String,
    pub regime: String,
    pub input: String,
    pub split_role: String,
    #[serde(default)]
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub version: u32,
    pub meta: ReportMeta,
    pub aggregation: Aggregation,
    pub channel_names: Vec<String>,
    pub mse: Vec<f64>,
    pub mse0: Vec<f64>,
    pub z: Vec<Option<f64>>,
    pub unscorable: Vec<String>,
    /// Mean of the scorable per-channel Z values.
    pub average_z: Option<f64>,
    /// `100 · (1 − Σ mse / Σ mse₀)` over scorable channels, weighting each
    /// channel by its signal energy.
    pub pooled_z: Option<f64>,
    /// Mean of the per-channel MSE values.
    pub average_mse: f64,
    pub n_trials: usize,
    pub n_samples: usize,
}

impl EvaluationReport {
    pub fn from_predictions(
        preds: &[Tensor],
        targets: &[Tensor],
        meta: ReportMeta,
        aggregation: Aggregation,
    ) -> Result<Self> {
        if preds.is_empty() || preds.len() != targets.len() {
            return Err(Error::Data("need one prediction per target and at least one trial".into()));
        }
        for (p, t) in preds.iter().zip(targets) {
            check_pair(p, t)?;
        }
        let channels = targets[0].cols();
        if targets.iter().any(|t| t.cols() != channels) {
            return Err(Error::Data("trials differ in channel count".into()));
        }
        let n_samples = targets.iter().map(Tensor::rows).sum();
        let (mse_v, mse0_v, z) = match aggregation {
            Aggregation::Concatenate => {
                let mut sum = vec![0.0; channels];
                let mut sum0 = vec![0.0; channels];
                for (p, t) in preds.iter().zip(targets) {
                    for (a, b) in sum.iter_mut().zip(channel_sums(Some(p), t)) {
                        *a += b;
                    }
                    for (a, b) in sum0.iter_mut().zip(channel_sums(None, t)) {
                        *a += b;
                    }
                }
                let m: Vec<f64> = sum.iter().map(|s| s / n_samples as f64).collect();
                let m0: Vec<f64> = sum0.iter().map(|s| s / n_samples as f64).collect();
                let z = m.iter().zip(&m0).map(|(a, b)| z_value(*a, *b)).collect();
                (m, m0, z)
            }
            Aggregation::PerTrial => {
                let k = preds.len() as f64;
                let mut m = vec![0.0; channels];
                let mut m0 = vec![0.0; channels];
                let mut zs: Vec<Vec<f64>> = vec![Vec::new(); channels];
                for (p, t) in preds.iter().zip(targets) {
                    let a = mse(p, t)?;
                    let b = mse_zero(t)?;
                    for c in 0..channels {
                        m[c] += a[c] / k;
                        m0[c] += b[c] / k;
                        if let Some(v) = z_value(a[c], b[c]) {
                            zs[c].push(v);
                        }
                    }
                }
                let z = zs
                    .iter()
                    .map(|v| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64))
                    .collect();
                (m, m0, z)
            }
        };
        Ok(Self::assemble(meta, aggregation, mse_v, mse0_v, z, preds.len(), n_samples))
    }

    fn assemble(
        meta: ReportMeta,
        aggregation: Aggregation,
        mse: Vec<f64>,
        mse0: Vec<f64>,
        z: Vec<Option<f64>>,
        n_trials: usize,
        n_samples: usize,
    ) -> Self {
        let channel_names: Vec<String> = if mse.len() == EMG_CHANNELS.len() {
            EMG_CHANNELS.iter().map(|s| s.to_string()).collect()
        } else {
            (0..mse.len()).map(|i| format!("ch{i}")).collect()
        };
        let scorable: Vec<usize> = (0..mse.len()).filter(|&c| z[c].is_some()).collect();
        let (s, s0) = scorable.iter().fold((0.0, 0.0), |(a, b), &c| (a + mse[c], b + mse0[c]));
        Self {
            version: REPORT_VERSION,
            meta,
            aggregation,
            unscorable: (0..mse.len()).filter(|&c| z[c].is_none()).map(|c| channel_names[c].clone()).collect(),
            channel_names,
            average_z: mean_defined(&z),
            pooled_z: z_value(s, s0),
            average_mse: mse.iter().sum::<f64>() / mse.len() as f64,
            mse,
            mse0,
            z,
            n_trials,
            n_samples,
        }
    }
}

/// Predicts every sequence with `model` and scores the split.
pub fn evaluate(
    model: &Model,
    sequences: &[Sequence],
    meta: ReportMeta,
    aggregation: Aggregation,
) -> Result<EvaluationReport> {
    let preds = sequences
        .iter()
        .map(|s| model.predict(&s.features))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<Tensor> = sequences.iter().map(|s| s.targets.clone()).collect();
    EvaluationReport::from_predictions(&preds, &targets, meta, aggregation)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableLayout {
    /// One row per report (architecture), one column per channel plus the
    /// average.
    ArchitecturesByChannels,
    /// One column per report (regime), one row per channel plus the
    /// average.
    Regimes,
    /// One column per report (input variant), rows as for `Regimes`.
    InputVariants,
}

impl TableLayout {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "architectures" | "architectures_by_channels" | "arch" => Ok(Self::ArchitecturesByChannels),
            "regimes" | "regime" => Ok(Self::Regimes),
            "inputs" | "input_variants" | "input" => Ok(Self::InputVariants),
            _ => Err(Error::Config(format!("unknown table layout {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableMetric {
    Z,
    Mse,
}

/// CSV text and an aligned plain-text rendering of the same table.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedTable {
    pub csv: String,
    pub text: String,
}

fn report_label(r: &EvaluationReport, layout: TableLayout) -> String {
    if !r.meta.label.is_empty() {
        return r.meta.label.clone();
    }
    match layout {
        TableLayout::ArchitecturesByChannels => r.meta.arch.clone(),
        TableLayout::Regimes => r.meta.regime.clone(),
        TableLayout::InputVariants => r.meta.input.clone(),
    }
}

fn cell(v: Option<f64>, metric: TableMetric) -> String {
    match (v, metric) {
        (None, _) => "n/a".into(),
        (Some(x), TableMetric::Z) => format!("{x:.2}"),
        (Some(x), TableMetric::Mse) => format!("{x:.5}"),
    }
}

pub fn render_table(reports: &[EvaluationReport], layout: TableLayout, metric: TableMetric) -> Result<RenderedTable> {
    let first = reports.first().ok_or_else(|| Error::Data("no reports to render".into()))?;
    if reports.iter().any(|r| r.channel_names != first.channel_names) {
        return Err(Error::Data("reports cover different channels".into()));
    }
    let values = |r: &EvaluationReport| -> Vec<Option<f64>> {
        let mut v: Vec<Option<f64>> = match metric {
            TableMetric::Z => r.z.clone(),
            TableMetric::Mse => r.mse.iter().map(|m| Some(*m)).collect(),
        };
        v.push(match metric {
            TableMetric::Z => r.average_z,
            TableMetric::Mse => Some(r.average_mse),
        });
        v
    };
    let mut row_names: Vec<String> = first.channel_names.clone();
    row_names.push("average".into());
    let labels: Vec<String> = reports.iter().map(|r| report_label(r, layout)).collect();

    let grid: Vec<Vec<String>> = match layout {
        TableLayout::ArchitecturesByChannels => {
            let mut g = vec![std::iter::once(String::new()).chain(row_names.iter().cloned()).collect()];
            for (r, l) in reports.iter().zip(&labels) {
                g.push(std::iter::once(l.clone()).chain(values(r).into_iter().map(|v| cell(v, metric))).collect());
            }
            g
        }
        TableLayout::Regimes | TableLayout::InputVariants => {
            let cols: Vec<Vec<Option<f64>>> = reports.iter().map(values).collect();
            let mut g = vec![std::iter::once(String::new()).chain(labels.iter().cloned()).collect()];
            for (i, name) in row_names.iter().enumerate() {
                g.push(std::iter::once(name.clone()).chain(cols.iter().map(|c| cell(c[i], metric))).collect());
            }
            g
        }
    };

    let mut wtr = csv::Writer::from_writer(Vec::new());
    for row in &grid {
        wtr.write_record(row)?;
    }
    let csv = String::from_utf8(wtr.into_inner().map_err(|e| Error::Data(e.to_string()))?)
        .map_err(|e| Error::Data(e.to_string()))?;

    let ncols = grid[0].len();
    let widths: Vec<usize> = (0..ncols)
        .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    for (i, row) in grid.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        let _ = writeln!(text, "{}", line.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(text, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (ncols - 1)));
        }
    }
    Ok(RenderedTable { csv, text })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        Tensor::from_vec(&[rows, cols], data).unwrap()
    }

    #[test]
    fn mse_examples() {
        let y = t(3, 1, vec![0.0; 3]);
        let p = t(3, 1, vec![0.1; 3]);
        assert!((mse(&p, &y).unwrap()[0] - 0.01).abs() < 1e-15);
        assert_eq!(mse(&y, &y).unwrap(), vec![0.0]);
        assert_eq!(mse_zero(&t(2, 1, vec![0.5, 0.5])).unwrap(), vec![0.25]);
        assert_eq!(mse_zero(&y).unwrap(), vec![0.0]);
    }

    #[test]
    fn z_identities() {
        let y = t(4, 2, vec![0.2, 0.0, 0.5, 0.0, 0.9, 0.0, 0.1, 0.0]);
        let scale = |k: f64| t(4, 2, y.data().iter().map(|v| v * k).collect());
        let z = z_score(&y, &y).unwrap();
        assert_eq!(z.per_channel[0], Some(100.0));
        assert_eq!(z.per_channel[1], None);
        assert_eq!(z.unscorable, vec![1]);
        assert_eq!(z.average, Some(100.0));
        assert_eq!(z_score(&scale(0.0), &y).unwrap().per_channel[0], Some(0.0));
        assert!((z_score(&scale(3.0), &y).unwrap().per_channel[0].unwrap() + 300.0).abs() < 1e-9);
    }

    #[test]
    fn per_trial_and_concatenated_agree_on_one_trial() {
        let y = t(3, 2, vec![0.1, 0.4, 0.3, 0.2, 0.5, 0.1]);
        let p = t(3, 2, vec![0.2, 0.3, 0.3, 0.1, 0.4, 0.2]);
        let a = EvaluationReport::from_predictions(&[p.clone()], &[y.clone()], ReportMeta::default(), Aggregation::Concatenate)
            .unwrap();
        let b = EvaluationReport::from_predictions(&[p], &[y], ReportMeta::default(), Aggregation::PerTrial).unwrap();
        for (x, w) in a.z.iter().zip(&b.z) {
            assert!((x.unwrap() - w.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn table_layouts() {
        let y = t(2, 8, (0..16).map(|i| 0.1 + i as f64 / 20.0).collect());
        let mk = |arch: &str, regime: &str| {
            EvaluationReport::from_predictions(
                &[y.clone()],
                &[y.clone()],
                ReportMeta {
                    arch: arch.into(),
                    regime: regime.into(),
                    ..ReportMeta::default()
                },
                Aggregation::Concatenate,
            )
            .unwrap()
        };
        let reports = [mk("RNN", "general"), mk("FNN", "pretrain")];
        let arch = render_table(&reports, TableLayout::ArchitecturesByChannels, TableMetric::Z).unwrap();
        assert_eq!(arch.csv.lines().count(), 3);
        assert!(arch.csv.lines().nth(1).unwrap().starts_with("RNN,100.00"));
        assert_eq!(arch.csv.lines().next().unwrap().split(',').count(), 10);
        let reg = render_table(&reports, TableLayout::Regimes, TableMetric::Z).unwrap();
        assert_eq!(reg.csv.lines().next().unwrap(), ",general,pretrain");
        assert_eq!(reg.csv.lines().count(), 10);
        assert!(reg.text.contains("average"));
    }
}
