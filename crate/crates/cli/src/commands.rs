use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use myosynth::dataset::{
    process_trials, read_processed, read_raw_dataset, read_signal_csv, tensor_signal, write_processed,
    write_raw_dataset, write_signal_csv, PreparedData,
};
use myosynth::evaluation::{render_table, ReportMeta, TableLayout, TableMetric};
use myosynth::models::{ArchitectureId, Model, OUTPUT_CHANNELS};
use myosynth::nn::{FitReport, Tensor};
use myosynth::regimes::{
    finetune, make_split, parse_trial_id, rep_roles, subject_split, train_general, train_subject_specific, tune,
    RegimeConfig, RegimeId, Role, SplitPlan,
};
use myosynth::signal::{InputConfig, SampledSignal, EMG_CHANNELS};
use myosynth::synthetic::{gen_dataset, GeneratorConfig};
use myosynth::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{default_space, CliConfig};
use crate::{Cli, Command};

const DEFAULT_TUNE_EPOCHS: usize = 16;

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a Command,
    config: &'a CliConfig,
    resolved: Value,
    inputs: Vec<String>,
    outputs: Vec<String>,
    seed: u64,
    version: &'static str,
    duration_s: f64,
}

struct Run<'a> {
    cli: &'a Cli,
    config: CliConfig,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl<'a> Run<'a> {
    fn out_dir(&self) -> Result<&Path> {
        let out = self
            .cli
            .out
            .as_deref()
            .ok_or_else(|| Error::Config("--out is required for this command".into()))?;
        for input in &self.inputs {
            if input.is_dir() && same_path(input, out) {
                return Err(Error::Config(format!("--out {} would overwrite an input", out.display())));
            }
        }
        fs::create_dir_all(out)?;
        Ok(out)
    }

    fn output(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.out_dir()?.join(name);
        self.outputs.push(p.clone());
        Ok(p)
    }

    fn input(&mut self, p: &Path) -> Result<()> {
        if !p.exists() {
            return Err(Error::Missing(format!("{}", p.display())));
        }
        self.inputs.push(p.to_path_buf());
        Ok(())
    }

    fn finish(self, resolved: Value) -> Result<()> {
        let out = self.out_dir()?.to_path_buf();
        let m = RunManifest {
            command: &self.cli.command,
            config: &self.config,
            resolved,
            inputs: self.inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            seed: self.cli.seed,
            version: env!("CARGO_PKG_VERSION"),
            duration_s: self.started.elapsed().as_secs_f64(),
        };
        write_atomic(&out.join("run_manifest.json"), serde_json::to_string_pretty(&m)?.as_bytes())
    }
}

fn same_path(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut run = Run {
        cli,
        config: CliConfig::load(cli.config.as_deref())?,
        started: Instant::now(),
        inputs: cli.config.iter().cloned().collect(),
        outputs: Vec::new(),
    };
    let resolved = match &cli.command {
        Command::Synth => synth(&mut run)?,
        Command::Preprocess { raw, input } => preprocess(&mut run, raw, input)?,
        Command::Train {
            data,
            arch,
            regime,
            subject,
        } => train(&mut run, data, arch, regime, subject.as_deref())?,
        Command::Finetune { data, weights, subject } => finetune_cmd(&mut run, data, weights, subject.as_deref())?,
        Command::Evaluate {
            data,
            weights,
            role,
            subject,
            layout,
            label,
        } => evaluate_cmd(&mut run, data, weights, role, subject.as_deref(), layout, label)?,
        Command::Predict {
            weights,
            features,
            online,
        } => predict(&mut run, weights, features, *online)?,
        Command::Tune { data, arch, budget } => tune_cmd(&mut run, data, arch, *budget)?,
        Command::Plotdata {
            prediction,
            target,
            data,
            weights,
            trial,
        } => plotdata(&mut run, prediction, target, data, weights, trial)?,
    };
    run.finish(resolved)
}

fn synth(run: &mut Run) -> Result<Value> {
    let cfg = GeneratorConfig {
        seed: run.cli.seed,
        ..run.config.generator.clone().unwrap_or_default()
    };
    let ds = gen_dataset(&cfg)?;
    let out = run.out_dir()?.to_path_buf();
    write_raw_dataset(&out, &ds.manifest, &ds.trials)?;
    run.outputs.push(out.join("manifest.json"));
    run.outputs.push(out.join("trials"));
    println!("wrote {} trials to {}", ds.trials.len(), out.display());
    Ok(json!({ "generator": cfg, "transforms": ds.transforms }))
}

fn preprocess(run: &mut Run, raw: &Path, input: &str) -> Result<Value> {
    run.input(raw)?;
    let input = InputConfig::parse(input)?;
    let pipeline = run.config.pipeline.clone().unwrap_or_default();
    let (manifest, trials) = read_raw_dataset(raw)?;
    let processed = process_trials(&trials, &pipeline)?;
    let held_out_motion = run.config.held_out_motion.clone().or_else(|| manifest.new_motion.clone());
    let scope = run.config.norm_scope.unwrap_or_default();
    let data = PreparedData::prepare(&manifest, &processed, input, scope, run.cli.seed, held_out_motion.as_deref())?;
    let out = run.out_dir()?.to_path_buf();
    write_processed(&out, &data, &pipeline)?;
    run.outputs.push(out.join("manifest.json"));
    run.outputs.push(out.join("features"));
    run.outputs.push(out.join("targets"));
    println!("processed {} trials ({} features) into {}", data.all().len(), data.feature_width(), out.display());
    Ok(json!({ "input": input, "pipeline": pipeline, "norm_scope": scope, "split_seed": run.cli.seed, "held_out_motion": held_out_motion }))
}

fn load_data(run: &mut Run, dir: &Path) -> Result<PreparedData> {
    run.input(dir)?;
    Ok(read_processed(dir)?.1)
}

fn held_out_subject(run: &Run, data: &PreparedData) -> Option<String> {
    run.config
        .held_out_subject
        .clone()
        .or_else(|| data.manifest.held_out_subject.clone())
}

fn pick_subject(run: &Run, data: &PreparedData, flag: Option<&str>) -> Result<String> {
    flag.map(str::to_string)
        .or_else(|| run.config.subject.clone())
        .or_else(|| held_out_subject(run, data))
        .ok_or_else(|| Error::Config("no subject given and the dataset has no held-out subject".into()))
}

fn general_plan(run: &Run, data: &PreparedData) -> Result<SplitPlan> {
    make_split(
        &data.manifest,
        held_out_subject(run, data).as_deref(),
        data.held_out_motion.as_deref(),
        data.split_seed,
    )
}

fn regime_config(run: &Run, model_arch: myosynth::models::ArchConfig) -> Result<RegimeConfig> {
    let mut rc = RegimeConfig::new(model_arch, run.cli.seed)?;
    run.config.apply_train(&mut rc.train);
    if let Some(f) = run.config.finetune_lr_factor {
        rc.finetune_lr_factor = f;
    }
    rc.train.validate()?;
    Ok(rc)
}

fn normalization_ref(data: &PreparedData) -> String {
    format!(
        "input={};scope={:?};split_seed={}",
        data.input.name(),
        data.norm_scope,
        data.split_seed
    )
}

fn save_model(run: &mut Run, name: &str, model: &Model, data: &PreparedData, regime: RegimeId, subject: Option<&str>) -> Result<PathBuf> {
    let path = run.output(name)?;
    let mut h = model.header(run.cli.seed)?;
    h.normalization_ref = Some(normalization_ref(data));
    h.extra["regime"] = json!(regime.name());
    h.extra["input"] = json!(data.input.name());
    if let Some(s) = subject {
        h.extra["subject"] = json!(s);
    }
    model.save_header(&path, &h)?;
    Ok(path)
}

fn write_history(path: &Path, phases: &[(&str, &FitReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["phase", "epoch", "train_loss", "val_loss"])?;
    for (phase, report) in phases {
        for r in &report.history {
            w.write_record([phase.to_string(), r.epoch.to_string(), r.train_loss.to_string(), r.val_loss.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn train(run: &mut Run, data_dir: &Path, arch: &str, regime: &str, subject: Option<&str>) -> Result<Value> {
    let data = load_data(run, data_dir)?;
    let arch = ArchitectureId::parse(arch)?;
    let regime = RegimeId::parse(regime)?;
    let rc = regime_config(run, run.config.arch_config(arch, data.feature_width())?)?;
    let gplan = general_plan(run, &data)?;
    let mut plans = json!({});
    let (model, phases, subject) = match regime {
        RegimeId::General => {
            let (m, r) = train_general(&data, &gplan, &rc)?;
            plans["general"] = json!(gplan);
            (m, vec![("general", r)], None)
        }
        RegimeId::SubjectSpecific => {
            let s = pick_subject(run, &data, subject)?;
            let splan = subject_split(&data.manifest, &s, data.held_out_motion.as_deref(), data.split_seed)?;
            let (m, r) = train_subject_specific(&data, &splan, &rc)?;
            plans["subject"] = json!(splan);
            (m, vec![("subject", r)], Some(s))
        }
        RegimeId::Pretrain => {
            let s = pick_subject(run, &data, subject)?;
            let splan = subject_split(&data.manifest, &s, data.held_out_motion.as_deref(), data.split_seed)?;
            let (g, gr) = train_general(&data, &gplan, &rc)?;
            save_model(run, "general_weights.json", &g, &data, RegimeId::General, None)?;
            let (m, r) = finetune(&g, &data, &splan, &rc)?;
            plans["general"] = json!(gplan);
            plans["subject"] = json!(splan);
            (m, vec![("general", gr), ("finetune", r)], Some(s))
        }
    };
    save_model(run, "weights.json", &model, &data, regime, subject.as_deref())?;
    let hist = run.output("history.csv")?;
    write_history(&hist, &phases.iter().map(|(p, r)| (*p, r)).collect::<Vec<_>>())?;
    let split = run.output("split.json")?;
    write_atomic(&split, serde_json::to_string_pretty(&plans)?.as_bytes())?;
    let last = &phases.last().expect("one phase").1;
    println!(
        "{} {}: {} epochs, best val loss {:.6e} at epoch {}",
        arch.label(),
        regime.name(),
        last.history.len(),
        last.best_val_loss,
        last.best_epoch
    );
    Ok(json!({ "arch": rc.arch, "train": rc.train, "regime": regime, "subject": subject, "finetune_lr_factor": rc.finetune_lr_factor }))
}

fn load_model(run: &mut Run, path: &Path, data: Option<&PreparedData>) -> Result<(Model, myosynth::nn::WeightHeader)> {
    run.input(path)?;
    let (model, header) = Model::load(path)?;
    if let (Some(d), Some(input)) = (data, header.extra.get("input").and_then(Value::as_str)) {
        if input != d.input.name() {
            return Err(Error::Config(format!(
                "{} was trained on {input} features, the dataset holds {}",
                path.display(),
                d.input.name()
            )));
        }
    }
    Ok((model, header))
}

fn finetune_cmd(run: &mut Run, data_dir: &Path, weights: &Path, subject: Option<&str>) -> Result<Value> {
    let data = load_data(run, data_dir)?;
    let (general, _) = load_model(run, weights, Some(&data))?;
    let s = pick_subject(run, &data, subject)?;
    let splan = subject_split(&data.manifest, &s, data.held_out_motion.as_deref(), data.split_seed)?;
    let rc = regime_config(run, general.config().clone())?;
    let (model, report) = finetune(&general, &data, &splan, &rc)?;
    save_model(run, "weights.json", &model, &data, RegimeId::Pretrain, Some(&s))?;
    let hist = run.output("history.csv")?;
    write_history(&hist, &[("finetune", &report)])?;
    println!("fine-tuned on {s}: best val loss {:.6e} at epoch {}", report.best_val_loss, report.best_epoch);
    Ok(json!({ "subject": s, "train": rc.train, "finetune_lr_factor": rc.finetune_lr_factor }))
}

/// Trial ids of `role` (`train`, `val`, `test`, `new-motion` or `all`),
/// optionally restricted to one subject.
fn select_trials(data: &PreparedData, role: &str, subject: Option<&str>) -> Result<Vec<String>> {
    let role = role.to_ascii_lowercase().replace('_', "-");
    let wanted = match role.as_str() {
        "all" | "new-motion" => None,
        other => Some(Role::parse(other)?),
    };
    let mut ids = Vec::new();
    for seq in data.all() {
        let (s, m, rep) = parse_trial_id(&seq.trial_id)?;
        if subject.is_some_and(|x| x != s) {
            continue;
        }
        let is_new = data.held_out_motion.as_deref() == Some(m.as_str());
        let keep = match (role.as_str(), wanted) {
            ("all", _) => true,
            ("new-motion", _) => is_new,
            (_, Some(r)) => !is_new && rep_roles(data.split_seed, &s, &m).get(&rep) == Some(&r),
            _ => false,
        };
        if keep {
            ids.push(seq.trial_id.clone());
        }
    }
    if ids.is_empty() {
        return Err(Error::Data(format!("no trials with role {role}")));
    }
    Ok(ids)
}

fn evaluate_cmd(
    run: &mut Run,
    data_dir: &Path,
    weights: &[PathBuf],
    role: &str,
    subject: Option<&str>,
    layout: &str,
    labels: &[String],
) -> Result<Value> {
    let data = load_data(run, data_dir)?;
    let layout = TableLayout::parse(layout)?;
    if !labels.is_empty() && labels.len() != weights.len() {
        return Err(Error::Config("give one --label per --weights or none".into()));
    }
    let ids = select_trials(&data, role, subject)?;
    let seqs = data.sequences(&ids)?;
    let aggregation = run.config.evaluate.aggregation.unwrap_or_default();
    let metric = run.config.evaluate.metric.unwrap_or(TableMetric::Z);
    let mut reports = Vec::new();
    for (i, w) in weights.iter().enumerate() {
        let (model, header) = load_model(run, w, Some(&data))?;
        let meta = ReportMeta {
            arch: model.config().arch.label().to_string(),
            regime: header.extra.get("regime").and_then(Value::as_str).unwrap_or("").to_string(),
            input: data.input.name().to_string(),
            split_role: role.to_string(),
            label: labels.get(i).cloned().unwrap_or_default(),
        };
        reports.push(myosynth::evaluation::evaluate(&model, &seqs, meta, aggregation)?);
    }
    let table = render_table(&reports, layout, metric)?;
    let p = run.output("report.json")?;
    write_atomic(&p, serde_json::to_string_pretty(&reports)?.as_bytes())?;
    let p = run.output("table.csv")?;
    write_atomic(&p, table.csv.as_bytes())?;
    let p = run.output("table.txt")?;
    write_atomic(&p, table.text.as_bytes())?;
    print!("{}", table.text);
    Ok(json!({ "role": role, "subject": subject, "trials": ids, "aggregation": aggregation, "metric": metric }))
}

fn rate(run: &Run) -> f64 {
    run.config.pipeline.clone().unwrap_or_default().motion_rate_hz
}

fn emg_names() -> Vec<String> {
    EMG_CHANNELS.iter().map(|s| s.to_string()).collect()
}

fn signal_tensor(s: &SampledSignal) -> Result<Tensor> {
    Ok(Tensor::from_vec(&[s.len(), s.channels()], s.samples().to_vec())?)
}

fn predict(run: &mut Run, weights: &Path, features: &Path, online: bool) -> Result<Value> {
    let (model, _) = load_model(run, weights, None)?;
    run.input(features)?;
    let f = read_signal_csv(features, rate(run))?;
    let x = signal_tensor(&f)?;
    let y = if online { model.predict_online(&x)? } else { model.predict(&x)? };
    let p = run.output("prediction.csv")?;
    write_signal_csv(&p, &tensor_signal(&y, &emg_names(), f.rate_hz())?)?;
    println!("predicted {} steps into {}", y.rows(), p.display());
    Ok(json!({ "online": online, "rate_hz": f.rate_hz() }))
}

fn tune_cmd(run: &mut Run, data_dir: &Path, arch: &str, budget: Option<usize>) -> Result<Value> {
    let data = load_data(run, data_dir)?;
    let arch = ArchitectureId::parse(arch)?;
    let base_arch = run.config.arch_config(arch, data.feature_width())?;
    let mut rc = regime_config(run, base_arch.clone())?;
    if run.config.train.max_epochs.is_none() {
        rc.train.max_epochs = run.config.tune.max_epochs.unwrap_or(DEFAULT_TUNE_EPOCHS);
    }
    let plan = general_plan(run, &data)?;
    let space = run.config.tune.space.clone().unwrap_or_else(|| default_space(arch));
    let mut tc = run.config.tune_config(run.cli.seed);
    if let Some(b) = budget {
        tc.budget = b;
    }
    let result = tune(
        &space,
        &base_arch,
        &rc.train,
        &data.sequences(&plan.train)?,
        &data.sequences(&plan.val)?,
        &tc,
    )?;
    let (best_arch, best_train) = result.best.apply(&base_arch, &rc.train);
    let p = run.output("best_config.json")?;
    let best = json!({ "candidate": result.best, "arch": best_arch, "train": best_train, "val_loss": result.best_score });
    write_atomic(&p, serde_json::to_string_pretty(&best)?.as_bytes())?;
    let p = run.output("trials.csv")?;
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record([
        "id", "generation", "batch_size", "n_layers", "units", "dropout", "filters", "kernel_size", "epochs", "score",
        "pruned_at",
    ])?;
    for t in &result.log {
        let c = &t.candidate;
        w.write_record([
            t.id.to_string(),
            t.generation.to_string(),
            c.batch_size.to_string(),
            c.n_layers.to_string(),
            c.units.to_string(),
            c.dropout.to_string(),
            c.filters.to_string(),
            c.kernel_size.to_string(),
            t.val_losses.len().to_string(),
            t.score.to_string(),
            t.pruned_at.map(|e| e.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    println!("best of {} trials: val loss {:.6e}, {:?}", result.log.len(), result.best_score, result.best);
    Ok(json!({ "space": space, "tune": tc, "base_arch": base_arch, "base_train": rc.train }))
}

fn plotdata(
    run: &mut Run,
    prediction: &Option<PathBuf>,
    target: &Option<PathBuf>,
    data: &Option<PathBuf>,
    weights: &Option<PathBuf>,
    trial: &Option<String>,
) -> Result<Value> {
    let r = rate(run);
    let (pred, orig) = match (prediction, target, data, weights, trial) {
        (Some(p), Some(t), None, None, None) => {
            run.input(p)?;
            run.input(t)?;
            (read_signal_csv(p, r)?, read_signal_csv(t, r)?)
        }
        (None, None, Some(d), Some(w), Some(id)) => {
            let data = load_data(run, d)?;
            let (model, _) = load_model(run, w, Some(&data))?;
            let seq = data.get(id)?;
            let y = model.predict(&seq.features)?;
            (tensor_signal(&y, &emg_names(), r)?, tensor_signal(&seq.targets, &emg_names(), r)?)
        }
        _ => {
            return Err(Error::Config(
                "plotdata needs either --prediction and --target, or --data, --weights and --trial".into(),
            ))
        }
    };
    if pred.len() != orig.len() || pred.channels() != orig.channels() || pred.channels() != OUTPUT_CHANNELS {
        return Err(Error::Data(format!(
            "prediction is {}×{}, target is {}×{}",
            pred.len(),
            pred.channels(),
            orig.len(),
            orig.channels()
        )));
    }
    let p = run.output("plot.csv")?;
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record(["time", "channel", "original", "predicted"])?;
    for c in 0..orig.channels() {
        for t in 0..orig.len() {
            w.write_record([
                orig.timestamp(t).to_string(),
                orig.channel_names()[c].clone(),
                orig.get(t, c).to_string(),
                pred.get(t, c).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(json!({ "rate_hz": r, "trial": trial }))
}
