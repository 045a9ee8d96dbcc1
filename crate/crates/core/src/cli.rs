//! Command-line front end: `prepare`, `train`, `eval`, `predict`, `complexity`, `plot`.
//!
//! Hyperparameters resolve in this order, later sources winning: dataset
//! defaults, `--config` file (JSON object with flat dotted keys such as
//! `"model.temporal_dim"`), `--set key=value`, dedicated flags.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use crate::config::Modulation;
use crate::data::{
    load_ethucy, load_sdd, read_cache, sdd_split, validation_split, write_cache, CacheHeader, DatasetKind,
    ObservationWindow,
};
use crate::error::{Error, Result};
use crate::eval::{complexity_report, window_errors, MetricsReport};
use crate::interchange::{evaluate_records, read_predictions, write_predictions, PredictionRecord};
use crate::model::{Model, Predictor};
use crate::plot::{plot_records, PlotSelection};
use crate::train::{Checkpoint, TrainConfig, Trainer, METRICS_HEADER};

#[derive(Debug, Parser)]
#[command(name = "trajcast", version, about = "Multi-agent trajectory forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse raw annotations into a window cache.
    Prepare(PrepareArgs),
    /// Train a model; writes checkpoints and a metrics log.
    Train(TrainArgs),
    /// Best-of-K ADE/FDE from checkpoints or prediction files.
    Eval(EvalArgs),
    /// Write predictions as JSON lines.
    Predict(PredictArgs),
    /// Parameter and FLOP counts.
    Complexity(ComplexityArgs),
    /// Render predictions as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory for every artifact.
    #[arg(long, env = "TRAJCAST_OUT", default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Dataset family [default: ethucy].
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetKind>,
    /// JSON file of flat dotted keys, e.g. {"model.temporal_dim": 64}.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key; the value is parsed as JSON, else taken as a string.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// ETH/UCY test scene: eth, hotel, univ, zara1 or zara2.
    #[arg(long)]
    pub holdout: Option<String>,
    /// RNG seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: 300 for ETH/UCY, 200 for SDD]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 32 for ETH/UCY, 128 for SDD]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial learning rate [default: 5e-4].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Neighbor radius [default: 10 m for ETH/UCY, 200 px for SDD].
    #[arg(long)]
    pub max_dist: Option<f64>,
    /// Replace the patched temporal encoder by a flat MLP.
    #[arg(long)]
    pub no_patch: bool,
    /// Give every agent the isolated social vector.
    #[arg(long)]
    pub no_social: bool,
    /// Feed the raw displacement vector to the edge MLP as well.
    #[arg(long)]
    pub edge_raw_vector: bool,
    /// Modality cross-attention [default: softmax].
    #[arg(long, value_enum)]
    pub modulation: Option<Modulation>,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long, value_enum, default_value_t = DatasetKind::Ethucy)]
    pub dataset: DatasetKind,
    /// Raw dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub max_dist: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Raw dataset directory or a cache written by `prepare`.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Continue from a checkpoint; its stored config is used as is.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop after this many epochs in this invocation.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint to evaluate on its test split; repeat to merge holdouts into one table.
    #[arg(long = "checkpoint", conflicts_with = "from_predictions")]
    pub checkpoints: Vec<PathBuf>,
    /// Dataset directory or cache; required with `--checkpoint`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Test scene override for a single checkpoint.
    #[arg(long)]
    pub holdout: Option<String>,
    /// Prediction JSON-lines file; repeatable.
    #[arg(long = "from-predictions")]
    pub from_predictions: Vec<PathBuf>,
    /// Take FDE at the modality that minimizes ADE instead of an independent minimum.
    #[arg(long)]
    pub joint_min: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub holdout: Option<String>,
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    pub split: SplitChoice,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ComplexityArgs {
    /// Report on a trained checkpoint instead of a freshly configured model.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub scene: Option<String>,
    #[arg(long)]
    pub agent: Option<i64>,
    /// Maximum number of files.
    #[arg(long)]
    pub limit: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Parse `argv` (program name first), run, and return the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Prepare(a) => prepare(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Complexity(a) => complexity(a),
        Command::Plot(a) => plot(a),
    }
}

fn flatten_into(prefix: &str, value: &Value, out: &mut Vec<(String, Value)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_into(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.clone())),
    }
}

/// Set `dotted.key = value` in `base`; the key must already exist.
pub fn set_dotted(base: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = base;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("`{key}`: `{}` is not a section", parts[..i].join("."))))?;
        let slot = map.get_mut(*part).ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    unreachable!("split yields at least one part")
}

fn parse_set(raw: &str) -> Result<(String, Value)> {
    let (k, v) = raw
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("`--set {raw}` is not of the form key=value")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

impl ConfigArgs {
    /// Defaults, then file, then `--set`, then flags.
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut pairs = Vec::new();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)?;
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Format { path: path.clone(), message: e.to_string() })?;
            if !value.is_object() {
                return Err(Error::Format { path: path.clone(), message: "expected a JSON object".into() });
            }
            flatten_into("", &value, &mut pairs);
        }
        for raw in &self.set {
            pairs.push(parse_set(raw)?);
        }
        let dataset = match self.dataset {
            Some(d) => d,
            None => match pairs.iter().rev().find(|(k, _)| k == "dataset") {
                Some((_, v)) => serde_json::from_value(v.clone())
                    .map_err(|e| Error::Config(format!("dataset: {e}")))?,
                None => DatasetKind::Ethucy,
            },
        };
        let mut value = serde_json::to_value(TrainConfig::for_dataset(dataset))?;
        for (k, v) in pairs {
            set_dotted(&mut value, &k, v)?;
        }
        let mut cfg: TrainConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.dataset = dataset;
        if let Some(h) = &self.holdout {
            cfg.test_scene = Some(h.to_ascii_lowercase());
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.lr {
            cfg.lr0 = v;
        }
        if let Some(v) = self.max_dist {
            cfg.max_dist = v;
        }
        cfg.model.no_patch |= self.no_patch;
        cfg.model.no_social |= self.no_social;
        cfg.model.edge_raw_vector |= self.edge_raw_vector;
        if let Some(m) = self.modulation {
            cfg.model.modulation = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Windows grouped by scene with the digest of their source data.
pub struct LoadedData {
    pub scenes: BTreeMap<String, Vec<ObservationWindow>>,
    pub data_hash: String,
}

fn cache_key(dataset: DatasetKind, params: &crate::data::WindowParams, data_hash: &str) -> Value {
    json!({ "dataset": dataset, "window_params": params, "data_hash": data_hash })
}

fn not_found(path: &Path) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, format!("data path {} does not exist", path.display())))
}

/// Load raw annotations or a `prepare` cache with the windowing implied by `cfg`.
pub fn load_data(path: &Path, cfg: &TrainConfig) -> Result<LoadedData> {
    let params = cfg.window_params();
    if path.is_file() {
        let first = BufReader::new(File::open(path)?)
            .lines()
            .next()
            .ok_or_else(|| Error::Format { path: path.into(), message: "empty cache".into() })??;
        let header: CacheHeader = serde_json::from_str(&first)
            .map_err(|e| Error::Format { path: path.into(), message: format!("not a window cache: {e}") })?;
        let data_hash = header.key.get("data_hash").and_then(Value::as_str).unwrap_or_default().to_string();
        let windows = read_cache(path, &cache_key(cfg.dataset, &params, &data_hash))?.ok_or_else(|| {
            Error::Config(format!("{} was prepared with different dataset or windowing parameters", path.display()))
        })?;
        let mut scenes: BTreeMap<String, Vec<ObservationWindow>> = BTreeMap::new();
        for w in windows {
            scenes.entry(w.scene.clone()).or_default().push(w);
        }
        return Ok(LoadedData { scenes, data_hash });
    }
    if !path.exists() {
        return Err(not_found(path));
    }
    let loaded = match cfg.dataset {
        DatasetKind::Ethucy => load_ethucy(path, &params)?,
        DatasetKind::Sdd => load_sdd(path, &params)?,
    };
    Ok(LoadedData { scenes: loaded.scenes, data_hash: loaded.data_hash })
}

/// `(train, test)` for the configured protocol.
pub fn split(cfg: &TrainConfig, data: &LoadedData) -> Result<(Vec<ObservationWindow>, Vec<ObservationWindow>)> {
    match cfg.dataset {
        DatasetKind::Ethucy => {
            let scene = cfg
                .test_scene
                .as_deref()
                .ok_or_else(|| Error::Config("ETH/UCY runs need a test scene (--holdout)".into()))?;
            crate::data::leave_one_out_split(&data.scenes, scene)
        }
        DatasetKind::Sdd => Ok(sdd_split(&data.scenes)),
    }
}

fn echo(out: &Path, command: &str, body: Value) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut doc = Map::new();
    doc.insert("command".into(), json!(command));
    if let Value::Object(m) = body {
        doc.extend(m);
    }
    let text = serde_json::to_string_pretty(&Value::Object(doc))?;
    println!("{text}");
    std::fs::write(out.join(format!("resolved_{command}.json")), text + "\n")?;
    Ok(())
}

fn counts(scenes: &BTreeMap<String, Vec<ObservationWindow>>) -> Value {
    Value::Object(scenes.iter().map(|(k, v)| (k.clone(), json!(v.len()))).collect())
}

fn prepare(a: PrepareArgs) -> Result<()> {
    let mut cfg = TrainConfig::for_dataset(a.dataset);
    if let Some(d) = a.max_dist {
        cfg.max_dist = d;
    }
    cfg.validate()?;
    if !a.data.is_dir() {
        return Err(not_found(&a.data));
    }
    let data = load_data(&a.data, &cfg)?;
    let key = cache_key(cfg.dataset, &cfg.window_params(), &data.data_hash);
    let out = &a.out.out;
    echo(out, "prepare", json!({ "key": key, "windows": counts(&data.scenes) }))?;
    let all: Vec<ObservationWindow> = data.scenes.values().flatten().cloned().collect();
    write_cache(&out.join("windows.jsonl"), &key, &all)?;
    eprintln!("wrote {} windows to {}", all.len(), out.join("windows.jsonl").display());
    Ok(())
}

fn write_report(out: &Path, stem: &str, report: &MetricsReport) -> Result<()> {
    std::fs::write(out.join(format!("{stem}.json")), serde_json::to_string_pretty(report)? + "\n")?;
    std::fs::write(out.join(format!("{stem}.txt")), report.table())?;
    Ok(())
}

fn with_complexity(mut report: MetricsReport, model: &Model) -> Result<MetricsReport> {
    let c = complexity_report(model)?;
    report.param_count = Some(c.param_count);
    report.flop_estimate = Some(c.flops);
    Ok(report)
}

fn train(a: TrainArgs) -> Result<()> {
    let out = a.out.out.clone();
    let resumed = a.resume.is_some();
    let mut trainer = match &a.resume {
        Some(path) => Trainer::from_checkpoint(&Checkpoint::load(path)?)?,
        None => Trainer::new(a.config.resolve()?)?,
    };
    let cfg = trainer.config.clone();
    let data = load_data(&a.data, &cfg)?;
    let (train_all, test) = split(&cfg, &data)?;
    if train_all.is_empty() {
        return Err(Error::Empty("no training windows".into()));
    }
    let (train_set, val_set) = validation_split(&train_all, cfg.val_fraction);
    echo(
        &out,
        "train",
        json!({
            "config": cfg,
            "config_hash": cfg.hash(),
            "data_hash": data.data_hash,
            "resumed_from": a.resume,
            "start_epoch": trainer.epochs_done(),
            "windows": { "train": train_set.len(), "val": val_set.len(), "test": test.len() },
        }),
    )?;
    let metrics_path = out.join("metrics.csv");
    let append = resumed && metrics_path.is_file();
    let mut metrics = BufWriter::new(OpenOptions::new().create(true).append(append).write(true).truncate(!append).open(&metrics_path)?);
    if !append {
        writeln!(metrics, "{METRICS_HEADER}")?;
    }
    trainer.run(&train_set, &val_set, a.max_epochs, |t, log| {
        writeln!(metrics, "{}", log.csv_row())?;
        metrics.flush()?;
        eprintln!(
            "epoch {:>4}  lr {:.3e}  traj {:.5}  cls {:.5}  val ade {}",
            log.epoch,
            log.lr,
            log.train_loss_traj,
            log.train_loss_cls,
            log.val_ade.map_or("-".into(), |v| format!("{v:.4}"))
        );
        t.checkpoint().save(&out.join("last.ckpt"))?;
        if log.val_ade.is_some() && log.val_ade == t.best_val_ade() {
            if let Some(best) = t.best_checkpoint() {
                best.save(&out.join("best.ckpt"))?;
            }
        }
        Ok(())
    })?;
    if !trainer.is_finished() {
        eprintln!("stopped after epoch {}; resume from {}", trainer.epochs_done(), out.join("last.ckpt").display());
        return Ok(());
    }
    trainer.checkpoint().save(&out.join("final.ckpt"))?;
    if !test.is_empty() {
        let model = trainer.best_model().unwrap_or(&trainer.model);
        let refs: Vec<&ObservationWindow> = test.iter().collect();
        let (errors, modes) = window_errors(model, &refs, false)?;
        let report = with_complexity(MetricsReport::from_errors(&errors, modes, false)?, model)?;
        write_report(&out, "test_metrics", &report)?;
        print!("{}", report.table());
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let out = a.out.out.clone();
    if a.checkpoints.is_empty() && a.from_predictions.is_empty() {
        return Err(Error::Config("give --checkpoint or --from-predictions".into()));
    }
    let report = if !a.from_predictions.is_empty() {
        let mut records = Vec::new();
        for p in &a.from_predictions {
            records.extend(read_predictions(p)?);
        }
        echo(&out, "eval", json!({ "from_predictions": a.from_predictions, "joint_min": a.joint_min, "records": records.len() }))?;
        evaluate_records(&records, a.joint_min)?
    } else {
        let data_path = a.data.as_ref().ok_or_else(|| Error::Config("--checkpoint needs --data".into()))?;
        if a.holdout.is_some() && a.checkpoints.len() > 1 {
            return Err(Error::Config("--holdout applies to a single checkpoint".into()));
        }
        let mut merged: BTreeMap<String, Vec<crate::eval::AdeFde>> = BTreeMap::new();
        let mut modes = 0;
        let mut provenance = Vec::new();
        let mut first_model = None;
        for path in &a.checkpoints {
            let ckpt = Checkpoint::load(path)?;
            let mut cfg = ckpt.config.clone();
            if let Some(h) = &a.holdout {
                cfg.test_scene = Some(h.to_ascii_lowercase());
            }
            let model = ckpt.model()?;
            let data = load_data(data_path, &cfg)?;
            let (_, test) = split(&cfg, &data)?;
            let refs: Vec<&ObservationWindow> = test.iter().collect();
            let (errors, k) = window_errors(&model, &refs, a.joint_min)?;
            modes = modes.max(k);
            for (scene, e) in errors {
                merged.entry(scene).or_default().extend(e);
            }
            provenance.push(json!({
                "checkpoint": path, "config_hash": ckpt.config_hash, "test_scene": cfg.test_scene, "data_hash": data.data_hash,
            }));
            first_model.get_or_insert(model);
        }
        echo(&out, "eval", json!({ "checkpoints": provenance, "joint_min": a.joint_min }))?;
        let report = MetricsReport::from_errors(&merged, modes, a.joint_min)?;
        with_complexity(report, first_model.as_ref().expect("at least one checkpoint"))?
    };
    write_report(&out, "metrics", &report)?;
    print!("{}", report.table());
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let out = a.out.out.clone();
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let mut cfg = ckpt.config.clone();
    if let Some(h) = &a.holdout {
        cfg.test_scene = Some(h.to_ascii_lowercase());
    }
    let model = ckpt.model()?;
    let data = load_data(&a.data, &cfg)?;
    let windows: Vec<ObservationWindow> = match a.split {
        SplitChoice::All => data.scenes.values().flatten().cloned().collect(),
        SplitChoice::Train => split(&cfg, &data)?.0,
        SplitChoice::Test => split(&cfg, &data)?.1,
    };
    echo(
        &out,
        "predict",
        json!({
            "checkpoint": a.checkpoint, "config": cfg, "config_hash": ckpt.config_hash,
            "data_hash": data.data_hash, "split": format!("{:?}", a.split).to_lowercase(), "windows": windows.len(),
        }),
    )?;
    let refs: Vec<&ObservationWindow> = windows.iter().collect();
    let predictions = Predictor::predict(&model, &refs)?;
    let records: Vec<PredictionRecord> =
        windows.iter().zip(&predictions).map(|(w, p)| PredictionRecord::new(w, p)).collect();
    let path = out.join("predictions.jsonl");
    write_predictions(BufWriter::new(File::create(&path)?), &records)?;
    eprintln!("wrote {} records to {}", records.len(), path.display());
    Ok(())
}

fn complexity(a: ComplexityArgs) -> Result<()> {
    let out = a.out.out.clone();
    let (model, cfg) = match &a.checkpoint {
        Some(p) => {
            let ckpt = Checkpoint::load(p)?;
            (ckpt.model()?, ckpt.config)
        }
        None => {
            let cfg = a.config.resolve()?;
            (Model::new(cfg.model.clone(), cfg.seed)?, cfg)
        }
    };
    echo(&out, "complexity", json!({ "model": cfg.model }))?;
    let report = complexity_report(&model)?;
    std::fs::write(out.join("complexity.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    println!("{report}");
    Ok(())
}

fn plot(a: PlotArgs) -> Result<()> {
    let out = a.out.out.clone();
    let records = read_predictions(&a.predictions)?;
    if records.is_empty() {
        eprintln!("warning: {} holds no predictions; nothing to plot", a.predictions.display());
        return Ok(());
    }
    let selection = PlotSelection { scene: a.scene, agent: a.agent, limit: a.limit };
    let files = plot_records(&records, &selection, &out.join("plots"))?;
    if files.is_empty() {
        eprintln!("warning: no record matches the selection");
    }
    for f in &files {
        println!("{}", f.display());
    }
    Ok(())
}
