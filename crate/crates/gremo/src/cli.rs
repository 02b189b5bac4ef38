//! File-driven command surface: prepare, train, fit-bn, calibrate, predict,
//! eval, search.
//!
//! Every command takes the same flag set; a `--config` JSON file overrides
//! whatever the flags said. All outputs are deterministic given identical
//! inputs and seed.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bottom_up::{ensemble_predict, group_average, FacePrediction, GroupPrediction};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate, random_search, write_confusion_csv, write_report_json, write_trials_csv,
    SearchSpace, TrialConfig, TrialRecord,
};
use crate::fusion::{build_cnn_cpt, fuse, FusedPrediction, FusionMode};
use crate::nn::io::{load_model, parse_layer, save_model};
use crate::nn::train::{evaluate_model, fit, write_history_csv, Sample, TrainConfig};
use crate::nn::{Classifier, LayerSpec, ModelSpec, ParamStore};
use crate::preprocess::{
    build_isolated_dataset, crop_faces, load_image, normalize, scale_to_64, DatasetManifest,
    ImageRecord, Label, SkippedFace, INPUT_SIDE, LABELS,
};
use crate::rng::{stream_rng, STREAM_INIT, STREAM_SPLIT};
use crate::top_down::{
    count_from_manifest, fit as fit_scene, infer_posterior, load_scene_model, save_scene_model,
    set_evidence, ScenePosteriorModel,
};
use rand::seq::SliceRandom;

#[derive(Parser, Debug)]
#[command(name = "gremo", version, about = "group emotion recognition pipeline")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Crop, scale, and normalize manifest faces into a training archive.
    Prepare(RunArgs),
    /// Train a classifier on a prepared archive.
    Train(RunArgs),
    /// Fit the scene network from manifest descriptors.
    FitBn(RunArgs),
    /// Write the classifier's validation confusion into the scene network.
    Calibrate(RunArgs),
    /// Run the full pipeline and emit one JSON report per image.
    Predict(RunArgs),
    /// Score the full pipeline against manifest labels.
    Eval(RunArgs),
    /// Random hyperparameter search over a prepared archive.
    Search(RunArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct RunArgs {
    /// Dataset manifest (JSON lines).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Prepared faces archive directory.
    #[arg(long)]
    archive: Option<PathBuf>,
    /// Model directory; repeat for an ensemble.
    #[arg(long = "model")]
    models: Vec<PathBuf>,
    /// Scene network parameter file.
    #[arg(long)]
    bn: Option<PathBuf>,
    /// Fusion mode: redirection, mean, or weighted:W.
    #[arg(long)]
    mode: Option<String>,
    /// Laplace smoothing strength.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file or directory, command dependent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Search space JSON (search only).
    #[arg(long)]
    space: Option<PathBuf>,
    /// JSON settings file; its values override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Flag-shaped settings as they appear in a `--config` file. Training
/// hyperparameters and the architecture have no flag spelling, so the file
/// is the only way to set them.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: Option<PathBuf>,
    pub archive: Option<PathBuf>,
    pub models: Option<Vec<PathBuf>>,
    pub bn: Option<PathBuf>,
    pub mode: Option<String>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub space: Option<PathBuf>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub early_stop_patience: Option<usize>,
    pub learning_rate: Option<f64>,
    pub val_fraction: Option<f64>,
    pub augment: Option<AugmentOverride>,
    /// One layer per line in the model descriptor syntax; input is always
    /// 64x64x3.
    pub architecture: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentOverride {
    pub rotation_deg_max: Option<f64>,
    pub zoom_fraction: Option<f64>,
    pub horizontal_flip: Option<bool>,
}

/// Everything a command needs, after defaults, flags, and config merge.
#[derive(Debug, Clone)]
pub struct Settings {
    pub manifest: Option<PathBuf>,
    pub archive: Option<PathBuf>,
    pub models: Vec<PathBuf>,
    pub bn: Option<PathBuf>,
    pub mode: FusionMode,
    pub alpha: f64,
    pub seed: u64,
    /// True when the seed came from a flag or config rather than the default;
    /// search keeps its space-file seed otherwise.
    pub seed_explicit: bool,
    pub out: Option<PathBuf>,
    pub space: Option<PathBuf>,
    pub train: TrainConfig,
    pub val_fraction: f64,
    pub architecture: Option<ModelSpec>,
}

pub fn resolve_settings(args: &RunArgs) -> Result<Settings> {
    let file = match &args.config {
        None => PipelineConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| {
                Error::InvalidArg(format!("config {}: {e}", path.display()))
            })?
        }
    };

    let chosen_seed = file.seed.or(args.seed);
    let seed = chosen_seed.unwrap_or(0);
    let mut train = TrainConfig { seed, ..TrainConfig::default() };
    if let Some(b) = file.batch_size {
        train.batch_size = b;
    }
    if let Some(e) = file.max_epochs {
        train.max_epochs = e;
    }
    if let Some(p) = file.early_stop_patience {
        train.early_stop_patience = p;
    }
    if let Some(lr) = file.learning_rate {
        train.learning_rate = lr;
    }
    if let Some(a) = &file.augment {
        if let Some(r) = a.rotation_deg_max {
            train.augmentation.rotation_deg_max = r;
        }
        if let Some(z) = a.zoom_fraction {
            train.augmentation.zoom_fraction = z;
        }
        if let Some(f) = a.horizontal_flip {
            train.augmentation.horizontal_flip = f;
        }
    }

    let architecture = match &file.architecture {
        None => None,
        Some(lines) => Some(parse_architecture(lines)?),
    };

    let mode_text = file.mode.clone().or_else(|| args.mode.clone());
    Ok(Settings {
        manifest: file.manifest.or_else(|| args.manifest.clone()),
        archive: file.archive.or_else(|| args.archive.clone()),
        models: file.models.unwrap_or_else(|| args.models.clone()),
        bn: file.bn.or_else(|| args.bn.clone()),
        mode: match mode_text {
            None => FusionMode::Redirection,
            Some(s) => FusionMode::parse(&s)?,
        },
        alpha: file.alpha.or(args.alpha).unwrap_or(1.0),
        seed,
        seed_explicit: chosen_seed.is_some(),
        out: file.out.or_else(|| args.out.clone()),
        space: file.space.or_else(|| args.space.clone()),
        train,
        val_fraction: file.val_fraction.unwrap_or(0.2),
        architecture,
    })
}

fn parse_architecture(lines: &[String]) -> Result<ModelSpec> {
    let mut layers = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        layers.push(
            parse_layer(line)
                .map_err(|msg| Error::InvalidArg(format!("architecture line {}: {msg}", i + 1)))?,
        );
    }
    let spec = ModelSpec {
        input_shape: [INPUT_SIDE, INPUT_SIDE, 3],
        num_classes: 3,
        layers,
    };
    spec.validate()?;
    Ok(spec)
}

impl Settings {
    fn need(path: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
        path.clone().ok_or_else(|| Error::InvalidArg(format!("--{flag} is required")))
    }

    fn spec_or_reference(&self) -> ModelSpec {
        self.architecture.clone().unwrap_or_else(crate::nn::reference_spec)
    }
}

pub fn run() -> Result<()> {
    let cli = Cli::parse();
    dispatch(&cli.command)
}

fn dispatch(command: &Command) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match command {
        Command::Prepare(a) => cmd_prepare(&resolve_settings(a)?, &mut stdout),
        Command::Train(a) => cmd_train(&resolve_settings(a)?, &mut stdout),
        Command::FitBn(a) => cmd_fit_bn(&resolve_settings(a)?, &mut stdout),
        Command::Calibrate(a) => cmd_calibrate(&resolve_settings(a)?, &mut stdout),
        Command::Predict(a) => cmd_predict(&resolve_settings(a)?, &mut stdout),
        Command::Eval(a) => cmd_eval(&resolve_settings(a)?, &mut stdout),
        Command::Search(a) => cmd_search(&resolve_settings(a)?, &mut stdout),
    }
}

fn say(out: &mut impl Write, line: &str) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::Internal(format!("stdout: {e}")))
}

/// Archive layout: `faces.gmw` holds one tensor per face named `face_NNNNNN`,
/// `index.json` carries labels and provenance in the same order.
#[derive(Debug, Serialize, Deserialize)]
pub struct ArchiveIndex {
    pub faces: Vec<FaceMeta>,
    pub skipped: Vec<SkippedFace>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaceMeta {
    pub label: Label,
    pub record: usize,
    pub face: usize,
    pub image: String,
}

// SkippedFace is serialize-only in preprocess; archives need it back.
impl<'de> Deserialize<'de> for SkippedFace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            record: usize,
            #[serde(default)]
            face: Option<usize>,
            image: String,
            reason: String,
        }
        let raw = Raw::deserialize(d)?;
        Ok(SkippedFace {
            record: raw.record,
            face: raw.face,
            image: raw.image,
            reason: raw.reason,
        })
    }
}

fn face_name(i: usize) -> String {
    format!("face_{i:06}")
}

pub fn cmd_prepare(s: &Settings, out: &mut impl Write) -> Result<()> {
    let manifest_path = Settings::need(&s.manifest, "manifest")?;
    let out_dir = Settings::need(&s.out, "out")?;
    let manifest = DatasetManifest::load(&manifest_path)?;
    let dataset = build_isolated_dataset(&manifest)?;

    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let entries: Vec<(String, &crate::tensor::Tensor)> = dataset
        .faces
        .iter()
        .enumerate()
        .map(|(i, f)| (face_name(i), &f.tensor))
        .collect();
    crate::blob::write_tensors(&out_dir.join("faces.gmw"), &entries)?;

    let index = ArchiveIndex {
        faces: dataset
            .faces
            .iter()
            .map(|f| FaceMeta {
                label: f.label,
                record: f.record,
                face: f.face,
                image: f.image.display().to_string(),
            })
            .collect(),
        skipped: dataset.skipped.clone(),
    };
    write_json(&out_dir.join("index.json"), &index)?;

    let mut counts = [0usize; 3];
    for f in &dataset.faces {
        counts[f.label.index()] += 1;
    }
    for label in LABELS {
        say(out, &format!("{} {}", label, counts[label.index()]))?;
    }
    say(out, &format!("skipped {}", dataset.skipped.len()))
}

pub fn load_archive(dir: &Path) -> Result<(Vec<Sample>, ArchiveIndex)> {
    let index_path = dir.join("index.json");
    let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let index: ArchiveIndex = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidArg(format!("archive index {}: {e}", index_path.display())))?;
    let tensors = crate::blob::read_tensors(&dir.join("faces.gmw"))?;
    let mut by_name: BTreeMap<String, crate::tensor::Tensor> = tensors.into_iter().collect();
    let mut samples = Vec::with_capacity(index.faces.len());
    for (i, meta) in index.faces.iter().enumerate() {
        let input = by_name.remove(&face_name(i)).ok_or_else(|| {
            Error::InvalidArg(format!("archive is missing tensor {}", face_name(i)))
        })?;
        samples.push(Sample { input, label: meta.label.index() });
    }
    Ok((samples, index))
}

/// Deterministic shuffled split; at least one sample lands on each side.
pub fn split_train_val(
    samples: Vec<Sample>,
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::InvalidArg(format!(
            "val fraction {val_fraction} outside [0,1)"
        )));
    }
    if samples.len() < 2 {
        return Err(Error::InvalidArg(
            "need at least 2 samples to split train/validation".into(),
        ));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut stream_rng(seed, STREAM_SPLIT, 0));
    let n_val = ((samples.len() as f64 * val_fraction).round() as usize)
        .clamp(1, samples.len() - 1);
    let mut slots: Vec<bool> = vec![false; samples.len()];
    for &i in &order[..n_val] {
        slots[i] = true;
    }
    let mut train = Vec::with_capacity(samples.len() - n_val);
    let mut val = Vec::with_capacity(n_val);
    for (sample, is_val) in samples.into_iter().zip(slots) {
        if is_val {
            val.push(sample);
        } else {
            train.push(sample);
        }
    }
    Ok((train, val))
}

pub fn cmd_train(s: &Settings, out: &mut impl Write) -> Result<()> {
    let archive = Settings::need(&s.archive, "archive")?;
    let out_dir = Settings::need(&s.out, "out")?;
    let (samples, _) = load_archive(&archive)?;
    let (train, val) = split_train_val(samples, s.val_fraction, s.seed)?;
    let spec = s.spec_or_reference();
    let params = ParamStore::init(&spec, &mut stream_rng(s.seed, STREAM_INIT, 0))?;
    let (best, history) = fit(&spec, params, &train, &val, &s.train)?;

    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    save_model(&out_dir, &spec, &best)?;
    write_history_csv(&out_dir.join("history.csv"), &history)?;

    let best_epoch = history
        .iter()
        .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
        .expect("fit returns at least one epoch");
    say(
        out,
        &format!(
            "trained {} epochs, best val_loss {} at epoch {}",
            history.len(),
            best_epoch.val_loss,
            best_epoch.epoch
        ),
    )
}

pub fn cmd_fit_bn(s: &Settings, out: &mut impl Write) -> Result<()> {
    let manifest_path = Settings::need(&s.manifest, "manifest")?;
    let bn_path = Settings::need(&s.bn, "bn")?;
    let manifest = DatasetManifest::load(&manifest_path)?;
    let counts = count_from_manifest(&manifest)?;
    let model = fit_scene(&counts, s.alpha)?;
    save_scene_model(&bn_path, &model)?;
    say(
        out,
        &format!(
            "fitted scene network: {} descriptors, alpha {}",
            model.vocabulary.len(),
            s.alpha
        ),
    )
}

fn load_ensemble(paths: &[PathBuf]) -> Result<Vec<Classifier>> {
    if paths.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    paths.iter().map(|p| load_model(p)).collect()
}

/// Per-face inputs for one record, cropped, scaled, and normalized.
fn record_inputs(record: &ImageRecord) -> Result<Vec<crate::tensor::Tensor>> {
    if record.faces.is_empty() {
        return Ok(Vec::new());
    }
    let image = load_image(&record.image)?;
    crop_faces(&image, &record.faces)?
        .iter()
        .map(|crop| Ok(normalize(&scale_to_64(crop)?)))
        .collect()
}

pub fn cmd_calibrate(s: &Settings, out: &mut impl Write) -> Result<()> {
    let manifest_path = Settings::need(&s.manifest, "manifest")?;
    let bn_path = Settings::need(&s.bn, "bn")?;
    let models = load_ensemble(&s.models)?;
    let manifest = DatasetManifest::load(&manifest_path)?;

    let mut confusion = [[0u64; 3]; 3];
    let mut scored = 0usize;
    for (ri, record) in manifest.records.iter().enumerate() {
        let label = record.label.ok_or(Error::UnlabeledRecord { index: ri })?;
        let mut faces = Vec::new();
        for (fi, input) in record_inputs(record)?.iter().enumerate() {
            faces.push(ensemble_predict(&models, input, ri, fi)?);
        }
        let group = group_average(&faces);
        if let Some(k) = group.predicted {
            confusion[label.index()][k] += 1;
            scored += 1;
        }
    }
    let cpt = build_cnn_cpt(&confusion, s.alpha)?;

    let mut scene = load_scene_model(&bn_path)?;
    scene.cnn_cpt = Some(cpt);
    save_scene_model(&bn_path, &scene)?;
    say(out, &format!("calibrated on {scored} images, updated {}", bn_path.display()))
}

/// Full-pipeline outcome for one record.
#[derive(Debug, Clone)]
pub struct RecordPrediction {
    pub faces: Vec<FacePrediction>,
    pub bottom: GroupPrediction,
    pub top: [f64; 3],
    pub fused: FusedPrediction,
    pub unknown_descriptors: Vec<String>,
}

pub fn predict_record(
    record: &ImageRecord,
    record_index: usize,
    models: &[Classifier],
    scene: &ScenePosteriorModel,
    mode: FusionMode,
) -> Result<RecordPrediction> {
    let mut faces = Vec::new();
    for (fi, input) in record_inputs(record)?.iter().enumerate() {
        faces.push(ensemble_predict(models, input, record_index, fi)?);
    }
    let bottom = group_average(&faces);
    let evidence = set_evidence(scene, &record.descriptors);
    let top = infer_posterior(scene, &evidence)?;
    let fused = fuse(mode, &bottom, scene, &record.descriptors)?;
    Ok(RecordPrediction { faces, bottom, top, fused, unknown_descriptors: evidence.unknown })
}

#[derive(Serialize)]
struct SideReport {
    probs: Option<[f64; 3]>,
    class: Option<&'static str>,
}

fn side(probs: Option<[f64; 3]>, class: Option<usize>) -> SideReport {
    SideReport {
        probs,
        class: class.map(|k| Label::from_index(k).expect("class index < 3").as_str()),
    }
}

#[derive(Serialize)]
struct RecordReport<'a> {
    image: &'a str,
    bottom_up: SideReport,
    top_down: SideReport,
    fused: SideReport,
    faces: Vec<[f64; 3]>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    unknown_descriptors: Vec<String>,
}

fn record_report<'a>(image: &'a str, p: &RecordPrediction) -> RecordReport<'a> {
    RecordReport {
        image,
        bottom_up: side(p.bottom.mean_probs, p.bottom.predicted),
        top_down: side(Some(p.top), Some(crate::tensor::argmax(&p.top))),
        fused: side(Some(p.fused.posterior), Some(p.fused.predicted)),
        faces: p.faces.iter().map(|f| f.probs).collect(),
        unknown_descriptors: p.unknown_descriptors.clone(),
    }
}

pub fn cmd_predict(s: &Settings, out: &mut impl Write) -> Result<()> {
    let manifest_path = Settings::need(&s.manifest, "manifest")?;
    let bn_path = Settings::need(&s.bn, "bn")?;
    let models = load_ensemble(&s.models)?;
    let scene = load_scene_model(&bn_path)?;
    let manifest = DatasetManifest::load(&manifest_path)?;

    let mut lines = String::new();
    for (ri, record) in manifest.records.iter().enumerate() {
        let p = predict_record(record, ri, &models, &scene, s.mode)?;
        if record.faces.is_empty() && record.descriptors.is_empty() {
            eprintln!(
                "warning: record {ri} ({}) has no faces and no descriptors; \
                 reporting the class prior",
                record.image.display()
            );
        }
        let image = record.image.display().to_string();
        let report = record_report(&image, &p);
        let line = serde_json::to_string(&report)
            .map_err(|e| Error::Internal(format!("prediction report: {e}")))?;
        lines.push_str(&line);
        lines.push('\n');
    }
    match &s.out {
        Some(path) => std::fs::write(path, lines).map_err(|e| Error::io(path, e)),
        None => write!(out, "{lines}").map_err(|e| Error::Internal(format!("stdout: {e}"))),
    }
}

pub fn cmd_eval(s: &Settings, out: &mut impl Write) -> Result<()> {
    let manifest_path = Settings::need(&s.manifest, "manifest")?;
    let bn_path = Settings::need(&s.bn, "bn")?;
    let out_dir = Settings::need(&s.out, "out")?;
    let models = load_ensemble(&s.models)?;
    let scene = load_scene_model(&bn_path)?;
    let manifest = DatasetManifest::load(&manifest_path)?;

    let mut pairs = Vec::with_capacity(manifest.records.len());
    for (ri, record) in manifest.records.iter().enumerate() {
        let label = record.label.ok_or(Error::UnlabeledRecord { index: ri })?;
        let p = predict_record(record, ri, &models, &scene, s.mode)?;
        pairs.push((label, Some(p.fused.predicted)));
    }
    let report = evaluate(&pairs)?;

    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    write_report_json(&report, &out_dir.join("report.json"))?;
    write_confusion_csv(&report, &out_dir.join("confusion.csv"))?;
    say(out, &format!("accuracy {} over {} images", report.accuracy, report.n_samples))
}

/// Replaces the hidden dense widths and every dropout rate in `template`
/// with the trial's draw; the first non-output dense layer becomes fc1, the
/// rest become fc2.
pub fn apply_trial(template: &ModelSpec, trial: &TrialConfig) -> ModelSpec {
    let mut spec = template.clone();
    let num_classes = spec.num_classes;
    let mut dense_seen = 0;
    for layer in &mut spec.layers {
        match layer {
            LayerSpec::Dense { out } if *out != num_classes => {
                dense_seen += 1;
                *out = if dense_seen == 1 { trial.fc1 } else { trial.fc2 };
            }
            LayerSpec::Dropout { rate } => *rate = trial.dropout,
            _ => {}
        }
    }
    spec
}

pub fn cmd_search(s: &Settings, out: &mut impl Write) -> Result<()> {
    let archive = Settings::need(&s.archive, "archive")?;
    let out_dir = Settings::need(&s.out, "out")?;
    let space_path = Settings::need(&s.space, "space")?;
    let mut space = SearchSpace::load(&space_path)?;
    if s.seed_explicit {
        space.seed = s.seed;
    }
    let (samples, _) = load_archive(&archive)?;
    let (train, val) = split_train_val(samples, s.val_fraction, s.seed)?;
    let template = s.spec_or_reference();

    let objective = |trial: &TrialConfig, trial_seed: u64| -> Result<f64> {
        let spec = apply_trial(&template, trial);
        let params = ParamStore::init(&spec, &mut stream_rng(trial_seed, STREAM_INIT, 0))?;
        let cfg = TrainConfig {
            batch_size: trial.batch_size,
            learning_rate: trial.learning_rate,
            seed: trial_seed,
            ..s.train.clone()
        };
        let (best, _) = fit(&spec, params, &train, &val, &cfg)?;
        let (_, acc) = evaluate_model(&spec, &best, &val)?;
        Ok(acc)
    };
    let (best_config, records) = random_search(&space, objective)?;
    let best: &TrialRecord = records
        .iter()
        .find(|r| r.config == best_config)
        .expect("winning config comes from the records");

    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    write_trials_csv(&records, &out_dir.join("trials.csv"))?;
    write_json(&out_dir.join("best.json"), best)?;
    say(
        out,
        &format!("best trial {} val accuracy {} over {} trials", best.trial, best.score, records.len()),
    )
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Internal(format!("{}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::augment::AugmentConfig;
    use crate::synthetic::{generate_corpus, CorpusConfig};

    fn args_with_config(dir: &Path, body: &str) -> RunArgs {
        let path = dir.join("config.json");
        std::fs::write(&path, body).unwrap();
        RunArgs { config: Some(path), ..RunArgs::default() }
    }

    #[test]
    fn config_file_overrides_flags() {
        let dir = tempfile::tempdir().unwrap();
        let mut args = args_with_config(
            dir.path(),
            r#"{"seed": 9, "mode": "mean", "alpha": 0.5, "learning_rate": 0.01}"#,
        );
        args.seed = Some(4);
        args.mode = Some("redirection".into());
        args.alpha = Some(2.0);
        let s = resolve_settings(&args).unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.mode, FusionMode::Mean);
        assert_eq!(s.alpha, 0.5);
        assert_eq!(s.train.learning_rate, 0.01);
        assert_eq!(s.train.seed, 9);
    }

    #[test]
    fn defaults_apply_without_config() {
        let s = resolve_settings(&RunArgs::default()).unwrap();
        assert_eq!(s.mode, FusionMode::Redirection);
        assert_eq!(s.alpha, 1.0);
        assert_eq!(s.seed, 0);
        assert_eq!(s.val_fraction, 0.2);
        assert!(s.architecture.is_none());
    }

    #[test]
    fn architecture_lines_become_a_spec() {
        let dir = tempfile::tempdir().unwrap();
        let args = args_with_config(
            dir.path(),
            r#"{"architecture": [
                "conv out_channels=4 kernel=3x3 stride=1 padding=1",
                "relu",
                "maxpool kernel=2 stride=2",
                "flatten",
                "dense out=3",
                "softmax"
            ]}"#,
        );
        let s = resolve_settings(&args).unwrap();
        let spec = s.architecture.unwrap();
        assert_eq!(spec.layers.len(), 6);
        assert_eq!(spec.input_shape, [64, 64, 3]);
        spec.validate().unwrap();
    }

    #[test]
    fn bad_architecture_line_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let args = args_with_config(dir.path(), r#"{"architecture": ["dance out=3"]}"#);
        let err = resolve_settings(&args).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let args = args_with_config(dir.path(), r#"{"learning_rte": 0.1}"#);
        assert!(resolve_settings(&args).is_err());
    }

    #[test]
    fn augment_override_merges_per_field() {
        let dir = tempfile::tempdir().unwrap();
        let args = args_with_config(dir.path(), r#"{"augment": {"horizontal_flip": false}}"#);
        let s = resolve_settings(&args).unwrap();
        assert!(!s.train.augmentation.horizontal_flip);
        assert_eq!(
            s.train.augmentation.rotation_deg_max,
            AugmentConfig::default().rotation_deg_max
        );
    }

    #[test]
    fn split_is_deterministic_and_exhaustive() {
        let samples = crate::synthetic::generate_face_task(10, 1, 0.0);
        let (t1, v1) = split_train_val(samples.clone(), 0.2, 7).unwrap();
        let (t2, v2) = split_train_val(samples, 0.2, 7).unwrap();
        assert_eq!(t1.len(), 8);
        assert_eq!(v1.len(), 2);
        assert_eq!(t1.len() + v1.len(), 10);
        for (a, b) in t1.iter().zip(&t2) {
            assert_eq!(a.input.data(), b.input.data());
        }
        for (a, b) in v1.iter().zip(&v2) {
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn split_keeps_both_sides_nonempty() {
        let samples = crate::synthetic::generate_face_task(3, 1, 0.0);
        let (t, v) = split_train_val(samples.clone(), 0.01, 0).unwrap();
        assert_eq!((t.len(), v.len()), (2, 1));
        let (t, v) = split_train_val(samples.clone(), 0.99, 0).unwrap();
        assert_eq!((t.len(), v.len()), (1, 2));
        assert!(split_train_val(samples[..1].to_vec(), 0.5, 0).is_err());
    }

    #[test]
    fn prepare_then_load_round_trips_the_faces() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        let cfg = CorpusConfig { n_images: 6, ..CorpusConfig::default() };
        let manifest = generate_corpus(&cfg, &corpus).unwrap();

        let archive = dir.path().join("archive");
        let s = Settings {
            manifest: Some(manifest),
            out: Some(archive.clone()),
            ..resolve_settings(&RunArgs::default()).unwrap()
        };
        let mut log = Vec::new();
        cmd_prepare(&s, &mut log).unwrap();
        let text = String::from_utf8(log).unwrap();
        assert!(text.contains("positive "));
        assert!(text.contains("skipped 0"));

        let (samples, index) = load_archive(&archive).unwrap();
        assert_eq!(samples.len(), index.faces.len());
        assert!(!samples.is_empty());
        for s in &samples {
            assert_eq!(s.input.shape(), &[64, 64, 3]);
        }
        // stdout counts match the index
        let mut counts = [0usize; 3];
        for f in &index.faces {
            counts[f.label.index()] += 1;
        }
        for label in LABELS {
            assert!(text.contains(&format!("{} {}", label, counts[label.index()])));
        }
    }

    #[test]
    fn apply_trial_rewrites_hidden_layers_only() {
        let template = parse_architecture(&[
            "flatten".into(),
            "dense out=100".into(),
            "relu".into(),
            "dropout rate=0.5".into(),
            "dense out=50".into(),
            "relu".into(),
            "dense out=3".into(),
            "softmax".into(),
        ])
        .unwrap();
        let trial = TrialConfig {
            learning_rate: 0.01,
            batch_size: 16,
            fc1: 32,
            fc2: 16,
            dropout: 0.25,
        };
        let spec = apply_trial(&template, &trial);
        let dense: Vec<usize> = spec
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Dense { out } => Some(*out),
                _ => None,
            })
            .collect();
        assert_eq!(dense, vec![32, 16, 3]);
        assert!(spec
            .layers
            .iter()
            .all(|l| !matches!(l, LayerSpec::Dropout { rate } if *rate != 0.25)));
    }
}
