//! The four subcommands: ingest, train, evaluate and compare.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use stackids::data::{
    prepare, write_emx, EncodedMatrix, LabelMode, Prepared, CLASS_NAMES,
};
use stackids::metrics::{
    multiclass_roc_auc, roc_auc, Averaging, ConfusionMatrix, MetricsReport,
};
use stackids::models::{
    classes_from_probs, classes_from_targets, load_model, preset, save_model, train,
    train_stacked, AnyModel, ModelConfig, ModelKind, ModelSpec, StackedReport, TrainReport,
    DEFAULT_SEED,
};
use stackids::rng::RunRng;
use stackids::{Error, Result};

use crate::args::{CompareArgs, EvalSplit, EvaluateArgs, IngestArgs, TrainArgs};
use crate::context::{load_data, resolve_run_dir, write_json, write_run_setup, RunConfig};

pub fn ingest(args: &IngestArgs) -> Result<()> {
    let loaded = load_data(&args.source)?;
    let rc = RunConfig {
        command: "ingest".into(),
        source: loaded.source.clone(),
        label_mode: args.label_mode,
        test_fraction: args.test_fraction,
        stratified: true,
        balance: true,
        seed: args.seed,
        models: Vec::new(),
        dataset_sha256: loaded.sha256.clone(),
    };
    let dir = resolve_run_dir(&args.out, "ingest", &loaded.tag, args.seed);
    write_run_setup(&dir, &rc)?;

    let ds = &loaded.dataset;
    println!("rows: {}", ds.len());
    println!("class counts:");
    for (name, count) in CLASS_NAMES.iter().zip(ds.class_counts()) {
        println!("  {name}: {count}");
    }

    let mut rng = RunRng::from_seed(args.seed);
    let prepared = prepare(ds, &rc.pipeline(), &mut rng)?;
    println!("encoded feature width: {}", prepared.train.features());
    println!("train rows after balancing: {}", prepared.train.rows());
    println!("test rows: {}", prepared.test.rows());

    let train_path = dir.join("train.emx");
    let test_path = dir.join("test.emx");
    write_emx(&train_path, &prepared.train)?;
    write_emx(&test_path, &prepared.test)?;
    println!("cache: {}", train_path.display());
    println!("cache: {}", test_path.display());
    Ok(())
}

/// Sets the epoch count on a configuration and, for ensembles, on
/// every base as well.
fn apply_epochs(cfg: &mut ModelConfig, epochs: usize) {
    cfg.epochs = epochs;
    if let Some(settings) = cfg.stacked.as_mut() {
        for base in &mut settings.bases {
            base.epochs = epochs;
        }
    }
}

fn resolve_single_model(
    preset_name: &Option<String>,
    config_path: &Option<PathBuf>,
    mode: LabelMode,
    seed: Option<u64>,
    epochs: Option<usize>,
) -> Result<ModelConfig> {
    let mut cfg = match (preset_name, config_path) {
        (Some(name), None) => preset(name, mode, seed.unwrap_or(DEFAULT_SEED))?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::Validation(format!("cannot read config {}: {e}", path.display()))
            })?;
            ModelSpec::from_json(&text)?.resolve(mode, seed)?
        }
        _ => {
            return Err(Error::Usage(
                "pass exactly one of --preset or --config".into(),
            ))
        }
    };
    if let Some(n) = epochs {
        apply_epochs(&mut cfg, n);
        cfg.validate()?;
    }
    Ok(cfg)
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let loaded = load_data(&args.source)?;
    let cfg = resolve_single_model(
        &args.preset,
        &args.config,
        args.label_mode,
        args.seed,
        args.epochs,
    )?;
    let rc = RunConfig {
        command: "train".into(),
        source: loaded.source.clone(),
        label_mode: args.label_mode,
        test_fraction: args.test_fraction,
        stratified: true,
        balance: true,
        seed: cfg.seed,
        models: vec![cfg.clone()],
        dataset_sha256: loaded.sha256.clone(),
    };
    let dir = resolve_run_dir(&args.out, "train", &cfg.name, cfg.seed);
    write_run_setup(&dir, &rc)?;

    let mut rng = RunRng::from_seed(cfg.seed);
    let prepared = prepare(&loaded.dataset, &rc.pipeline(), &mut rng)?;

    let report_path = dir.join("train_report.json");
    let any = if cfg.kind == ModelKind::Stacked {
        let (model, report) = train_stacked(&cfg, &prepared.train)?;
        for base in &report.base_reports {
            if let Some(stat) = base.epochs.last() {
                println!(
                    "base {}: loss {:.6} accuracy {:.4} after {} epochs",
                    base.config.name,
                    stat.loss,
                    stat.accuracy,
                    base.epochs.len()
                );
            }
        }
        let meta_total = report.meta_report.epochs.len();
        for stat in &report.meta_report.epochs {
            println!(
                "meta epoch {}/{} loss {:.6} accuracy {:.4}",
                stat.epoch, meta_total, stat.loss, stat.accuracy
            );
        }
        println!("ensemble training accuracy {:.4}", report.train_accuracy);
        write_json(&report_path, &report)?;
        AnyModel::Stacked(model)
    } else {
        let (model, report) = train(&cfg, &prepared.train)?;
        let total = report.epochs.len();
        for stat in &report.epochs {
            println!(
                "epoch {}/{} loss {:.6} accuracy {:.4}",
                stat.epoch, total, stat.loss, stat.accuracy
            );
        }
        write_json(&report_path, &report)?;
        AnyModel::Single(model)
    };
    let model_path = dir.join("model.mdl");
    save_model(&model_path, &any)?;
    println!("model: {}", model_path.display());
    println!("report: {}", report_path.display());
    Ok(())
}

/// Scores a model over one encoded split: confusion-matrix metrics
/// plus the label-mode-appropriate ROC-AUC reduction.
fn score(model: &AnyModel, em: &EncodedMatrix) -> Result<MetricsReport> {
    let mode = model.label_mode();
    let probs = model.predict_proba(&em.x)?;
    let y_true = classes_from_targets(&em.y, mode)?;
    let y_pred = classes_from_probs(&probs, mode)?;
    let (classes, avg) = match mode {
        LabelMode::Binary => (2, Averaging::Binary),
        LabelMode::Multiclass => (mode.class_count(), Averaging::Macro),
    };
    let cm = ConfusionMatrix::from_labels(&y_true, &y_pred, classes)?;
    let mut report = MetricsReport::from_confusion(&cm, avg)?;
    match mode {
        LabelMode::Binary => {
            let labels: Vec<bool> = y_true.iter().map(|&c| c == 1).collect();
            match roc_auc(probs.data(), &labels) {
                Ok(v) => report = report.with_roc_auc(v),
                Err(Error::UndefinedCurve(msg)) => {
                    report.flags.push(format!("roc auc undefined: {msg}"));
                }
                Err(e) => return Err(e),
            }
        }
        LabelMode::Multiclass => match multiclass_roc_auc(&probs, &y_true) {
            Ok(mc) => {
                for (c, value) in mc.per_class.iter().enumerate() {
                    if value.is_none() {
                        report
                            .flags
                            .push(format!("class {c} one-sided; excluded from roc auc"));
                    }
                }
                report = report.with_roc_auc(mc.macro_average);
            }
            Err(Error::UndefinedCurve(msg)) => {
                report.flags.push(format!("roc auc undefined: {msg}"));
            }
            Err(e) => return Err(e),
        },
    }
    Ok(report)
}

/// A training report of either shape, as found next to a model file.
#[derive(Deserialize)]
#[serde(untagged)]
enum AnyReport {
    Stacked(StackedReport),
    Single(TrainReport),
}

struct TrainContext {
    epochs: usize,
    wall_seconds: Option<f64>,
}

fn training_context(
    model: &AnyModel,
    report_flag: &Option<PathBuf>,
    model_path: &Path,
) -> TrainContext {
    let path = report_flag
        .clone()
        .or_else(|| model_path.parent().map(|d| d.join("train_report.json")));
    let parsed = path
        .and_then(|p| fs::read_to_string(p).ok())
        .and_then(|text| serde_json::from_str::<AnyReport>(&text).ok());
    match parsed {
        Some(AnyReport::Single(r)) => TrainContext {
            epochs: r.epochs.len(),
            wall_seconds: Some(r.wall_seconds),
        },
        Some(AnyReport::Stacked(r)) => TrainContext {
            epochs: r.config.epochs,
            wall_seconds: Some(r.wall_seconds),
        },
        None => TrainContext {
            epochs: model.config().epochs,
            wall_seconds: None,
        },
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

fn metrics_table(report: &MetricsReport, epochs: usize, wall: Option<f64>) -> String {
    let time = wall.map_or_else(|| "-".into(), |w| format!("{w:.3}"));
    let mut out = String::new();
    out.push_str("Epoch  Accuracy  Precision  Recall  F1-Score  Training time (s)\n");
    out.push_str(&format!(
        "{:<5}  {:<8}  {:<9}  {:<6}  {:<8}  {}\n",
        epochs,
        pct(report.accuracy),
        pct(report.precision),
        pct(report.recall),
        pct(report.f1),
        time,
    ));
    out
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let any = load_model(&args.model)?;
    let mode = any.label_mode();
    if let Some(flag) = args.label_mode {
        if flag != mode {
            return Err(Error::Usage(format!(
                "model {} was trained in {} mode, but --label-mode {} was given",
                any.name(),
                mode.name(),
                flag.name()
            )));
        }
    }
    let loaded = load_data(&args.source)?;
    let seed = args.seed.unwrap_or(any.config().seed);
    let rc = RunConfig {
        command: "evaluate".into(),
        source: loaded.source.clone(),
        label_mode: mode,
        test_fraction: args.test_fraction,
        stratified: true,
        balance: true,
        seed,
        models: vec![any.config().clone()],
        dataset_sha256: loaded.sha256.clone(),
    };
    let split_name = match args.split {
        EvalSplit::Train => "train",
        EvalSplit::Test => "test",
    };
    let tag = format!("{}-{split_name}", any.name());
    let dir = resolve_run_dir(&args.out, "evaluate", &tag, seed);
    write_run_setup(&dir, &rc)?;

    let mut rng = RunRng::from_seed(seed);
    let prepared = prepare(&loaded.dataset, &rc.pipeline(), &mut rng)?;
    let em = match args.split {
        EvalSplit::Train => &prepared.train,
        EvalSplit::Test => &prepared.test,
    };
    if em.features() != any.feature_width() {
        return Err(Error::Usage(format!(
            "model expects {} features but the encoded data has {}",
            any.feature_width(),
            em.features()
        )));
    }
    let report = score(&any, em)?;
    write_json(&dir.join("metrics.json"), &report)?;

    let ctx = training_context(&any, &args.report, &args.model);
    let table = metrics_table(&report, ctx.epochs, ctx.wall_seconds);
    fs::write(dir.join("metrics_table.txt"), &table)?;
    print!("{table}");
    println!("accuracy: {:.6}", report.accuracy);
    println!("metrics: {}", dir.join("metrics.json").display());
    Ok(())
}

struct MemberRow {
    name: String,
    classes: usize,
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
}

fn run_member(cfg: &ModelConfig, prepared: &Prepared) -> Result<MemberRow> {
    let report = if cfg.kind == ModelKind::Stacked {
        let (model, _) = train_stacked(cfg, &prepared.train)?;
        score(&AnyModel::Stacked(model), &prepared.test)?
    } else {
        let (model, _) = train(cfg, &prepared.train)?;
        score(&AnyModel::Single(model), &prepared.test)?
    };
    Ok(MemberRow {
        name: cfg.name.clone(),
        classes: match cfg.label_mode {
            LabelMode::Binary => 2,
            LabelMode::Multiclass => 10,
        },
        accuracy: report.accuracy,
        precision: report.precision,
        recall: report.recall,
        f1: report.f1,
    })
}

pub fn compare(args: &CompareArgs) -> Result<()> {
    let mode = args.label_mode;
    let preset_names: Vec<String> = if args.all_presets {
        stackids::models::preset_names()
            .iter()
            .map(|s| s.to_string())
            .collect()
    } else {
        args.presets.clone()
    };
    let mut members = Vec::new();
    for name in &preset_names {
        let mut cfg = preset(name, mode, args.seed)?;
        if let Some(n) = args.epochs {
            apply_epochs(&mut cfg, n);
        }
        members.push(cfg);
    }
    for path in &args.configs {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut cfg = ModelSpec::from_json(&text)?.resolve(mode, Some(args.seed))?;
        if let Some(n) = args.epochs {
            apply_epochs(&mut cfg, n);
        }
        members.push(cfg);
    }
    if members.len() < 2 {
        return Err(Error::Usage(format!(
            "compare needs at least two configurations, got {}",
            members.len()
        )));
    }

    let loaded = load_data(&args.source)?;
    let rc = RunConfig {
        command: "compare".into(),
        source: loaded.source.clone(),
        label_mode: mode,
        test_fraction: args.test_fraction,
        stratified: true,
        balance: true,
        seed: args.seed,
        models: members.clone(),
        dataset_sha256: loaded.sha256.clone(),
    };
    let dir = resolve_run_dir(&args.out, "compare", &loaded.tag, args.seed);
    write_run_setup(&dir, &rc)?;

    let mut rng = RunRng::from_seed(args.seed);
    let prepared = prepare(&loaded.dataset, &rc.pipeline(), &mut rng)?;

    // Members train concurrently; each is self-contained, so the
    // schedule cannot change any result. Output order stays fixed.
    let results: Vec<Result<MemberRow>> = if cfg!(target_arch = "wasm32") {
        members.iter().map(|cfg| run_member(cfg, &prepared)).collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = members
                .iter()
                .map(|cfg| {
                    let p = &prepared;
                    scope.spawn(move || run_member(cfg, p))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("comparison worker panicked"))
                .collect()
        })
    };

    let mut rows = Vec::new();
    for (cfg, result) in members.iter().zip(results) {
        let row = result.map_err(|e| Error::Base {
            name: cfg.name.clone(),
            source: Box::new(e),
        })?;
        println!("trained {}: test accuracy {:.4}", row.name, row.accuracy);
        rows.push(row);
    }
    rows.sort_by(|a, b| {
        b.accuracy
            .partial_cmp(&a.accuracy)
            .expect("finite accuracies")
            .then_with(|| a.name.cmp(&b.name))
    });

    let csv_path = dir.join("comparison.csv");
    let mut writer = csv::Writer::from_path(&csv_path)?;
    writer.write_record(["Model", "Classes", "Accuracy", "Precision", "Recall", "F1-Score"])?;
    for r in &rows {
        writer.write_record([
            r.name.as_str(),
            &r.classes.to_string(),
            &pct(r.accuracy),
            &pct(r.precision),
            &pct(r.recall),
            &pct(r.f1),
        ])?;
    }
    writer.flush()?;
    print!("{}", fs::read_to_string(&csv_path)?);
    println!("table: {}", csv_path.display());
    Ok(())
}
