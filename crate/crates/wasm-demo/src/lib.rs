//! Interactive browser playground: train a small dense network on a
//! 2-D synthetic dataset and draw its decision boundary, inspect the
//! ROC curve behind a threshold slider, and race the five optimizers
//! on one problem. All logic lives in plain functions so the host test
//! suite covers it; `wasm.rs` adds the thin browser bindings.

use serde::{Deserialize, Serialize};

use stackids::data::{EncodedMatrix, LabelMode};
use stackids::layers::Activation;
use stackids::metrics::{auc, roc_curve};
use stackids::models::{train, ConvSettings, ModelConfig, ModelKind};
use stackids::optim::{OptimizerConfig, OptimizerKind};
use stackids::rng::RunRng;
use stackids::synth::{gaussian_blobs, spiral, xor_blobs};
use stackids::tensor::Tensor;
use stackids::{Error, Result};

#[cfg(target_arch = "wasm32")]
mod wasm;

/// Probability surface sampled on a regular grid over the data's
/// bounding box, row-major from (x0, y0).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryGrid {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoPoint {
    pub x: f64,
    pub y: f64,
    pub label: u8,
}

/// One ROC operating point. The sweep threshold is deliberately not
/// included: its first value is infinite, which JSON cannot carry, and
/// the page recomputes counts for any threshold via `threshold_counts`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocSample {
    pub fpr: f64,
    pub tpr: f64,
}

/// Everything the boundary and ROC panels need from one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainDemo {
    pub points: Vec<DemoPoint>,
    pub losses: Vec<f64>,
    pub accuracies: Vec<f64>,
    pub final_accuracy: f64,
    pub grid: BoundaryGrid,
    /// Model scores per point, aligned with `points`.
    pub scores: Vec<f64>,
    pub roc: Vec<RocSample>,
    pub auc: f64,
}

/// Confusion counts at one score threshold, with the derived rates.
/// Rates are `None` when their denominator is empty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdCounts {
    pub threshold: f64,
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
}

/// One optimizer's trajectory in the race.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RaceLane {
    pub name: String,
    pub losses: Vec<f64>,
    pub final_accuracy: f64,
}

const GRID_SIDE: usize = 60;
const MAX_HIDDEN: usize = 64;
const MAX_EPOCHS: usize = 200;

fn demo_dataset(name: &str, rng: &mut RunRng) -> Result<(Tensor, Tensor)> {
    match name.trim().to_ascii_lowercase().as_str() {
        "blobs" => gaussian_blobs(300, 4.0, rng),
        "xor" => xor_blobs(400, 0.18, rng),
        "spiral" => spiral(400, 0.05, rng),
        other => Err(Error::Usage(format!(
            "unknown dataset {other:?} (expected blobs, xor or spiral)"
        ))),
    }
}

fn demo_config(
    hidden: usize,
    optimizer: OptimizerKind,
    learning_rate: f64,
    epochs: usize,
    seed: u64,
) -> Result<ModelConfig> {
    if hidden == 0 || hidden > MAX_HIDDEN {
        return Err(Error::Usage(format!(
            "hidden units must be 1..={MAX_HIDDEN}, got {hidden}"
        )));
    }
    if epochs == 0 || epochs > MAX_EPOCHS {
        return Err(Error::Usage(format!(
            "epochs must be 1..={MAX_EPOCHS}, got {epochs}"
        )));
    }
    if !learning_rate.is_finite() || learning_rate <= 0.0 {
        return Err(Error::Usage(format!(
            "learning rate must be positive and finite, got {learning_rate}"
        )));
    }
    Ok(ModelConfig {
        name: "demo".into(),
        kind: ModelKind::Ann,
        layers: 2,
        units: vec![hidden, 1],
        activations: vec![Activation::Tanh],
        optimizer: OptimizerConfig::new(optimizer).with_learning_rate(learning_rate),
        epochs,
        batch_size: 16,
        label_mode: LabelMode::Binary,
        seed,
        conv: ConvSettings::default(),
        stacked: None,
    })
}

fn as_encoded(x: Tensor, y: Tensor) -> EncodedMatrix {
    EncodedMatrix {
        x,
        y,
        feature_names: vec!["x".into(), "y".into()],
        label_mode: LabelMode::Binary,
    }
}

/// Trains a one-hidden-layer network on the named dataset and returns
/// the boundary surface, learning curves and ROC data.
pub fn train_demo(
    dataset: &str,
    hidden: usize,
    optimizer: &str,
    learning_rate: f64,
    epochs: usize,
    seed: u64,
) -> Result<TrainDemo> {
    let kind = OptimizerKind::parse(optimizer)?;
    let cfg = demo_config(hidden, kind, learning_rate, epochs, seed)?;
    let mut rng = RunRng::from_seed(seed);
    let (x, y) = demo_dataset(dataset, &mut rng)?;
    let data = as_encoded(x, y);
    let (model, report) = train(&cfg, &data)?;

    let n = data.rows();
    let points: Vec<DemoPoint> = (0..n)
        .map(|i| DemoPoint {
            x: data.x.at2(i, 0),
            y: data.x.at2(i, 1),
            label: (data.y.at2(i, 0) != 0.0) as u8,
        })
        .collect();

    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &points {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let margin_x = 0.1 * (x1 - x0).max(1e-9);
    let margin_y = 0.1 * (y1 - y0).max(1e-9);
    x0 -= margin_x;
    x1 += margin_x;
    y0 -= margin_y;
    y1 += margin_y;

    let mut cells = Vec::with_capacity(GRID_SIDE * GRID_SIDE * 2);
    for row in 0..GRID_SIDE {
        let gy = y0 + (y1 - y0) * row as f64 / (GRID_SIDE - 1) as f64;
        for col in 0..GRID_SIDE {
            let gx = x0 + (x1 - x0) * col as f64 / (GRID_SIDE - 1) as f64;
            cells.push(gx);
            cells.push(gy);
        }
    }
    let grid_x = Tensor::new(vec![GRID_SIDE * GRID_SIDE, 2], cells)?;
    let grid_probs = model.predict_proba(&grid_x)?;

    let scores: Vec<f64> = model.predict_proba(&data.x)?.data().to_vec();
    let labels: Vec<bool> = points.iter().map(|p| p.label == 1).collect();
    let curve = roc_curve(&scores, &labels)?;
    let area = auc(&curve)?;

    Ok(TrainDemo {
        points,
        losses: report.epochs.iter().map(|e| e.loss).collect(),
        accuracies: report.epochs.iter().map(|e| e.accuracy).collect(),
        final_accuracy: report.final_accuracy(),
        grid: BoundaryGrid {
            x0,
            x1,
            y0,
            y1,
            nx: GRID_SIDE,
            ny: GRID_SIDE,
            probs: grid_probs.data().to_vec(),
        },
        scores,
        roc: curve
            .iter()
            .map(|p| RocSample { fpr: p.fpr, tpr: p.tpr })
            .collect(),
        auc: area,
    })
}

/// Confusion counts when scoring `score >= threshold` as positive.
pub fn threshold_counts(
    scores: &[f64],
    labels: &[bool],
    threshold: f64,
) -> Result<ThresholdCounts> {
    if scores.len() != labels.len() {
        return Err(Error::Usage(format!(
            "scores and labels differ in length: {} vs {}",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Usage("no scores to threshold".into()));
    }
    if !threshold.is_finite() {
        return Err(Error::Usage(format!("threshold {threshold} is not finite")));
    }
    let (mut tp, mut fp, mut tn, mut fng) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fng += 1,
        }
    }
    let rate = |num: usize, den: usize| {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    Ok(ThresholdCounts {
        threshold,
        true_positive: tp,
        false_positive: fp,
        true_negative: tn,
        false_negative: fng,
        tpr: rate(tp, tp + fng),
        fpr: rate(fp, fp + tn),
        precision: rate(tp, tp + fp),
    })
}

/// Trains one identical network per optimizer on the named dataset and
/// returns their loss trajectories, each at its default learning rate.
pub fn optimizer_race(
    dataset: &str,
    hidden: usize,
    epochs: usize,
    seed: u64,
) -> Result<Vec<RaceLane>> {
    let kinds = [
        OptimizerKind::Sgd,
        OptimizerKind::Adagrad,
        OptimizerKind::Rmsprop,
        OptimizerKind::Adam,
        OptimizerKind::Adamax,
    ];
    let mut lanes = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let cfg = demo_config(hidden, kind, kind.default_learning_rate(), epochs, seed)?;
        let mut rng = RunRng::from_seed(seed);
        let (x, y) = demo_dataset(dataset, &mut rng)?;
        let (_, report) = train(&cfg, &as_encoded(x, y))?;
        lanes.push(RaceLane {
            name: kind.name().to_string(),
            losses: report.epochs.iter().map(|e| e.loss).collect(),
            final_accuracy: report.final_accuracy(),
        });
    }
    Ok(lanes)
}
