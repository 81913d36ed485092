//! Stacked ensemble: base models produce out-of-fold probabilities, a
//! dense meta-learner trains on them, and the bases are then retrained
//! on the full split for inference.

use serde::{Deserialize, Serialize};

use super::train::{clock_elapsed, clock_start, train, TrainReport};
use super::{accuracy_against, classes_from_targets, hex, Model, ModelConfig, ModelKind};
use crate::data::EncodedMatrix;
use crate::error::{Error, Result};
use crate::rng::RunRng;
use crate::tensor::Tensor;
use sha2::{Digest, Sha256};

/// A trained ensemble: ordered base models and the meta-learner that
/// consumes their concatenated probability outputs.
#[derive(Debug, Clone)]
pub struct StackedModel {
    pub config: ModelConfig,
    pub feature_width: usize,
    pub bases: Vec<Model>,
    pub meta: Model,
}

/// Which rows each fold held out, and which rows the per-fold models
/// trained on. Together with the seed schedule this makes the
/// out-of-fold protocol auditable: the model predicting row `i` never
/// trained on row `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub train_rows: Vec<usize>,
    pub holdout_rows: Vec<usize>,
}

/// Full audit trail of one ensemble training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedReport {
    pub config: ModelConfig,
    pub seed: u64,
    pub folds: Vec<FoldRecord>,
    /// Reports of the full-split base retrains, in base order.
    pub base_reports: Vec<TrainReport>,
    pub meta_report: TrainReport,
    /// Ensemble accuracy over its own training split, measured after
    /// assembly.
    pub train_accuracy: f64,
    pub wall_seconds: f64,
    pub param_checksum: String,
}

impl StackedModel {
    pub fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        predict_stacked(self, x)
    }

    /// Combined digest over every base checksum and the meta checksum,
    /// order sensitive.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for base in &self.bases {
            hasher.update(base.checksum().as_bytes());
        }
        hasher.update(self.meta.checksum().as_bytes());
        hex(&hasher.finalize())
    }

    pub fn param_count(&self) -> usize {
        self.bases.iter().map(Model::param_count).sum::<usize>() + self.meta.param_count()
    }
}

/// Deals each class's rows round-robin into `k` folds after a seeded
/// shuffle. Every class present must have at least `k` rows.
fn stratified_folds(classes: &[usize], k: usize, rng: &mut RunRng) -> Result<Vec<Vec<usize>>> {
    let max_class = classes.iter().copied().max().unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); max_class + 1];
    for (i, &c) in classes.iter().enumerate() {
        by_class[c].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(Error::Fold(format!(
                "class {c} has only {} rows for {k} folds",
                members.len()
            )));
        }
    }
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for members in &mut by_class {
        rng.shuffle(members);
        for (i, &row) in members.iter().enumerate() {
            folds[i % k].push(row);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

struct BaseOutcome {
    oof_block: Vec<f64>,
    model: Model,
    report: TrainReport,
}

/// Trains one base across every fold, fills its out-of-fold
/// probability block, then retrains it on the full split.
fn run_base(
    cfg: &ModelConfig,
    data: &EncodedMatrix,
    folds: &[FoldRecord],
    fold_seeds: &[u64],
    retrain_seed: u64,
) -> Result<BaseOutcome> {
    let width = cfg.head_width();
    let n = data.rows();
    let mut oof_block = vec![0.0; n * width];
    for (record, &seed) in folds.iter().zip(fold_seeds) {
        let mut fold_cfg = cfg.clone();
        fold_cfg.seed = seed;
        let fold_data = data.select(&record.train_rows)?;
        let (model, _) = train(&fold_cfg, &fold_data)?;
        let holdout_x = data.x.gather_rows(&record.holdout_rows)?;
        let probs = model.predict_proba(&holdout_x)?;
        for (j, &row) in record.holdout_rows.iter().enumerate() {
            for w in 0..width {
                oof_block[row * width + w] = probs.at2(j, w);
            }
        }
    }
    let mut full_cfg = cfg.clone();
    full_cfg.seed = retrain_seed;
    let (model, report) = train(&full_cfg, data)?;
    Ok(BaseOutcome {
        oof_block,
        model,
        report,
    })
}

/// Trains the full ensemble. The seed schedule (fold shuffles, one
/// seed per base and fold, one per base retrain, one for the meta) is
/// drawn up front from `cfg.seed`, so parallel base training cannot
/// change the result.
pub fn train_stacked(
    cfg: &ModelConfig,
    data: &EncodedMatrix,
) -> Result<(StackedModel, StackedReport)> {
    cfg.validate()?;
    let settings = match (&cfg.kind, &cfg.stacked) {
        (ModelKind::Stacked, Some(s)) => s,
        _ => {
            return Err(Error::Usage(format!(
                "train_stacked needs a stacked configuration, got kind {}",
                cfg.kind
            )))
        }
    };
    data.validate()?;
    if data.label_mode != cfg.label_mode {
        return Err(Error::Usage(format!(
            "data is encoded {} but the ensemble head is {}",
            data.label_mode.name(),
            cfg.label_mode.name()
        )));
    }
    let started = clock_start();
    let n = data.rows();
    let width = cfg.head_width();
    let classes = classes_from_targets(&data.y, data.label_mode)?;

    let mut rng = RunRng::from_seed(cfg.seed);
    let holdouts = stratified_folds(&classes, settings.folds, &mut rng)?;
    let folds: Vec<FoldRecord> = holdouts
        .iter()
        .enumerate()
        .map(|(k, holdout)| {
            let member: Vec<bool> = {
                let mut m = vec![false; n];
                for &row in holdout {
                    m[row] = true;
                }
                m
            };
            FoldRecord {
                fold: k,
                train_rows: (0..n).filter(|&i| !member[i]).collect(),
                holdout_rows: holdout.clone(),
            }
        })
        .collect();

    let fold_seeds: Vec<Vec<u64>> = settings
        .bases
        .iter()
        .map(|_| (0..settings.folds).map(|_| rng.next_u64()).collect())
        .collect();
    let retrain_seeds: Vec<u64> = settings.bases.iter().map(|_| rng.next_u64()).collect();
    let meta_seed = rng.next_u64();

    let run_serial = !settings.parallel
        || settings.bases.len() < 2
        || cfg!(target_arch = "wasm32");
    let outcomes: Vec<Result<BaseOutcome>> = if run_serial {
        settings
            .bases
            .iter()
            .enumerate()
            .map(|(b, base)| run_base(base, data, &folds, &fold_seeds[b], retrain_seeds[b]))
            .collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = settings
                .bases
                .iter()
                .enumerate()
                .map(|(b, base)| {
                    let folds = &folds;
                    let seeds = &fold_seeds[b];
                    let retrain = retrain_seeds[b];
                    scope.spawn(move || run_base(base, data, folds, seeds, retrain))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("base training thread panicked"))
                .collect()
        })
    };

    let total_width = settings.bases.len() * width;
    let mut meta_x = vec![0.0; n * total_width];
    let mut bases = Vec::with_capacity(settings.bases.len());
    let mut base_reports = Vec::with_capacity(settings.bases.len());
    for (b, outcome) in outcomes.into_iter().enumerate() {
        let outcome = outcome.map_err(|e| Error::Base {
            name: settings.bases[b].name.clone(),
            source: Box::new(e),
        })?;
        for row in 0..n {
            for w in 0..width {
                meta_x[row * total_width + b * width + w] = outcome.oof_block[row * width + w];
            }
        }
        bases.push(outcome.model);
        base_reports.push(outcome.report);
    }

    let meta_features: Vec<String> = settings
        .bases
        .iter()
        .flat_map(|base| (0..width).map(move |w| format!("{}:p{w}", base.name)))
        .collect();
    let meta_data = EncodedMatrix {
        x: Tensor::new(vec![n, total_width], meta_x)?,
        y: data.y.clone(),
        feature_names: meta_features,
        label_mode: data.label_mode,
    };
    let meta_cfg = cfg.meta_config(meta_seed);
    let (meta, meta_report) = train(&meta_cfg, &meta_data).map_err(|e| Error::Base {
        name: meta_cfg.name.clone(),
        source: Box::new(e),
    })?;

    let model = StackedModel {
        config: cfg.clone(),
        feature_width: data.features(),
        bases,
        meta,
    };
    let train_probs = model.predict_proba(&data.x)?;
    let train_accuracy = accuracy_against(&train_probs, &data.y, data.label_mode)?;
    let report = StackedReport {
        config: cfg.clone(),
        seed: cfg.seed,
        folds,
        base_reports,
        meta_report,
        train_accuracy,
        wall_seconds: clock_elapsed(started),
        param_checksum: model.checksum(),
    };
    Ok((model, report))
}

/// Runs every base over `x`, concatenates their probability outputs in
/// base order, and feeds the result to the meta-learner.
pub fn predict_stacked(sm: &StackedModel, x: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 || x.shape()[1] != sm.feature_width {
        return Err(Error::ShapeMismatch {
            op: "predict_stacked",
            lhs: x.shape().to_vec(),
            rhs: vec![x.shape().first().copied().unwrap_or(0), sm.feature_width],
        });
    }
    let parts: Vec<Tensor> = sm
        .bases
        .iter()
        .map(|b| b.predict_proba(x))
        .collect::<Result<_>>()?;
    let concat = concat_columns(&parts)?;
    sm.meta.predict_proba(&concat)
}

fn concat_columns(parts: &[Tensor]) -> Result<Tensor> {
    let rows = parts[0].shape()[0];
    let total: usize = parts.iter().map(|p| p.shape()[1]).sum();
    let mut out = Vec::with_capacity(rows * total);
    for row in 0..rows {
        for p in parts {
            let w = p.shape()[1];
            for c in 0..w {
                out.push(p.at2(row, c));
            }
        }
    }
    Tensor::new(vec![rows, total], out)
}
