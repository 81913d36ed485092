//! Model zoo: dense, convolutional and recurrent classifiers over
//! encoded flow records, plus the stacked ensemble that combines them
//! through a meta-learner. All parameters initialize deterministically
//! from the configured seed.

mod config;
mod io;
mod presets;
mod stacked;
mod train;

pub use config::{
    default_bases, ConvSettings, ModelConfig, ModelKind, ModelSpec, StackedSettings,
    DEFAULT_BATCH_SIZE, DEFAULT_FOLDS, DEFAULT_SEED,
};
pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, AnyModel};
pub use presets::{preset, preset_names};
pub use stacked::{predict_stacked, train_stacked, FoldRecord, StackedModel, StackedReport};
pub use train::{train, EpochStat, Trainer, TrainReport};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::LabelMode;
use crate::error::{Error, Result};
use crate::layers::{
    bidirectional, conv1d, dense, split_steps, tabular_as_sequence, BidirMode, CellKind,
    CellParams, CellVars, Conv1dParams, Conv1dVars, DenseParams, DenseVars,
};
use crate::rng::RunRng;
use crate::tensor::{Tape, Tensor, Var};

const PREDICT_CHUNK: usize = 512;

/// A built (possibly trained) single model: resolved config plus
/// parameter tensors.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    feature_width: usize,
    params: ModelParams,
}

#[derive(Debug, Clone)]
enum ModelParams {
    Dense {
        layers: Vec<DenseParams>,
    },
    Conv {
        convs: Vec<Conv1dParams>,
        denses: Vec<DenseParams>,
    },
    Recurrent {
        cell: CellParams,
        head: DenseParams,
    },
    Bidir {
        fwd: CellParams,
        bwd: CellParams,
        head: DenseParams,
    },
}

enum ModelVars {
    Dense {
        layers: Vec<DenseVars>,
    },
    Conv {
        convs: Vec<Conv1dVars>,
        denses: Vec<DenseVars>,
    },
    Recurrent {
        cell: CellVars,
        head: DenseVars,
    },
    Bidir {
        fwd: CellVars,
        bwd: CellVars,
        head: DenseVars,
    },
}

fn cell_kind_of(kind: ModelKind) -> CellKind {
    match kind {
        ModelKind::Lstm | ModelKind::Bilstm => CellKind::Lstm,
        ModelKind::Gru | ModelKind::Bigru => CellKind::Gru,
        _ => CellKind::Rnn,
    }
}

impl Model {
    /// Allocates and initializes parameters from `config.seed`.
    pub fn build(config: ModelConfig, feature_width: usize) -> Result<Model> {
        let mut rng = RunRng::from_seed(config.seed);
        Model::build_with(config, feature_width, &mut rng)
    }

    /// As `build`, but drawing initial parameters from the given
    /// generator so a caller can keep consuming it afterwards.
    pub(crate) fn build_with(
        config: ModelConfig,
        feature_width: usize,
        rng: &mut RunRng,
    ) -> Result<Model> {
        config.validate()?;
        if config.kind == ModelKind::Stacked {
            return Err(Error::Usage(
                "stacked ensembles are assembled by train_stacked, not Model::build".into(),
            ));
        }
        if feature_width == 0 {
            return Err(Error::Config("feature width must be positive".into()));
        }

        let params = match config.kind {
            ModelKind::Ann => {
                let mut widths = vec![feature_width];
                widths.extend_from_slice(&config.units);
                let layers = widths
                    .windows(2)
                    .map(|w| DenseParams::init(w[0], w[1], rng))
                    .collect();
                ModelParams::Dense { layers }
            }
            ModelKind::Cnn => {
                let mut channels = vec![1];
                channels.extend_from_slice(&config.conv.channels);
                let convs = channels
                    .windows(2)
                    .map(|c| {
                        Conv1dParams::init(
                            c[0],
                            c[1],
                            config.conv.kernel,
                            config.conv.stride,
                            config.conv.padding,
                            rng,
                        )
                    })
                    .collect();
                let mut widths = vec![*channels.last().unwrap()];
                widths.extend_from_slice(&config.units);
                widths.push(config.head_width());
                let denses = widths
                    .windows(2)
                    .map(|w| DenseParams::init(w[0], w[1], rng))
                    .collect();
                ModelParams::Conv { convs, denses }
            }
            kind if kind.is_bidirectional() => {
                let hidden = config.units[0];
                let fwd = CellParams::init(cell_kind_of(kind), 1, hidden, rng);
                let bwd = CellParams::init(cell_kind_of(kind), 1, hidden, rng);
                let head = DenseParams::init(2 * hidden, config.units[1], rng);
                ModelParams::Bidir { fwd, bwd, head }
            }
            kind => {
                let hidden = config.units[0];
                let cell = CellParams::init(cell_kind_of(kind), 1, hidden, rng);
                let head = DenseParams::init(hidden, config.units[1], rng);
                ModelParams::Recurrent { cell, head }
            }
        };
        Ok(Model {
            config,
            feature_width,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    fn bind(&self, tape: &mut Tape) -> ModelVars {
        match &self.params {
            ModelParams::Dense { layers } => ModelVars::Dense {
                layers: layers.iter().map(|l| l.bind(tape)).collect(),
            },
            ModelParams::Conv { convs, denses } => ModelVars::Conv {
                convs: convs.iter().map(|c| c.bind(tape)).collect(),
                denses: denses.iter().map(|d| d.bind(tape)).collect(),
            },
            ModelParams::Recurrent { cell, head } => ModelVars::Recurrent {
                cell: cell.bind(tape),
                head: head.bind(tape),
            },
            ModelParams::Bidir { fwd, bwd, head } => ModelVars::Bidir {
                fwd: fwd.bind(tape),
                bwd: bwd.bind(tape),
                head: head.bind(tape),
            },
        }
    }

    /// Builds the forward graph for a batch and returns the probability
    /// output variable.
    fn forward(&self, tape: &mut Tape, vars: &ModelVars, x: &Tensor) -> Result<Var> {
        if x.rank() != 2 || x.shape()[1] != self.feature_width {
            return Err(Error::ShapeMismatch {
                op: "forward",
                lhs: x.shape().to_vec(),
                rhs: vec![x.shape().first().copied().unwrap_or(0), self.feature_width],
            });
        }
        let cfg = &self.config;
        let head_act = cfg.head_activation();
        match vars {
            ModelVars::Dense { layers } => {
                let mut h = tape.input(x.clone());
                for (i, layer) in layers.iter().enumerate() {
                    let act = if i + 1 == layers.len() {
                        head_act
                    } else {
                        cfg.activation_at(i)
                    };
                    h = dense(tape, h, layer, Some(act))?;
                }
                Ok(h)
            }
            ModelVars::Conv { convs, denses } => {
                let seq = tabular_as_sequence(x)?;
                let mut h = tape.input(seq);
                let mut act_index = 0;
                for conv in convs {
                    h = conv1d(tape, h, conv, Some(cfg.activation_at(act_index)))?;
                    act_index += 1;
                    h = tape.max_pool1d(h, cfg.conv.pool, cfg.conv.pool)?;
                }
                h = tape.gap(h)?;
                for (i, layer) in denses.iter().enumerate() {
                    let act = if i + 1 == denses.len() {
                        head_act
                    } else {
                        let a = cfg.activation_at(act_index);
                        act_index += 1;
                        a
                    };
                    h = dense(tape, h, layer, Some(act))?;
                }
                Ok(h)
            }
            ModelVars::Recurrent { cell, head } => {
                let seq = tabular_as_sequence(x)?;
                let steps = split_steps(tape, &seq)?;
                let states = crate::layers::run_cell(tape, cell, &steps)?;
                let last = *states.last().unwrap();
                let activated =
                    crate::layers::activation(tape, cfg.activation_at(0), last)?;
                dense(tape, activated, head, Some(head_act))
            }
            ModelVars::Bidir { fwd, bwd, head } => {
                let seq = tabular_as_sequence(x)?;
                let steps = split_steps(tape, &seq)?;
                let merged = bidirectional(tape, fwd, bwd, &steps, BidirMode::FinalConcat)?;
                let activated =
                    crate::layers::activation(tape, cfg.activation_at(0), merged)?;
                dense(tape, activated, head, Some(head_act))
            }
        }
    }

    /// Runs the model over `x [N, F]` in chunks and returns
    /// probabilities: `[N, 1]` P(attack) for a binary head, `[N, C]`
    /// rows summing to 1 for a multiclass head.
    pub fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 2 || x.shape()[1] != self.feature_width {
            return Err(Error::ShapeMismatch {
                op: "predict_proba",
                lhs: x.shape().to_vec(),
                rhs: vec![x.shape().first().copied().unwrap_or(0), self.feature_width],
            });
        }
        let n = x.shape()[0];
        let width = self.config.head_width();
        let mut out = Vec::with_capacity(n * width);
        let mut start = 0;
        while start < n {
            let end = (start + PREDICT_CHUNK).min(n);
            let rows: Vec<usize> = (start..end).collect();
            let xb = x.gather_rows(&rows)?;
            let mut tape = Tape::new();
            let vars = self.bind(&mut tape);
            let p = self.forward(&mut tape, &vars, &xb)?;
            out.extend_from_slice(tape.value(p)?.data());
            start = end;
        }
        Tensor::new(vec![n, width], out)
    }

    /// Parameter tensors with human-readable names, in a fixed order
    /// shared by `flat_params_mut` and the bound gradient list.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        match &self.params {
            ModelParams::Dense { layers } => {
                for (i, l) in layers.iter().enumerate() {
                    l.visit(&format!("dense{i}"), &mut out);
                }
            }
            ModelParams::Conv { convs, denses } => {
                for (i, c) in convs.iter().enumerate() {
                    c.visit(&format!("conv{i}"), &mut out);
                }
                for (i, d) in denses.iter().enumerate() {
                    d.visit(&format!("dense{i}"), &mut out);
                }
            }
            ModelParams::Recurrent { cell, head } => {
                cell.visit("cell", &mut out);
                head.visit("head", &mut out);
            }
            ModelParams::Bidir { fwd, bwd, head } => {
                fwd.visit("fwd", &mut out);
                bwd.visit("bwd", &mut out);
                head.visit("head", &mut out);
            }
        }
        out
    }

    pub(crate) fn flat_params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        match &mut self.params {
            ModelParams::Dense { layers } => {
                for l in layers {
                    l.visit_mut(&mut out);
                }
            }
            ModelParams::Conv { convs, denses } => {
                for c in convs {
                    c.visit_mut(&mut out);
                }
                for d in denses {
                    d.visit_mut(&mut out);
                }
            }
            ModelParams::Recurrent { cell, head } => {
                cell.visit_mut(&mut out);
                head.visit_mut(&mut out);
            }
            ModelParams::Bidir { fwd, bwd, head } => {
                fwd.visit_mut(&mut out);
                bwd.visit_mut(&mut out);
                head.visit_mut(&mut out);
            }
        }
        out
    }

    fn collect_vars(vars: &ModelVars) -> Vec<Var> {
        let mut out = Vec::new();
        match vars {
            ModelVars::Dense { layers } => {
                for l in layers {
                    l.collect(&mut out);
                }
            }
            ModelVars::Conv { convs, denses } => {
                for c in convs {
                    c.collect(&mut out);
                }
                for d in denses {
                    d.collect(&mut out);
                }
            }
            ModelVars::Recurrent { cell, head } => {
                cell.collect(&mut out);
                head.collect(&mut out);
            }
            ModelVars::Bidir { fwd, bwd, head } => {
                fwd.collect(&mut out);
                bwd.collect(&mut out);
                head.collect(&mut out);
            }
        }
        out
    }

    /// Overwrites every parameter tensor, in `named_params` order.
    pub(crate) fn set_params(&mut self, tensors: Vec<Tensor>) -> Result<()> {
        let slots = self.flat_params_mut();
        if slots.len() != tensors.len() {
            return Err(Error::Integrity(format!(
                "model expects {} parameter tensors, got {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (slot, t) in slots.into_iter().zip(tensors) {
            if slot.shape() != t.shape() {
                return Err(Error::Integrity(format!(
                    "parameter shape {:?} does not match stored {:?}",
                    slot.shape(),
                    t.shape()
                )));
            }
            *slot = t;
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Hex digest over every parameter's shape and contents, in order.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, t) in self.named_params() {
            hasher.update(name.as_bytes());
            for &d in t.shape() {
                hasher.update((d as u64).to_le_bytes());
            }
            for v in t.data() {
                hasher.update(v.to_le_bytes());
            }
        }
        hex(&hasher.finalize())
    }

    pub fn summary(&self) -> ArchSummary {
        let cfg = &self.config;
        let mut lines = Vec::new();
        match &self.params {
            ModelParams::Dense { layers } => {
                for (i, l) in layers.iter().enumerate() {
                    let act = if i + 1 == layers.len() {
                        cfg.head_activation()
                    } else {
                        cfg.activation_at(i)
                    };
                    lines.push(format!(
                        "dense{i}: {} -> {} ({act})",
                        l.w.shape()[0],
                        l.w.shape()[1]
                    ));
                }
            }
            ModelParams::Conv { convs, denses } => {
                let mut act_index = 0;
                for (i, c) in convs.iter().enumerate() {
                    lines.push(format!(
                        "conv{i}: channels {} -> {}, kernel {} ({})",
                        c.kernels.shape()[1],
                        c.kernels.shape()[0],
                        c.kernels.shape()[2],
                        cfg.activation_at(act_index)
                    ));
                    act_index += 1;
                    lines.push(format!("pool{i}: window {}", cfg.conv.pool));
                }
                lines.push("gap: mean over sequence".to_string());
                for (i, d) in denses.iter().enumerate() {
                    let act = if i + 1 == denses.len() {
                        cfg.head_activation()
                    } else {
                        let a = cfg.activation_at(act_index);
                        act_index += 1;
                        a
                    };
                    lines.push(format!(
                        "dense{i}: {} -> {} ({act})",
                        d.w.shape()[0],
                        d.w.shape()[1]
                    ));
                }
            }
            ModelParams::Recurrent { cell, head } => {
                lines.push(format!(
                    "{}: input 1 -> hidden {} ({})",
                    cfg.kind,
                    cell.hidden(),
                    cfg.activation_at(0)
                ));
                lines.push(format!(
                    "head: {} -> {} ({})",
                    head.w.shape()[0],
                    head.w.shape()[1],
                    cfg.head_activation()
                ));
            }
            ModelParams::Bidir { fwd, head, .. } => {
                lines.push(format!(
                    "{}: input 1 -> hidden {} each way ({})",
                    cfg.kind,
                    fwd.hidden(),
                    cfg.activation_at(0)
                ));
                lines.push(format!(
                    "head: {} -> {} ({})",
                    head.w.shape()[0],
                    head.w.shape()[1],
                    cfg.head_activation()
                ));
            }
        }
        ArchSummary {
            name: cfg.name.clone(),
            kind: cfg.kind.name().to_string(),
            declared_layers: cfg.layers,
            layers: lines,
            param_count: self.param_count(),
        }
    }
}

/// Per-layer shapes and the total parameter count of a built model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSummary {
    pub name: String,
    pub kind: String,
    pub declared_layers: usize,
    pub layers: Vec<String>,
    pub param_count: usize,
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Predicted class index per row: threshold 0.5 for a probability
/// column, arg-max for probability rows.
pub fn classes_from_probs(probs: &Tensor, mode: LabelMode) -> Result<Vec<usize>> {
    if probs.rank() != 2 || probs.shape()[1] != mode.class_count() {
        return Err(Error::ShapeMismatch {
            op: "classes_from_probs",
            lhs: probs.shape().to_vec(),
            rhs: vec![probs.shape().first().copied().unwrap_or(0), mode.class_count()],
        });
    }
    let n = probs.shape()[0];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        match mode {
            LabelMode::Binary => out.push((probs.at2(i, 0) >= 0.5) as usize),
            LabelMode::Multiclass => {
                let mut best = 0;
                for c in 1..mode.class_count() {
                    if probs.at2(i, c) > probs.at2(i, best) {
                        best = c;
                    }
                }
                out.push(best);
            }
        }
    }
    Ok(out)
}

/// True class index per row of a target matrix.
pub fn classes_from_targets(y: &Tensor, mode: LabelMode) -> Result<Vec<usize>> {
    if y.rank() != 2 || y.shape()[1] != mode.class_count() {
        return Err(Error::ShapeMismatch {
            op: "classes_from_targets",
            lhs: y.shape().to_vec(),
            rhs: vec![y.shape().first().copied().unwrap_or(0), mode.class_count()],
        });
    }
    let n = y.shape()[0];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        match mode {
            LabelMode::Binary => out.push((y.at2(i, 0) != 0.0) as usize),
            LabelMode::Multiclass => {
                let mut best = 0;
                for c in 1..mode.class_count() {
                    if y.at2(i, c) > y.at2(i, best) {
                        best = c;
                    }
                }
                out.push(best);
            }
        }
    }
    Ok(out)
}

/// Fraction of rows whose predicted class matches the target.
pub fn accuracy_against(probs: &Tensor, y: &Tensor, mode: LabelMode) -> Result<f64> {
    let predicted = classes_from_probs(probs, mode)?;
    let truth = classes_from_targets(y, mode)?;
    if predicted.len() != truth.len() {
        return Err(Error::Validation(format!(
            "{} predictions against {} targets",
            predicted.len(),
            truth.len()
        )));
    }
    let correct = predicted
        .iter()
        .zip(&truth)
        .filter(|(a, b)| a == b)
        .count();
    Ok(correct as f64 / predicted.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Activation;

    fn ann_config(units: Vec<usize>, mode: LabelMode) -> ModelConfig {
        ModelConfig {
            name: "test-ann".into(),
            kind: ModelKind::Ann,
            layers: units.len(),
            units,
            activations: vec![Activation::Relu, Activation::Tanh],
            optimizer: crate::optim::OptimizerConfig::new(crate::optim::OptimizerKind::Adagrad),
            epochs: 1,
            batch_size: 16,
            label_mode: mode,
            seed: 5,
            conv: ConvSettings::default(),
            stacked: None,
        }
    }

    fn kind_config(kind: ModelKind, mode: LabelMode) -> ModelConfig {
        let head = mode.class_count();
        let (units, layers) = match kind {
            ModelKind::Ann => (vec![16, 8, head], 3),
            ModelKind::Cnn => (vec![16, 8], 6),
            _ => (vec![8, head], 2),
        };
        ModelConfig {
            name: format!("test-{kind}"),
            kind,
            layers,
            units,
            activations: vec![Activation::Relu],
            optimizer: crate::optim::OptimizerConfig::new(crate::optim::OptimizerKind::Adam),
            epochs: 1,
            batch_size: 8,
            label_mode: mode,
            seed: 11,
            conv: ConvSettings::default(),
            stacked: None,
        }
    }

    #[test]
    fn ann_param_count_matches_shape_arithmetic() {
        let model = Model::build(ann_config(vec![64, 32, 1], LabelMode::Binary), 196).unwrap();
        let expected = (196 * 64 + 64) + (64 * 32 + 32) + (32 * 1 + 1);
        assert_eq!(model.param_count(), expected);
        assert_eq!(model.param_count(), 14_721);
    }

    #[test]
    fn cnn_param_count_matches_shape_arithmetic() {
        let cfg = kind_config(ModelKind::Cnn, LabelMode::Binary);
        let model = Model::build(cfg, 40).unwrap();
        let conv0 = 32 * 1 * 3 + 32;
        let conv1 = 64 * 32 * 3 + 64;
        let dense = (64 * 16 + 16) + (16 * 8 + 8) + (8 * 1 + 1);
        assert_eq!(model.param_count(), conv0 + conv1 + dense);
    }

    #[test]
    fn same_seed_means_same_checksum() {
        let a = Model::build(ann_config(vec![8, 1], LabelMode::Binary), 6).unwrap();
        let b = Model::build(ann_config(vec![8, 1], LabelMode::Binary), 6).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        let mut other_cfg = ann_config(vec![8, 1], LabelMode::Binary);
        other_cfg.seed = 6;
        let c = Model::build(other_cfg, 6).unwrap();
        assert_ne!(a.checksum(), c.checksum());
    }

    #[test]
    fn zeroed_head_gives_even_probabilities() {
        let mut model = Model::build(ann_config(vec![8, 1], LabelMode::Binary), 4).unwrap();
        let count = model.flat_params_mut().len();
        for (i, t) in model.flat_params_mut().into_iter().enumerate() {
            if i + 2 >= count {
                *t = Tensor::zeros(t.shape());
            }
        }
        let mut rng = RunRng::from_seed(3);
        let x = Tensor::new(vec![5, 4], (0..20).map(|_| rng.normal()).collect()).unwrap();
        let p = model.predict_proba(&x).unwrap();
        for &v in p.data() {
            assert_eq!(v, 0.5);
        }
    }

    #[test]
    fn every_kind_emits_valid_multiclass_probabilities() {
        let kinds = [
            ModelKind::Ann,
            ModelKind::Cnn,
            ModelKind::Lstm,
            ModelKind::Gru,
            ModelKind::Rnn,
            ModelKind::Bilstm,
            ModelKind::Bigru,
        ];
        let mut rng = RunRng::from_seed(8);
        let x = Tensor::new(vec![6, 12], (0..72).map(|_| rng.normal()).collect()).unwrap();
        for kind in kinds {
            let model = Model::build(kind_config(kind, LabelMode::Multiclass), 12).unwrap();
            let p = model.predict_proba(&x).unwrap();
            assert_eq!(p.shape(), &[6, 10], "{kind}");
            for i in 0..6 {
                let row: f64 = (0..10).map(|c| p.at2(i, c)).sum();
                assert!((row - 1.0).abs() < 1e-6, "{kind}: row {i} sums to {row}");
                for c in 0..10 {
                    assert!((0.0..=1.0).contains(&p.at2(i, c)));
                }
            }
        }
    }

    #[test]
    fn binary_probabilities_stay_in_unit_interval() {
        let mut rng = RunRng::from_seed(2);
        let x = Tensor::new(vec![9, 10], (0..90).map(|_| rng.normal()).collect()).unwrap();
        for kind in [ModelKind::Ann, ModelKind::Cnn, ModelKind::Bilstm] {
            let model = Model::build(kind_config(kind, LabelMode::Binary), 10).unwrap();
            let p = model.predict_proba(&x).unwrap();
            assert_eq!(p.shape(), &[9, 1]);
            assert!(p.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn dense_forward_matches_loop_oracle() {
        let cfg = ann_config(vec![6, 4, 1], LabelMode::Binary);
        let model = Model::build(cfg, 7).unwrap();
        let mut rng = RunRng::from_seed(21);
        let x = Tensor::new(vec![5, 7], (0..35).map(|_| rng.normal()).collect()).unwrap();
        let fast = model.predict_proba(&x).unwrap();

        // Independent forward pass with plain loops.
        let params = model.named_params();
        let weights: Vec<&Tensor> = params.iter().map(|(_, t)| *t).collect();
        let acts = [Some(Activation::Relu), Some(Activation::Tanh), None];
        for row in 0..5 {
            let mut h: Vec<f64> = (0..7).map(|j| x.at2(row, j)).collect();
            for layer in 0..3 {
                let w = weights[layer * 2];
                let b = weights[layer * 2 + 1];
                let out_w = w.shape()[1];
                let mut next = vec![0.0; out_w];
                for o in 0..out_w {
                    let mut z = b.data()[o];
                    for (i, hv) in h.iter().enumerate() {
                        z += hv * w.at2(i, o);
                    }
                    next[o] = match acts[layer] {
                        Some(Activation::Relu) => z.max(0.0),
                        Some(Activation::Tanh) => z.tanh(),
                        _ => 1.0 / (1.0 + (-z).exp()),
                    };
                }
                h = next;
            }
            assert!(
                (h[0] - fast.at2(row, 0)).abs() < 1e-10,
                "row {row}: {} vs {}",
                h[0],
                fast.at2(row, 0)
            );
        }
    }

    #[test]
    fn width_mismatch_is_a_dimension_error() {
        let model = Model::build(ann_config(vec![4, 1], LabelMode::Binary), 6).unwrap();
        let x = Tensor::zeros(&[3, 5]);
        let err = model.predict_proba(&x).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn class_helpers_agree_with_hand_labels() {
        let probs =
            Tensor::new(vec![3, 1], vec![0.2, 0.5, 0.9]).unwrap();
        assert_eq!(
            classes_from_probs(&probs, LabelMode::Binary).unwrap(),
            vec![0, 1, 1]
        );
        let multi = Tensor::new(
            vec![2, 10],
            (0..20)
                .map(|i| if i == 3 || i == 17 { 0.9 } else { 0.0 })
                .collect(),
        )
        .unwrap();
        assert_eq!(
            classes_from_probs(&multi, LabelMode::Multiclass).unwrap(),
            vec![3, 7]
        );
        let y = Tensor::new(vec![3, 1], vec![0.0, 1.0, 1.0]).unwrap();
        assert_eq!(
            accuracy_against(&probs, &y, LabelMode::Binary).unwrap(),
            1.0
        );
    }

    #[test]
    fn summary_reports_structure() {
        let model = Model::build(kind_config(ModelKind::Cnn, LabelMode::Binary), 30).unwrap();
        let s = model.summary();
        assert_eq!(s.declared_layers, 6);
        assert!(s.layers.iter().any(|l| l.starts_with("conv0")));
        assert!(s.layers.iter().any(|l| l.starts_with("gap")));
        assert_eq!(s.param_count, model.param_count());
    }
}
