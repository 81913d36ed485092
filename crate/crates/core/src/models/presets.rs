//! Named model presets covering the full hyperparameter sweep: three
//! rows per base family plus three stacked-ensemble rows.

use super::config::{
    default_bases, fit_head, ConvSettings, ModelConfig, ModelKind, StackedSettings,
    DEFAULT_BATCH_SIZE, DEFAULT_FOLDS,
};
use crate::data::LabelMode;
use crate::error::{Error, Result};
use crate::layers::Activation;
use crate::optim::{OptimizerConfig, OptimizerKind};

struct PresetRow {
    name: &'static str,
    kind: ModelKind,
    layers: usize,
    units: &'static [usize],
    activations: &'static [Activation],
    optimizer: OptimizerKind,
    epochs: usize,
}

const ROWS: &[PresetRow] = &[
    PresetRow {
        name: "ann-adagrad-20",
        kind: ModelKind::Ann,
        layers: 3,
        units: &[64, 32, 1],
        activations: &[Activation::Relu, Activation::Tanh],
        optimizer: OptimizerKind::Adagrad,
        epochs: 20,
    },
    PresetRow {
        name: "ann-sgd-20",
        kind: ModelKind::Ann,
        layers: 3,
        units: &[64, 32, 1],
        activations: &[Activation::Softmax, Activation::Sigmoid],
        optimizer: OptimizerKind::Sgd,
        epochs: 20,
    },
    PresetRow {
        name: "ann-adam-20",
        kind: ModelKind::Ann,
        layers: 3,
        units: &[64, 32, 1],
        activations: &[Activation::Softmax, Activation::Relu],
        optimizer: OptimizerKind::Adam,
        epochs: 20,
    },
    PresetRow {
        name: "cnn-adagrad-30",
        kind: ModelKind::Cnn,
        layers: 6,
        units: &[64, 32],
        activations: &[Activation::Tanh, Activation::Relu],
        optimizer: OptimizerKind::Adagrad,
        epochs: 30,
    },
    PresetRow {
        name: "cnn-rmsprop-30",
        kind: ModelKind::Cnn,
        layers: 6,
        units: &[64, 32],
        activations: &[Activation::Softmax, Activation::Relu],
        optimizer: OptimizerKind::Rmsprop,
        epochs: 30,
    },
    PresetRow {
        name: "cnn-adam-30",
        kind: ModelKind::Cnn,
        layers: 6,
        units: &[64, 32],
        activations: &[Activation::Tanh, Activation::Relu],
        optimizer: OptimizerKind::Adam,
        epochs: 30,
    },
    PresetRow {
        name: "lstm-sigmoid-adamax-30",
        kind: ModelKind::Lstm,
        layers: 2,
        units: &[64, 1],
        activations: &[Activation::Sigmoid],
        optimizer: OptimizerKind::Adamax,
        epochs: 30,
    },
    PresetRow {
        name: "lstm-relu-adamax-30",
        kind: ModelKind::Lstm,
        layers: 2,
        units: &[64, 1],
        activations: &[Activation::Relu],
        optimizer: OptimizerKind::Adamax,
        epochs: 30,
    },
    PresetRow {
        name: "lstm-tanh-rmsprop-30",
        kind: ModelKind::Lstm,
        layers: 2,
        units: &[64, 1],
        activations: &[Activation::Tanh],
        optimizer: OptimizerKind::Rmsprop,
        epochs: 30,
    },
    PresetRow {
        name: "rnn-sgd-25",
        kind: ModelKind::Rnn,
        layers: 2,
        units: &[64, 1],
        activations: &[Activation::Softmax],
        optimizer: OptimizerKind::Sgd,
        epochs: 25,
    },
    PresetRow {
        name: "rnn-rmsprop-25",
        kind: ModelKind::Rnn,
        layers: 2,
        units: &[64, 1],
        activations: &[Activation::Tanh],
        optimizer: OptimizerKind::Rmsprop,
        epochs: 25,
    },
    PresetRow {
        name: "rnn-adam-25",
        kind: ModelKind::Rnn,
        layers: 2,
        units: &[64, 1],
        activations: &[Activation::Sigmoid],
        optimizer: OptimizerKind::Adam,
        epochs: 25,
    },
    PresetRow {
        name: "proposed-adagrad-25",
        kind: ModelKind::Stacked,
        layers: 18,
        units: &[64, 32, 1],
        activations: &[Activation::Relu, Activation::Sigmoid],
        optimizer: OptimizerKind::Adagrad,
        epochs: 25,
    },
    PresetRow {
        name: "proposed-adamax-25",
        kind: ModelKind::Stacked,
        layers: 18,
        units: &[64, 32, 1],
        activations: &[Activation::Tanh, Activation::Sigmoid],
        optimizer: OptimizerKind::Adamax,
        epochs: 25,
    },
    PresetRow {
        name: "proposed-adam-25",
        kind: ModelKind::Stacked,
        layers: 18,
        units: &[64, 32, 1],
        activations: &[Activation::Relu, Activation::Tanh],
        optimizer: OptimizerKind::Adam,
        epochs: 25,
    },
];

pub fn preset_names() -> Vec<&'static str> {
    ROWS.iter().map(|r| r.name).collect()
}

/// Builds the named preset for the given label mode and seed. Presets
/// are written with a binary head; in multiclass mode the head widens
/// to the class count.
pub fn preset(name: &str, label_mode: LabelMode, seed: u64) -> Result<ModelConfig> {
    let row = ROWS.iter().find(|r| r.name == name).ok_or_else(|| {
        Error::Config(format!(
            "unknown preset {name:?}; valid presets: {}",
            preset_names().join(", ")
        ))
    })?;
    let stacked = if row.kind == ModelKind::Stacked {
        Some(StackedSettings {
            folds: DEFAULT_FOLDS,
            parallel: true,
            bases: default_bases(label_mode),
        })
    } else {
        None
    };
    let cfg = ModelConfig {
        name: row.name.to_string(),
        kind: row.kind,
        layers: row.layers,
        units: fit_head(row.units.to_vec(), row.kind, label_mode),
        activations: row.activations.to_vec(),
        optimizer: OptimizerConfig::new(row.optimizer),
        epochs: row.epochs,
        batch_size: DEFAULT_BATCH_SIZE,
        label_mode,
        seed,
        conv: ConvSettings::default(),
        stacked,
    };
    cfg.validate()?;
    Ok(cfg)
}
