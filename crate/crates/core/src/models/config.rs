//! Model configuration: the resolved form every trainer consumes, and
//! the terse user-facing spec it is resolved from.

use serde::{Deserialize, Serialize};

use crate::data::LabelMode;
use crate::error::{Error, Result};
use crate::layers::Activation;
use crate::optim::{OptimizerConfig, OptimizerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ann,
    Cnn,
    Lstm,
    Gru,
    Rnn,
    Bilstm,
    Bigru,
    Stacked,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<ModelKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ann" => Ok(ModelKind::Ann),
            "cnn" => Ok(ModelKind::Cnn),
            "lstm" => Ok(ModelKind::Lstm),
            "gru" => Ok(ModelKind::Gru),
            "rnn" => Ok(ModelKind::Rnn),
            "bilstm" => Ok(ModelKind::Bilstm),
            "bigru" => Ok(ModelKind::Bigru),
            "stacked" => Ok(ModelKind::Stacked),
            other => Err(Error::Config(format!(
                "unknown model kind {other:?} (expected ann, cnn, lstm, gru, rnn, bilstm, bigru or stacked)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Ann => "ann",
            ModelKind::Cnn => "cnn",
            ModelKind::Lstm => "lstm",
            ModelKind::Gru => "gru",
            ModelKind::Rnn => "rnn",
            ModelKind::Bilstm => "bilstm",
            ModelKind::Bigru => "bigru",
            ModelKind::Stacked => "stacked",
        }
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(
            self,
            ModelKind::Lstm
                | ModelKind::Gru
                | ModelKind::Rnn
                | ModelKind::Bilstm
                | ModelKind::Bigru
        )
    }

    pub fn is_bidirectional(&self) -> bool {
        matches!(self, ModelKind::Bilstm | ModelKind::Bigru)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Convolution stage settings, used by the cnn kind only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvSettings {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Output channels per convolution layer; each is followed by a
    /// max-pooling layer.
    pub channels: Vec<usize>,
    pub pool: usize,
}

impl Default for ConvSettings {
    fn default() -> Self {
        ConvSettings {
            kernel: 3,
            stride: 1,
            padding: 1,
            channels: vec![32, 64],
            pool: 2,
        }
    }
}

impl ConvSettings {
    fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 || self.pool == 0 {
            return Err(Error::Config(
                "conv kernel, stride and pool must all be at least 1".into(),
            ));
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::Config(
                "conv channels must be a non-empty list of positive widths".into(),
            ));
        }
        Ok(())
    }
}

/// Ensemble settings, present exactly when the kind is stacked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedSettings {
    pub folds: usize,
    /// Train base models on separate threads. The fold and seed
    /// schedule is fixed up front, so results do not depend on this.
    pub parallel: bool,
    pub bases: Vec<ModelConfig>,
}

/// Fully resolved model configuration. Everything a training run needs
/// is explicit here; serializing this into the run directory is what
/// makes runs replayable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub kind: ModelKind,
    /// Declared layer count. Checked against the unit stack for base
    /// kinds; echoed as-is for the stacked ensemble.
    pub layers: usize,
    pub units: Vec<usize>,
    /// Cycled over the non-head layers; the head activation always
    /// follows the label mode.
    pub activations: Vec<Activation>,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub label_mode: LabelMode,
    pub seed: u64,
    #[serde(default)]
    pub conv: ConvSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stacked: Option<StackedSettings>,
}

impl ModelConfig {
    /// Output width of the classification head.
    pub fn head_width(&self) -> usize {
        self.label_mode.class_count()
    }

    /// Layer count implied by the unit stack, conv stages included.
    pub fn expected_layers(&self) -> usize {
        match self.kind {
            ModelKind::Cnn => self.conv.channels.len() * 2 + self.units.len(),
            _ => self.units.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.units.is_empty() || self.units.contains(&0) {
            return Err(Error::Config(format!(
                "{}: unit stack must be a non-empty list of positive widths",
                self.name
            )));
        }
        if self.activations.is_empty() {
            return Err(Error::Config(format!(
                "{}: at least one activation is required",
                self.name
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config(format!("{}: batch size must be positive", self.name)));
        }
        self.optimizer.validate()?;

        match self.kind {
            ModelKind::Cnn => self.conv.validate()?,
            ModelKind::Stacked => {}
            _ => {
                let head = *self.units.last().unwrap();
                if head != self.head_width() {
                    return Err(Error::Config(format!(
                        "{}: unit stack {:?} ends in {head} but the {} head needs width {}",
                        self.name,
                        self.units,
                        self.label_mode.name(),
                        self.head_width()
                    )));
                }
            }
        }
        if self.kind != ModelKind::Stacked && self.layers != self.expected_layers() {
            return Err(Error::Config(format!(
                "{}: declared {} layers but the unit stack implies {}",
                self.name,
                self.layers,
                self.expected_layers()
            )));
        }

        match (&self.kind, &self.stacked) {
            (ModelKind::Stacked, Some(s)) => {
                if s.bases.len() < 2 {
                    return Err(Error::Config(format!(
                        "{}: a stacked ensemble needs at least 2 base models, got {}",
                        self.name,
                        s.bases.len()
                    )));
                }
                if s.folds < 2 {
                    return Err(Error::Config(format!(
                        "{}: fold count must be at least 2, got {}",
                        self.name, s.folds
                    )));
                }
                let head = *self.units.last().unwrap();
                if head != self.head_width() {
                    return Err(Error::Config(format!(
                        "{}: meta-learner units {:?} end in {head} but the {} head needs width {}",
                        self.name,
                        self.units,
                        self.label_mode.name(),
                        self.head_width()
                    )));
                }
                for base in &s.bases {
                    if base.kind == ModelKind::Stacked {
                        return Err(Error::Config(format!(
                            "{}: base {} is itself stacked; ensembles do not nest",
                            self.name, base.name
                        )));
                    }
                    if base.label_mode != self.label_mode {
                        return Err(Error::Config(format!(
                            "{}: base {} uses label mode {} but the ensemble uses {}",
                            self.name,
                            base.name,
                            base.label_mode.name(),
                            self.label_mode.name()
                        )));
                    }
                    base.validate()?;
                }
            }
            (ModelKind::Stacked, None) => {
                return Err(Error::Config(format!(
                    "{}: stacked kind requires ensemble settings",
                    self.name
                )));
            }
            (_, Some(_)) => {
                return Err(Error::Config(format!(
                    "{}: ensemble settings are only valid for the stacked kind",
                    self.name
                )));
            }
            _ => {}
        }
        Ok(())
    }

    /// The activation of non-head layer `i` (cycled).
    pub fn activation_at(&self, i: usize) -> Activation {
        self.activations[i % self.activations.len()]
    }

    /// Activation applied by the classification head.
    pub fn head_activation(&self) -> Activation {
        match self.label_mode {
            LabelMode::Binary => Activation::Sigmoid,
            LabelMode::Multiclass => Activation::Softmax,
        }
    }

    /// Configuration for the ensemble's meta-learner: a dense network
    /// with this config's own units, activations, optimizer and epochs,
    /// trained on concatenated base probabilities.
    pub fn meta_config(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            name: format!("{}-meta", self.name),
            kind: ModelKind::Ann,
            layers: self.units.len(),
            units: self.units.clone(),
            activations: self.activations.clone(),
            optimizer: self.optimizer,
            epochs: self.epochs,
            batch_size: self.batch_size,
            label_mode: self.label_mode,
            seed,
            conv: ConvSettings::default(),
            stacked: None,
        }
    }
}

/// What users write in a config file: only `kind` is required, and
/// everything else falls back to that family's first preset row.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub layers: Option<usize>,
    #[serde(default)]
    pub units: Option<Vec<usize>>,
    #[serde(default)]
    pub activations: Option<Vec<String>>,
    #[serde(default)]
    pub optimizer: Option<String>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub grad_clip: Option<f64>,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub conv: Option<ConvSettings>,
    #[serde(default)]
    pub folds: Option<usize>,
    #[serde(default)]
    pub parallel: Option<bool>,
    #[serde(default)]
    pub bases: Option<Vec<ModelSpec>>,
}

/// Per-family fallback hyperparameters.
struct FamilyDefaults {
    units: &'static [usize],
    activations: &'static [Activation],
    optimizer: OptimizerKind,
    epochs: usize,
}

fn family_defaults(kind: ModelKind) -> FamilyDefaults {
    use Activation::*;
    match kind {
        ModelKind::Ann => FamilyDefaults {
            units: &[64, 32, 1],
            activations: &[Relu, Tanh],
            optimizer: OptimizerKind::Adagrad,
            epochs: 20,
        },
        ModelKind::Cnn => FamilyDefaults {
            units: &[64, 32],
            activations: &[Tanh, Relu],
            optimizer: OptimizerKind::Adagrad,
            epochs: 30,
        },
        ModelKind::Lstm | ModelKind::Bilstm | ModelKind::Gru | ModelKind::Bigru => {
            FamilyDefaults {
                units: &[64, 1],
                activations: &[Sigmoid],
                optimizer: OptimizerKind::Adamax,
                epochs: 30,
            }
        }
        ModelKind::Rnn => FamilyDefaults {
            units: &[64, 1],
            activations: &[Softmax],
            optimizer: OptimizerKind::Sgd,
            epochs: 25,
        },
        ModelKind::Stacked => FamilyDefaults {
            units: &[64, 32, 1],
            activations: &[Relu, Sigmoid],
            optimizer: OptimizerKind::Adagrad,
            epochs: 25,
        },
    }
}

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_BATCH_SIZE: usize = 128;
pub const DEFAULT_FOLDS: usize = 5;

/// Replaces a defaulted binary head (width 1) with the multiclass
/// width. Explicit user-provided unit stacks are never rewritten.
pub(crate) fn fit_head(mut units: Vec<usize>, kind: ModelKind, mode: LabelMode) -> Vec<usize> {
    if kind != ModelKind::Cnn && mode == LabelMode::Multiclass {
        if let Some(last) = units.last_mut() {
            if *last == 1 {
                *last = mode.class_count();
            }
        }
    }
    units
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<ModelSpec> {
        Ok(serde_json::from_str(text)?)
    }

    /// Fills every optional field to produce a full configuration.
    /// `seed_override` wins over the file's own seed, which wins over
    /// the default.
    pub fn resolve(&self, label_mode: LabelMode, seed_override: Option<u64>) -> Result<ModelConfig> {
        let kind = ModelKind::parse(&self.kind)?;
        let defaults = family_defaults(kind);
        let units = match &self.units {
            Some(u) => u.clone(),
            None => fit_head(defaults.units.to_vec(), kind, label_mode),
        };
        let activations = match &self.activations {
            Some(list) => list
                .iter()
                .map(|s| Activation::parse(s))
                .collect::<Result<Vec<_>>>()?,
            None => defaults.activations.to_vec(),
        };
        let opt_kind = match &self.optimizer {
            Some(s) => OptimizerKind::parse(s)?,
            None => defaults.optimizer,
        };
        let mut optimizer = OptimizerConfig::new(opt_kind);
        if let Some(lr) = self.learning_rate {
            optimizer = optimizer.with_learning_rate(lr);
        }
        optimizer.grad_clip = self.grad_clip;

        let seed = seed_override.or(self.seed).unwrap_or(DEFAULT_SEED);
        let stacked = if kind == ModelKind::Stacked {
            let bases = match &self.bases {
                Some(specs) => {
                    let mut out = Vec::new();
                    for (i, spec) in specs.iter().enumerate() {
                        let mut base = spec.resolve(label_mode, None)?;
                        if spec.name.is_none() {
                            base.name = format!("{}-{i}", base.kind);
                        }
                        out.push(base);
                    }
                    out
                }
                None => default_bases(label_mode),
            };
            Some(StackedSettings {
                folds: self.folds.unwrap_or(DEFAULT_FOLDS),
                parallel: self.parallel.unwrap_or(true),
                bases,
            })
        } else {
            if self.bases.is_some() || self.folds.is_some() || self.parallel.is_some() {
                return Err(Error::Config(format!(
                    "fields folds, parallel and bases only apply to the stacked kind, not {kind}"
                )));
            }
            None
        };

        let mut cfg = ModelConfig {
            name: self
                .name
                .clone()
                .unwrap_or_else(|| kind.name().to_string()),
            kind,
            layers: 0,
            units,
            activations,
            optimizer,
            epochs: self.epochs.unwrap_or(defaults.epochs),
            batch_size: self.batch_size.unwrap_or(DEFAULT_BATCH_SIZE),
            label_mode,
            seed,
            conv: self.conv.clone().unwrap_or_default(),
            stacked,
        };
        cfg.layers = self.layers.unwrap_or_else(|| cfg.expected_layers());
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The default ensemble membership: one model per family, using each
/// family's fallback hyperparameters, with the long short-term memory
/// member run bidirectionally.
pub fn default_bases(label_mode: LabelMode) -> Vec<ModelConfig> {
    [ModelKind::Ann, ModelKind::Cnn, ModelKind::Bilstm, ModelKind::Rnn]
        .into_iter()
        .map(|kind| {
            let d = family_defaults(kind);
            let units = fit_head(d.units.to_vec(), kind, label_mode);
            let mut cfg = ModelConfig {
                name: kind.name().to_string(),
                kind,
                layers: 0,
                units,
                activations: d.activations.to_vec(),
                optimizer: OptimizerConfig::new(d.optimizer),
                epochs: d.epochs,
                batch_size: DEFAULT_BATCH_SIZE,
                label_mode,
                seed: DEFAULT_SEED,
                conv: ConvSettings::default(),
                stacked: None,
            };
            cfg.layers = cfg.expected_layers();
            cfg
        })
        .collect()
}
