//! Mini-batch training loop with per-epoch statistics.

use serde::{Deserialize, Serialize};

use super::{accuracy_against, Model, ModelConfig, ModelKind};
use crate::data::{EncodedMatrix, LabelMode};
use crate::error::{Error, Result};
use crate::layers::{binary_cross_entropy, cross_entropy};
use crate::optim::Optimizer;
use crate::rng::RunRng;
use crate::tensor::{Tape, Tensor, Var};

/// Monotonic clock handle; absent on wasm targets, where the report's
/// wall time stays zero.
pub(crate) fn clock_start() -> Option<std::time::Instant> {
    if cfg!(target_arch = "wasm32") {
        None
    } else {
        Some(std::time::Instant::now())
    }
}

pub(crate) fn clock_elapsed(start: Option<std::time::Instant>) -> f64 {
    start.map(|s| s.elapsed().as_secs_f64()).unwrap_or(0.0)
}

/// Loss and full-training-set accuracy after one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Everything needed to audit a completed training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: ModelConfig,
    pub seed: u64,
    pub epochs: Vec<EpochStat>,
    pub wall_seconds: f64,
    pub param_checksum: String,
}

impl TrainReport {
    /// Training accuracy after the final epoch; 0 for an untrained run.
    pub fn final_accuracy(&self) -> f64 {
        self.epochs.last().map(|e| e.accuracy).unwrap_or(0.0)
    }
}

/// Holds a model mid-training: optimizer state, shuffle stream and
/// epoch statistics persist across `run_epoch` calls, so training can
/// proceed one epoch at a time.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: Model,
    optimizer: Optimizer,
    rng: RunRng,
    param_names: Vec<String>,
    stats: Vec<EpochStat>,
    wall_seconds: f64,
}

impl Trainer {
    pub fn new(config: &ModelConfig, feature_width: usize) -> Result<Trainer> {
        if config.kind == ModelKind::Stacked {
            return Err(Error::Usage(
                "stacked ensembles train through train_stacked, not Trainer".into(),
            ));
        }
        let mut rng = RunRng::from_seed(config.seed);
        let model = Model::build_with(config.clone(), feature_width, &mut rng)?;
        let optimizer = Optimizer::new(config.optimizer)?;
        let param_names = model.named_params().iter().map(|(n, _)| n.clone()).collect();
        Ok(Trainer {
            model,
            optimizer,
            rng,
            param_names,
            stats: Vec::new(),
            wall_seconds: 0.0,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn epochs_done(&self) -> usize {
        self.stats.len()
    }

    pub fn stats(&self) -> &[EpochStat] {
        &self.stats
    }

    fn check_data(&self, data: &EncodedMatrix) -> Result<()> {
        data.validate()?;
        if data.label_mode != self.model.config().label_mode {
            return Err(Error::Usage(format!(
                "data is encoded {} but the model head is {}",
                data.label_mode.name(),
                self.model.config().label_mode.name()
            )));
        }
        if data.features() != self.model.feature_width() {
            return Err(Error::ShapeMismatch {
                op: "train",
                lhs: vec![data.rows(), data.features()],
                rhs: vec![data.rows(), self.model.feature_width()],
            });
        }
        Ok(())
    }

    /// Runs one shuffled pass over the data, updating parameters batch
    /// by batch, then measures accuracy over the full training set.
    pub fn run_epoch(&mut self, data: &EncodedMatrix) -> Result<EpochStat> {
        self.check_data(data)?;
        let started = clock_start();
        let epoch = self.stats.len() + 1;
        let n = data.rows();
        let batch = self.model.config().batch_size;
        let mode = self.model.config().label_mode;

        let mut order: Vec<usize> = (0..n).collect();
        self.rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        for (batch_index, rows) in order.chunks(batch).enumerate() {
            let xb = data.x.gather_rows(rows)?;
            let yb = data.y.gather_rows(rows)?;

            let mut tape = Tape::new();
            let vars = self.model.bind(&mut tape);
            let probs = self.model.forward(&mut tape, &vars, &xb)?;
            let loss = batch_loss(&mut tape, probs, &yb, mode)?;
            let loss_value = tape.value(loss)?.data()[0];
            if !loss_value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_index + 1,
                });
            }
            loss_sum += loss_value * rows.len() as f64;

            let grads_by_var = tape.backward(loss)?;
            let var_list = Model::collect_vars(&vars);
            let grads: Vec<Tensor> = var_list
                .iter()
                .map(|v| grads_by_var.get(*v).cloned())
                .collect::<Result<_>>()?;

            let names = &self.param_names;
            let tensors = self.model.flat_params_mut();
            let mut pairs: Vec<(&str, &mut Tensor)> = names
                .iter()
                .map(String::as_str)
                .zip(tensors)
                .collect();
            self.optimizer.step(&mut pairs, &grads)?;
        }

        let probs = self.model.predict_proba(&data.x)?;
        let accuracy = accuracy_against(&probs, &data.y, mode)?;
        let stat = EpochStat {
            epoch,
            loss: loss_sum / n as f64,
            accuracy,
        };
        self.stats.push(stat);
        self.wall_seconds += clock_elapsed(started);
        Ok(stat)
    }

    /// Runs the configured number of epochs (continuing from wherever
    /// the trainer already is) and assembles the report.
    pub fn train(&mut self, data: &EncodedMatrix) -> Result<TrainReport> {
        if self.model.config().epochs == 0 {
            self.check_data(data)?;
        }
        while self.stats.len() < self.model.config().epochs {
            self.run_epoch(data)?;
        }
        Ok(self.report())
    }

    pub fn report(&self) -> TrainReport {
        TrainReport {
            config: self.model.config().clone(),
            seed: self.model.config().seed,
            epochs: self.stats.clone(),
            wall_seconds: self.wall_seconds,
            param_checksum: self.model.checksum(),
        }
    }
}

/// Trains a fresh model under `config` and returns it with its report.
pub fn train(config: &ModelConfig, data: &EncodedMatrix) -> Result<(Model, TrainReport)> {
    let mut trainer = Trainer::new(config, data.features())?;
    let report = trainer.train(data)?;
    Ok((trainer.into_model(), report))
}

fn batch_loss(tape: &mut Tape, probs: Var, y: &Tensor, mode: LabelMode) -> Result<Var> {
    match mode {
        LabelMode::Binary => binary_cross_entropy(tape, probs, y),
        LabelMode::Multiclass => cross_entropy(tape, probs, y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabelMode;
    use crate::layers::Activation;
    use crate::models::ConvSettings;
    use crate::optim::{OptimizerConfig, OptimizerKind};
    use crate::synth;

    fn small_ann(units: Vec<usize>, epochs: usize, mode: LabelMode) -> ModelConfig {
        ModelConfig {
            name: "t".into(),
            kind: ModelKind::Ann,
            layers: units.len(),
            units,
            activations: vec![Activation::Relu],
            optimizer: OptimizerConfig::new(OptimizerKind::Adagrad)
                .with_learning_rate(0.05),
            epochs,
            batch_size: 32,
            label_mode: mode,
            seed: 17,
            conv: ConvSettings::default(),
            stacked: None,
        }
    }

    fn blob_data(n: usize, sep: f64, seed: u64) -> EncodedMatrix {
        let mut rng = RunRng::from_seed(seed);
        let (x, y) = synth::gaussian_blobs(n, sep, &mut rng).unwrap();
        EncodedMatrix {
            x,
            y,
            feature_names: vec!["x0".into(), "x1".into()],
            label_mode: LabelMode::Binary,
        }
    }

    #[test]
    fn zero_epochs_changes_nothing() {
        let cfg = small_ann(vec![8, 1], 0, LabelMode::Binary);
        let untouched = Model::build(cfg.clone(), 2).unwrap().checksum();
        let data = blob_data(64, 4.0, 1);
        let (model, report) = train(&cfg, &data).unwrap();
        assert!(report.epochs.is_empty());
        assert_eq!(model.checksum(), untouched);
        assert_eq!(report.final_accuracy(), 0.0);
    }

    #[test]
    fn report_length_matches_configured_epochs() {
        let cfg = small_ann(vec![8, 1], 3, LabelMode::Binary);
        let data = blob_data(96, 4.0, 2);
        let (_, report) = train(&cfg, &data).unwrap();
        assert_eq!(report.epochs.len(), 3);
        assert_eq!(report.epochs[0].epoch, 1);
        assert_eq!(report.epochs[2].epoch, 3);
        assert_eq!(report.config.name, "t");
    }

    #[test]
    fn separable_blobs_reach_high_accuracy() {
        let cfg = small_ann(vec![16, 1], 20, LabelMode::Binary);
        let data = blob_data(400, 4.0, 3);
        let (_, report) = train(&cfg, &data).unwrap();
        assert!(
            report.final_accuracy() >= 0.97,
            "accuracy {}",
            report.final_accuracy()
        );
    }

    #[test]
    fn xor_is_solved_exactly() {
        let (x, y) = synth::xor_four().unwrap();
        let data = EncodedMatrix {
            x,
            y,
            feature_names: vec!["a".into(), "b".into()],
            label_mode: LabelMode::Binary,
        };
        let mut cfg = small_ann(vec![8, 1], 2000, LabelMode::Binary);
        cfg.optimizer = OptimizerConfig::new(OptimizerKind::Adam).with_learning_rate(0.05);
        cfg.batch_size = 4;
        let mut trainer = Trainer::new(&cfg, 2).unwrap();
        let mut solved = false;
        for _ in 0..2000 {
            let stat = trainer.run_epoch(&data).unwrap();
            if stat.accuracy == 1.0 {
                solved = true;
                break;
            }
        }
        assert!(solved, "xor unsolved after 2000 epochs");
    }

    #[test]
    fn identical_runs_have_identical_loss_curves() {
        let cfg = small_ann(vec![8, 1], 4, LabelMode::Binary);
        let data = blob_data(128, 3.0, 4);
        let (_, a) = train(&cfg, &data).unwrap();
        let (_, b) = train(&cfg, &data).unwrap();
        assert_eq!(a.epochs, b.epochs);
        assert_eq!(a.param_checksum, b.param_checksum);
    }

    #[test]
    fn final_epoch_accuracy_matches_fresh_evaluation() {
        let cfg = small_ann(vec![8, 1], 5, LabelMode::Binary);
        let data = blob_data(128, 3.0, 5);
        let (model, report) = train(&cfg, &data).unwrap();
        let probs = model.predict_proba(&data.x).unwrap();
        let acc = accuracy_against(&probs, &data.y, LabelMode::Binary).unwrap();
        assert!((acc - report.final_accuracy()).abs() < 1e-9);
    }

    #[test]
    fn runaway_learning_rate_reports_numeric_failure() {
        let mut rng = RunRng::from_seed(6);
        let (x, y) = synth::shifted_multiclass(64, 10, 6, 3.0, &mut rng).unwrap();
        let data = EncodedMatrix {
            x,
            y,
            feature_names: (0..6).map(|i| format!("f{i}")).collect(),
            label_mode: LabelMode::Multiclass,
        };
        // The rate is near f64::MAX so the first updates overflow no
        // matter how the activations saturate.
        let mut cfg = small_ann(vec![8, 10], 50, LabelMode::Multiclass);
        cfg.optimizer = OptimizerConfig::new(OptimizerKind::Sgd).with_learning_rate(1e308);
        let err = train(&cfg, &data).unwrap_err();
        assert!(
            matches!(err, Error::Divergence { .. } | Error::NonFinite(_)),
            "unexpected error {err:?}"
        );
    }

    #[test]
    fn label_mode_mismatch_is_rejected() {
        let cfg = small_ann(vec![8, 10], 1, LabelMode::Multiclass);
        let data = blob_data(32, 3.0, 7);
        let err = train(&cfg, &data).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn mean_loss_is_mostly_nonincreasing_on_easy_data() {
        let cfg = small_ann(vec![16, 1], 15, LabelMode::Binary);
        let data = blob_data(256, 4.0, 8);
        let (_, report) = train(&cfg, &data).unwrap();
        let drops = report
            .epochs
            .windows(2)
            .filter(|w| w[1].loss <= w[0].loss)
            .count();
        assert!(
            drops as f64 >= 0.9 * (report.epochs.len() - 1) as f64,
            "{drops} of {} transitions decreased",
            report.epochs.len() - 1
        );
    }

    #[test]
    fn fixture_pipeline_trains_end_to_end() {
        let ds = crate::data::fixture().unwrap();
        let cfg = crate::data::PipelineConfig::default();
        let mut rng = RunRng::from_seed(1);
        let prepared = crate::data::prepare(&ds, &cfg, &mut rng).unwrap();
        let model_cfg = small_ann(vec![8, 1], 2, LabelMode::Binary);
        let (model, report) = train(&model_cfg, &prepared.train).unwrap();
        assert_eq!(report.epochs.len(), 2);
        let probs = model.predict_proba(&prepared.test.x).unwrap();
        assert_eq!(probs.shape()[0], prepared.test.rows());
    }
}
