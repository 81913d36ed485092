//! First-order optimizers: SGD, Adagrad, RMSprop, Adam and Adamax.
//!
//! All maintain per-parameter state tensors and update in place. The
//! stabilizing `eps` sits inside the denominator, added after the
//! square root (for Adamax, added to the infinity-norm accumulator).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adagrad,
    Rmsprop,
    Adam,
    Adamax,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Result<OptimizerKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adagrad" => Ok(OptimizerKind::Adagrad),
            "rmsprop" => Ok(OptimizerKind::Rmsprop),
            "adam" => Ok(OptimizerKind::Adam),
            "adamax" => Ok(OptimizerKind::Adamax),
            other => Err(Error::Config(format!(
                "unknown optimizer {other:?} (expected sgd, adagrad, rmsprop, adam or adamax)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Rmsprop => "rmsprop",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Adamax => "adamax",
        }
    }

    /// Conventional default step size: 0.01 for SGD and Adagrad, 0.001
    /// for the adaptive-moment family.
    pub fn default_learning_rate(&self) -> f64 {
        match self {
            OptimizerKind::Sgd | OptimizerKind::Adagrad => 0.01,
            _ => 0.001,
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// First-moment decay for Adam and Adamax.
    pub beta1: f64,
    /// Second-moment decay for Adam; infinity-norm decay for Adamax.
    pub beta2: f64,
    /// Moving-average decay for RMSprop.
    pub rho: f64,
    pub eps: f64,
    /// Optional global-norm gradient clipping threshold. Off by
    /// default; when set it is echoed into training reports.
    pub grad_clip: Option<f64>,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind) -> OptimizerConfig {
        OptimizerConfig {
            kind,
            learning_rate: kind.default_learning_rate(),
            beta1: 0.9,
            beta2: 0.999,
            rho: 0.9,
            eps: 1e-8,
            grad_clip: None,
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> OptimizerConfig {
        self.learning_rate = lr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2), ("rho", self.rho)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config(format!("grad_clip must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// Optimizer instance holding per-parameter state. The parameter list
/// must keep the same length and shapes across steps.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    steps: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Result<Optimizer> {
        cfg.validate()?;
        Ok(Optimizer {
            cfg,
            steps: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    /// Applies one update. `params` and `grads` are parallel slices;
    /// each parameter carries a name used in error messages.
    pub fn step(&mut self, params: &mut [(&str, &mut Tensor)], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Gradient(format!(
                "optimizer got {} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for ((name, p), g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Gradient(format!(
                    "gradient shape {:?} does not match parameter {name} {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
            self.second = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
        } else if self.first.len() != grads.len()
            || self
                .first
                .iter()
                .zip(grads)
                .any(|(s, g)| s.shape() != g.shape())
        {
            return Err(Error::Gradient(
                "parameter list changed between optimizer steps".into(),
            ));
        }

        let scale = match self.cfg.grad_clip {
            Some(c) => {
                let norm: f64 = grads
                    .iter()
                    .flat_map(|g| g.data())
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                if norm > c {
                    c / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };

        self.steps += 1;
        let t = self.steps as i32;
        let lr = self.cfg.learning_rate;
        let (b1, b2, rho, eps) = (self.cfg.beta1, self.cfg.beta2, self.cfg.rho, self.cfg.eps);

        for (i, ((_, p), g)) in params.iter_mut().zip(grads).enumerate() {
            let pd = p.data_mut();
            let first = self.first[i].data_mut();
            let second = self.second[i].data_mut();
            for j in 0..pd.len() {
                let g = g.data()[j] * scale;
                match self.cfg.kind {
                    OptimizerKind::Sgd => {
                        pd[j] -= lr * g;
                    }
                    OptimizerKind::Adagrad => {
                        first[j] += g * g;
                        pd[j] -= lr * g / (first[j].sqrt() + eps);
                    }
                    OptimizerKind::Rmsprop => {
                        first[j] = rho * first[j] + (1.0 - rho) * g * g;
                        pd[j] -= lr * g / (first[j].sqrt() + eps);
                    }
                    OptimizerKind::Adam => {
                        first[j] = b1 * first[j] + (1.0 - b1) * g;
                        second[j] = b2 * second[j] + (1.0 - b2) * g * g;
                        let m_hat = first[j] / (1.0 - b1.powi(t));
                        let v_hat = second[j] / (1.0 - b2.powi(t));
                        pd[j] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                    OptimizerKind::Adamax => {
                        first[j] = b1 * first[j] + (1.0 - b1) * g;
                        second[j] = (b2 * second[j]).max(g.abs());
                        pd[j] -= lr / (1.0 - b1.powi(t)) * first[j] / (second[j] + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_step(kind: OptimizerKind, theta: f64, grad: f64) -> f64 {
        let mut opt = Optimizer::new(OptimizerConfig::new(kind)).unwrap();
        let mut p = Tensor::scalar(theta);
        let g = Tensor::scalar(grad);
        opt.step(&mut [("theta", &mut p)], &[g]).unwrap();
        p.data()[0]
    }

    #[test]
    fn sgd_first_step_closed_form() {
        let mut opt =
            Optimizer::new(OptimizerConfig::new(OptimizerKind::Sgd).with_learning_rate(0.1))
                .unwrap();
        let mut p = Tensor::scalar(0.0);
        opt.step(&mut [("theta", &mut p)], &[Tensor::scalar(1.0)]).unwrap();
        assert!((p.data()[0] - (-0.1)).abs() < 1e-12);
    }

    #[test]
    fn adagrad_first_step_closed_form() {
        let mut opt =
            Optimizer::new(OptimizerConfig::new(OptimizerKind::Adagrad).with_learning_rate(0.1))
                .unwrap();
        let mut p = Tensor::scalar(0.0);
        opt.step(&mut [("theta", &mut p)], &[Tensor::scalar(1.0)]).unwrap();
        let want = -0.1 / (1.0 + 1e-8);
        assert!((p.data()[0] - want).abs() < 1e-12);
        assert!((p.data()[0] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn rmsprop_first_step_closed_form() {
        let got = single_step(OptimizerKind::Rmsprop, 0.0, 1.0);
        let want = -0.001 / (0.1_f64.sqrt() + 1e-8);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn adam_first_step_closed_form() {
        let got = single_step(OptimizerKind::Adam, 0.0, 1.0);
        let want = -0.001 / (1.0 + 1e-8);
        assert!((got - want).abs() < 1e-12);
        assert!((got + 0.001).abs() < 1e-8);
    }

    #[test]
    fn adamax_first_step_closed_form() {
        let got = single_step(OptimizerKind::Adamax, 0.0, 1.0);
        let want = -0.001 / (1.0 + 1e-8);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn adam_bias_correction_gives_constant_steps() {
        // With a constant unit gradient the corrected moments are
        // exactly 1 at every step, so each update is lr / (1 + eps).
        let mut opt = Optimizer::new(OptimizerConfig::new(OptimizerKind::Adam)).unwrap();
        let mut p = Tensor::scalar(0.0);
        for _ in 0..10 {
            opt.step(&mut [("theta", &mut p)], &[Tensor::scalar(1.0)]).unwrap();
        }
        let want = -10.0 * 0.001 / (1.0 + 1e-8);
        assert!((p.data()[0] - want).abs() < 1e-9, "{}", p.data()[0]);
    }

    #[test]
    fn default_learning_rates() {
        assert_eq!(OptimizerKind::Sgd.default_learning_rate(), 0.01);
        assert_eq!(OptimizerKind::Adagrad.default_learning_rate(), 0.01);
        assert_eq!(OptimizerKind::Rmsprop.default_learning_rate(), 0.001);
        assert_eq!(OptimizerKind::Adam.default_learning_rate(), 0.001);
        assert_eq!(OptimizerKind::Adamax.default_learning_rate(), 0.001);
    }

    #[test]
    fn rejects_non_finite_gradient_by_name() {
        let mut opt = Optimizer::new(OptimizerConfig::new(OptimizerKind::Sgd)).unwrap();
        let mut p = Tensor::scalar(0.0);
        let err = opt
            .step(&mut [("layer3.w", &mut p)], &[Tensor::scalar(f64::NAN)])
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert!(err.to_string().contains("layer3.w"));
    }

    #[test]
    fn rejects_count_and_shape_mismatches() {
        let mut opt = Optimizer::new(OptimizerConfig::new(OptimizerKind::Sgd)).unwrap();
        let mut p = Tensor::scalar(0.0);
        assert!(matches!(
            opt.step(&mut [("a", &mut p)], &[]),
            Err(Error::Gradient(_))
        ));
        assert!(matches!(
            opt.step(&mut [("a", &mut p)], &[Tensor::zeros(&[2])]),
            Err(Error::Gradient(_))
        ));
    }

    #[test]
    fn rejects_parameter_list_change() {
        let mut opt = Optimizer::new(OptimizerConfig::new(OptimizerKind::Adam)).unwrap();
        let mut p = Tensor::scalar(0.0);
        opt.step(&mut [("a", &mut p)], &[Tensor::scalar(1.0)]).unwrap();
        let mut q = Tensor::zeros(&[3]);
        assert!(matches!(
            opt.step(&mut [("a", &mut q)], &[Tensor::zeros(&[3])]),
            Err(Error::Gradient(_))
        ));
    }

    #[test]
    fn global_norm_clipping_scales_updates() {
        let cfg = OptimizerConfig {
            grad_clip: Some(1.0),
            ..OptimizerConfig::new(OptimizerKind::Sgd).with_learning_rate(1.0)
        };
        let mut opt = Optimizer::new(cfg).unwrap();
        let mut p = Tensor::new(vec![2], vec![0.0, 0.0]).unwrap();
        opt.step(
            &mut [("p", &mut p)],
            &[Tensor::new(vec![2], vec![3.0, 4.0]).unwrap()],
        )
        .unwrap();
        // Norm 5 clipped to 1: the update direction keeps its shape.
        assert!((p.data()[0] + 0.6).abs() < 1e-12);
        assert!((p.data()[1] + 0.8).abs() < 1e-12);
    }

    #[test]
    fn same_inputs_give_bitwise_identical_trajectories() {
        for kind in [
            OptimizerKind::Sgd,
            OptimizerKind::Adagrad,
            OptimizerKind::Rmsprop,
            OptimizerKind::Adam,
            OptimizerKind::Adamax,
        ] {
            let run = || {
                let mut opt = Optimizer::new(OptimizerConfig::new(kind)).unwrap();
                let mut p = Tensor::new(vec![3], vec![0.5, -0.25, 0.125]).unwrap();
                for s in 0..20 {
                    let g = Tensor::new(vec![3], vec![0.1 * s as f64, -0.2, 0.3]).unwrap();
                    opt.step(&mut [("p", &mut p)], &[g]).unwrap();
                }
                p.data().to_vec()
            };
            assert_eq!(run(), run(), "{kind} diverged between identical runs");
        }
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = OptimizerConfig::new(OptimizerKind::Adam);
        cfg.learning_rate = -1.0;
        assert!(matches!(Optimizer::new(cfg), Err(Error::Config(_))));
        let mut cfg = OptimizerConfig::new(OptimizerKind::Adam);
        cfg.beta1 = 1.0;
        assert!(matches!(Optimizer::new(cfg), Err(Error::Config(_))));
        let mut cfg = OptimizerConfig::new(OptimizerKind::Sgd);
        cfg.grad_clip = Some(0.0);
        assert!(matches!(Optimizer::new(cfg), Err(Error::Config(_))));
    }
}
