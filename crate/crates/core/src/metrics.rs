//! Classification metrics: confusion matrices, accuracy, precision,
//! recall, F1, ROC curves and AUC, with binary and macro averaging.
//!
//! The ratio definitions follow the usual tally form: accuracy is
//! correct over total, precision is true positives over predicted
//! positives, recall is true positives over actual positives, and F1 is
//! their harmonic mean. Any 0/0 ratio is reported as 0 and flagged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Square count matrix indexed `[true class][predicted class]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

/// One class's one-vs-rest tallies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tallies {
    pub true_positive: u64,
    pub true_negative: u64,
    pub false_positive: u64,
    pub false_negative: u64,
}

impl ConfusionMatrix {
    pub fn from_labels(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<ConfusionMatrix> {
        if y_true.len() != y_pred.len() {
            return Err(Error::Validation(format!(
                "label vectors differ in length: {} vs {}",
                y_true.len(),
                y_pred.len()
            )));
        }
        if classes < 2 {
            return Err(Error::Validation("need at least two classes".into()));
        }
        let mut counts = vec![0u64; classes * classes];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            if t >= classes || p >= classes {
                return Err(Error::Validation(format!(
                    "label out of range: true {t}, predicted {p}, classes {classes}"
                )));
            }
            counts[t * classes + p] += 1;
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<ConfusionMatrix> {
        if classes < 2 || counts.len() != classes * classes {
            return Err(Error::Validation(format!(
                "expected {classes}x{classes} counts, got {}",
                counts.len()
            )));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Rows of the matrix, true class major.
    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks(self.classes)
    }

    /// Actual occurrences of a class (row sum).
    pub fn support(&self, class: usize) -> u64 {
        (0..self.classes).map(|p| self.count(class, p)).sum()
    }

    pub fn tallies(&self, class: usize) -> Tallies {
        let tp = self.count(class, class);
        let fp: u64 = (0..self.classes)
            .filter(|&t| t != class)
            .map(|t| self.count(t, class))
            .sum();
        let fn_: u64 = (0..self.classes)
            .filter(|&p| p != class)
            .map(|p| self.count(class, p))
            .sum();
        let tn = self.total() - tp - fp - fn_;
        Tallies {
            true_positive: tp,
            true_negative: tn,
            false_positive: fp,
            false_negative: fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Two classes; all ratios taken for class 1 (the positive class).
    Binary,
    /// Unweighted mean of the per-class one-vs-rest ratios.
    Macro,
}

impl Averaging {
    pub fn name(&self) -> &'static str {
        match self {
            Averaging::Binary => "binary",
            Averaging::Macro => "macro",
        }
    }
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn class_precision(t: &Tallies) -> (f64, bool) {
    ratio(t.true_positive, t.true_positive + t.false_positive)
}

fn class_recall(t: &Tallies) -> (f64, bool) {
    ratio(t.true_positive, t.true_positive + t.false_negative)
}

fn harmonic_f1(p: f64, r: f64) -> (f64, bool) {
    if p + r == 0.0 {
        (0.0, true)
    } else {
        (2.0 * p * r / (p + r), false)
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::UndefinedMetric("accuracy of an empty sample".into()));
    }
    let correct: u64 = (0..cm.classes()).map(|c| cm.count(c, c)).sum();
    Ok(correct as f64 / total as f64)
}

fn averaged(
    cm: &ConfusionMatrix,
    avg: Averaging,
    per_class: impl Fn(&Tallies) -> (f64, bool),
) -> Result<f64> {
    if cm.total() == 0 {
        return Err(Error::UndefinedMetric("metric of an empty sample".into()));
    }
    match avg {
        Averaging::Binary => {
            if cm.classes() != 2 {
                return Err(Error::UndefinedMetric(format!(
                    "binary averaging needs 2 classes, got {}",
                    cm.classes()
                )));
            }
            Ok(per_class(&cm.tallies(1)).0)
        }
        Averaging::Macro => {
            let sum: f64 = (0..cm.classes()).map(|c| per_class(&cm.tallies(c)).0).sum();
            Ok(sum / cm.classes() as f64)
        }
    }
}

pub fn precision(cm: &ConfusionMatrix, avg: Averaging) -> Result<f64> {
    averaged(cm, avg, class_precision)
}

pub fn recall(cm: &ConfusionMatrix, avg: Averaging) -> Result<f64> {
    averaged(cm, avg, class_recall)
}

pub fn f1(cm: &ConfusionMatrix, avg: Averaging) -> Result<f64> {
    averaged(cm, avg, |t| {
        let (p, _) = class_precision(t);
        let (r, _) = class_recall(t);
        harmonic_f1(p, r)
    })
}

/// One point on a ROC curve. The first point carries an infinite
/// threshold (classify nothing as positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

/// ROC curve by descending-score sweep. Tied scores collapse into a
/// single point, the curve starts at (0, 0) and ends at (1, 1), and
/// both rates are exact count ratios.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    if scores.len() != labels.len() {
        return Err(Error::Validation(format!(
            "scores and labels differ in length: {} vs {}",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Validation(format!("non-finite score at index {i}")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedCurve(
            "ROC needs both a positive and a negative example".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold,
        });
    }
    Ok(points)
}

/// Area under a ROC curve by the trapezoidal rule.
pub fn auc(points: &[RocPoint]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::UndefinedCurve("AUC needs at least two points".into()));
    }
    let mut area = 0.0;
    for pair in points.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.fpr < a.fpr {
            return Err(Error::Validation("ROC points not sorted by FPR".into()));
        }
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
    }
    Ok(area)
}

pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    auc(&roc_curve(scores, labels)?)
}

/// One-vs-rest AUC per class plus their unweighted mean. Classes absent
/// from `y_true` get `None` and are left out of the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassAuc {
    pub macro_average: f64,
    pub per_class: Vec<Option<f64>>,
}

pub fn multiclass_roc_auc(probs: &Tensor, y_true: &[usize]) -> Result<MulticlassAuc> {
    if probs.rank() != 2 || probs.shape()[0] != y_true.len() {
        return Err(Error::Validation(format!(
            "probability shape {:?} does not match {} labels",
            probs.shape(),
            y_true.len()
        )));
    }
    let classes = probs.shape()[1];
    if let Some(&bad) = y_true.iter().find(|&&c| c >= classes) {
        return Err(Error::Validation(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let mut per_class = Vec::with_capacity(classes);
    let mut defined = Vec::new();
    for c in 0..classes {
        let labels: Vec<bool> = y_true.iter().map(|&t| t == c).collect();
        if labels.iter().all(|&l| !l) || labels.iter().all(|&l| l) {
            per_class.push(None);
            continue;
        }
        let scores: Vec<f64> = (0..y_true.len()).map(|i| probs.at2(i, c)).collect();
        let a = roc_auc(&scores, &labels)?;
        defined.push(a);
        per_class.push(Some(a));
    }
    if defined.is_empty() {
        return Err(Error::UndefinedCurve(
            "no class had both positive and negative examples".into(),
        ));
    }
    Ok(MulticlassAuc {
        macro_average: defined.iter().sum::<f64>() / defined.len() as f64,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassMetrics {
    pub class_index: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Everything an evaluation emits, serializable as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: Option<f64>,
    pub averaging: String,
    pub per_class: Vec<PerClassMetrics>,
    pub flags: Vec<String>,
}

impl MetricsReport {
    pub fn from_confusion(cm: &ConfusionMatrix, avg: Averaging) -> Result<MetricsReport> {
        let mut flags = Vec::new();
        let mut per_class = Vec::with_capacity(cm.classes());
        for c in 0..cm.classes() {
            let t = cm.tallies(c);
            let (p, p_undef) = class_precision(&t);
            let (r, r_undef) = class_recall(&t);
            let (f, f_undef) = harmonic_f1(p, r);
            if p_undef {
                flags.push(format!("precision undefined for class {c} (0/0); reported 0"));
            }
            if r_undef {
                flags.push(format!("recall undefined for class {c} (0/0); reported 0"));
            }
            if f_undef {
                flags.push(format!("f1 undefined for class {c} (0/0); reported 0"));
            }
            per_class.push(PerClassMetrics {
                class_index: c,
                precision: p,
                recall: r,
                f1: f,
                support: cm.support(c),
            });
        }
        Ok(MetricsReport {
            accuracy: accuracy(cm)?,
            precision: precision(cm, avg)?,
            recall: recall(cm, avg)?,
            f1: f1(cm, avg)?,
            roc_auc: None,
            averaging: avg.name().to_string(),
            per_class,
            flags,
        })
    }

    pub fn with_roc_auc(mut self, value: f64) -> MetricsReport {
        self.roc_auc = Some(value);
        self
    }
}
