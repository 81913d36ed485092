//! Feature encoding: one-hot expansion of categorical columns and
//! z-score normalization of numeric columns, with statistics fitted on
//! training rows only.

use serde::{Deserialize, Serialize};

use super::{ColumnKind, RawDataset, CLASS_NAMES};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const NORM_EPS: f64 = 1e-8;

/// Target layout: a single 0/1 column, or a ten-column one-hot row per
/// attack category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    Binary,
    Multiclass,
}

impl LabelMode {
    /// Width of the target matrix.
    pub fn class_count(self) -> usize {
        match self {
            LabelMode::Binary => 1,
            LabelMode::Multiclass => CLASS_NAMES.len(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(LabelMode::Binary),
            "multiclass" => Ok(LabelMode::Multiclass),
            other => Err(Error::Usage(format!(
                "label mode must be binary or multiclass, got {other:?}"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelMode::Binary => "binary",
            LabelMode::Multiclass => "multiclass",
        }
    }
}

/// Encoder state fitted on training rows: category vocabularies in
/// first-appearance order and per-numeric-column mean and standard
/// deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedEncoder {
    /// One vocabulary per categorical column, in schema order.
    pub categories: Vec<Vec<String>>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Expanded feature names, matching encoded columns left to right.
    pub feature_names: Vec<String>,
}

impl FittedEncoder {
    /// Fits vocabularies and normalization statistics on the given rows.
    pub fn fit(ds: &RawDataset, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Validation("cannot fit an encoder on zero rows".into()));
        }
        for &i in rows {
            if i >= ds.len() {
                return Err(Error::Validation(format!(
                    "row index {i} out of range for dataset of {}",
                    ds.len()
                )));
            }
        }
        let numeric_count = ds.records[rows[0]].numeric.len();
        let cat_count = ds.records[rows[0]].categorical.len();

        let mut categories: Vec<Vec<String>> = vec![Vec::new(); cat_count];
        for &i in rows {
            for (c, value) in ds.records[i].categorical.iter().enumerate() {
                if !categories[c].contains(value) {
                    categories[c].push(value.clone());
                }
            }
        }

        let mut means = vec![0.0; numeric_count];
        for &i in rows {
            for (j, v) in ds.records[i].numeric.iter().enumerate() {
                means[j] += v;
            }
        }
        let n = rows.len() as f64;
        for m in &mut means {
            *m /= n;
        }
        let mut stds = vec![0.0; numeric_count];
        for &i in rows {
            for (j, v) in ds.records[i].numeric.iter().enumerate() {
                let d = v - means[j];
                stds[j] += d * d;
            }
        }
        for s in &mut stds {
            *s = (*s / n).sqrt();
        }

        let mut feature_names = Vec::new();
        let mut numeric_seen = 0;
        let mut cat_seen = 0;
        for col in &ds.feature_columns {
            match col.kind {
                ColumnKind::Numeric => {
                    feature_names.push(col.name.clone());
                    numeric_seen += 1;
                }
                ColumnKind::Categorical => {
                    for cat in &categories[cat_seen] {
                        feature_names.push(format!("{}={}", col.name, cat));
                    }
                    cat_seen += 1;
                }
                ColumnKind::Ignored => {}
            }
        }
        if numeric_seen != numeric_count || cat_seen != cat_count {
            return Err(Error::Validation(
                "dataset records do not match its feature columns".into(),
            ));
        }

        Ok(FittedEncoder {
            categories,
            means,
            stds,
            feature_names,
        })
    }

    /// Total encoded feature width.
    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    /// Encodes the given rows. Unseen categorical values map to an
    /// all-zero block; numeric cells become (x - mean) / (std + 1e-8).
    pub fn transform(
        &self,
        ds: &RawDataset,
        rows: &[usize],
        mode: LabelMode,
    ) -> Result<EncodedMatrix> {
        if rows.is_empty() {
            return Err(Error::Validation("cannot encode zero rows".into()));
        }
        let width = self.feature_count();
        let class_count = mode.class_count();
        let mut x = vec![0.0; rows.len() * width];
        let mut y = vec![0.0; rows.len() * class_count];

        for (r, &i) in rows.iter().enumerate() {
            if i >= ds.len() {
                return Err(Error::Validation(format!(
                    "row index {i} out of range for dataset of {}",
                    ds.len()
                )));
            }
            let rec = &ds.records[i];
            if rec.numeric.len() != self.means.len() || rec.categorical.len() != self.categories.len()
            {
                return Err(Error::Validation(format!(
                    "record {i} does not match the fitted encoder layout"
                )));
            }
            let mut out = r * width;
            let mut numeric_seen = 0;
            let mut cat_seen = 0;
            for col in &ds.feature_columns {
                match col.kind {
                    ColumnKind::Numeric => {
                        let j = numeric_seen;
                        x[out] = (rec.numeric[j] - self.means[j]) / (self.stds[j] + NORM_EPS);
                        out += 1;
                        numeric_seen += 1;
                    }
                    ColumnKind::Categorical => {
                        let vocab = &self.categories[cat_seen];
                        if let Some(pos) = vocab.iter().position(|v| v == &rec.categorical[cat_seen])
                        {
                            x[out + pos] = 1.0;
                        }
                        out += vocab.len();
                        cat_seen += 1;
                    }
                    ColumnKind::Ignored => {}
                }
            }
            match mode {
                LabelMode::Binary => y[r] = rec.label as f64,
                LabelMode::Multiclass => y[r * class_count + rec.class] = 1.0,
            }
        }

        let x = Tensor::new(vec![rows.len(), width], x)?;
        let y = Tensor::new(vec![rows.len(), class_count], y)?;
        let out = EncodedMatrix {
            x,
            y,
            feature_names: self.feature_names.clone(),
            label_mode: mode,
        };
        out.validate()?;
        Ok(out)
    }
}

/// Encoded design matrix and target matrix for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    /// [rows, features]
    pub x: Tensor,
    /// [rows, 1] for binary targets, [rows, classes] one-hot otherwise.
    pub y: Tensor,
    pub feature_names: Vec<String>,
    pub label_mode: LabelMode,
}

impl EncodedMatrix {
    pub fn rows(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn features(&self) -> usize {
        self.x.shape()[1]
    }

    pub fn class_count(&self) -> usize {
        self.label_mode.class_count()
    }

    /// A copy holding only the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<EncodedMatrix> {
        Ok(EncodedMatrix {
            x: self.x.gather_rows(rows)?,
            y: self.y.gather_rows(rows)?,
            feature_names: self.feature_names.clone(),
            label_mode: self.label_mode,
        })
    }

    /// Class index per row, decoded from the target matrix.
    pub fn class_of(&self, row: usize) -> usize {
        match self.label_mode {
            LabelMode::Binary => self.y.at2(row, 0) as usize,
            LabelMode::Multiclass => {
                let c = self.class_count();
                (0..c)
                    .max_by(|&a, &b| {
                        self.y.at2(row, a).partial_cmp(&self.y.at2(row, b)).unwrap()
                    })
                    .unwrap_or(0)
            }
        }
    }

    /// Checks internal consistency: finite features, matching row
    /// counts, and 0/1 targets that sum to one in one-hot mode.
    pub fn validate(&self) -> Result<()> {
        if self.x.rank() != 2 || self.y.rank() != 2 {
            return Err(Error::Validation("encoded matrices must be rank 2".into()));
        }
        if self.x.shape()[0] != self.y.shape()[0] {
            return Err(Error::Validation(format!(
                "feature rows {} and target rows {} differ",
                self.x.shape()[0],
                self.y.shape()[0]
            )));
        }
        if self.x.shape()[1] != self.feature_names.len() {
            return Err(Error::Validation(format!(
                "feature width {} does not match {} feature names",
                self.x.shape()[1],
                self.feature_names.len()
            )));
        }
        if self.y.shape()[1] != self.class_count() {
            return Err(Error::Validation(format!(
                "target width {} does not match label mode {}",
                self.y.shape()[1],
                self.label_mode.name()
            )));
        }
        if !self.x.is_finite() {
            return Err(Error::NonFinite("encoded features".into()));
        }
        for r in 0..self.rows() {
            let mut sum = 0.0;
            for c in 0..self.y.shape()[1] {
                let v = self.y.at2(r, c);
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Validation(format!(
                        "target cell ({r}, {c}) must be 0 or 1, got {v}"
                    )));
                }
                sum += v;
            }
            if self.label_mode == LabelMode::Multiclass && sum != 1.0 {
                return Err(Error::Validation(format!(
                    "one-hot row {r} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }
}
