//! Tabular data pipeline: CSV loading against a declared schema,
//! categorical one-hot encoding, z-score normalization, class
//! balancing, stratified splitting and a binary matrix cache.

mod emx;
mod encode;
mod sampling;
mod schema;

pub use emx::{read_emx, read_emx_from, write_emx, write_emx_to};
pub use encode::{EncodedMatrix, FittedEncoder, LabelMode};
pub use sampling::{balance_classes, split};
pub use schema::{ColumnKind, ColumnSpec, Schema};

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::RunRng;

/// Canonical attack-category names, index order fixed across the crate.
/// "Normal" is class 0 and the only class with binary label 0.
pub const CLASS_NAMES: [&str; 10] = [
    "Normal",
    "Generic",
    "Exploits",
    "Fuzzers",
    "DoS",
    "Reconnaissance",
    "Analysis",
    "Backdoor",
    "Shellcode",
    "Worms",
];

/// Resolves a raw attack-category cell to its canonical class index.
/// Matching is trimmed and case-insensitive; the plural "Backdoors"
/// spelling that appears in some dataset releases is accepted.
pub fn class_index(raw: &str) -> Result<usize> {
    let cleaned = raw.trim();
    let lowered = cleaned.to_ascii_lowercase();
    let lookup = if lowered == "backdoors" { "backdoor" } else { lowered.as_str() };
    CLASS_NAMES
        .iter()
        .position(|c| c.to_ascii_lowercase() == lookup)
        .ok_or_else(|| Error::Validation(format!("unknown attack category {cleaned:?}")))
}

/// One parsed row: numeric cells in numeric-column order, categorical
/// cells in categorical-column order, class index and binary label.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub numeric: Vec<f64>,
    pub categorical: Vec<String>,
    pub class: usize,
    pub label: u8,
}

/// Loaded dataset plus the feature-column layout needed to interleave
/// numeric and categorical cells back into schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub feature_columns: Vec<ColumnSpec>,
    pub records: Vec<RawRecord>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Per-class record counts, indexed like [`CLASS_NAMES`].
    pub fn class_counts(&self) -> [usize; 10] {
        let mut counts = [0usize; 10];
        for r in &self.records {
            counts[r.class] += 1;
        }
        counts
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.class).collect()
    }
}

pub fn load_csv(path: &Path, schema: &Schema) -> Result<RawDataset> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Validation(format!("cannot open dataset {}: {e}", path.display()))
    })?;
    load_csv_reader(file, schema)
}

/// Parses CSV text against the schema. The header must contain every
/// declared column (order-independent); unknown columns are rejected.
pub fn load_csv_reader(reader: impl Read, schema: &Schema) -> Result<RawDataset> {
    schema.validate()?;
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let header = csv_reader.headers()?.clone();
    let position = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?} in header")))
    };

    let mut declared: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
    declared.push(&schema.attack_cat);
    declared.push(&schema.label);
    for h in header.iter() {
        if !declared.contains(&h.trim()) {
            return Err(Error::Schema(format!(
                "column {:?} in header is not declared in the schema",
                h.trim()
            )));
        }
    }

    struct Slot {
        column: usize,
        numeric: bool,
        name: String,
    }
    let mut slots = Vec::new();
    for c in schema.feature_columns() {
        slots.push(Slot {
            column: position(&c.name)?,
            numeric: c.kind == ColumnKind::Numeric,
            name: c.name.clone(),
        });
    }
    for c in &schema.columns {
        if c.kind == ColumnKind::Ignored {
            position(&c.name)?;
        }
    }
    let cat_pos = position(&schema.attack_cat)?;
    let label_pos = position(&schema.label)?;

    let mut records = Vec::new();
    for (i, row) in csv_reader.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let mut numeric = Vec::new();
        let mut categorical = Vec::new();
        for slot in &slots {
            let cell = row.get(slot.column).ok_or_else(|| Error::Row {
                line,
                message: format!("missing cell for column {:?}", slot.name),
            })?;
            if slot.numeric {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Row {
                    line,
                    message: format!("cannot parse {:?} as a number in column {:?}", cell, slot.name),
                })?;
                if !v.is_finite() {
                    return Err(Error::Row {
                        line,
                        message: format!("non-finite value in column {:?}", slot.name),
                    });
                }
                numeric.push(v);
            } else {
                categorical.push(cell.trim().to_string());
            }
        }
        let class = class_index(row.get(cat_pos).unwrap_or("")).map_err(|e| Error::Row {
            line,
            message: e.to_string(),
        })?;
        let label_cell = row.get(label_pos).unwrap_or("").trim();
        let label: u8 = match label_cell {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Row {
                    line,
                    message: format!("label must be 0 or 1, got {other:?}"),
                })
            }
        };
        let is_normal = class == 0;
        if is_normal != (label == 0) {
            return Err(Error::Row {
                line,
                message: format!(
                    "class {:?} conflicts with binary label {label}",
                    CLASS_NAMES[class]
                ),
            });
        }
        records.push(RawRecord {
            numeric,
            categorical,
            class,
            label,
        });
    }

    Ok(RawDataset {
        feature_columns: schema.feature_columns().cloned().collect(),
        records,
    })
}

/// The 1,000-row synthetic dataset bundled with the crate. It follows
/// the full 45-column schema, covers all ten classes with skewed counts
/// and loads entirely offline.
pub fn fixture() -> Result<RawDataset> {
    load_csv_reader(fixture_csv().as_bytes(), &Schema::unsw_nb15())
}

pub fn fixture_csv() -> &'static str {
    include_str!("../../data/fixture.csv")
}

/// Split, balance and encoding settings for one run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PipelineConfig {
    pub label_mode: LabelMode,
    pub test_fraction: f64,
    pub stratified: bool,
    pub balance: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            label_mode: LabelMode::Binary,
            test_fraction: 0.3,
            stratified: true,
            balance: true,
        }
    }
}

/// Everything `prepare` produces: encoded splits plus the fitted
/// statistics and the index bookkeeping behind them.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: EncodedMatrix,
    pub test: EncodedMatrix,
    pub encoder: FittedEncoder,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// Training indices after oversampling; equals `train_indices` when
    /// balancing is off.
    pub balanced_train_indices: Vec<usize>,
}

/// Runs the full preparation pipeline: split, balance the training
/// side, fit the encoder and normalizer on the (balanced) training rows
/// only, then transform both splits.
pub fn prepare(ds: &RawDataset, cfg: &PipelineConfig, rng: &mut RunRng) -> Result<Prepared> {
    let (train_indices, test_indices) = split(ds, cfg.test_fraction, cfg.stratified, rng)?;
    let balanced_train_indices = if cfg.balance {
        balance_classes(ds, &train_indices, rng)?
    } else {
        train_indices.clone()
    };
    let encoder = FittedEncoder::fit(ds, &balanced_train_indices)?;
    let train = encoder.transform(ds, &balanced_train_indices, cfg.label_mode)?;
    let test = encoder.transform(ds, &test_indices, cfg.label_mode)?;
    Ok(Prepared {
        train,
        test,
        encoder,
        train_indices,
        test_indices,
        balanced_train_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini_schema() -> Schema {
        Schema {
            columns: vec![
                ColumnSpec { name: "id".into(), kind: ColumnKind::Ignored },
                ColumnSpec { name: "dur".into(), kind: ColumnKind::Numeric },
                ColumnSpec { name: "proto".into(), kind: ColumnKind::Categorical },
            ],
            attack_cat: "attack_cat".into(),
            label: "label".into(),
        }
    }

    #[test]
    fn loads_valid_rows() {
        let csv = "id,dur,proto,attack_cat,label\n1,0.5,tcp,Normal,0\n2,1.5,udp,DoS,1\n";
        let ds = load_csv_reader(csv.as_bytes(), &mini_schema()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.records[0].numeric, vec![0.5]);
        assert_eq!(ds.records[1].categorical, vec!["udp".to_string()]);
        assert_eq!(ds.records[1].class, 4);
        assert_eq!(ds.records[1].label, 1);
    }

    #[test]
    fn empty_file_with_header_is_valid() {
        let csv = "id,dur,proto,attack_cat,label\n";
        let ds = load_csv_reader(csv.as_bytes(), &mini_schema()).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn missing_column_names_it() {
        let csv = "id,dur,attack_cat,label\n";
        let err = load_csv_reader(csv.as_bytes(), &mini_schema()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        assert!(err.to_string().contains("proto"));
    }

    #[test]
    fn undeclared_column_is_rejected() {
        let csv = "id,dur,proto,extra,attack_cat,label\n";
        let err = load_csv_reader(csv.as_bytes(), &mini_schema()).unwrap_err();
        assert!(err.to_string().contains("extra"));
    }

    #[test]
    fn bad_numeric_cell_reports_line() {
        let csv = "id,dur,proto,attack_cat,label\n1,0.5,tcp,Normal,0\n2,oops,udp,DoS,1\n";
        let err = load_csv_reader(csv.as_bytes(), &mini_schema()).unwrap_err();
        match err {
            Error::Row { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("dur"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_class_and_label_conflicts_are_rejected() {
        let bad_class = "id,dur,proto,attack_cat,label\n1,0.5,tcp,Phishing,1\n";
        assert!(load_csv_reader(bad_class.as_bytes(), &mini_schema()).is_err());
        let conflict = "id,dur,proto,attack_cat,label\n1,0.5,tcp,Normal,1\n";
        assert!(load_csv_reader(conflict.as_bytes(), &mini_schema()).is_err());
        let bad_label = "id,dur,proto,attack_cat,label\n1,0.5,tcp,DoS,2\n";
        assert!(load_csv_reader(bad_label.as_bytes(), &mini_schema()).is_err());
    }

    #[test]
    fn class_aliases_resolve() {
        assert_eq!(class_index("Backdoors").unwrap(), 7);
        assert_eq!(class_index(" backdoor ").unwrap(), 7);
        assert_eq!(class_index("GENERIC").unwrap(), 1);
        assert!(class_index("Mystery").is_err());
    }

    #[test]
    fn fixture_loads_with_all_classes() {
        let ds = fixture().unwrap();
        assert_eq!(ds.len(), 1000);
        let counts = ds.class_counts();
        assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
        assert_eq!(counts.iter().sum::<usize>(), 1000);
    }

    #[test]
    fn prepare_end_to_end_on_fixture() {
        let ds = fixture().unwrap();
        let cfg = PipelineConfig::default();
        let mut rng = RunRng::from_seed(7);
        let p = prepare(&ds, &cfg, &mut rng).unwrap();
        assert_eq!(p.train.x.shape()[1], p.test.x.shape()[1]);
        assert_eq!(p.test.x.shape()[0], p.test_indices.len());
        assert!(p.train.x.is_finite() && p.test.x.is_finite());
        // Balanced training split: every class at the majority count.
        let mut counts = [0usize; 10];
        for &i in &p.balanced_train_indices {
            counts[ds.records[i].class] += 1;
        }
        let max = *counts.iter().max().unwrap();
        assert!(counts.iter().all(|&c| c == max), "{counts:?}");
    }

    #[test]
    fn pipeline_is_deterministic() {
        let ds = fixture().unwrap();
        let cfg = PipelineConfig { label_mode: LabelMode::Multiclass, ..Default::default() };
        let run = || {
            let mut rng = RunRng::from_seed(99);
            prepare(&ds, &cfg, &mut rng).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.train.x.data(), b.train.x.data());
        assert_eq!(a.train.y.data(), b.train.y.data());
        assert_eq!(a.test_indices, b.test_indices);
    }
}
