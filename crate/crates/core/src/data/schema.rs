use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a CSV column is treated by the loader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    /// Present in the file but carries no information (row ids).
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

/// Dataset schema: the feature columns in file order plus the names of
/// the two label columns (attack category and binary label).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    pub attack_cat: String,
    pub label: String,
}

impl Schema {
    pub fn from_json(text: &str) -> Result<Schema> {
        let schema: Schema = serde_json::from_str(text)
            .map_err(|e| Error::Schema(format!("invalid schema JSON: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    /// The 45-column layout of the public UNSW-NB15 partition CSVs:
    /// an id column, 42 feature columns (3 categorical) and the two
    /// label columns.
    pub fn unsw_nb15() -> Schema {
        Schema::from_json(include_str!("../../data/unsw_nb15_schema.json"))
            .expect("bundled schema is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.attack_cat.is_empty() || self.label.is_empty() {
            return Err(Error::Schema("label column names must be non-empty".into()));
        }
        if self.attack_cat == self.label {
            return Err(Error::Schema(
                "attack_cat and label must be distinct columns".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column {:?}", c.name)));
            }
            if c.name == self.attack_cat || c.name == self.label {
                return Err(Error::Schema(format!(
                    "column {:?} is declared both as a feature and a label",
                    c.name
                )));
            }
        }
        if !self
            .columns
            .iter()
            .any(|c| c.kind != ColumnKind::Ignored)
        {
            return Err(Error::Schema("schema declares no feature columns".into()));
        }
        Ok(())
    }

    pub fn feature_columns(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| c.kind != ColumnKind::Ignored)
    }
}
