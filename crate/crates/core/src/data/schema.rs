use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Reserved column holding the series identifier in data files.
pub const SERIES_ID_COLUMN: &str = "series_id";
/// Reserved column holding the integer time index in data files.
pub const TIME_COLUMN: &str = "t";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Id,
}

/// Statistics are only observed in the past; knowledge is known for the
/// horizon as well.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnGroup {
    Statistic,
    Knowledge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    None,
    Log1p,
}

impl Transform {
    pub fn forward(self, x: f64) -> f64 {
        match self {
            Transform::None => x,
            Transform::Log1p => x.ln_1p(),
        }
    }

    pub fn inverse(self, y: f64) -> f64 {
        match self {
            Transform::None => y,
            Transform::Log1p => y.exp_m1(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub group: ColumnGroup,
    #[serde(default)]
    pub is_target: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_size: Option<usize>,
    #[serde(default)]
    pub transform: Transform,
}

impl ColumnSpec {
    pub fn numeric(name: &str, group: ColumnGroup) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind: ColumnKind::Numeric,
            group,
            is_target: false,
            vocab_size: None,
            transform: Transform::None,
        }
    }

    pub fn target(name: &str, transform: Transform) -> Self {
        ColumnSpec {
            is_target: true,
            transform,
            ..Self::numeric(name, ColumnGroup::Statistic)
        }
    }

    pub fn id(name: &str, vocab_size: usize) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind: ColumnKind::Id,
            group: ColumnGroup::Knowledge,
            is_target: false,
            vocab_size: Some(vocab_size),
            transform: Transform::None,
        }
    }

    pub fn with_transform(mut self, transform: Transform) -> Self {
        self.transform = transform;
        self
    }
}

/// Declares every input column and the history/horizon lengths.
///
/// Statistic columns are numeric; id columns are knowledge. Within each group
/// columns keep their declaration order, which fixes the layout of
/// [`SeriesRecord`](super::SeriesRecord) rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub history_len: usize,
    pub horizon: usize,
    pub columns: Vec<ColumnSpec>,
}

impl FeatureSchema {
    pub fn new(history_len: usize, horizon: usize, columns: Vec<ColumnSpec>) -> Result<Self> {
        let s = FeatureSchema {
            history_len,
            horizon,
            columns,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 || self.history_len < self.horizon {
            return Err(Error::Schema(format!(
                "need history_len >= horizon >= 1, got T={} L={}",
                self.history_len, self.horizon
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            if c.name == SERIES_ID_COLUMN || c.name == TIME_COLUMN {
                return Err(Error::Schema(format!(
                    "column name `{}` is reserved",
                    c.name
                )));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
            match c.kind {
                ColumnKind::Id => {
                    if c.vocab_size.unwrap_or(0) < 1 {
                        return Err(Error::Schema(format!(
                            "id column `{}` needs vocab_size >= 1",
                            c.name
                        )));
                    }
                    if c.group != ColumnGroup::Knowledge {
                        return Err(Error::Schema(format!(
                            "id column `{}` must be in the knowledge group",
                            c.name
                        )));
                    }
                    if c.transform != Transform::None {
                        return Err(Error::Schema(format!(
                            "id column `{}` cannot be transformed",
                            c.name
                        )));
                    }
                }
                ColumnKind::Numeric => {
                    if c.vocab_size.is_some() {
                        return Err(Error::Schema(format!(
                            "numeric column `{}` must not declare vocab_size",
                            c.name
                        )));
                    }
                }
            }
            if c.is_target && (c.kind != ColumnKind::Numeric || c.group != ColumnGroup::Statistic) {
                return Err(Error::Schema(format!(
                    "target `{}` must be a numeric statistic",
                    c.name
                )));
            }
        }
        if self.target_names().is_empty() {
            return Err(Error::Schema(
                "at least one target column is required".into(),
            ));
        }
        Ok(())
    }

    /// T + L.
    pub fn window_len(&self) -> usize {
        self.history_len + self.horizon
    }

    pub fn statistic_columns(&self) -> Vec<&ColumnSpec> {
        self.columns
            .iter()
            .filter(|c| c.group == ColumnGroup::Statistic)
            .collect()
    }

    pub fn knowledge_columns(&self) -> Vec<&ColumnSpec> {
        self.columns
            .iter()
            .filter(|c| c.group == ColumnGroup::Knowledge)
            .collect()
    }

    /// Positions (within the knowledge columns) of numeric knowledge.
    pub fn knowledge_numeric_positions(&self) -> Vec<usize> {
        self.knowledge_columns()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Numeric)
            .map(|(i, _)| i)
            .collect()
    }

    /// Positions (within the knowledge columns) of id knowledge.
    pub fn knowledge_id_positions(&self) -> Vec<usize> {
        self.knowledge_columns()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Id)
            .map(|(i, _)| i)
            .collect()
    }

    /// Positions (within the statistic columns) of the targets.
    pub fn target_positions(&self) -> Vec<usize> {
        self.statistic_columns()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_target)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn target_names(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| c.is_target)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("schema serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
