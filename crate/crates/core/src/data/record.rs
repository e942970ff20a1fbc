use crate::error::{Error, Result};

use super::schema::{ColumnKind, FeatureSchema};

/// One product's aligned sequences.
///
/// For a series with `n` knowledge rows, `statistics` holds the first `n - L`
/// rows (the horizon's statistics are never model inputs) and `targets` holds
/// the target columns for all `n` rows when the horizon is labelled, or the
/// first `n - L` rows when it is not.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRecord {
    pub series_id: String,
    /// Time index of the first row.
    pub start: i64,
    /// Rows × statistic columns, schema order.
    pub statistics: Vec<Vec<f64>>,
    /// Rows × knowledge columns, schema order; ids stored as integral values.
    pub knowledge: Vec<Vec<f64>>,
    /// Rows × target columns.
    pub targets: Vec<Vec<f64>>,
}

impl SeriesRecord {
    /// Number of time steps covered by knowledge.
    pub fn len(&self) -> usize {
        self.knowledge.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knowledge.is_empty()
    }

    /// Whether targets cover the final horizon.
    pub fn is_labelled(&self) -> bool {
        self.targets.len() == self.knowledge.len()
    }

    /// Checks the row-count identities and column widths against `schema`.
    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        let l = schema.horizon;
        let n = self.knowledge.len();
        let err = |msg: String| Err(Error::Data(format!("series `{}`: {msg}", self.series_id)));
        if self.statistics.len() + l != n {
            return err(format!(
                "{} knowledge rows but {} statistic rows (horizon {l})",
                n,
                self.statistics.len()
            ));
        }
        if self.targets.len() != n && self.targets.len() != self.statistics.len() {
            return err(format!(
                "{} target rows for {n} knowledge rows",
                self.targets.len()
            ));
        }
        let (ns, nk, nt) = (
            schema.statistic_columns().len(),
            schema.knowledge_columns().len(),
            schema.target_positions().len(),
        );
        if self.statistics.iter().any(|r| r.len() != ns)
            || self.knowledge.iter().any(|r| r.len() != nk)
            || self.targets.iter().any(|r| r.len() != nt)
        {
            return err("row width does not match schema".into());
        }
        for (j, col) in schema.knowledge_columns().iter().enumerate() {
            if col.kind == ColumnKind::Id {
                let vocab = col.vocab_size.unwrap_or(0);
                for row in &self.knowledge {
                    check_id(&col.name, row[j], vocab)?;
                }
            }
        }
        let finite = |rows: &Vec<Vec<f64>>| rows.iter().flatten().all(|x| x.is_finite());
        if !finite(&self.statistics) || !finite(&self.knowledge) || !finite(&self.targets) {
            return err("non-finite value".into());
        }
        Ok(())
    }
}

pub(crate) fn check_id(column: &str, value: f64, vocab: usize) -> Result<usize> {
    if value < 0.0 || value.fract() != 0.0 || value >= vocab as f64 {
        return Err(Error::IdOutOfVocab {
            column: column.to_string(),
            value,
            vocab,
        });
    }
    Ok(value as usize)
}

/// Number of windows of length `window` at `stride` in a series of `len` steps.
pub fn window_count(len: usize, window: usize, stride: usize) -> usize {
    if len < window || stride == 0 {
        0
    } else {
        (len - window) / stride + 1
    }
}
