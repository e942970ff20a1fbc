use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::record::{check_id, window_count, SeriesRecord};
use super::schema::FeatureSchema;

/// A length-(T+L) slice of a normalized record, laid out as model inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Window<F> {
    pub series_id: String,
    pub offset: usize,
    pub history_len: usize,
    pub horizon: usize,
    /// T × statistic columns.
    pub statistics: Tensor<F>,
    /// (T+L) × numeric knowledge columns, absent when the schema has none.
    pub knowledge_numeric: Option<Tensor<F>>,
    /// One index sequence of length T+L per id knowledge column.
    pub knowledge_ids: Vec<Vec<usize>>,
    /// Target columns over the window: T+L rows when labelled, else T.
    pub targets: Tensor<F>,
}

impl<F: Scalar> Window<F> {
    pub fn len(&self) -> usize {
        self.history_len + self.horizon
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_labelled(&self) -> bool {
        self.targets.rows() == self.len()
    }

    pub fn target_dim(&self) -> usize {
        self.targets.cols()
    }

    /// Target rows at the given 0-based window positions.
    pub fn targets_at(&self, positions: &[usize]) -> Result<Tensor<F>> {
        let d = self.target_dim();
        let mut out = Vec::with_capacity(positions.len() * d);
        for &p in positions {
            if p >= self.targets.rows() {
                return Err(Error::Data(format!(
                    "window `{}`@{}: no target at position {p}",
                    self.series_id, self.offset
                )));
            }
            out.extend_from_slice(self.targets.row(p));
        }
        Tensor::new(&[positions.len(), d], out)
    }

    /// Future labels, rows T..T+L.
    pub fn labels(&self) -> Result<Tensor<F>> {
        let pos: Vec<usize> = (self.history_len..self.len()).collect();
        self.targets_at(&pos)
    }
}

/// Extracts the window of `record` starting at row `offset`.
pub fn window_at<F: Scalar>(
    record: &SeriesRecord,
    schema: &FeatureSchema,
    offset: usize,
) -> Result<Window<F>> {
    let (t, l) = (schema.history_len, schema.horizon);
    let s = t + l;
    if offset + s > record.len() {
        return Err(Error::Data(format!(
            "series `{}`: window at {offset} exceeds length {}",
            record.series_id,
            record.len()
        )));
    }
    let flat = |rows: &[Vec<f64>], cols: &[usize]| -> Vec<F> {
        rows.iter()
            .flat_map(|r| cols.iter().map(move |&c| F::of(r[c])))
            .collect()
    };
    let n_stat = schema.statistic_columns().len();
    let all_stats: Vec<usize> = (0..n_stat).collect();
    let statistics = Tensor::new(
        &[t, n_stat],
        flat(&record.statistics[offset..offset + t], &all_stats),
    )?;

    let kn = schema.knowledge_numeric_positions();
    let krows = &record.knowledge[offset..offset + s];
    let knowledge_numeric = if kn.is_empty() {
        None
    } else {
        Some(Tensor::new(&[s, kn.len()], flat(krows, &kn))?)
    };
    let know_cols = schema.knowledge_columns();
    let knowledge_ids = schema
        .knowledge_id_positions()
        .into_iter()
        .map(|c| {
            let col = know_cols[c];
            krows
                .iter()
                .map(|r| check_id(&col.name, r[c], col.vocab_size.unwrap_or(0)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let d = schema.target_positions().len();
    let avail = record.targets.len().saturating_sub(offset).min(s);
    let rows = if avail >= s { s } else { t };
    if avail < rows {
        return Err(Error::Data(format!(
            "series `{}`: targets end before window history at {offset}",
            record.series_id
        )));
    }
    let all_targets: Vec<usize> = (0..d).collect();
    let targets = Tensor::new(
        &[rows, d],
        flat(&record.targets[offset..offset + rows], &all_targets),
    )?;
    Ok(Window {
        series_id: record.series_id.clone(),
        offset,
        history_len: t,
        horizon: l,
        statistics,
        knowledge_numeric,
        knowledge_ids,
        targets,
    })
}

/// All windows of every record at `stride`, in record order.
pub fn make_windows<F: Scalar>(
    records: &[SeriesRecord],
    schema: &FeatureSchema,
    stride: usize,
) -> Result<Vec<Window<F>>> {
    if stride == 0 {
        return Err(Error::Config("window stride must be >= 1".into()));
    }
    let s = schema.window_len();
    let mut out = Vec::new();
    for r in records {
        for k in 0..window_count(r.len(), s, stride) {
            out.push(window_at(r, schema, k * stride)?);
        }
    }
    Ok(out)
}

/// The final window of a record: the one whose horizon is the record's tail.
pub fn last_window<F: Scalar>(record: &SeriesRecord, schema: &FeatureSchema) -> Result<Window<F>> {
    let s = schema.window_len();
    if record.len() < s {
        return Err(Error::Data(format!(
            "series `{}` shorter than T+L",
            record.series_id
        )));
    }
    window_at(record, schema, record.len() - s)
}

/// A non-empty group of windows sharing T and L.
#[derive(Debug, Clone)]
pub struct WindowBatch<'a, F> {
    windows: Vec<&'a Window<F>>,
}

impl<'a, F: Scalar> WindowBatch<'a, F> {
    pub fn new(windows: Vec<&'a Window<F>>) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::Data("empty batch".into()))?;
        if windows
            .iter()
            .any(|w| w.history_len != first.history_len || w.horizon != first.horizon)
        {
            return Err(Error::Data("batch mixes window lengths".into()));
        }
        Ok(WindowBatch { windows })
    }

    pub fn windows(&self) -> &[&'a Window<F>] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}
