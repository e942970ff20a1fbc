//! Per-column transform + z-scoring with statistics from the training split.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::record::SeriesRecord;
use super::schema::{ColumnKind, ColumnSpec, FeatureSchema};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

/// Mean/std of every numeric column, post-transform, keyed by column name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NormStats {
    pub columns: BTreeMap<String, ColumnStats>,
}

impl NormStats {
    /// Fits statistics on `train`. Statistic columns use history rows only.
    pub fn fit(train: &[SeriesRecord], schema: &FeatureSchema) -> Result<Self> {
        let mut columns = BTreeMap::new();
        for (j, col) in schema.statistic_columns().into_iter().enumerate() {
            let vals = train
                .iter()
                .flat_map(|r| r.statistics.iter().map(move |row| row[j]));
            columns.insert(col.name.clone(), column_stats(col, vals)?);
        }
        for (j, col) in schema.knowledge_columns().into_iter().enumerate() {
            if col.kind != ColumnKind::Numeric {
                continue;
            }
            let vals = train
                .iter()
                .flat_map(|r| r.knowledge.iter().map(move |row| row[j]));
            columns.insert(col.name.clone(), column_stats(col, vals)?);
        }
        Ok(NormStats { columns })
    }

    fn get(&self, name: &str) -> Result<ColumnStats> {
        self.columns
            .get(name)
            .copied()
            .ok_or_else(|| Error::Data(format!("no normalization statistics for `{name}`")))
    }

    pub fn normalize_value(&self, col: &ColumnSpec, x: f64) -> Result<f64> {
        let s = self.get(&col.name)?;
        Ok((transformed(col, x)? - s.mean) / s.std)
    }

    pub fn denormalize_value(&self, col: &ColumnSpec, z: f64) -> Result<f64> {
        let s = self.get(&col.name)?;
        Ok(col.transform.inverse(z * s.std + s.mean))
    }

    /// Normalizes every numeric cell of `records`; id columns pass through.
    pub fn apply(
        &self,
        records: &[SeriesRecord],
        schema: &FeatureSchema,
    ) -> Result<Vec<SeriesRecord>> {
        let stat_cols = schema.statistic_columns();
        let know_cols = schema.knowledge_columns();
        let target_cols: Vec<&ColumnSpec> = schema
            .target_positions()
            .into_iter()
            .map(|p| stat_cols[p])
            .collect();
        let norm_rows = |rows: &[Vec<f64>], cols: &[&ColumnSpec]| -> Result<Vec<Vec<f64>>> {
            rows.iter()
                .map(|row| {
                    row.iter()
                        .zip(cols)
                        .map(|(&x, c)| match c.kind {
                            ColumnKind::Numeric => self.normalize_value(c, x),
                            ColumnKind::Id => Ok(x),
                        })
                        .collect()
                })
                .collect()
        };
        records
            .iter()
            .map(|r| {
                Ok(SeriesRecord {
                    series_id: r.series_id.clone(),
                    start: r.start,
                    statistics: norm_rows(&r.statistics, &stat_cols)?,
                    knowledge: norm_rows(&r.knowledge, &know_cols)?,
                    targets: norm_rows(&r.targets, &target_cols)?,
                })
            })
            .collect()
    }

    /// Inverse of [`apply`](Self::apply).
    pub fn invert(
        &self,
        records: &[SeriesRecord],
        schema: &FeatureSchema,
    ) -> Result<Vec<SeriesRecord>> {
        let stat_cols = schema.statistic_columns();
        let know_cols = schema.knowledge_columns();
        let target_cols: Vec<&ColumnSpec> = schema
            .target_positions()
            .into_iter()
            .map(|p| stat_cols[p])
            .collect();
        let inv = |rows: &[Vec<f64>], cols: &[&ColumnSpec]| -> Result<Vec<Vec<f64>>> {
            rows.iter()
                .map(|row| {
                    row.iter()
                        .zip(cols)
                        .map(|(&z, c)| match c.kind {
                            ColumnKind::Numeric => self.denormalize_value(c, z),
                            ColumnKind::Id => Ok(z),
                        })
                        .collect()
                })
                .collect()
        };
        records
            .iter()
            .map(|r| {
                Ok(SeriesRecord {
                    series_id: r.series_id.clone(),
                    start: r.start,
                    statistics: inv(&r.statistics, &stat_cols)?,
                    knowledge: inv(&r.knowledge, &know_cols)?,
                    targets: inv(&r.targets, &target_cols)?,
                })
            })
            .collect()
    }
}

/// Fits on `train` and returns the normalized training records with the stats.
pub fn normalize(
    train: &[SeriesRecord],
    schema: &FeatureSchema,
) -> Result<(Vec<SeriesRecord>, NormStats)> {
    let stats = NormStats::fit(train, schema)?;
    let out = stats.apply(train, schema)?;
    Ok((out, stats))
}

fn transformed(col: &ColumnSpec, x: f64) -> Result<f64> {
    if col.transform == super::schema::Transform::Log1p && x < 0.0 {
        return Err(Error::Data(format!(
            "negative value {x} in log1p column `{}`",
            col.name
        )));
    }
    Ok(col.transform.forward(x))
}

fn column_stats(col: &ColumnSpec, vals: impl Iterator<Item = f64>) -> Result<ColumnStats> {
    let mut n = 0usize;
    let mut sum = 0.0;
    let mut xs = Vec::new();
    for v in vals {
        let y = transformed(col, v)?;
        sum += y;
        n += 1;
        xs.push(y);
    }
    if n == 0 {
        return Ok(ColumnStats {
            mean: 0.0,
            std: 1.0,
        });
    }
    let mean = sum / n as f64;
    let var = xs.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n as f64;
    let mut std = var.sqrt();
    if !(std > 1e-12) {
        log::warn!(
            "column `{}` has zero variance on the training split; using std = 1",
            col.name
        );
        std = 1.0;
    }
    Ok(ColumnStats { mean, std })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::{ColumnGroup, ColumnSpec, Transform};
    use proptest::prelude::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(
            2,
            1,
            vec![
                ColumnSpec::target("ord", Transform::Log1p),
                ColumnSpec::numeric("flat", ColumnGroup::Statistic),
                ColumnSpec::numeric("price", ColumnGroup::Knowledge),
                ColumnSpec::id("dow", 7),
            ],
        )
        .unwrap()
    }

    fn rec(id: &str, ord: [f64; 3], price: [f64; 3]) -> SeriesRecord {
        SeriesRecord {
            series_id: id.into(),
            start: 0,
            statistics: vec![vec![ord[0], 5.0], vec![ord[1], 5.0]],
            knowledge: (0..3).map(|i| vec![price[i], i as f64]).collect(),
            targets: ord.iter().map(|&o| vec![o]).collect(),
        }
    }

    #[test]
    fn log1p_zero_then_zscore() {
        let train = vec![
            rec("a", [0.0, 0.0, 1.0], [1., 2., 3.]),
            rec("b", [3.0, 3.0, 0.0], [1., 2., 3.]),
        ];
        let (out, stats) = normalize(&train, &schema()).unwrap();
        let s = stats.columns["ord"];
        assert!((s.mean - 4f64.ln() / 2.0).abs() < 1e-15);
        assert!((out[0].statistics[0][0] - (0.0 - s.mean) / s.std).abs() < 1e-15);
        // ids untouched
        assert_eq!(out[0].knowledge[2][1], 2.0);
    }

    #[test]
    fn constant_column_gets_unit_std() {
        let train = vec![rec("a", [1.0, 2.0, 3.0], [1., 2., 3.])];
        let (out, stats) = normalize(&train, &schema()).unwrap();
        assert_eq!(stats.columns["flat"].std, 1.0);
        assert!(out[0].statistics.iter().all(|r| r[1] == 0.0));
    }

    #[test]
    fn negative_under_log1p_rejected() {
        let train = vec![rec("a", [-1.0, 2.0, 3.0], [1., 2., 3.])];
        assert!(matches!(normalize(&train, &schema()), Err(Error::Data(_))));
    }

    #[test]
    fn stats_ignore_other_splits() {
        let train = vec![rec("a", [1.0, 2.0, 3.0], [1., 2., 3.])];
        let s1 = NormStats::fit(&train, &schema()).unwrap();
        let val_a = vec![
            rec("v", [9.0, 9.0, 9.0], [7., 7., 7.]),
            rec("w", [0.0, 1.0, 0.0], [1., 1., 1.]),
        ];
        let mut val_b = val_a.clone();
        val_b.reverse();
        let _ = s1.apply(&val_a, &schema()).unwrap();
        let _ = s1.apply(&val_b, &schema()).unwrap();
        assert_eq!(s1, NormStats::fit(&train, &schema()).unwrap());
    }

    proptest! {
        #[test]
        fn denormalize_inverts_normalize(
            ords in prop::collection::vec(0.0f64..1e4, 6),
            prices in prop::collection::vec(-50.0f64..50.0, 6),
        ) {
            let train = vec![
                rec("a", [ords[0], ords[1], ords[2]], [prices[0], prices[1], prices[2]]),
                rec("b", [ords[3], ords[4], ords[5]], [prices[3], prices[4], prices[5]]),
            ];
            let (norm, stats) = normalize(&train, &schema()).unwrap();
            let back = stats.invert(&norm, &schema()).unwrap();
            for (x, y) in train.iter().zip(&back) {
                for (a, b) in x.statistics.iter().flatten().zip(y.statistics.iter().flatten()) {
                    prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
                }
                for (a, b) in x.knowledge.iter().flatten().zip(y.knowledge.iter().flatten()) {
                    prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
                }
                for (a, b) in x.targets.iter().flatten().zip(y.targets.iter().flatten()) {
                    prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
                }
            }
        }
    }
}
