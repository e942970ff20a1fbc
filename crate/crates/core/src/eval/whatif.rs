use serde::{Deserialize, Serialize};

use crate::data::{window_at, ColumnKind, FeatureSchema, NormStats, SeriesRecord};
use crate::error::{Error, Result};
use crate::model::Forecaster;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Intervention {
    SetConstant {
        value: f64,
    },
    Scale {
        factor: f64,
    },
    /// Mean of the column over the last `days` history steps.
    HistoricalMean {
        days: usize,
    },
}

/// Change of one knowledge column on window steps `start..=end` (1-based,
/// inside the horizon `T+1..=T+L`). Values are in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfSpec {
    pub column: String,
    pub intervention: Intervention,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub changes: Vec<WhatIfSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhatIfResult {
    /// `L × D` forecast with unchanged knowledge.
    pub baseline: Tensor<f64>,
    pub scenarios: Vec<(String, Tensor<f64>)>,
    pub target_names: Vec<String>,
}

/// One forecast value per scenario, horizon step and target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRow {
    pub scenario: String,
    pub step: usize,
    pub target: String,
    pub value: f64,
}

impl WhatIfResult {
    pub fn rows(&self) -> Vec<WhatIfRow> {
        let all = std::iter::once(("baseline", &self.baseline))
            .chain(self.scenarios.iter().map(|(n, t)| (n.as_str(), t)));
        let mut rows = Vec::new();
        for (name, t) in all {
            for step in 0..t.rows() {
                for (j, target) in self.target_names.iter().enumerate() {
                    rows.push(WhatIfRow {
                        scenario: name.to_string(),
                        step: step + 1,
                        target: target.clone(),
                        value: t.get(&[step, j]),
                    });
                }
            }
        }
        rows
    }
}

/// Forecasts the window of raw `record` at `offset` under each scenario.
/// Knowledge cells an intervention leaves unchanged keep their original
/// normalized value, so an identity scenario reproduces the baseline bitwise.
/// With `denorm`, forecasts are reported in original units.
pub fn what_if<F: Scalar, M: Forecaster<F> + ?Sized>(
    model: &M,
    norm: &NormStats,
    record: &SeriesRecord,
    offset: usize,
    scenarios: &[Scenario],
    denorm: bool,
) -> Result<WhatIfResult> {
    let schema = model.schema();
    let normalized = norm.apply(std::slice::from_ref(record), schema)?.remove(0);
    let forecast = |rec: &SeriesRecord| -> Result<Tensor<f64>> {
        let w = window_at::<F>(rec, schema, offset)?;
        let mut y = model.forecast(&w)?.cast::<f64>();
        if denorm {
            let stat = schema.statistic_columns();
            let cols: Vec<_> = schema
                .target_positions()
                .into_iter()
                .map(|p| stat[p])
                .collect();
            let d = y.cols();
            for (i, v) in y.data_mut().iter_mut().enumerate() {
                *v = norm.denormalize_value(cols[i % d], *v)?;
            }
        }
        Ok(y)
    };
    let baseline = forecast(&normalized)?;
    let mut out = Vec::with_capacity(scenarios.len());
    for sc in scenarios {
        let mut rec = normalized.clone();
        for spec in &sc.changes {
            apply_change(schema, norm, record, &mut rec, offset, spec)?;
        }
        out.push((sc.name.clone(), forecast(&rec)?));
    }
    Ok(WhatIfResult {
        baseline,
        scenarios: out,
        target_names: schema
            .target_names()
            .into_iter()
            .map(String::from)
            .collect(),
    })
}

fn apply_change(
    schema: &FeatureSchema,
    norm: &NormStats,
    raw: &SeriesRecord,
    rec: &mut SeriesRecord,
    offset: usize,
    spec: &WhatIfSpec,
) -> Result<()> {
    let (t, l) = (schema.history_len, schema.horizon);
    if spec.start < t + 1 || spec.start > spec.end || spec.end > t + l {
        return Err(Error::Config(format!(
            "what-if range {}..={} must lie inside the horizon {}..={}",
            spec.start,
            spec.end,
            t + 1,
            t + l
        )));
    }
    let know = schema.knowledge_columns();
    let Some(c) = know.iter().position(|col| col.name == spec.column) else {
        let msg = if schema.column(&spec.column).is_some() {
            format!(
                "`{}` is not a knowledge column; only knowledge can be intervened on",
                spec.column
            )
        } else {
            format!("unknown column `{}`", spec.column)
        };
        return Err(Error::Config(msg));
    };
    let col = know[c];
    let is_id = col.kind == ColumnKind::Id;
    let hist_mean = match spec.intervention {
        Intervention::HistoricalMean { days } => {
            if days == 0 || days > t {
                return Err(Error::Config(format!(
                    "historical mean over {days} days needs 1..={t}"
                )));
            }
            let rows = &raw.knowledge[offset + t - days..offset + t];
            Some(rows.iter().map(|r| r[c]).sum::<f64>() / days as f64)
        }
        _ => None,
    };
    if is_id && !matches!(spec.intervention, Intervention::SetConstant { .. }) {
        return Err(Error::Config(format!(
            "id column `{}` only supports set_constant",
            col.name
        )));
    }
    for step in spec.start..=spec.end {
        let r = offset + step - 1;
        let old = raw.knowledge[r][c];
        let new = match spec.intervention {
            Intervention::SetConstant { value } => value,
            Intervention::Scale { factor } => old * factor,
            Intervention::HistoricalMean { .. } => hist_mean.expect("computed above"),
        };
        if new != old {
            rec.knowledge[r][c] = if is_id {
                new
            } else {
                norm.normalize_value(col, new)?
            };
        }
    }
    Ok(())
}
