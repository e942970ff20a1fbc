use serde::{Deserialize, Serialize};

use crate::data::{make_windows, FeatureSchema, NormStats, SeriesRecord, Window};
use crate::error::{Error, Result};
use crate::model::Forecaster;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub target: String,
    pub mse: f64,
    pub mae: f64,
}

/// Per-target and averaged errors over every forecast window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub split: String,
    pub window_count: usize,
    pub fingerprint: String,
    pub denormalized: bool,
    pub targets: Vec<TargetMetrics>,
    /// Mean of the per-target MSEs.
    pub avg_mse: f64,
    /// Mean of the per-target MAEs.
    pub avg_mae: f64,
}

impl MetricReport {
    /// Targets as rows, MSE and MAE as columns, with a closing `Avg` row.
    pub fn to_table(&self) -> String {
        let width = self
            .targets
            .iter()
            .map(|t| t.target.len())
            .max()
            .unwrap_or(0)
            .max(6);
        let mut out = format!("{:<width$}  {:>10}  {:>10}\n", "target", "MSE", "MAE");
        for t in &self.targets {
            out.push_str(&format!(
                "{:<width$}  {:>10.4}  {:>10.4}\n",
                t.target, t.mse, t.mae
            ));
        }
        out.push_str(&format!(
            "{:<width$}  {:>10.4}  {:>10.4}\n",
            "Avg", self.avg_mse, self.avg_mae
        ));
        out
    }
}

/// Metrics from aligned prediction/label pairs, each `steps × D`.
pub fn compute_metrics(
    preds: &[Tensor<f64>],
    labels: &[Tensor<f64>],
    target_names: &[String],
) -> Result<Vec<TargetMetrics>> {
    if preds.is_empty() || preds.len() != labels.len() {
        return Err(Error::Data(format!(
            "need matching non-empty predictions ({}) and labels ({})",
            preds.len(),
            labels.len()
        )));
    }
    let d = target_names.len();
    let mut se = vec![0.0; d];
    let mut ae = vec![0.0; d];
    let mut count = 0usize;
    for (p, l) in preds.iter().zip(labels) {
        if p.shape() != l.shape() || p.cols() != d {
            return Err(Error::Shape {
                op: "metrics",
                lhs: p.shape().to_vec(),
                rhs: l.shape().to_vec(),
            });
        }
        for r in 0..p.rows() {
            for (j, (&a, &b)) in p.row(r).iter().zip(l.row(r)).enumerate() {
                let e = a - b;
                se[j] += e * e;
                ae[j] += e.abs();
            }
        }
        count += p.rows();
    }
    Ok(target_names
        .iter()
        .enumerate()
        .map(|(j, name)| TargetMetrics {
            target: name.clone(),
            mse: se[j] / count as f64,
            mae: ae[j] / count as f64,
        })
        .collect())
}

fn report(
    split: &str,
    fingerprint: String,
    windows: usize,
    denorm: bool,
    targets: Vec<TargetMetrics>,
) -> MetricReport {
    let n = targets.len() as f64;
    MetricReport {
        split: split.to_string(),
        window_count: windows,
        fingerprint,
        denormalized: denorm,
        avg_mse: targets.iter().map(|t| t.mse).sum::<f64>() / n,
        avg_mae: targets.iter().map(|t| t.mae).sum::<f64>() / n,
        targets,
    }
}

/// Forecasts every window and scores the horizon. With `denorm`, both sides
/// are mapped back to original units first.
pub fn evaluate_windows<F: Scalar, M: Forecaster<F> + ?Sized>(
    model: &M,
    windows: &[Window<F>],
    split: &str,
    denorm: Option<&NormStats>,
) -> Result<MetricReport> {
    if windows.is_empty() {
        return Err(Error::Data(format!(
            "split `{split}` has no complete windows"
        )));
    }
    let schema = model.schema();
    let target_cols: Vec<_> = {
        let stat = schema.statistic_columns();
        schema
            .target_positions()
            .into_iter()
            .map(|p| stat[p].clone())
            .collect()
    };
    let mut preds = Vec::with_capacity(windows.len());
    let mut labels = Vec::with_capacity(windows.len());
    for w in windows {
        let mut p = model.forecast(w)?.cast::<f64>();
        let mut l = w.labels()?.cast::<f64>();
        if let Some(norm) = denorm {
            for t in [&mut p, &mut l] {
                let d = t.cols();
                for (i, v) in t.data_mut().iter_mut().enumerate() {
                    *v = norm.denormalize_value(&target_cols[i % d], *v)?;
                }
            }
        }
        preds.push(p);
        labels.push(l);
    }
    let names: Vec<String> = schema
        .target_names()
        .into_iter()
        .map(String::from)
        .collect();
    let targets = compute_metrics(&preds, &labels, &names)?;
    Ok(report(
        split,
        model.fingerprint(),
        windows.len(),
        denorm.is_some(),
        targets,
    ))
}

/// Stride-1 evaluation over normalized records.
pub fn evaluate<F: Scalar, M: Forecaster<F> + ?Sized>(
    model: &M,
    records: &[SeriesRecord],
    schema: &FeatureSchema,
    split: &str,
    denorm: Option<&NormStats>,
) -> Result<MetricReport> {
    let windows: Vec<Window<F>> = make_windows(records, schema, 1)?;
    evaluate_windows(model, &windows, split, denorm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(&[rows, v.len() / rows], v).unwrap()
    }

    #[test]
    fn hand_computed_two_windows() {
        let names = vec!["a".to_string(), "b".to_string()];
        let preds = [t(1, &[1.0, 0.0]), t(1, &[3.0, -2.0])];
        let labels = [t(1, &[0.0, 0.0]), t(1, &[1.0, 0.0])];
        let m = compute_metrics(&preds, &labels, &names).unwrap();
        assert_eq!(m[0].mse, (1.0 + 4.0) / 2.0);
        assert_eq!(m[0].mae, (1.0 + 2.0) / 2.0);
        assert_eq!(m[1].mse, 2.0);
        assert_eq!(m[1].mae, 1.0);
        let r = report("test", String::new(), 2, false, m);
        assert_eq!(r.avg_mse, 2.25);
        assert_eq!(r.avg_mae, 1.25);
        assert!(r.to_table().contains("Avg"));
    }

    #[test]
    fn mismatched_inputs_are_errors() {
        let names = vec!["a".to_string()];
        assert!(compute_metrics(&[], &[], &names).is_err());
        assert!(compute_metrics(&[t(1, &[1.0])], &[t(2, &[1.0, 2.0])], &names).is_err());
    }
}
