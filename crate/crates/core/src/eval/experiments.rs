use serde::{Deserialize, Serialize};

use crate::attention::LayerKind;
use crate::data::{FeatureSchema, Splits};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::scalar::Scalar;
use crate::train::{train, TrainConfig, TrainOutcome};

use super::metrics::{evaluate, MetricReport};

/// Model variants compared in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// Knowledge after the forecast origin replaced by a learned vector.
    WoFuture,
    /// Plain self-attention in every layer.
    WoAliAttention,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::WoFuture, Variant::WoAliAttention];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoFuture => "wo/future",
            Variant::WoAliAttention => "wo/AliAttention",
        }
    }

    /// `base` with this variant's switch flipped.
    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Full => {
                cfg.layer_kind = LayerKind::Ali;
                cfg.use_future_knowledge = true;
            }
            Variant::WoFuture => {
                cfg.layer_kind = LayerKind::Ali;
                cfg.use_future_knowledge = false;
            }
            Variant::WoAliAttention => {
                cfg.layer_kind = LayerKind::Vsa;
                cfg.use_future_knowledge = true;
            }
        }
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct AblationRun<F> {
    pub variant: Variant,
    pub outcome: TrainOutcome<F>,
    pub report: MetricReport,
}

/// One long-format row of the ablation table; `target` is `Avg` for the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub target: String,
    pub mse: f64,
    pub mae: f64,
}

/// Trains each variant with the same seed and data and scores it on the
/// normalized test split.
pub fn run_ablation<F: Scalar>(
    data: &Splits,
    schema: &FeatureSchema,
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    variants: &[Variant],
) -> Result<Vec<AblationRun<F>>> {
    variants
        .iter()
        .map(|&variant| {
            log::info!("ablation: training {}", variant.label());
            let outcome = train::<F>(
                &data.train,
                &data.val,
                schema,
                &variant.apply(base),
                train_cfg,
            )?;
            let report = evaluate(&outcome.model, &data.test, schema, "test", None)?;
            Ok(AblationRun {
                variant,
                outcome,
                report,
            })
        })
        .collect()
}

pub fn ablation_rows<F>(runs: &[AblationRun<F>]) -> Vec<AblationRow> {
    let mut rows = Vec::new();
    for run in runs {
        let variant = run.variant.label().to_string();
        for t in &run.report.targets {
            rows.push(AblationRow {
                variant: variant.clone(),
                target: t.target.clone(),
                mse: t.mse,
                mae: t.mae,
            });
        }
        rows.push(AblationRow {
            variant,
            target: "Avg".into(),
            mse: run.report.avg_mse,
            mae: run.report.avg_mae,
        });
    }
    rows
}

/// Targets as rows, one MSE/MAE column pair per variant.
pub fn ablation_table<F>(runs: &[AblationRun<F>]) -> String {
    let Some(first) = runs.first() else {
        return String::new();
    };
    let mut out = format!("{:<8}", "target");
    for r in runs {
        out.push_str(&format!(
            "  {:>15} {:>8}",
            format!("{} MSE", r.variant.label()),
            "MAE"
        ));
    }
    out.push('\n');
    let n = first.report.targets.len();
    for i in 0..=n {
        let name = if i < n {
            first.report.targets[i].target.as_str()
        } else {
            "Avg"
        };
        out.push_str(&format!("{name:<8}"));
        for r in runs {
            let (mse, mae) = match r.report.targets.get(i) {
                Some(t) => (t.mse, t.mae),
                None => (r.report.avg_mse, r.report.avg_mae),
            };
            out.push_str(&format!("  {mse:>15.4} {mae:>8.4}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    NLayers,
    P2,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::NLayers => "n_layers",
            SweepParam::P2 => "p2",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_layers" => Ok(SweepParam::NLayers),
            "p2" => Ok(SweepParam::P2),
            _ => Err(Error::Config(format!(
                "cannot sweep {s:?} (expected n_layers or p2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub avg_mse: f64,
    pub avg_mae: f64,
}

/// Trains one model per value (same seed) and records test Avg metrics.
pub fn sweep<F: Scalar>(
    param: SweepParam,
    values: &[f64],
    data: &Splits,
    schema: &FeatureSchema,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut mc = model_cfg.clone();
        let mut tc = train_cfg.clone();
        match param {
            SweepParam::NLayers => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::Config(format!(
                        "n_layers must be a positive integer, got {value}"
                    )));
                }
                mc.n_layers = value as usize;
            }
            SweepParam::P2 => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::Config(format!("p2 must lie in [0, 1], got {value}")));
                }
                tc.p2 = value;
                tc.p1 = 1.0 - value;
            }
        }
        log::info!("sweep: {} = {value}", param.name());
        let outcome = train::<F>(&data.train, &data.val, schema, &mc, &tc)?;
        let report = evaluate(&outcome.model, &data.test, schema, "test", None)?;
        rows.push(SweepRow {
            param: param.name().to_string(),
            value,
            avg_mse: report.avg_mse,
            avg_mae: report.avg_mae,
        });
    }
    Ok(rows)
}
