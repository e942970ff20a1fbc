//! Metrics, ablation and sensitivity experiments, what-if forecasting and
//! CSV export of figure data.

mod experiments;
mod metrics;
pub mod plots;
mod whatif;

pub use experiments::{
    ablation_rows, ablation_table, run_ablation, sweep, AblationRow, AblationRun, SweepParam,
    SweepRow, Variant,
};
pub use metrics::{compute_metrics, evaluate, evaluate_windows, MetricReport, TargetMetrics};
pub use whatif::{what_if, Intervention, Scenario, WhatIfResult, WhatIfRow, WhatIfSpec};

use crate::attention::AttentionMaps;
use crate::data::Window;
use crate::error::Result;
use crate::masking::MaskPlan;
use crate::model::Aliformer;
use crate::scalar::Scalar;

/// Attention maps of naive-plan forward passes over `windows`.
pub fn collect_attention_maps<F: Scalar>(
    model: &Aliformer<F>,
    windows: &[Window<F>],
) -> Result<Vec<AttentionMaps<F>>> {
    let cfg = model.config();
    let plan = MaskPlan::naive(cfg.history_len, cfg.horizon);
    windows
        .iter()
        .map(|w| model.predict_traced(w, &plan).map(|(_, trace)| trace.maps))
        .collect()
}
