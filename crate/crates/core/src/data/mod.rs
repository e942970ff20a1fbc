//! Feature schema, ingestion, normalization, splitting, windowing and the
//! synthetic promotion dataset.

mod io;
mod normalize;
mod record;
mod schema;
mod split;
mod synth;
mod window;

pub use io::{load_dataset, write_dataset, LoadReport};
pub use normalize::{normalize, ColumnStats, NormStats};
pub use record::{window_count, SeriesRecord};
pub use schema::{
    ColumnGroup, ColumnKind, ColumnSpec, FeatureSchema, Transform, SERIES_ID_COLUMN, TIME_COLUMN,
};
pub use split::{split, SplitMode, Splits};
pub use synth::{
    generate_synthetic, synthetic_schema, PromoSchedule, SeriesMeta, SynthConfig, SyntheticSet,
};
pub use window::{last_window, make_windows, window_at, Window, WindowBatch};

use crate::error::Result;

/// Raw splits plus their normalized counterparts, with statistics fitted on
/// the training split only.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub raw: Splits,
    pub normalized: Splits,
    pub norm: NormStats,
}

pub fn prepare(
    records: &[SeriesRecord],
    schema: &FeatureSchema,
    ratios: [f64; 3],
    mode: SplitMode,
    seed: u64,
) -> Result<PreparedData> {
    let raw = split(records, ratios, mode, seed, schema)?;
    let (train, norm) = normalize(&raw.train, schema)?;
    let normalized = Splits {
        train,
        val: norm.apply(&raw.val, schema)?,
        test: norm.apply(&raw.test, schema)?,
    };
    Ok(PreparedData {
        raw,
        normalized,
        norm,
    })
}
