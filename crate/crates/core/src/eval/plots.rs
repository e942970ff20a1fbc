//! Plot-ready CSV files. Column order follows the struct field order and
//! floats are written in shortest round-trip form, so reruns are
//! byte-identical and reading a file back is lossless.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::attention::{AttentionStatsReport, HistogramRow, ProportionRow};
use crate::error::Result;

use super::experiments::{AblationRow, SweepRow};
use super::whatif::WhatIfRow;

pub const FIG5_SENSITIVITY: &str = "fig5_sensitivity.csv";
pub const FIG6_WHATIF: &str = "fig6_whatif.csv";
pub const FIG7_HIST: &str = "fig7_hist.csv";
pub const FIG7_PROPORTION: &str = "fig7_proportion.csv";
pub const TABLE2_ABLATION: &str = "table2_ablation.csv";

pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

fn target(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.join(name))
}

/// Writes `fig7_hist.csv` and `fig7_proportion.csv`.
pub fn write_attention_stats(
    report: &AttentionStatsReport,
    dir: impl AsRef<Path>,
) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    let hist = target(dir, FIG7_HIST)?;
    let prop = target(dir, FIG7_PROPORTION)?;
    write_csv(&hist, &report.histograms)?;
    write_csv(&prop, &report.proportions)?;
    Ok((hist, prop))
}

pub fn read_attention_stats(dir: impl AsRef<Path>) -> Result<AttentionStatsReport> {
    let dir = dir.as_ref();
    Ok(AttentionStatsReport {
        histograms: read_csv::<HistogramRow>(dir.join(FIG7_HIST))?,
        proportions: read_csv::<ProportionRow>(dir.join(FIG7_PROPORTION))?,
    })
}

pub fn write_sweep(rows: &[SweepRow], dir: impl AsRef<Path>) -> Result<PathBuf> {
    let path = target(dir.as_ref(), FIG5_SENSITIVITY)?;
    write_csv(&path, rows)?;
    Ok(path)
}

pub fn write_whatif(rows: &[WhatIfRow], dir: impl AsRef<Path>) -> Result<PathBuf> {
    let path = target(dir.as_ref(), FIG6_WHATIF)?;
    write_csv(&path, rows)?;
    Ok(path)
}

pub fn write_ablation(rows: &[AblationRow], dir: impl AsRef<Path>) -> Result<PathBuf> {
    let path = target(dir.as_ref(), TABLE2_ABLATION)?;
    write_csv(&path, rows)?;
    Ok(path)
}
