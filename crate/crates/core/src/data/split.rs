use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::record::SeriesRecord;
use super::schema::FeatureSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Whole series are assigned to one split.
    #[default]
    ById,
    /// Every series is cut into contiguous train/val/test segments.
    Chronological,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<SeriesRecord>,
    pub val: Vec<SeriesRecord>,
    pub test: Vec<SeriesRecord>,
}

pub fn split(
    records: &[SeriesRecord],
    ratios: [f64; 3],
    mode: SplitMode,
    seed: u64,
    schema: &FeatureSchema,
) -> Result<Splits> {
    if records.is_empty() {
        return Err(Error::Data("cannot split an empty dataset".into()));
    }
    if ratios.iter().any(|&r| r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios {ratios:?} must be >= 0 and sum to 1"
        )));
    }
    match mode {
        SplitMode::ById => Ok(by_id(records, ratios, seed)),
        SplitMode::Chronological => Ok(chronological(records, ratios, schema)),
    }
}

fn by_id(records: &[SeriesRecord], ratios: [f64; 3], seed: u64) -> Splits {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].series_id.cmp(&records[b].series_id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n = records.len();
    let n_train = ((ratios[0] * n as f64).round() as usize).min(n);
    let n_val = ((ratios[1] * n as f64).round() as usize).min(n - n_train);
    let pick = |ix: &[usize]| {
        let mut v: Vec<SeriesRecord> = ix.iter().map(|&i| records[i].clone()).collect();
        v.sort_by(|a, b| a.series_id.cmp(&b.series_id));
        v
    };
    Splits {
        train: pick(&order[..n_train]),
        val: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    }
}

fn chronological(records: &[SeriesRecord], ratios: [f64; 3], schema: &FeatureSchema) -> Splits {
    let l = schema.horizon;
    let mut out = Splits::default();
    let mut dropped = 0usize;
    for r in records {
        let n = r.len();
        let c1 = (ratios[0] * n as f64).round() as usize;
        let c2 = (((ratios[0] + ratios[1]) * n as f64).round() as usize)
            .max(c1)
            .min(n);
        for (k, (a, b)) in [(0, c1), (c1, c2), (c2, n)].into_iter().enumerate() {
            if b - a < schema.window_len() {
                dropped += usize::from(b > a);
                continue;
            }
            let seg = SeriesRecord {
                series_id: r.series_id.clone(),
                start: r.start + a as i64,
                statistics: r.statistics[a..b - l].to_vec(),
                knowledge: r.knowledge[a..b].to_vec(),
                targets: r.targets[a..b.min(r.targets.len())].to_vec(),
            };
            match k {
                0 => out.train.push(seg),
                1 => out.val.push(seg),
                _ => out.test.push(seg),
            }
        }
    }
    if dropped > 0 {
        log::warn!("chronological split dropped {dropped} segments shorter than T+L");
    }
    out
}
