//! Promotion-driven synthetic sales generator.
//!
//! Baseline sales are trend + weekly seasonality + noise. During an activity
//! the price drops and sales are lifted by `1 + alpha * (1 - price / ref_price)`;
//! on the `pre_days` before an activity sales are damped by `1 - beta`. The
//! lift is a pure function of the knowledge columns, so the horizon is only
//! predictable from future-known knowledge.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::record::SeriesRecord;
use super::schema::{ColumnGroup, ColumnSpec, FeatureSchema, Transform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PromoSchedule {
    None,
    /// One activity on days `start..=end` (1-based) for every series.
    Fixed {
        start: usize,
        end: usize,
        discount: f64,
    },
    /// Activities start on a free day with probability `rate`.
    Random {
        rate: f64,
        min_len: usize,
        max_len: usize,
        min_discount: f64,
        max_discount: f64,
    },
}

impl Default for PromoSchedule {
    fn default() -> Self {
        PromoSchedule::Random {
            rate: 0.08,
            min_len: 2,
            max_len: 4,
            min_discount: 0.5,
            max_discount: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_series: usize,
    pub history_len: usize,
    pub horizon: usize,
    /// Days beyond T + L per series (more windows per series).
    pub extra_len: usize,
    pub schedule: PromoSchedule,
    pub seed: u64,
    /// Promotion lift per unit of relative discount.
    pub alpha: f64,
    /// Per-series elasticity spread: alpha_i = alpha * (1 + spread * U(-1, 1)).
    pub alpha_spread: f64,
    /// Pre-activity damping.
    pub beta: f64,
    pub pre_days: usize,
    /// Noise standard deviation relative to the series level.
    pub noise_std: f64,
    /// Weekly amplitude relative to the series level.
    pub season_amp: f64,
    /// Relative level change over the whole series.
    pub max_trend: f64,
    pub level_range: (f64, f64),
    pub ref_price_range: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_series: 100,
            history_len: 60,
            horizon: 10,
            extra_len: 0,
            schedule: PromoSchedule::default(),
            seed: 0,
            alpha: 3.0,
            alpha_spread: 0.0,
            beta: 0.4,
            pre_days: 3,
            noise_std: 0.05,
            season_amp: 0.2,
            max_trend: 0.3,
            level_range: (20.0, 200.0),
            ref_price_range: (40.0, 60.0),
        }
    }
}

/// Per-series ground truth kept alongside the generated record.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMeta {
    pub ref_price: f64,
    pub alpha: f64,
    /// Whether each day is inside an activity.
    pub in_activity: Vec<bool>,
    /// Noise-free, lift-free baseline.
    pub baseline: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub schema: FeatureSchema,
    pub records: Vec<SeriesRecord>,
    pub meta: Vec<SeriesMeta>,
}

/// Schema of generated data: targets `ord`, `gmv` (log1p); knowledge `price`,
/// `in_activity` (id, 2) and `dow` (id, 7).
pub fn synthetic_schema(history_len: usize, horizon: usize) -> Result<FeatureSchema> {
    FeatureSchema::new(
        history_len,
        horizon,
        vec![
            ColumnSpec::target("ord", Transform::Log1p),
            ColumnSpec::target("gmv", Transform::Log1p),
            ColumnSpec::numeric("price", ColumnGroup::Knowledge),
            ColumnSpec::id("in_activity", 2),
            ColumnSpec::id("dow", 7),
        ],
    )
}

const STREAM_PARAMS: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_SCHEDULE: u64 = 2;

fn stream(seed: u64, series: usize, kind: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(series as u64 * 4 + kind);
    rng
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticSet> {
    let schema = synthetic_schema(cfg.history_len, cfg.horizon)?;
    let n = cfg.history_len + cfg.horizon + cfg.extra_len;
    match &cfg.schedule {
        PromoSchedule::Fixed {
            start,
            end,
            discount,
        } => {
            if *start < 1 || start > end || *end > n || !(*discount > 0.0 && *discount <= 1.0) {
                return Err(Error::Config(format!(
                    "promotion days {start}..={end} (discount {discount}) outside 1..={n}"
                )));
            }
        }
        PromoSchedule::Random {
            rate,
            min_len,
            max_len,
            min_discount,
            max_discount,
        } => {
            if !(0.0..=1.0).contains(rate)
                || *min_len < 1
                || min_len > max_len
                || !(*min_discount > 0.0 && min_discount <= max_discount && *max_discount <= 1.0)
            {
                return Err(Error::Config("invalid random promotion schedule".into()));
            }
        }
        PromoSchedule::None => {}
    }
    if !(0.0..1.0).contains(&cfg.beta) || cfg.season_amp >= 0.95 {
        return Err(Error::Config(
            "beta must be in [0, 1) and season_amp < 0.95".into(),
        ));
    }

    let mut records = Vec::with_capacity(cfg.n_series);
    let mut meta = Vec::with_capacity(cfg.n_series);
    for i in 0..cfg.n_series {
        let (rec, m) = generate_series(cfg, i, n);
        records.push(rec);
        meta.push(m);
    }
    Ok(SyntheticSet {
        schema,
        records,
        meta,
    })
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn generate_series(cfg: &SynthConfig, i: usize, n: usize) -> (SeriesRecord, SeriesMeta) {
    let mut prng = stream(cfg.seed, i, STREAM_PARAMS);
    let level = uniform(&mut prng, cfg.level_range);
    let trend = cfg.max_trend * (2.0 * prng.random::<f64>() - 1.0);
    let dow0 = prng.random_range(0..7usize);
    let ref_price = uniform(&mut prng, cfg.ref_price_range);
    let alpha = cfg.alpha * (1.0 + cfg.alpha_spread * (2.0 * prng.random::<f64>() - 1.0));

    let mut nrng = stream(cfg.seed, i, STREAM_NOISE);
    let noise: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut nrng);
            z
        })
        .collect();

    // discount factor per day (1.0 = regular price)
    let mut discount = vec![1.0f64; n];
    match &cfg.schedule {
        PromoSchedule::None => {}
        PromoSchedule::Fixed {
            start,
            end,
            discount: d,
        } => {
            for day in discount.iter_mut().take(*end).skip(start - 1) {
                *day = *d;
            }
        }
        PromoSchedule::Random {
            rate,
            min_len,
            max_len,
            min_discount,
            max_discount,
        } => {
            let mut srng = stream(cfg.seed, i, STREAM_SCHEDULE);
            let mut day = 0;
            while day < n {
                if srng.random::<f64>() < *rate {
                    let len = srng.random_range(*min_len..=*max_len);
                    let d = uniform(&mut srng, (*min_discount, *max_discount));
                    for x in discount.iter_mut().skip(day).take(len) {
                        *x = d;
                    }
                    day += len + cfg.pre_days + 1;
                } else {
                    day += 1;
                }
            }
        }
    }
    let in_activity: Vec<bool> = discount.iter().map(|&d| d < 1.0).collect();
    let pre: Vec<bool> = (0..n)
        .map(|t| !in_activity[t] && (1..=cfg.pre_days).any(|k| t + k < n && in_activity[t + k]))
        .collect();

    let mut baseline = Vec::with_capacity(n);
    let mut statistics = Vec::with_capacity(n - cfg.horizon);
    let mut knowledge = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for t in 0..n {
        let dow = (dow0 + t) % 7;
        let clean = level * (1.0 + trend * t as f64 / n as f64)
            + cfg.season_amp * level * (2.0 * PI * dow as f64 / 7.0).sin();
        baseline.push(clean);
        let base = (clean + cfg.noise_std * level * noise[t]).max(0.05 * level);
        let price = ref_price * discount[t];
        let sales = if in_activity[t] {
            base * (1.0 + alpha * (1.0 - price / ref_price))
        } else if pre[t] {
            base * (1.0 - cfg.beta)
        } else {
            base
        };
        let row = vec![sales, sales * price];
        if t < n - cfg.horizon {
            statistics.push(row.clone());
        }
        targets.push(row);
        knowledge.push(vec![price, f64::from(u8::from(in_activity[t])), dow as f64]);
    }
    (
        SeriesRecord {
            series_id: format!("syn{i:05}"),
            start: 0,
            statistics,
            knowledge,
            targets,
        },
        SeriesMeta {
            ref_price,
            alpha,
            in_activity,
            baseline,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(schedule: PromoSchedule) -> SynthConfig {
        SynthConfig {
            n_series: 4,
            history_len: 20,
            horizon: 10,
            schedule,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn promotion_lifts_and_pre_days_dip() {
        let t = 20;
        let promo = generate_synthetic(&cfg(PromoSchedule::Fixed {
            start: t + 5,
            end: t + 8,
            discount: 0.8,
        }))
        .unwrap();
        let none = generate_synthetic(&cfg(PromoSchedule::None)).unwrap();
        for (a, b) in promo.records.iter().zip(&none.records) {
            for day in t + 5..=t + 8 {
                assert!(a.targets[day - 1][0] > b.targets[day - 1][0]);
            }
            for day in t + 2..=t + 4 {
                assert!(a.targets[day - 1][0] < b.targets[day - 1][0]);
            }
        }
    }

    #[test]
    fn noise_free_series_is_trend_plus_season() {
        let mut c = cfg(PromoSchedule::None);
        c.noise_std = 0.0;
        let s = generate_synthetic(&c).unwrap();
        for (r, m) in s.records.iter().zip(&s.meta) {
            for (row, b) in r.targets.iter().zip(&m.baseline) {
                assert_eq!(row[0], *b);
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate_synthetic(&cfg(PromoSchedule::default())).unwrap();
        let b = generate_synthetic(&cfg(PromoSchedule::default())).unwrap();
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn altered_schedule_changes_only_scheduled_days() {
        let a = generate_synthetic(&cfg(PromoSchedule::Fixed {
            start: 10,
            end: 12,
            discount: 0.7,
        }))
        .unwrap();
        let b = generate_synthetic(&cfg(PromoSchedule::Fixed {
            start: 20,
            end: 21,
            discount: 0.6,
        }))
        .unwrap();
        // affected 1-based days: 7..=12 for a, 17..=21 for b
        let touched = |d: usize| (7..=12).contains(&d) || (17..=21).contains(&d);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            for (i, (x, y)) in ra.targets.iter().zip(&rb.targets).enumerate() {
                if touched(i + 1) {
                    assert_ne!(x, y);
                } else {
                    assert_eq!(x, y);
                }
            }
        }
    }

    #[test]
    fn records_satisfy_schema() {
        let s = generate_synthetic(&cfg(PromoSchedule::default())).unwrap();
        for r in &s.records {
            r.validate(&s.schema).unwrap();
            assert_eq!(r.knowledge.len(), r.statistics.len() + 10);
        }
    }

    #[test]
    fn out_of_range_schedule_rejected() {
        assert!(generate_synthetic(&cfg(PromoSchedule::Fixed {
            start: 0,
            end: 3,
            discount: 0.8
        }))
        .is_err());
        assert!(generate_synthetic(&cfg(PromoSchedule::Fixed {
            start: 29,
            end: 31,
            discount: 0.8
        }))
        .is_err());
    }
}
