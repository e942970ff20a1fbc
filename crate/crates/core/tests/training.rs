use aliformer::checkpoint::Checkpoint;
use aliformer::data::{generate_synthetic, make_windows, normalize, SynthConfig, Window};
use aliformer::model::{Forecaster, ModelConfig};
use aliformer::train::{train, TrainConfig};

fn data(
    seed: u64,
    n: usize,
) -> (
    Vec<aliformer::data::SeriesRecord>,
    aliformer::data::FeatureSchema,
    aliformer::data::NormStats,
) {
    let set = generate_synthetic(&SynthConfig {
        n_series: n,
        history_len: 16,
        horizon: 4,
        extra_len: 4,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let (records, norm) = normalize(&set.records, &set.schema).unwrap();
    (records, set.schema, norm)
}

#[test]
fn one_epoch_smoke_run_gives_loadable_checkpoint() {
    let (records, schema, norm) = data(1, 10);
    let cfg = ModelConfig::with_size(&schema, 8, 1, 2);
    let tc = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let out = train::<f64>(&records[..8], &records[8..], &schema, &cfg, &tc).unwrap();
    assert!(out.history[0].train_loss.is_finite());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("smoke.ckpt");
    let ck = Checkpoint::from_outcome(out, Some(norm));
    ck.save(&path).unwrap();
    let back = Checkpoint::<f64>::load_for_schema(&path, &schema).unwrap();
    let w: Vec<Window<f64>> = make_windows(&records, &schema, 1).unwrap();
    assert_eq!(
        back.model.forecast(&w[0]).unwrap(),
        ck.model.forecast(&w[0]).unwrap()
    );
}

#[test]
fn training_loss_decreases() {
    let (records, schema, _) = data(2, 40);
    let cfg = ModelConfig::with_size(&schema, 16, 1, 2);
    let mut drops: Vec<f64> = (0..3)
        .map(|seed| {
            let tc = TrainConfig {
                epochs: 5,
                lr: 1e-3,
                batch_size: 16,
                seed,
                ..TrainConfig::default()
            };
            let h = train::<f64>(&records, &[], &schema, &cfg, &tc)
                .unwrap()
                .history;
            h[0].train_loss - h[4].train_loss
        })
        .collect();
    drops.sort_by(f64::total_cmp);
    assert!(drops[1] > 0.0, "median drop {}", drops[1]);
}

#[test]
fn identical_seeds_give_identical_checkpoints() {
    let (records, schema, norm) = data(3, 12);
    let cfg = ModelConfig::with_size(&schema, 8, 2, 2);
    let tc = TrainConfig {
        epochs: 2,
        seed: 5,
        ..TrainConfig::default()
    };
    let bytes = || {
        let out = train::<f64>(&records[..9], &records[9..], &schema, &cfg, &tc).unwrap();
        Checkpoint::from_outcome(out, Some(norm.clone()))
            .to_bytes()
            .unwrap()
    };
    assert_eq!(bytes(), bytes());
}
