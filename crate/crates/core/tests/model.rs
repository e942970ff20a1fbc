mod common;

use aliformer::attention::LayerKind;
use aliformer::data::{
    window_at, ColumnGroup, ColumnSpec, FeatureSchema, SeriesRecord, Transform, Window,
};
use aliformer::masking::MaskPlan;
use aliformer::model::{Aliformer, ModelConfig};
use aliformer::Tensor;
use common::{max_abs_diff, model_oracle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn schema() -> FeatureSchema {
    FeatureSchema::new(
        8,
        2,
        vec![
            ColumnSpec::target("ord", Transform::None),
            ColumnSpec::numeric("uv", ColumnGroup::Statistic),
            ColumnSpec::target("gmv", Transform::None),
            ColumnSpec::numeric("price", ColumnGroup::Knowledge),
            ColumnSpec::id("promo", 2),
            ColumnSpec::id("dow", 7),
        ],
    )
    .unwrap()
}

fn window(seed: u64) -> Window<f64> {
    let r = Tensor::<f64>::randn(&[10, 4], 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
    let rec = SeriesRecord {
        series_id: "x".into(),
        start: 0,
        statistics: (0..8)
            .map(|t| vec![r.get(&[t, 0]), r.get(&[t, 1]), r.get(&[t, 2])])
            .collect(),
        knowledge: (0..10)
            .map(|t| vec![r.get(&[t, 3]), (t % 2) as f64, (t % 7) as f64])
            .collect(),
        targets: (0..10)
            .map(|t| vec![r.get(&[t, 0]), r.get(&[t, 2])])
            .collect(),
    };
    window_at(&rec, &schema(), 0).unwrap()
}

fn model(kind: LayerKind, future: bool, layers: usize, heads: usize) -> Aliformer<f64> {
    let mut cfg = ModelConfig::with_size(&schema(), 4, layers, heads);
    cfg.layer_kind = kind;
    cfg.use_future_knowledge = future;
    let mut m = Aliformer::new(cfg, schema(), 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for t in m.params_mut().tensors_mut() {
        *t = Tensor::randn(t.shape(), 0.5, &mut rng);
    }
    m
}

#[test]
fn composed_oracle_matches_forward() {
    for (kind, future) in [
        (LayerKind::Ali, true),
        (LayerKind::Ali, false),
        (LayerKind::Vsa, true),
    ] {
        for (layers, heads) in [(1, 1), (2, 2)] {
            let m = model(kind, future, layers, heads);
            for plan in [MaskPlan::naive(8, 2), MaskPlan::span(8, 2, 3, 2).unwrap()] {
                let w = window(layers as u64);
                let y = m.predict(&w, &plan).unwrap();
                let o = model_oracle(
                    m.params(),
                    &schema(),
                    layers,
                    heads,
                    kind == LayerKind::Ali,
                    !future,
                    &w,
                    &plan,
                );
                let err = max_abs_diff(&o, &y);
                assert!(
                    err < 1e-9,
                    "{kind:?} future={future} layers={layers}: {err:e}"
                );
            }
        }
    }
}

#[test]
fn forward_batch_matches_single_predictions() {
    let m = model(LayerKind::Ali, true, 1, 2);
    let ws = [window(1), window(2)];
    let batch = aliformer::data::WindowBatch::new(ws.iter().collect()).unwrap();
    let plans = [MaskPlan::naive(8, 2), MaskPlan::span(8, 2, 1, 2).unwrap()];
    let out = m.forward(&batch, &plans).unwrap();
    assert_eq!(out[0], m.predict(&ws[0], &plans[0]).unwrap());
    assert_eq!(out[1], m.predict(&ws[1], &plans[1]).unwrap());
    assert!(m.forward(&batch, &plans[..1]).is_err());
}

#[test]
fn single_precision_tracks_double() {
    let m = model(LayerKind::Ali, true, 2, 2);
    let mut m32 = Aliformer::<f32>::new(m.config().clone(), schema(), 0).unwrap();
    for (name, t) in m.params().iter() {
        m32.params_mut().set(name, t.cast()).unwrap();
    }
    let w = window(5);
    let w32 = Window::<f32> {
        series_id: w.series_id.clone(),
        offset: w.offset,
        history_len: w.history_len,
        horizon: w.horizon,
        statistics: w.statistics.cast(),
        knowledge_numeric: w.knowledge_numeric.as_ref().map(|k| k.cast()),
        knowledge_ids: w.knowledge_ids.clone(),
        targets: w.targets.cast(),
    };
    let plan = MaskPlan::naive(8, 2);
    let a = m.predict(&w, &plan).unwrap();
    let b = m32.predict(&w32, &plan).unwrap();
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - f64::from(*y)).abs() < 1e-4);
    }
}
