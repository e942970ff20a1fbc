//! Encoder layers: vanilla multi-head self-attention and the knowledge-revised
//! variant, each followed by the position-wise feed-forward sublayer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Binding, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    /// Plain scaled dot-product self-attention.
    Vsa,
    /// Scores from the integrated input plus scores from the knowledge input.
    #[default]
    Ali,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Vsa => "vsa",
            LayerKind::Ali => "ali",
        }
    }
}

impl std::str::FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vsa" => Ok(LayerKind::Vsa),
            "ali" => Ok(LayerKind::Ali),
            _ => Err(Error::Config(format!(
                "unknown layer kind {s:?} (expected vsa or ali)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
struct Head {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    knowledge: Option<(ParamId, ParamId)>,
}

/// Parameter handles for one encoder layer.
#[derive(Debug, Clone)]
pub struct AttentionLayer {
    kind: LayerKind,
    d_x: usize,
    head_dim: usize,
    heads: Vec<Head>,
    wo: ParamId,
    bo: ParamId,
    ln1: (ParamId, ParamId),
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    ln2: (ParamId, ParamId),
}

/// Score and weight matrices of one head, each S × S.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadMaps<F> {
    pub att: Tensor<F>,
    pub att_bar: Option<Tensor<F>>,
    pub att_star: Tensor<F>,
    pub weights: Tensor<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerMaps<F> {
    pub heads: Vec<HeadMaps<F>>,
}

/// Maps of every layer from one forward pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttentionMaps<F> {
    pub layers: Vec<LayerMaps<F>>,
}

impl AttentionLayer {
    /// Registers parameters under `prefix`. Projections start at N(0, 0.02²),
    /// biases at zero and norm gains at one.
    #[allow(clippy::too_many_arguments)]
    pub fn new<F: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        prefix: &str,
        kind: LayerKind,
        d_x: usize,
        n_heads: usize,
        d_ff: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n_heads == 0 || !d_x.is_multiple_of(n_heads) {
            return Err(Error::Config(format!(
                "{n_heads} heads do not divide d_x = {d_x}"
            )));
        }
        if d_ff == 0 {
            return Err(Error::Config("d_ff must be positive".into()));
        }
        let d = d_x / n_heads;
        let std = crate::embedding::INIT_STD;
        let heads = (0..n_heads)
            .map(|h| {
                let p = format!("{prefix}.h{h}");
                let wq = store.normal(format!("{p}.wq"), &[d_x, d], std, rng);
                let wk = store.normal(format!("{p}.wk"), &[d_x, d], std, rng);
                let wv = store.normal(format!("{p}.wv"), &[d_x, d], std, rng);
                let knowledge = (kind == LayerKind::Ali).then(|| {
                    (
                        store.normal(format!("{p}.wq_bar"), &[d_x, d], std, rng),
                        store.normal(format!("{p}.wk_bar"), &[d_x, d], std, rng),
                    )
                });
                Head {
                    wq,
                    wk,
                    wv,
                    knowledge,
                }
            })
            .collect();
        Ok(AttentionLayer {
            kind,
            d_x,
            head_dim: d,
            heads,
            wo: store.normal(format!("{prefix}.wo"), &[d_x, d_x], std, rng),
            bo: store.zeros(format!("{prefix}.bo"), &[d_x]),
            ln1: (
                store.ones(format!("{prefix}.ln1.gain"), &[d_x]),
                store.zeros(format!("{prefix}.ln1.bias"), &[d_x]),
            ),
            w1: store.normal(format!("{prefix}.ffn.w1"), &[d_x, d_ff], std, rng),
            b1: store.zeros(format!("{prefix}.ffn.b1"), &[d_ff]),
            w2: store.normal(format!("{prefix}.ffn.w2"), &[d_ff, d_x], std, rng),
            b2: store.zeros(format!("{prefix}.ffn.b2"), &[d_x]),
            ln2: (
                store.ones(format!("{prefix}.ln2.gain"), &[d_x]),
                store.zeros(format!("{prefix}.ln2.bias"), &[d_x]),
            ),
        })
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn n_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    /// Score scale: 1/√d for plain attention, 1/√(2d) when two score
    /// matrices are summed.
    pub fn score_scale(&self) -> f64 {
        match self.kind {
            LayerKind::Vsa => 1.0 / (self.head_dim as f64).sqrt(),
            LayerKind::Ali => 1.0 / (2.0 * self.head_dim as f64).sqrt(),
        }
    }

    /// Records one layer on `tape`. `x_bar` is required for the knowledge
    /// variant and ignored otherwise; it is only read, never updated.
    pub fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        b: &Binding,
        x: Var,
        x_bar: Option<Var>,
        mut record: Option<&mut LayerMaps<F>>,
    ) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 2 || shape[1] != self.d_x {
            return Err(Error::Shape {
                op: "attention",
                lhs: shape,
                rhs: vec![0, self.d_x],
            });
        }
        let x_bar = match (self.kind, x_bar) {
            (LayerKind::Ali, Some(xb)) => {
                if tape.shape(xb) != shape.as_slice() {
                    return Err(Error::Shape {
                        op: "ali attention",
                        lhs: shape,
                        rhs: tape.shape(xb).to_vec(),
                    });
                }
                Some(xb)
            }
            (LayerKind::Ali, None) => {
                return Err(Error::Config(
                    "knowledge attention needs the knowledge embedding".into(),
                ))
            }
            (LayerKind::Vsa, _) => None,
        };
        let scale = F::of(self.score_scale());
        let mut outs = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let q = tape.matmul(x, b.var(head.wq))?;
            let k = tape.matmul(x, b.var(head.wk))?;
            let raw = tape.matmul_bt(q, k)?;
            let att = tape.scale(raw, scale)?;
            let (star, att_bar) = match (head.knowledge, x_bar) {
                (Some((wq, wk)), Some(xb)) => {
                    let qb = tape.matmul(xb, b.var(wq))?;
                    let kb = tape.matmul(xb, b.var(wk))?;
                    let raw = tape.matmul_bt(qb, kb)?;
                    let att_bar = tape.scale(raw, scale)?;
                    (tape.add(att, att_bar)?, Some(att_bar))
                }
                _ => (att, None),
            };
            let weights = tape.softmax_last(star)?;
            let v = tape.matmul(x, b.var(head.wv))?;
            outs.push(tape.matmul(weights, v)?);
            if let Some(maps) = record.as_deref_mut() {
                maps.heads.push(HeadMaps {
                    att: tape.value(att).clone(),
                    att_bar: att_bar.map(|a| tape.value(a).clone()),
                    att_star: tape.value(star).clone(),
                    weights: tape.value(weights).clone(),
                });
            }
        }
        let cat = if outs.len() == 1 {
            outs[0]
        } else {
            tape.concat_cols(&outs)?
        };
        let proj = tape.linear(cat, b.var(self.wo), b.var(self.bo))?;
        let res = tape.add(proj, x)?;
        let h = tape.layer_norm(res, b.var(self.ln1.0), b.var(self.ln1.1))?;
        let f = tape.linear(h, b.var(self.w1), b.var(self.b1))?;
        let f = tape.relu(f)?;
        let f = tape.linear(f, b.var(self.w2), b.var(self.b2))?;
        let res = tape.add(f, h)?;
        tape.layer_norm(res, b.var(self.ln2.0), b.var(self.ln2.1))
    }
}

fn eval_layer<F: Scalar>(
    layer: &AttentionLayer,
    store: &ParamStore<F>,
    x: &Tensor<F>,
    x_bar: Option<&Tensor<F>>,
) -> Result<(Tensor<F>, LayerMaps<F>)> {
    let mut tape = Tape::unchecked();
    let b = store.bind(&mut tape)?;
    let xv = tape.constant(x.clone())?;
    let xb = x_bar.map(|t| tape.constant(t.clone())).transpose()?;
    let mut maps = LayerMaps { heads: Vec::new() };
    let out = layer.forward(&mut tape, &b, xv, xb, Some(&mut maps))?;
    Ok((tape.value(out).clone(), maps))
}

/// Plain self-attention layer evaluated outside training.
pub fn vsa_forward<F: Scalar>(
    layer: &AttentionLayer,
    store: &ParamStore<F>,
    x: &Tensor<F>,
) -> Result<(Tensor<F>, LayerMaps<F>)> {
    if layer.kind != LayerKind::Vsa {
        return Err(Error::Config(
            "vsa_forward called on a knowledge layer".into(),
        ));
    }
    eval_layer(layer, store, x, None)
}

/// Knowledge-revised layer evaluated outside training.
pub fn ali_forward<F: Scalar>(
    layer: &AttentionLayer,
    store: &ParamStore<F>,
    x: &Tensor<F>,
    x_bar: &Tensor<F>,
) -> Result<(Tensor<F>, LayerMaps<F>)> {
    if layer.kind != LayerKind::Ali {
        return Err(Error::Config(
            "ali_forward called on a plain attention layer".into(),
        ));
    }
    eval_layer(layer, store, x, Some(x_bar))
}

/// One histogram bin of a score branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub layer: usize,
    pub head: usize,
    pub branch: String,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionRow {
    pub layer: usize,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttentionStatsReport {
    pub histograms: Vec<HistogramRow>,
    pub proportions: Vec<ProportionRow>,
}

/// Score histograms for both branches of every head, and per layer the
/// fraction of entries with `Att̄(i,j) > Att(i,j)`. A missing knowledge branch
/// counts as all zeros. Bins span `range`, or the observed min..max when
/// `None`; values outside the range are clamped into the edge bins.
pub fn extract_attention_stats<F: Scalar>(
    maps: &[AttentionMaps<F>],
    bins: usize,
    range: Option<(f64, f64)>,
) -> Result<AttentionStatsReport> {
    if maps.is_empty() || maps.iter().all(|m| m.layers.is_empty()) {
        return Err(Error::RecordingDisabled);
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let n_layers = maps[0].layers.len();
    if maps.iter().any(|m| m.layers.len() != n_layers) {
        return Err(Error::Config(
            "attention maps disagree on layer count".into(),
        ));
    }
    let (lo, hi) = match range {
        Some((lo, hi)) if lo < hi && lo.is_finite() && hi.is_finite() => (lo, hi),
        Some((lo, hi)) => return Err(Error::Config(format!("invalid histogram range {lo}..{hi}"))),
        None => observed_range(maps),
    };
    let width = (hi - lo) / bins as f64;
    let bin_of = |v: f64| (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);

    let mut report = AttentionStatsReport::default();
    for layer in 0..n_layers {
        let n_heads = maps[0].layers[layer].heads.len();
        let mut above = 0u64;
        let mut total = 0u64;
        for head in 0..n_heads {
            let mut att = vec![0u64; bins];
            let mut bar = vec![0u64; bins];
            let mut has_bar = false;
            for m in maps {
                let h = m.layers[layer]
                    .heads
                    .get(head)
                    .ok_or_else(|| Error::Config("attention maps disagree on head count".into()))?;
                for (i, a) in h.att.data().iter().enumerate() {
                    let a = a.to_f64_lossy();
                    att[bin_of(a)] += 1;
                    let ab = match &h.att_bar {
                        Some(t) => {
                            has_bar = true;
                            let v = t.data()[i].to_f64_lossy();
                            bar[bin_of(v)] += 1;
                            v
                        }
                        None => 0.0,
                    };
                    above += u64::from(ab > a);
                    total += 1;
                }
            }
            let mut push = |branch: &str, counts: &[u64]| {
                for (k, &count) in counts.iter().enumerate() {
                    report.histograms.push(HistogramRow {
                        layer,
                        head,
                        branch: branch.to_string(),
                        bin_lo: lo + k as f64 * width,
                        bin_hi: if k + 1 == bins {
                            hi
                        } else {
                            lo + (k + 1) as f64 * width
                        },
                        count,
                    });
                }
            };
            push("att", &att);
            if has_bar {
                push("att_bar", &bar);
            }
        }
        report.proportions.push(ProportionRow {
            layer,
            proportion: if total == 0 {
                0.0
            } else {
                above as f64 / total as f64
            },
        });
    }
    Ok(report)
}

fn observed_range<F: Scalar>(maps: &[AttentionMaps<F>]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let heads = maps.iter().flat_map(|m| &m.layers).flat_map(|l| &l.heads);
    for h in heads {
        for t in std::iter::once(&h.att).chain(h.att_bar.as_ref()) {
            for v in t.data() {
                let v = v.to_f64_lossy();
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if !(lo < hi) {
        (lo - 0.5, lo + 0.5)
    } else {
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{grad_check, GradCheckConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(
        kind: LayerKind,
        d_x: usize,
        heads: usize,
        seed: u64,
    ) -> (ParamStore<f64>, AttentionLayer) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let l = AttentionLayer::new(&mut store, "l", kind, d_x, heads, 4 * d_x, &mut rng).unwrap();
        // larger weights so attention is far from uniform
        for t in store.tensors_mut() {
            if t.rank() == 2 {
                *t = t.map(|v| v * 25.0);
            }
        }
        (store, l)
    }

    fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
        Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn heads_must_divide_width() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(AttentionLayer::new(&mut store, "l", LayerKind::Ali, 6, 4, 8, &mut rng).is_err());
    }

    #[test]
    fn knowledge_weights_only_for_ali() {
        let (s, _) = layer(LayerKind::Vsa, 4, 2, 1);
        assert!(s.by_name("l.h0.wq_bar").is_none());
        let (s, _) = layer(LayerKind::Ali, 4, 2, 1);
        assert_eq!(s.by_name("l.h1.wk_bar").unwrap().shape(), &[4, 2]);
    }

    #[test]
    fn single_token_attends_to_itself() {
        let (s, l) = layer(LayerKind::Vsa, 4, 1, 2);
        let (_, maps) = vsa_forward(&l, &s, &randn(&[1, 4], 3)).unwrap();
        assert_eq!(maps.heads[0].weights.data(), &[1.0]);
    }

    #[test]
    fn identical_rows_give_uniform_weights() {
        let (s, l) = layer(LayerKind::Vsa, 4, 2, 2);
        let row = randn(&[1, 4], 4);
        let x = Tensor::new(&[3, 4], row.data().repeat(3)).unwrap();
        let (_, maps) = vsa_forward(&l, &s, &x).unwrap();
        for h in &maps.heads {
            for &w in h.weights.data() {
                assert!((w - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_knowledge_query_reduces_to_rescaled_vsa() {
        let (mut s, l) = layer(LayerKind::Ali, 4, 2, 5);
        for h in 0..2 {
            s.set(&format!("l.h{h}.wq_bar"), Tensor::zeros(&[4, 2]))
                .unwrap();
        }
        let x = randn(&[3, 4], 6);
        let (out, maps) = ali_forward(&l, &s, &x, &randn(&[3, 4], 7)).unwrap();
        assert!(maps.heads.iter().all(|h| h
            .att_bar
            .as_ref()
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0)));

        // the same weights in a plain layer differ only by the score scale
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut plain_store = ParamStore::new();
        let plain =
            AttentionLayer::new(&mut plain_store, "l", LayerKind::Vsa, 4, 2, 16, &mut rng).unwrap();
        for (name, t) in s.iter() {
            if plain_store.by_name(name).is_some() {
                let v = if name.ends_with(".wq") {
                    t.map(|v| v / 2f64.sqrt())
                } else {
                    t.clone()
                };
                plain_store.set(name, v).unwrap();
            }
        }
        let (expect, _) = vsa_forward(&plain, &plain_store, &x).unwrap();
        for (a, b) in out.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn maps_are_consistent() {
        let (s, l) = layer(LayerKind::Ali, 8, 2, 8);
        let (_, maps) = ali_forward(&l, &s, &randn(&[5, 8], 9), &randn(&[5, 8], 10)).unwrap();
        for h in &maps.heads {
            let bar = h.att_bar.as_ref().unwrap();
            for i in 0..h.att.len() {
                assert_eq!(h.att_star.data()[i], h.att.data()[i] + bar.data()[i]);
            }
            for r in 0..5 {
                let sum: f64 = h.weights.row(r).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn knowledge_scores_ignore_integrated_input() {
        let (s, l) = layer(LayerKind::Ali, 4, 2, 11);
        let xb = randn(&[4, 4], 12);
        let (_, a) = ali_forward(&l, &s, &randn(&[4, 4], 13), &xb).unwrap();
        let (_, b) = ali_forward(&l, &s, &randn(&[4, 4], 14), &xb).unwrap();
        for (ha, hb) in a.heads.iter().zip(&b.heads) {
            assert_eq!(ha.att_bar, hb.att_bar);
            assert_ne!(ha.att, hb.att);
        }
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let (s, l) = layer(LayerKind::Ali, 4, 1, 1);
        assert!(vsa_forward(&l, &s, &randn(&[2, 4], 1)).is_err());
        let (s, l) = layer(LayerKind::Vsa, 4, 1, 1);
        assert!(ali_forward(&l, &s, &randn(&[2, 4], 1), &randn(&[2, 4], 2)).is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let (s, l) = layer(LayerKind::Ali, 4, 1, 1);
        assert!(ali_forward(&l, &s, &randn(&[2, 4], 1), &randn(&[3, 4], 2)).is_err());
        assert!(ali_forward(&l, &s, &randn(&[2, 3], 1), &randn(&[2, 3], 2)).is_err());
    }

    #[test]
    fn ali_layer_gradients() {
        let (s, l) = layer(LayerKind::Ali, 4, 2, 21);
        let mut inputs: Vec<(Tensor<f64>, bool)> =
            s.tensors().iter().map(|t| (t.clone(), true)).collect();
        inputs.push((randn(&[3, 4], 22), true));
        inputs.push((randn(&[3, 4], 23), true));
        let names = s.names().to_vec();
        let probe = randn(&[3, 4], 24);
        let report = grad_check(
            |tape, vars| {
                let n = names.len();
                let b = Binding::from_vars(vars[..n].to_vec());
                let y = l.forward(tape, &b, vars[n], Some(vars[n + 1]), None)?;
                let p = tape.constant(probe.clone())?;
                let y = tape.mul(y, p)?;
                tape.sum(y)
            },
            &inputs,
            GradCheckConfig::default(),
        );
        assert!(report.pass, "{report:?}");
    }

    fn maps_from(att: Vec<f64>, bar: Option<Vec<f64>>) -> Vec<AttentionMaps<f64>> {
        let t = |v: Vec<f64>| Tensor::new(&[2, 2], v).unwrap();
        let a = t(att);
        vec![AttentionMaps {
            layers: vec![LayerMaps {
                heads: vec![HeadMaps {
                    att_star: a.clone(),
                    weights: a.clone(),
                    att_bar: bar.map(t),
                    att: a,
                }],
            }],
        }]
    }

    #[test]
    fn proportion_trivial_cases() {
        let r = extract_attention_stats(
            &maps_from(vec![1.0, 2.0, 0.5, 3.0], Some(vec![0.0; 4])),
            4,
            None,
        )
        .unwrap();
        assert_eq!(r.proportions[0].proportion, 0.0);
        let r = extract_attention_stats(
            &maps_from(vec![1.0, 2.0, 0.5, 3.0], Some(vec![2.0, 3.0, 1.5, 4.0])),
            4,
            None,
        )
        .unwrap();
        assert_eq!(r.proportions[0].proportion, 1.0);
    }

    #[test]
    fn histogram_counts_every_entry() {
        let r = extract_attention_stats(
            &maps_from(vec![0.0, 1.0, 2.0, 3.0], Some(vec![3.0; 4])),
            3,
            None,
        )
        .unwrap();
        let att: Vec<u64> = r
            .histograms
            .iter()
            .filter(|h| h.branch == "att")
            .map(|h| h.count)
            .collect();
        assert_eq!(att, vec![1, 1, 2]);
        let bar: Vec<u64> = r
            .histograms
            .iter()
            .filter(|h| h.branch == "att_bar")
            .map(|h| h.count)
            .collect();
        assert_eq!(bar, vec![0, 0, 4]);
        assert_eq!(r.histograms[0].bin_lo, 0.0);
        assert_eq!(r.histograms[2].bin_hi, 3.0);
    }

    #[test]
    fn missing_maps_is_recording_disabled() {
        assert!(matches!(
            extract_attention_stats::<f64>(&[], 4, None),
            Err(Error::RecordingDisabled)
        ));
    }
}
