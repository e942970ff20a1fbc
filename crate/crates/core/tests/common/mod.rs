//! Direct-equation reference implementations used as test oracles. Everything
//! here is written with plain nested loops over `Vec<Vec<f64>>`, independent
//! of the library's tensor kernels and tape.

#![allow(dead_code, clippy::needless_range_loop)]

use aliformer::data::{FeatureSchema, Window};
use aliformer::masking::MaskPlan;
use aliformer::params::ParamStore;
use aliformer::Tensor;

pub type Mat = Vec<Vec<f64>>;

const EPS: f64 = 1e-5;

pub fn mat(t: &Tensor<f64>) -> Mat {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    (0..r)
        .map(|i| (0..c).map(|j| t.get(&[i, j])).collect())
        .collect()
}

pub fn vec1(t: &Tensor<f64>) -> Vec<f64> {
    t.data().to_vec()
}

fn p<'a>(store: &'a ParamStore<f64>, name: &str) -> &'a Tensor<f64> {
    store
        .by_name(name)
        .unwrap_or_else(|| panic!("missing parameter {name}"))
}

fn mm(a: &Mat, b: &Mat) -> Mat {
    let n = b[0].len();
    a.iter()
        .map(|row| {
            (0..n)
                .map(|j| row.iter().enumerate().map(|(k, &v)| v * b[k][j]).sum())
                .collect()
        })
        .collect()
}

fn add_bias(a: &Mat, b: &[f64]) -> Mat {
    a.iter()
        .map(|r| r.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect()
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect())
        .collect()
}

fn layer_norm(a: &Mat, gain: &[f64], bias: &[f64]) -> Mat {
    a.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            r.iter()
                .enumerate()
                .map(|(j, x)| (x - mean) / (var + EPS).sqrt() * gain[j] + bias[j])
                .collect()
        })
        .collect()
}

/// `Σ_k (u W_Q)_k (v W_K)_k`, written out per element.
fn score(u: &[f64], v: &[f64], wq: &Mat, wk: &Mat) -> f64 {
    let d = wq[0].len();
    (0..d)
        .map(|k| {
            let q: f64 = u.iter().enumerate().map(|(m, x)| x * wq[m][k]).sum();
            let kk: f64 = v.iter().enumerate().map(|(m, x)| x * wk[m][k]).sum();
            q * kk
        })
        .sum()
}

pub struct LayerOracle {
    pub out: Mat,
    pub att: Vec<Mat>,
    pub att_bar: Vec<Option<Mat>>,
    pub weights: Vec<Mat>,
}

/// One encoder layer evaluated from its equations. With `x_bar` the score is
/// `(Att + Att̄)` scaled by `1/√(2d)`, otherwise `Att` scaled by `1/√d`.
pub fn layer_oracle(
    store: &ParamStore<f64>,
    prefix: &str,
    n_heads: usize,
    x: &Mat,
    x_bar: Option<&Mat>,
) -> LayerOracle {
    let s = x.len();
    let mut cat: Mat = vec![Vec::new(); s];
    let mut out = LayerOracle {
        out: Vec::new(),
        att: Vec::new(),
        att_bar: Vec::new(),
        weights: Vec::new(),
    };
    for h in 0..n_heads {
        let wq = mat(p(store, &format!("{prefix}.h{h}.wq")));
        let wk = mat(p(store, &format!("{prefix}.h{h}.wk")));
        let wv = mat(p(store, &format!("{prefix}.h{h}.wv")));
        let d = wq[0].len() as f64;
        let scale = if x_bar.is_some() {
            1.0 / (2.0 * d).sqrt()
        } else {
            1.0 / d.sqrt()
        };
        let att: Mat = (0..s)
            .map(|i| {
                (0..s)
                    .map(|j| score(&x[i], &x[j], &wq, &wk) * scale)
                    .collect()
            })
            .collect();
        let att_bar = x_bar.map(|xb| {
            let wq = mat(p(store, &format!("{prefix}.h{h}.wq_bar")));
            let wk = mat(p(store, &format!("{prefix}.h{h}.wk_bar")));
            (0..s)
                .map(|i| {
                    (0..s)
                        .map(|j| score(&xb[i], &xb[j], &wq, &wk) * scale)
                        .collect::<Vec<f64>>()
                })
                .collect::<Mat>()
        });
        let weights: Mat = (0..s)
            .map(|i| {
                let total: Vec<f64> = (0..s)
                    .map(|j| att[i][j] + att_bar.as_ref().map_or(0.0, |b| b[i][j]))
                    .collect();
                let max = total.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = total.iter().map(|v| (v - max).exp()).collect();
                let z: f64 = e.iter().sum();
                e.iter().map(|v| v / z).collect()
            })
            .collect();
        // value path uses the integrated input of the attended position j
        let v = mm(x, &wv);
        for i in 0..s {
            for k in 0..wv[0].len() {
                cat[i].push((0..s).map(|j| weights[i][j] * v[j][k]).sum());
            }
        }
        out.att.push(att);
        out.att_bar.push(att_bar);
        out.weights.push(weights);
    }
    let proj = add_bias(
        &mm(&cat, &mat(p(store, &format!("{prefix}.wo")))),
        &vec1(p(store, &format!("{prefix}.bo"))),
    );
    let h1 = layer_norm(
        &add(&proj, x),
        &vec1(p(store, &format!("{prefix}.ln1.gain"))),
        &vec1(p(store, &format!("{prefix}.ln1.bias"))),
    );
    let f = add_bias(
        &mm(&h1, &mat(p(store, &format!("{prefix}.ffn.w1")))),
        &vec1(p(store, &format!("{prefix}.ffn.b1"))),
    );
    let f: Mat = f
        .iter()
        .map(|r| r.iter().map(|v| v.max(0.0)).collect())
        .collect();
    let f = add_bias(
        &mm(&f, &mat(p(store, &format!("{prefix}.ffn.w2")))),
        &vec1(p(store, &format!("{prefix}.ffn.b2"))),
    );
    out.out = layer_norm(
        &add(&f, &h1),
        &vec1(p(store, &format!("{prefix}.ln2.gain"))),
        &vec1(p(store, &format!("{prefix}.ln2.bias"))),
    );
    out
}

/// Per-step embedding: numeric projection + id rows + position (+ mask token
/// at masked steps, + neutral vector on hidden future steps).
pub fn embedding_oracle(
    store: &ParamStore<f64>,
    prefix: &str,
    schema: &FeatureSchema,
    window: &Window<f64>,
    plan: Option<&MaskPlan>,
    hide_future: bool,
) -> Mat {
    let t_hist = schema.history_len;
    let s = window.len();
    let n_stat = if plan.is_some() {
        schema.statistic_columns().len()
    } else {
        0
    };
    let id_cols: Vec<String> = schema
        .knowledge_id_positions()
        .into_iter()
        .map(|c| schema.knowledge_columns()[c].name.clone())
        .collect();
    let pos = mat(p(store, &format!("{prefix}.pos")));
    let b = vec1(p(store, &format!("{prefix}.numeric.b")));
    let w = store.by_name(&format!("{prefix}.numeric.W")).map(mat);
    let d = pos[0].len();
    (0..s)
        .map(|t| {
            let hidden = hide_future && t >= t_hist;
            let masked = plan.is_some_and(|pl| t >= t_hist || pl.loss_positions().contains(&t));
            let mut input = Vec::new();
            for c in 0..n_stat {
                input.push(if masked {
                    0.0
                } else {
                    window.statistics.get(&[t, c])
                });
            }
            if let Some(k) = &window.knowledge_numeric {
                for c in 0..k.shape()[1] {
                    input.push(if hidden { 0.0 } else { k.get(&[t, c]) });
                }
            }
            let mut row = vec![0.0; d];
            if let Some(w) = &w {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = input.iter().enumerate().map(|(m, x)| x * w[m][j]).sum();
                }
            }
            for j in 0..d {
                row[j] += b[j];
            }
            if !hidden {
                for (c, name) in id_cols.iter().enumerate() {
                    let table = mat(p(store, &format!("{prefix}.id.{name}")));
                    for j in 0..d {
                        row[j] += table[window.knowledge_ids[c][t]][j];
                    }
                }
            }
            for j in 0..d {
                row[j] += pos[t][j];
            }
            if hidden {
                let u = vec1(p(store, &format!("{prefix}.future_neutral")));
                for j in 0..d {
                    row[j] += u[j];
                }
            }
            if masked {
                let u = vec1(p(store, "emb.mask_token"));
                for j in 0..d {
                    row[j] += u[j];
                }
            }
            row
        })
        .collect()
}

/// Whole-model forward composed from the oracles above.
#[allow(clippy::too_many_arguments)]
pub fn model_oracle(
    store: &ParamStore<f64>,
    schema: &FeatureSchema,
    n_layers: usize,
    n_heads: usize,
    knowledge_branch: bool,
    hide_future: bool,
    window: &Window<f64>,
    plan: &MaskPlan,
) -> Mat {
    let mut x = embedding_oracle(store, "emb", schema, window, Some(plan), hide_future);
    let xb = knowledge_branch
        .then(|| embedding_oracle(store, "kemb", schema, window, None, hide_future));
    for l in 0..n_layers {
        x = layer_oracle(store, &format!("layer{l}"), n_heads, &x, xb.as_ref()).out;
    }
    let w = mat(p(store, "head.W"));
    let b = vec1(p(store, "head.b"));
    plan.loss_positions()
        .map(|t| {
            (0..b.len())
                .map(|j| {
                    x[t].iter()
                        .enumerate()
                        .map(|(m, v)| v * w[m][j])
                        .sum::<f64>()
                        + b[j]
                })
                .collect()
        })
        .collect()
}

pub fn max_abs_diff(a: &Mat, b: &Tensor<f64>) -> f64 {
    let bm = mat(b);
    assert_eq!(a.len(), bm.len());
    a.iter()
        .zip(&bm)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}
