//! The assembled forecaster: embeddings, a stack of encoder layers that all
//! receive the same knowledge embedding, and a linear read-out at the scored
//! positions.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attention::{AttentionLayer, AttentionMaps, LayerKind, LayerMaps};
use crate::data::{FeatureSchema, Window, WindowBatch};
use crate::embedding::{Embedding, KnowledgeEmbedding, INIT_STD};
use crate::error::{Error, Result};
use crate::masking::MaskPlan;
use crate::params::{Binding, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Architecture hyper-parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_x: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub history_len: usize,
    pub horizon: usize,
    pub layer_kind: LayerKind,
    pub use_future_knowledge: bool,
    pub target_dim: usize,
}

impl ModelConfig {
    /// Small CPU-friendly model: 4 layers, 4 heads, width 64.
    pub fn desk(schema: &FeatureSchema) -> Self {
        Self::with_size(schema, 64, 4, 4)
    }

    /// Full-size model: 12 layers of 12 heads, width 768.
    pub fn full_scale(schema: &FeatureSchema) -> Self {
        Self::with_size(schema, 768, 12, 12)
    }

    /// `d_ff` is set to `4 * d_x`.
    pub fn with_size(schema: &FeatureSchema, d_x: usize, n_layers: usize, n_heads: usize) -> Self {
        ModelConfig {
            d_x,
            n_layers,
            n_heads,
            d_ff: 4 * d_x,
            history_len: schema.history_len,
            horizon: schema.horizon,
            layer_kind: LayerKind::Ali,
            use_future_knowledge: true,
            target_dim: schema.target_positions().len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d_x == 0 || self.d_ff == 0 {
            return fail("d_x and d_ff must be positive".into());
        }
        if self.n_heads == 0 || !self.d_x.is_multiple_of(self.n_heads) {
            return fail(format!(
                "n_heads = {} must divide d_x = {}",
                self.n_heads, self.d_x
            ));
        }
        if self.n_layers == 0 {
            return fail("n_layers must be at least 1".into());
        }
        if self.horizon == 0 || self.history_len < self.horizon {
            return fail(format!(
                "history {} must be at least the horizon {} >= 1",
                self.history_len, self.horizon
            ));
        }
        if self.target_dim == 0 {
            return fail("target_dim must be positive".into());
        }
        Ok(())
    }

    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        let d = schema.target_positions().len();
        if schema.history_len != self.history_len
            || schema.horizon != self.horizon
            || d != self.target_dim
        {
            return Err(Error::Config(format!(
                "model expects T={}, L={}, D={} but schema has T={}, L={}, D={d}",
                self.history_len, self.horizon, self.target_dim, schema.history_len, schema.horizon
            )));
        }
        Ok(())
    }
}

/// Values observed during one recorded forward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace<F> {
    pub maps: AttentionMaps<F>,
    /// Knowledge embedding handed to each layer, in layer order.
    pub knowledge_inputs: Vec<Tensor<F>>,
}

/// Anything that maps a window to an `L × D` forecast of the horizon.
pub trait Forecaster<F: Scalar> {
    fn schema(&self) -> &FeatureSchema;

    fn forecast(&self, window: &Window<F>) -> Result<Tensor<F>>;

    /// Identifies the forecaster in reports.
    fn fingerprint(&self) -> String {
        self.schema().fingerprint()
    }
}

#[derive(Debug)]
pub struct Aliformer<F> {
    config: ModelConfig,
    schema: FeatureSchema,
    params: ParamStore<F>,
    embedding: Embedding,
    knowledge: Option<KnowledgeEmbedding>,
    layers: Vec<AttentionLayer>,
    head_w: ParamId,
    head_b: ParamId,
    knowledge_reads: AtomicU64,
}

impl<F: Clone> Clone for Aliformer<F> {
    fn clone(&self) -> Self {
        Aliformer {
            config: self.config.clone(),
            schema: self.schema.clone(),
            params: self.params.clone(),
            embedding: self.embedding.clone(),
            knowledge: self.knowledge.clone(),
            layers: self.layers.clone(),
            head_w: self.head_w,
            head_b: self.head_b,
            knowledge_reads: AtomicU64::new(self.knowledge_reads.load(Ordering::Relaxed)),
        }
    }
}

impl<F: Scalar> Aliformer<F> {
    /// Builds a freshly initialized model; parameters are drawn from a
    /// ChaCha8 stream seeded with `seed`.
    pub fn new(config: ModelConfig, schema: FeatureSchema, seed: u64) -> Result<Self> {
        config.validate()?;
        schema.validate()?;
        config.check_schema(&schema)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let hide = !config.use_future_knowledge;
        let embedding = Embedding::new(&mut params, &schema, config.d_x, hide, &mut rng);
        let knowledge = (config.layer_kind == LayerKind::Ali)
            .then(|| KnowledgeEmbedding::new(&mut params, &schema, config.d_x, hide, &mut rng));
        let layers = (0..config.n_layers)
            .map(|l| {
                AttentionLayer::new(
                    &mut params,
                    &format!("layer{l}"),
                    config.layer_kind,
                    config.d_x,
                    config.n_heads,
                    config.d_ff,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let head_w = params.normal(
            "head.W",
            &[config.d_x, config.target_dim],
            INIT_STD,
            &mut rng,
        );
        let head_b = params.zeros("head.b", &[config.target_dim]);
        Ok(Aliformer {
            config,
            schema,
            params,
            embedding,
            knowledge,
            layers,
            head_w,
            head_b,
            knowledge_reads: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    pub fn layers(&self) -> &[AttentionLayer] {
        &self.layers
    }

    /// How many times a layer has consumed the knowledge embedding.
    pub fn knowledge_reads(&self) -> u64 {
        self.knowledge_reads.load(Ordering::Relaxed)
    }

    /// Records the forward pass of one window on `tape` and returns the
    /// `|loss positions| × D` predictions.
    pub fn forward_tape(
        &self,
        tape: &mut Tape<F>,
        b: &Binding,
        window: &Window<F>,
        plan: &MaskPlan,
        mut trace: Option<&mut ForwardTrace<F>>,
    ) -> Result<Var> {
        if plan.history_len() != self.config.history_len || plan.horizon() != self.config.horizon {
            return Err(Error::Config(format!(
                "mask plan is for T={}, L={} but the model has T={}, L={}",
                plan.history_len(),
                plan.horizon(),
                self.config.history_len,
                self.config.horizon
            )));
        }
        let mut x = self.embedding.embed(tape, b, window, plan)?;
        let x_bar = match &self.knowledge {
            Some(k) => Some(k.embed(tape, b, window)?),
            None => None,
        };
        for layer in &self.layers {
            let mut maps = trace.as_ref().map(|_| LayerMaps { heads: Vec::new() });
            if let Some(xb) = x_bar {
                self.knowledge_reads.fetch_add(1, Ordering::Relaxed);
                if let Some(t) = trace.as_deref_mut() {
                    t.knowledge_inputs.push(tape.value(xb).clone());
                }
            }
            x = layer.forward(tape, b, x, x_bar, maps.as_mut())?;
            if let (Some(t), Some(m)) = (trace.as_deref_mut(), maps) {
                t.maps.layers.push(m);
            }
        }
        let index = plan.loss_positions().map(Some).collect();
        let h = tape.gather_rows(x, index)?;
        tape.linear(h, b.var(self.head_w), b.var(self.head_b))
    }

    /// Predictions at the plan's loss positions, without gradients.
    pub fn predict(&self, window: &Window<F>, plan: &MaskPlan) -> Result<Tensor<F>> {
        let mut tape = Tape::unchecked();
        let b = self.params.bind_constant(&mut tape)?;
        let y = self.forward_tape(&mut tape, &b, window, plan, None)?;
        Ok(tape.value(y).clone())
    }

    /// Predictions plus attention maps and per-layer knowledge inputs.
    pub fn predict_traced(
        &self,
        window: &Window<F>,
        plan: &MaskPlan,
    ) -> Result<(Tensor<F>, ForwardTrace<F>)> {
        let mut tape = Tape::unchecked();
        let b = self.params.bind_constant(&mut tape)?;
        let mut trace = ForwardTrace::default();
        let y = self.forward_tape(&mut tape, &b, window, plan, Some(&mut trace))?;
        Ok((tape.value(y).clone(), trace))
    }

    /// One prediction tensor per batch entry.
    pub fn forward(
        &self,
        batch: &WindowBatch<'_, F>,
        plans: &[MaskPlan],
    ) -> Result<Vec<Tensor<F>>> {
        if plans.len() != batch.len() {
            return Err(Error::Config(format!(
                "{} mask plans for a batch of {}",
                plans.len(),
                batch.len()
            )));
        }
        batch
            .windows()
            .iter()
            .zip(plans)
            .map(|(w, p)| self.predict(w, p))
            .collect()
    }

    /// Mean squared error of one window under `plan`, recorded on `tape`.
    pub fn loss_tape(
        &self,
        tape: &mut Tape<F>,
        b: &Binding,
        window: &Window<F>,
        plan: &MaskPlan,
    ) -> Result<Var> {
        let positions: Vec<usize> = plan.loss_positions().collect();
        let labels = window.targets_at(&positions)?;
        let pred = self.forward_tape(tape, b, window, plan, None)?;
        tape.mse(pred, labels)
    }
}

impl<F: Scalar> Forecaster<F> for Aliformer<F> {
    fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn forecast(&self, window: &Window<F>) -> Result<Tensor<F>> {
        self.predict(
            window,
            &MaskPlan::naive(self.config.history_len, self.config.horizon),
        )
    }

    fn fingerprint(&self) -> String {
        let text = serde_json::to_string(&self.config).expect("config serializes")
            + &self.schema.fingerprint();
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Mean of squared differences.
pub fn mse_loss<F: Scalar>(pred: &Tensor<F>, labels: &Tensor<F>) -> Result<F> {
    if pred.shape() != labels.shape() {
        return Err(Error::Shape {
            op: "loss",
            lhs: pred.shape().to_vec(),
            rhs: labels.shape().to_vec(),
        });
    }
    let sum: F = pred
        .data()
        .iter()
        .zip(labels.data())
        .map(|(&p, &l)| (p - l) * (p - l))
        .sum();
    let loss = sum / F::of(pred.len() as f64);
    if loss.is_nan() {
        return Err(Error::NonFinite { op: "loss" });
    }
    Ok(loss)
}
