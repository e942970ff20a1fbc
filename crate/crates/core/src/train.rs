//! Mini-batch training with mixed mask plans, Adam and best-validation
//! selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{make_windows, FeatureSchema, SeriesRecord, Window};
use crate::error::{Error, Result};
use crate::masking::{MaskPlan, MaskPolicy};
use crate::model::{mse_loss, Aliformer, ModelConfig};
use crate::optim::{clip_global_norm, AdamConfig, AdamState};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub p1: f64,
    pub p2: f64,
    /// Span length; the horizon when unset.
    pub span_len: Option<usize>,
    pub seed: u64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
    pub train_stride: usize,
    pub val_stride: usize,
    /// Scan every tape for non-finite values (slower).
    pub checked: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            epochs: 20,
            p1: 0.5,
            p2: 0.5,
            span_len: None,
            seed: 0,
            clip_norm: 5.0,
            train_stride: 1,
            val_stride: 1,
            checked: false,
        }
    }
}

impl TrainConfig {
    /// Batch size 512 as used for full-size runs.
    pub fn full_scale() -> Self {
        TrainConfig {
            batch_size: 512,
            ..Self::default()
        }
    }

    pub fn policy(&self) -> MaskPolicy {
        MaskPolicy {
            p1: self.p1,
            p2: self.p2,
            span_len: self.span_len,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.policy().validate()?;
        if self.batch_size == 0
            || self.epochs == 0
            || self.train_stride == 0
            || self.val_stride == 0
        {
            return Err(Error::Config(
                "batch_size, epochs and strides must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) || self.clip_norm < 0.0 {
            return Err(Error::Config(format!(
                "invalid lr {} or clip_norm {}",
                self.lr, self.clip_norm
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Counter-mode position of the training RNG, enough to resume the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    /// Parameters from the epoch with the lowest validation loss (the last
    /// epoch when there is no validation split).
    pub model: Aliformer<F>,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub optimizer: AdamState<F>,
    pub rng: RngState,
}

const TRAIN_STREAM: u64 = 1;

/// Trains a fresh model initialized from `train_cfg.seed`.
pub fn train<F: Scalar>(
    train_records: &[SeriesRecord],
    val_records: &[SeriesRecord],
    schema: &FeatureSchema,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainOutcome<F>> {
    let model = Aliformer::new(model_cfg.clone(), schema.clone(), train_cfg.seed)?;
    train_model(model, train_records, val_records, schema, train_cfg)
}

/// Continues training `model` in place of a fresh initialization.
pub fn train_model<F: Scalar>(
    mut model: Aliformer<F>,
    train_records: &[SeriesRecord],
    val_records: &[SeriesRecord],
    schema: &FeatureSchema,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<F>> {
    cfg.validate()?;
    let train_windows: Vec<Window<F>> = make_windows(train_records, schema, cfg.train_stride)?;
    if train_windows.is_empty() {
        return Err(Error::Data("training split has no complete windows".into()));
    }
    let val_windows: Vec<Window<F>> = make_windows(val_records, schema, cfg.val_stride)?;
    let (t, l) = (schema.history_len, schema.horizon);
    let policy = cfg.policy();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(TRAIN_STREAM);
    let mut adam = AdamState::new(cfg.adam(), model.params().tensors());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ParamStore<F>)> = None;
    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    log::info!(
        "training on {} windows ({} validation), {} parameters",
        train_windows.len(),
        val_windows.len(),
        model.params().num_scalars()
    );

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads: Vec<Tensor<F>> = model
                .params()
                .tensors()
                .iter()
                .map(|p| Tensor::zeros(p.shape()))
                .collect();
            let mut batch_loss = 0.0;
            for &i in batch {
                let plan = policy.sample(&mut rng, t, l);
                let mut tape = if cfg.checked {
                    Tape::new()
                } else {
                    Tape::unchecked()
                };
                let b = model.params().bind(&mut tape)?;
                let loss = model.loss_tape(&mut tape, &b, &train_windows[i], &plan)?;
                let value = tape.value(loss).data()[0].to_f64_lossy();
                if !value.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        step,
                        loss: value,
                    });
                }
                batch_loss += value;
                tape.backward(loss)?;
                for (acc, g) in grads.iter_mut().zip(model.params().grads(&tape, &b)) {
                    for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += *v;
                    }
                }
            }
            let inv = F::of(1.0 / batch.len() as f64);
            for g in &mut grads {
                for v in g.data_mut() {
                    *v *= inv;
                }
            }
            if cfg.clip_norm > 0.0 {
                let norm = clip_global_norm(&mut grads, cfg.clip_norm);
                if !norm.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        step,
                        loss: norm,
                    });
                }
            }
            adam.step(model.params_mut().tensors_mut(), &grads)?;
            loss_sum += batch_loss;
        }
        let train_loss = loss_sum / train_windows.len() as f64;
        let val_loss = if val_windows.is_empty() {
            None
        } else {
            Some(naive_loss(&model, &val_windows)?)
        };
        log::info!(
            "epoch {epoch}: train {train_loss:.6}{}",
            val_loss
                .map(|v| format!(", val {v:.6}"))
                .unwrap_or_default()
        );
        let score = val_loss.unwrap_or(f64::NEG_INFINITY);
        if best
            .as_ref()
            .is_none_or(|(b, _, _)| score < *b || val_loss.is_none())
        {
            best = Some((score, epoch, model.params().clone()));
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
    }

    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    *model.params_mut() = params;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        optimizer: adam,
        rng: RngState {
            seed: cfg.seed,
            stream: TRAIN_STREAM,
            word_pos: rng.get_word_pos(),
        },
    })
}

/// Mean over windows of the horizon MSE under the naive plan.
pub fn naive_loss<F: Scalar>(model: &Aliformer<F>, windows: &[Window<F>]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Data("no windows to score".into()));
    }
    let cfg = model.config();
    let plan = MaskPlan::naive(cfg.history_len, cfg.horizon);
    let positions: Vec<usize> = plan.loss_positions().collect();
    let mut sum = 0.0;
    for w in windows {
        let pred = model.predict(w, &plan)?;
        sum += mse_loss(&pred, &w.targets_at(&positions)?)?.to_f64_lossy();
    }
    Ok(sum / windows.len() as f64)
}
