//! Mask plans: which positions get the learnable token and which are scored.
//!
//! Positions are 0-based here: history is `0..T`, horizon `T..T+L`. The
//! horizon's statistics are masked under every plan.

use std::ops::Range;
use std::sync::Once;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    /// Mask and score the horizon.
    Naive,
    /// Additionally mask an interior history span and score only the span.
    Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    kind: MaskKind,
    history_len: usize,
    horizon: usize,
    loss: Range<usize>,
}

impl MaskPlan {
    pub fn naive(history_len: usize, horizon: usize) -> Self {
        MaskPlan {
            kind: MaskKind::Naive,
            history_len,
            horizon,
            loss: history_len..history_len + horizon,
        }
    }

    /// Span covering 0-based positions `start..start+len`; it must lie strictly
    /// inside the history and not touch position 0.
    pub fn span(history_len: usize, horizon: usize, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start < 1 || start + len > history_len {
            return Err(Error::Config(format!(
                "span {start}..{} not strictly inside history of length {history_len}",
                start + len
            )));
        }
        Ok(MaskPlan {
            kind: MaskKind::Span,
            history_len,
            horizon,
            loss: start..start + len,
        })
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn seq_len(&self) -> usize {
        self.history_len + self.horizon
    }

    /// Positions scored by the loss.
    pub fn loss_positions(&self) -> Range<usize> {
        self.loss.clone()
    }

    pub fn is_masked(&self, t: usize) -> bool {
        t >= self.history_len || self.loss.contains(&t)
    }

    /// Per-position flag: statistics replaced by the mask token.
    pub fn input_mask(&self) -> Vec<bool> {
        (0..self.seq_len()).map(|t| self.is_masked(t)).collect()
    }
}

/// Mixing probabilities of the two plans plus the span length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskPolicy {
    pub p1: f64,
    pub p2: f64,
    /// Span length; `None` means the horizon length.
    pub span_len: Option<usize>,
}

impl Default for MaskPolicy {
    fn default() -> Self {
        MaskPolicy {
            p1: 0.5,
            p2: 0.5,
            span_len: None,
        }
    }
}

impl MaskPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.p1 < 0.0 || self.p2 < 0.0 || (self.p1 + self.p2 - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "p1 = {} and p2 = {} must be >= 0 and sum to 1",
                self.p1, self.p2
            )));
        }
        Ok(())
    }

    /// Naive with probability `p1`, otherwise a span whose 0-based start is
    /// uniform on `1..=T-len`. Falls back to naive when no span fits.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        history_len: usize,
        horizon: usize,
    ) -> MaskPlan {
        let u: f64 = rng.random();
        if u < self.p1 {
            return MaskPlan::naive(history_len, horizon);
        }
        let len = self.span_len.unwrap_or(horizon);
        if len == 0 || history_len < len + 1 {
            static WARN: Once = Once::new();
            WARN.call_once(|| {
                log::warn!(
                    "history of {history_len} too short for a span of {len}; using naive masking"
                )
            });
            return MaskPlan::naive(history_len, horizon);
        }
        let start = rng.random_range(1..=history_len - len);
        MaskPlan::span(history_len, horizon, start, len).expect("start drawn inside valid range")
    }
}

/// Draws one plan with span length = horizon.
pub fn sample_mask_plan<R: Rng + ?Sized>(
    rng: &mut R,
    history_len: usize,
    horizon: usize,
    p1: f64,
    p2: f64,
) -> Result<MaskPlan> {
    let policy = MaskPolicy {
        p1,
        p2,
        span_len: None,
    };
    policy.validate()?;
    Ok(policy.sample(rng, history_len, horizon))
}
