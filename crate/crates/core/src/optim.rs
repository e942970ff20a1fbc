//! Adam with bias correction, plus global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for every parameter plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(config: AdamConfig, params: &[Tensor<F>]) -> Self {
        AdamState {
            config,
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [Tensor<F>], grads: &[Tensor<F>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Shape {
                op: "adam_step",
                lhs: vec![params.len(), self.m.len()],
                rhs: vec![grads.len()],
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::Shape {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
        let (one_b1, one_b2) = (F::one() - b1, F::one() - b2);
        let t = self.step as i32;
        let bc1 = F::of(1.0 - c.beta1.powi(t));
        let bc2 = F::of(1.0 - c.beta2.powi(t));
        let (lr, eps) = (F::of(c.lr), F::of(c.eps));
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = b1 * m[j] + one_b1 * gj;
                v[j] = b2 * v[j] + one_b2 * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm<F: Scalar>(grads: &mut [Tensor<F>], max_norm: f64) -> f64 {
    let sq: f64 = grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|x| {
            let x = x.to_f64_lossy();
            x * x
        })
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = F::of(max_norm / norm);
        for g in grads.iter_mut() {
            for x in g.data_mut() {
                *x *= s;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_state(p: f64) -> (Vec<Tensor<f64>>, AdamState<f64>) {
        let params = vec![Tensor::scalar(p)];
        let st = AdamState::new(AdamConfig::default(), &params);
        (params, st)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut p, mut st) = scalar_state(0.7);
        st.step(&mut p, &[Tensor::scalar(0.0)]).unwrap();
        assert_eq!(p[0].data()[0], 0.7);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_closed_form() {
        // m̂ = g, v̂ = g² at t = 1 ⇒ Δ = -lr·g/(|g| + eps)
        let (mut p, mut st) = scalar_state(0.0);
        st.step(&mut p, &[Tensor::scalar(1.0)]).unwrap();
        let expect = -2e-4 / (1.0 + 1e-8);
        assert!((p[0].data()[0] - expect).abs() < 1e-18);
    }

    #[test]
    fn repeated_steps_move_against_gradient() {
        let (mut p, mut st) = scalar_state(1.0);
        let before = p[0].data()[0];
        st.step(&mut p, &[Tensor::scalar(-3.0)]).unwrap();
        let mid = p[0].data()[0];
        st.step(&mut p, &[Tensor::scalar(-3.0)]).unwrap();
        assert!(before < mid && mid < p[0].data()[0]);
        assert!(st.v[0].data()[0] >= 0.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (mut p, mut st) = scalar_state(1.0);
        assert!(st.step(&mut p, &[Tensor::zeros(&[2])]).is_err());
        assert_eq!(st.step, 0);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![Tensor::<f64>::from_f64(&[2], &[3.0, 4.0]).unwrap()];
        let n = clip_global_norm(&mut g, 1.0);
        assert_eq!(n, 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15);
        let n2 = clip_global_norm(&mut g, 1.0);
        assert!((n2 - 1.0).abs() < 1e-15);
    }
}
