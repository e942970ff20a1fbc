//! Central finite-difference verification of tape gradients.

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference half step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tol: f64,
    /// Entries whose absolute discrepancy is below this are treated as exact.
    pub abs_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-4,
            tol: 1e-3,
            abs_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Number of scalar entries compared.
    pub checked: usize,
    /// (input index, flat element index) of the largest relative error.
    pub worst: Option<(usize, usize)>,
    pub pass: bool,
    pub diagnostics: Vec<String>,
}

impl GradCheckReport {
    pub fn is_empty(&self) -> bool {
        self.checked == 0
    }
}

/// Compares backward gradients of the scalar function `f` against central
/// differences for every input flagged `requires_grad`.
///
/// `f` receives a fresh tape and the input vars in order and must return a
/// scalar var.
pub fn grad_check<F, Fun>(
    f: Fun,
    inputs: &[(Tensor<F>, bool)],
    cfg: GradCheckConfig,
) -> GradCheckReport
where
    F: Scalar,
    Fun: Fn(&mut Tape<F>, &[Var]) -> Result<Var>,
{
    let mut report = GradCheckReport {
        pass: true,
        ..Default::default()
    };
    if !inputs.iter().any(|(_, rg)| *rg) {
        return report;
    }

    let analytic = match analytic_grads(&f, inputs) {
        Ok(g) => g,
        Err(e) => {
            report.pass = false;
            report
                .diagnostics
                .push(format!("forward/backward failed: {e}"));
            return report;
        }
    };

    let h = cfg.step;
    for (k, (x, rg)) in inputs.iter().enumerate() {
        if !*rg {
            continue;
        }
        let grad = analytic[k]
            .as_ref()
            .expect("requires_grad input has a gradient");
        for e in 0..x.len() {
            let eval_at = |delta: f64| -> Result<f64> {
                let mut shifted: Vec<Tensor<F>> = inputs.iter().map(|(t, _)| t.clone()).collect();
                let v = shifted[k].data()[e].to_f64_lossy() + delta;
                shifted[k].data_mut()[e] = F::of(v);
                eval_scalar(&f, &shifted, inputs)
            };
            let numeric = match (eval_at(h), eval_at(-h)) {
                (Ok(p), Ok(m)) if p.is_finite() && m.is_finite() => (p - m) / (2.0 * h),
                (p, m) => {
                    report.pass = false;
                    report.diagnostics.push(format!(
                        "input {k} element {e}: f(x±h) not finite ({p:?}, {m:?})"
                    ));
                    continue;
                }
            };
            let a = grad.data()[e].to_f64_lossy();
            let abs = (a - numeric).abs();
            let rel = if abs <= cfg.abs_floor {
                0.0
            } else {
                abs / a.abs().max(numeric.abs())
            };
            report.checked += 1;
            report.max_abs_err = report.max_abs_err.max(abs);
            if rel > report.max_rel_err || report.worst.is_none() {
                report.worst = Some((k, e));
                report.max_rel_err = rel;
            }
            if !rel.is_finite() || rel >= cfg.tol {
                report.pass = false;
                if report.diagnostics.len() < 16 {
                    report.diagnostics.push(format!(
                        "input {k} element {e}: analytic {a:.6e} numeric {numeric:.6e} rel {rel:.3e}"
                    ));
                }
            }
        }
    }
    report
}

fn analytic_grads<F, Fun>(f: &Fun, inputs: &[(Tensor<F>, bool)]) -> Result<Vec<Option<Tensor<F>>>>
where
    F: Scalar,
    Fun: Fn(&mut Tape<F>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|(t, rg)| tape.leaf(t.clone(), *rg))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    Ok(vars.iter().map(|&v| tape.grad(v)).collect())
}

fn eval_scalar<F, Fun>(f: &Fun, values: &[Tensor<F>], inputs: &[(Tensor<F>, bool)]) -> Result<f64>
where
    F: Scalar,
    Fun: Fn(&mut Tape<F>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::unchecked();
    let vars = values
        .iter()
        .zip(inputs)
        .map(|(t, (_, rg))| tape.leaf(t.clone(), *rg))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).data()[0].to_f64_lossy())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sum_of_squares_passes_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::<f64>::randn(&[3, 4], 1.0, &mut rng);
        let cfg = GradCheckConfig {
            tol: 1e-5,
            ..Default::default()
        };
        let r = grad_check(
            |t, v| {
                let sq = t.mul(v[0], v[0])?;
                t.sum(sq)
            },
            &[(x, true)],
            cfg,
        );
        assert!(r.pass, "{r:?}");
        assert_eq!(r.checked, 12);
        assert!(r.max_rel_err < 1e-5);
    }

    #[test]
    fn no_differentiable_input_gives_empty_report() {
        let x = Tensor::<f64>::full(&[2], 1.0);
        let r = grad_check(
            |t, v| t.sum(v[0]),
            &[(x, false)],
            GradCheckConfig::default(),
        );
        assert!(r.is_empty());
        assert!(r.pass);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        // relu at exactly zero: backward uses 0, central difference gives 0.5
        let x = Tensor::<f64>::zeros(&[1]);
        let r = grad_check(
            |t, v| {
                let y = t.relu(v[0])?;
                t.sum(y)
            },
            &[(x, true)],
            GradCheckConfig::default(),
        );
        assert!(!r.pass);
        assert_eq!(r.worst, Some((0, 0)));
    }

    #[test]
    fn nan_in_function_fails_with_diagnostics() {
        let x = Tensor::<f64>::full(&[1], -1.0);
        let r = grad_check(
            |t, v| {
                let y = t.value(v[0]).map(|a| a.sqrt());
                let c = t.constant(y)?;
                let s = t.add(c, v[0])?;
                t.sum(s)
            },
            &[(x, true)],
            GradCheckConfig::default(),
        );
        assert!(!r.pass);
        assert!(!r.diagnostics.is_empty());
    }
}
