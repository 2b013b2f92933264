//! Central-difference gradient checking.
//!
//! The function under test is evaluated once on a recording tape to get the
//! tape gradient. Every perturbed evaluation runs on a replaying tape, so
//! detached values, selected indices and sampled noise stay at their
//! base-point values. The numerical derivative therefore measures the
//! Jacobian the tape declares (identity for a straight-through estimator,
//! the frozen rotation for the rotation estimator) instead of the
//! piecewise-constant true one.

use std::fmt;

use super::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Denominator floor for the relative error, so that gradients which are
/// zero up to rounding are compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub index: usize,
    pub numel: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub eps: f64,
    pub tol: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_err <= self.tol)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>5} {:>6} {:>12} {:>12}", "param", "numel", "max_abs", "max_rel")?;
        for p in &self.params {
            writeln!(
                f,
                "{:>5} {:>6} {:>12.3e} {:>12.3e}",
                p.index, p.numel, p.max_abs_err, p.max_rel_err
            )?;
        }
        write!(
            f,
            "{} (tol {:.1e}, eps {:.1e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.tol,
            self.eps
        )
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares tape gradients of a scalar function against central differences.
pub fn finite_diff_check<F>(f: F, params: &[Tensor], eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::Config(format!("finite-difference eps {eps} outside [1e-7, 1e-4]")));
    }
    let (analytic, log) = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = params.iter().map(|p| tape.leaf(p.clone())).collect();
        let loss = f(&tape, &vars)?;
        let grads = tape.backward(loss)?;
        let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.get(v)).collect();
        (analytic, tape.frozen_log())
    };

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let tape = Tape::replaying(log.clone());
        let vars: Vec<Var<'_>> = perturbed.iter().map(|p| tape.constant(p.clone())).collect();
        Ok(f(&tape, &vars)?.item())
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut checks = Vec::with_capacity(params.len());
    for (pi, grad) in analytic.iter().enumerate() {
        let mut max_abs: f64 = 0.0;
        let mut max_rel: f64 = 0.0;
        for k in 0..params[pi].numel() {
            let x0 = params[pi].data()[k];
            work[pi].data_mut()[k] = x0 + eps;
            let up = eval(&work)?;
            work[pi].data_mut()[k] = x0 - eps;
            let down = eval(&work)?;
            work[pi].data_mut()[k] = x0;
            let numeric = (up - down) / (2.0 * eps);
            let a = grad.data()[k];
            max_abs = max_abs.max((a - numeric).abs());
            max_rel = max_rel.max(relative_error(a, numeric));
        }
        checks.push(ParamCheck {
            index: pi,
            numel: params[pi].numel(),
            max_abs_err: max_abs,
            max_rel_err: max_rel,
        });
    }
    Ok(GradCheckReport {
        eps,
        tol,
        params: checks,
    })
}
