//! Central finite-difference gradient checking.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::ShapeError;

/// Gradient magnitudes below this are compared absolutely rather than relatively.
pub const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradMismatch {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub failures: Vec<GradMismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.max_rel_error.is_finite()
    }
}

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares a supplied analytic gradient of `f` at `x` with central differences.
pub fn grad_check<F>(f: F, x: &Tensor, analytic: &Tensor, eps: f64, tol: f64) -> GradCheckReport
where
    F: Fn(&Tensor) -> f64,
{
    let mut probe = x.clone();
    let mut report = GradCheckReport {
        checked: x.len(),
        max_rel_error: 0.0,
        failures: Vec::new(),
    };
    for index in 0..x.len() {
        let orig = probe.data()[index];
        probe.data_mut()[index] = orig + eps;
        let up = f(&probe);
        probe.data_mut()[index] = orig - eps;
        let down = f(&probe);
        probe.data_mut()[index] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic.data().get(index).copied().unwrap_or(f64::NAN);
        let rel = relative_error(a, numeric);
        let rel = if rel.is_nan() { f64::INFINITY } else { rel };
        report.max_rel_error = report.max_rel_error.max(rel);
        if rel > tol {
            report.failures.push(GradMismatch {
                index,
                analytic: a,
                numeric,
                rel_error: rel,
            });
        }
    }
    report
}

/// Checks the gradient a graph function reports for its input against finite differences.
pub fn grad_check_graph<F>(f: F, x: &Tensor, eps: f64, tol: f64) -> Result<GradCheckReport, ShapeError>
where
    F: Fn(&mut Graph<'_>, Var) -> Result<Var, ShapeError>,
{
    let analytic = {
        let mut g = Graph::new();
        let v = g.input(x.clone());
        let loss = f(&mut g, v)?;
        g.backward(loss)?;
        g.grad(v).unwrap_or_else(|| Tensor::zeros(x.shape()))
    };
    let eval = |t: &Tensor| {
        let mut g = Graph::new();
        let v = g.constant(t.clone());
        f(&mut g, v).map(|l| g.scalar(l)).unwrap_or(f64::NAN)
    };
    Ok(grad_check(eval, x, &analytic, eps, tol))
}
