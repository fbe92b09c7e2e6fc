//! Central finite-difference check of analytic gradients.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Gradients smaller than this are compared on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(leaf, element)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, REL_ERR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / denom
}

fn evaluate<F>(f: &F, leaves: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.param(t)).collect();
    let root = f(&mut g, &vars)?;
    let v = g.value(root);
    if v.numel() != 1 {
        return Err(Error::Contract(format!("grad_check needs a scalar function, got shape {:?}", v.shape())));
    }
    let y = v.data()[0];
    if !y.is_finite() {
        return Err(Error::Numeric(format!("grad_check: function value {y}")));
    }
    Ok(y)
}

/// Compares the analytic gradient of `f` with respect to every element of
/// every leaf against `(f(x + h) - f(x - h)) / 2h`.
pub fn grad_check<F>(f: F, leaves: &[Tensor], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::Contract(format!("grad_check step must be positive, got {h}")));
    }
    let analytic: Vec<Vec<f64>> = {
        let mut g = Graph::new();
        let vars: Vec<Var> = leaves.iter().map(|t| g.param(t)).collect();
        let root = f(&mut g, &vars)?;
        if g.value(root).numel() != 1 {
            return Err(Error::Contract(format!(
                "grad_check needs a scalar function, got shape {:?}",
                g.value(root).shape()
            )));
        }
        let mut grads = g.backward(root)?;
        vars.iter()
            .zip(leaves)
            .map(|(v, t)| grads.take(*v).unwrap_or_else(|| vec![0.0; t.numel()]))
            .collect()
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut work: Vec<Tensor> = leaves.to_vec();
    for (li, leaf) in leaves.iter().enumerate() {
        for ei in 0..leaf.numel() {
            let x0 = leaf.data()[ei];
            work[li].data_mut()[ei] = x0 + h;
            let plus = evaluate(&f, &work)?;
            work[li].data_mut()[ei] = x0 - h;
            let minus = evaluate(&f, &work)?;
            work[li].data_mut()[ei] = x0;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[li][ei];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((li, ei));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
