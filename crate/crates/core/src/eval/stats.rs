use crate::channel::Vec3;
use crate::error::{Error, Result};
use crate::numeric::exact_sum;

pub fn euclidean_error(pred: Vec3, truth: Vec3) -> f64 {
    let d = [pred[0] - truth[0], pred[1] - truth[1], pred[2] - truth[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Order-independent mean.
pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Contract("mean of an empty error list".into()));
    }
    Ok(exact_sum(values.iter().copied()) / values.len() as f64)
}

fn sorted(errors: &[f64]) -> Result<Vec<f64>> {
    if errors.is_empty() {
        return Err(Error::Contract("empty error list".into()));
    }
    if errors.iter().any(|e| e.is_nan()) {
        return Err(Error::Numeric("NaN in error list".into()));
    }
    let mut s = errors.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Empirical CDF as `(value, P[error ≤ value])` at every distinct value.
pub fn error_cdf(errors: &[f64]) -> Result<Vec<(f64, f64)>> {
    let s = sorted(errors)?;
    let n = s.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, v) in s.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *v => last.1 = p,
            _ => out.push((*v, p)),
        }
    }
    Ok(out)
}

/// Percentile `q ∈ [0, 100]` with linear interpolation between closest ranks,
/// inclusive convention: position `q/100 · (n − 1)` in the sorted list.
pub fn percentile(errors: &[f64], q: f64) -> Result<f64> {
    let s = sorted(errors)?;
    percentile_sorted(&s, q)
}

pub(crate) fn percentile_sorted(s: &[f64], q: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::Contract(format!("percentile {q} outside [0, 100]")));
    }
    if s.is_empty() {
        return Err(Error::Contract("empty error list".into()));
    }
    let pos = q / 100.0 * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    Ok(if lo == hi { s[lo] } else { s[lo] + t * (s[hi] - s[lo]) })
}

/// Median, 90th percentile and mean of an error list.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorSummary {
    pub median: f64,
    pub p90: f64,
    pub mean: f64,
}

pub fn summarize(errors: &[f64]) -> Result<ErrorSummary> {
    let s = sorted(errors)?;
    Ok(ErrorSummary {
        median: percentile_sorted(&s, 50.0)?,
        p90: percentile_sorted(&s, 90.0)?,
        mean: mean(errors)?,
    })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        // tied values share the average of their ranks
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Contract(format!(
            "spearman needs two equal-length series of at least 2 points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}
