use crate::channel::Vec3;
use crate::error::Result;
use crate::numeric::{Graph, Tensor, Var};

/// Subcarrier-weighted position loss `Σ_k (k/N) ‖x_true − x̂[k]‖₂`, with the
/// unsquared Euclidean norm and `k` counted from 1.
pub fn wmse_loss(g: &mut Graph<'_>, estimates: Var, target: Vec3) -> Result<Var> {
    let n = g.value(estimates).rows();
    let tiled: Vec<f64> = (0..n).flat_map(|_| target).collect();
    let target = g.constant(Tensor::matrix(n, 3, tiled)?);
    let diff = g.sub(estimates, target)?;
    let dist = g.row_l2_norm(diff);
    let weights = g.constant(Tensor::vector((1..=n).map(|k| k as f64 / n as f64).collect()));
    let weighted = g.mul(dist, weights)?;
    Ok(g.sum(weighted))
}
