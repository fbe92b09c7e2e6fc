//! Space-domain formatting, channel-masked attention and the reshape that
//! hands the encoder output to the decoder.
//!
//! Flattening is antenna-major: component `a` (real/imaginary interleaved
//! per antenna, `a = 2m` real, `a = 2m + 1` imaginary) of subcarrier `n` sits
//! at column `a·N + n` of a station's row.

use std::sync::Arc;

use num_complex::Complex64;

use super::config::Variant;
use super::ParamVars;
use crate::channel::CsiTensor;
use crate::error::{Error, Result};
use crate::numeric::{Graph, Tensor, Var, LAYER_NORM_EPS};

/// `H[L×M×N]` complex to `H_2[L×2MN]` real.
pub fn space_domain_format(csi: &CsiTensor) -> Tensor {
    let (l_count, m_count, n_count) = csi.dims();
    let width = 2 * m_count * n_count;
    let mut out = vec![0.0; l_count * width];
    for l in 0..l_count {
        let row = &mut out[l * width..(l + 1) * width];
        for m in 0..m_count {
            for n in 0..n_count {
                let z = csi.get(l, m, n);
                row[(2 * m) * n_count + n] = z.re;
                row[(2 * m + 1) * n_count + n] = z.im;
            }
        }
    }
    Tensor::matrix(l_count, width, out).expect("format shape")
}

/// Inverse of [`space_domain_format`].
pub fn space_domain_unformat(h2: &Tensor, m_count: usize, n_count: usize) -> Result<CsiTensor> {
    let l_count = h2.rows();
    if h2.rank() != 2 || h2.cols() != 2 * m_count * n_count {
        return Err(Error::shape("space_domain_unformat", h2.shape(), &[l_count, 2 * m_count * n_count]));
    }
    let mut csi = CsiTensor::zeros(l_count, m_count, n_count);
    for l in 0..l_count {
        let row = h2.row(l);
        for m in 0..m_count {
            for n in 0..n_count {
                let z = Complex64::new(row[(2 * m) * n_count + n], row[(2 * m + 1) * n_count + n]);
                csi.set(l, m, n, z);
            }
        }
    }
    Ok(csi)
}

/// Gather index taking `H_3[L×2MN]` to `H_6[N×2ML]`:
/// `H_6[n, a·L + l] = H_3[l, a·N + n]`.
pub fn decoder_layout_index(l_count: usize, m_count: usize, n_count: usize) -> Arc<[usize]> {
    let a_count = 2 * m_count;
    let mut index = vec![0; l_count * a_count * n_count];
    for n in 0..n_count {
        for a in 0..a_count {
            for l in 0..l_count {
                index[n * a_count * l_count + a * l_count + l] = l * a_count * n_count + a * n_count + n;
            }
        }
    }
    index.into()
}

/// Index of the inverse reshape, `H_6` back to `H_3`.
pub fn encoder_layout_index(l_count: usize, m_count: usize, n_count: usize) -> Arc<[usize]> {
    let forward = decoder_layout_index(l_count, m_count, n_count);
    let mut inverse = vec![0; forward.len()];
    for (dst, &src) in forward.iter().enumerate() {
        inverse[src] = dst;
    }
    inverse.into()
}

/// Per-station Euclidean norm of the formatted CSI.
pub fn channel_gain(g: &mut Graph<'_>, h2: Var) -> Var {
    g.row_l2_norm(h2)
}

/// Layer-normalized channel gains, one weight per station. Gains are divided
/// by their mean first so the variance guard does not depend on the overall
/// signal level.
pub fn cma_mask(g: &mut Graph<'_>, h2: Var) -> Var {
    let gain = channel_gain(g, h2);
    let relative = g.mean_normalize(gain);
    g.layer_norm(relative, LAYER_NORM_EPS)
}

/// Single-head scaled dot-product attention over stations:
/// `softmax(Q Kᵀ / √d_k) V W_O` with `Q, K, V = H_2 W_{Q,K,V}`.
pub fn self_attention(g: &mut Graph<'_>, h2: Var, p: &ParamVars) -> Result<Var> {
    let d_k = g.value(p.w_q).cols();
    let q = g.matmul(h2, p.w_q)?;
    let k = g.matmul(h2, p.w_k)?;
    let v = g.matmul(h2, p.w_v)?;
    let kt = g.transpose(k);
    let logits = g.matmul(q, kt)?;
    let logits = g.scale(logits, 1.0 / (d_k as f64).sqrt());
    let attn = g.softmax_rows(logits)?;
    // mixing over stations is correctly rounded, so station order cannot
    // change a single output bit
    let mixed = g.matmul_exact(attn, v)?;
    g.matmul(mixed, p.w_o)
}

/// Encoder output `H_3`. `mask_override` replaces the computed channel-gain
/// mask of the `cma` variant.
pub fn cma_forward(
    g: &mut Graph<'_>,
    h2: Var,
    p: &ParamVars,
    variant: Variant,
    mask_override: Option<Var>,
) -> Result<Var> {
    let attended = self_attention(g, h2, p)?;
    match variant {
        Variant::Plain => Ok(attended),
        Variant::Cma => {
            let mask = match mask_override {
                Some(m) => m,
                None => cma_mask(g, h2),
            };
            g.scale_rows(attended, mask)
        }
    }
}

/// `H_3[L×2MN]` to `H_6[N×2ML]`.
pub fn reshape_for_decoder(g: &mut Graph<'_>, h3: Var, m_count: usize, n_count: usize) -> Result<Var> {
    let l_count = g.value(h3).rows();
    if g.value(h3).cols() != 2 * m_count * n_count {
        return Err(Error::shape("reshape_for_decoder", g.value(h3).shape(), &[l_count, 2 * m_count * n_count]));
    }
    let index = decoder_layout_index(l_count, m_count, n_count);
    g.gather(h3, index, vec![n_count, 2 * m_count * l_count])
}
