//! The positioning network: space-domain format, channel-masked attention
//! encoder, reshape, frequency-cumulative LSTM decoder, and the weighted
//! position loss.

mod config;
mod decoder;
mod encoder;
mod loss;
mod params;

use serde::{Deserialize, Serialize};

pub use config::{ModelConfig, Variant};
pub use decoder::decoder_forward;
pub use encoder::{
    channel_gain, cma_forward, cma_mask, decoder_layout_index, encoder_layout_index, reshape_for_decoder,
    self_attention, space_domain_format, space_domain_unformat,
};
pub use loss::wmse_loss;
pub use params::{ModelParams, PARAM_NAMES};

use crate::channel::{Aabb, CsiTensor, Vec3};
use crate::dataio::{DatasetHeader, Sample};
use crate::error::{Error, Result};
use crate::numeric::{Graph, Tensor, Var};

/// Graph handles of every parameter, in [`PARAM_NAMES`] order.
#[derive(Clone, Copy, Debug)]
pub struct ParamVars {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub w_o: Var,
    pub lstm_w_ih: Var,
    pub lstm_w_hh: Var,
    pub lstm_bias: Var,
    pub mlp_w1: Var,
    pub mlp_b1: Var,
    pub mlp_w2: Var,
    pub mlp_b2: Var,
}

impl ParamVars {
    pub fn bind<'a>(g: &mut Graph<'a>, p: &'a ModelParams) -> Self {
        Self {
            w_q: g.param(&p.w_q),
            w_k: g.param(&p.w_k),
            w_v: g.param(&p.w_v),
            w_o: g.param(&p.w_o),
            lstm_w_ih: g.param(&p.lstm_w_ih),
            lstm_w_hh: g.param(&p.lstm_w_hh),
            lstm_bias: g.param(&p.lstm_bias),
            mlp_w1: g.param(&p.mlp_w1),
            mlp_b1: g.param(&p.mlp_b1),
            mlp_w2: g.param(&p.mlp_w2),
            mlp_b2: g.param(&p.mlp_b2),
        }
    }

    /// Wraps vars already in the graph, given in [`PARAM_NAMES`] order.
    pub fn from_slice(v: &[Var]) -> Result<Self> {
        if v.len() != PARAM_NAMES.len() {
            return Err(Error::Contract(format!("expected 11 parameter vars, got {}", v.len())));
        }
        Ok(Self {
            w_q: v[0],
            w_k: v[1],
            w_v: v[2],
            w_o: v[3],
            lstm_w_ih: v[4],
            lstm_w_hh: v[5],
            lstm_bias: v[6],
            mlp_w1: v[7],
            mlp_b1: v[8],
            mlp_w2: v[9],
            mlp_b2: v[10],
        })
    }

    pub fn vars(&self) -> [Var; 11] {
        [
            self.w_q,
            self.w_k,
            self.w_v,
            self.w_o,
            self.lstm_w_ih,
            self.lstm_w_hh,
            self.lstm_bias,
            self.mlp_w1,
            self.mlp_b1,
            self.mlp_w2,
            self.mlp_b2,
        ]
    }
}

/// Input standardization and the affine map between meters and the unit box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    /// CSI components are divided by this before formatting.
    pub input_scale: f64,
    pub volume: Aabb,
}

impl Normalizer {
    pub fn from_header(h: &DatasetHeader) -> Self {
        Self {
            input_scale: h.scale,
            volume: h.ue_volume,
        }
    }

    pub fn to_unit(&self, p: Vec3) -> Vec3 {
        let e = self.volume.extent();
        [0, 1, 2].map(|i| (p[i] - self.volume.min[i]) / e[i])
    }

    pub fn to_meters(&self, u: Vec3) -> Vec3 {
        let e = self.volume.extent();
        [0, 1, 2].map(|i| self.volume.min[i] + u[i] * e[i])
    }
}

fn check_dims(csi: &CsiTensor, cfg: &ModelConfig) -> Result<()> {
    let (l, m, n) = csi.dims();
    if (l, m, n) != (cfg.bs_count, cfg.antennas, cfg.subcarriers) {
        return Err(Error::shape("forward", &[l, m, n], &[cfg.bs_count, cfg.antennas, cfg.subcarriers]));
    }
    Ok(())
}

/// Standardized, formatted input `H_2` as a graph constant.
pub fn input_var(g: &mut Graph<'_>, csi: &CsiTensor, cfg: &ModelConfig, input_scale: f64) -> Result<Var> {
    check_dims(csi, cfg)?;
    let mut h2 = space_domain_format(csi);
    if input_scale != 1.0 {
        for v in h2.data_mut() {
            *v /= input_scale;
        }
    }
    Ok(g.constant(h2))
}

/// Full network from formatted input to per-subcarrier estimates `N × 3` in
/// normalized coordinates. The final estimate is the last row.
pub fn forward_formatted(
    g: &mut Graph<'_>,
    h2: Var,
    p: &ParamVars,
    cfg: &ModelConfig,
    mask_override: Option<Var>,
) -> Result<Var> {
    let h3 = cma_forward(g, h2, p, cfg.variant, mask_override)?;
    let h6 = reshape_for_decoder(g, h3, cfg.antennas, cfg.subcarriers)?;
    decoder_forward(g, h6, p)
}

pub fn forward(g: &mut Graph<'_>, csi: &CsiTensor, p: &ParamVars, cfg: &ModelConfig, input_scale: f64) -> Result<Var> {
    let h2 = input_var(g, csi, cfg, input_scale)?;
    forward_formatted(g, h2, p, cfg, None)
}

/// Per-subcarrier estimates in normalized coordinates, no gradients.
pub fn predict_normalized(params: &ModelParams, cfg: &ModelConfig, input_scale: f64, csi: &CsiTensor) -> Result<Vec<Vec3>> {
    let mut g = Graph::new();
    let pv = ParamVars::bind(&mut g, params);
    let out = forward(&mut g, csi, &pv, cfg, input_scale)?;
    let data = g.value(out).data();
    Ok(data.chunks(3).map(|r| [r[0], r[1], r[2]]).collect())
}

/// Per-subcarrier estimates in meters; the last entry is the final estimate.
pub fn predict(params: &ModelParams, cfg: &ModelConfig, norm: &Normalizer, csi: &CsiTensor) -> Result<Vec<Vec3>> {
    Ok(predict_normalized(params, cfg, norm.input_scale, csi)?
        .into_iter()
        .map(|u| norm.to_meters(u))
        .collect())
}

/// Loss of one sample and its gradient for every parameter, scaled by `seed`.
pub fn loss_and_grads(
    params: &ModelParams,
    cfg: &ModelConfig,
    norm: &Normalizer,
    sample: &Sample,
    seed: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut g = Graph::new();
    let pv = ParamVars::bind(&mut g, params);
    let est = forward(&mut g, &sample.csi, &pv, cfg, norm.input_scale)?;
    let loss = wmse_loss(&mut g, est, norm.to_unit(sample.position))?;
    let value = g.value(loss).data()[0];
    let mut grads = g.backward_with_seed(loss, seed)?;
    let out = pv
        .vars()
        .iter()
        .zip(params.tensors())
        .map(|(v, t)| grads.take(*v).unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();
    Ok((value, out))
}

/// Mask tensor of ones, for comparing the two variants.
pub fn unit_mask(cfg: &ModelConfig) -> Tensor {
    Tensor::full(&[cfg.bs_count], 1.0)
}
