use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Every learnable tensor of the network.
///
/// LSTM gate blocks are stacked column-wise in the order input, forget, cell,
/// output; each block is `lstm_hidden` wide.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
    pub lstm_w_ih: Tensor,
    pub lstm_w_hh: Tensor,
    pub lstm_bias: Tensor,
    pub mlp_w1: Tensor,
    pub mlp_b1: Tensor,
    pub mlp_w2: Tensor,
    pub mlp_b2: Tensor,
}

pub const PARAM_NAMES: [&str; 11] = [
    "attn.w_q",
    "attn.w_k",
    "attn.w_v",
    "attn.w_o",
    "lstm.w_ih",
    "lstm.w_hh",
    "lstm.bias",
    "mlp.w1",
    "mlp.b1",
    "mlp.w2",
    "mlp.b2",
];

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::matrix(fan_in, fan_out, data).expect("glorot shape")
}

impl ModelParams {
    /// Expected shape of every parameter, in [`PARAM_NAMES`] order.
    pub fn shapes(cfg: &ModelConfig) -> [Vec<usize>; 11] {
        let (e, dk, h, x, m) = (
            cfg.embed_dim(),
            cfg.d_k,
            cfg.lstm_hidden,
            cfg.decoder_input(),
            cfg.mlp_hidden,
        );
        [
            vec![e, dk],
            vec![e, dk],
            vec![e, dk],
            vec![dk, e],
            vec![x, 4 * h],
            vec![h, 4 * h],
            vec![4 * h],
            vec![h, m],
            vec![m],
            vec![m, 3],
            vec![3],
        ]
    }

    /// Glorot-uniform weights, zero biases except a forget-gate bias of 1.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (e, dk, h, x, m) = (
            cfg.embed_dim(),
            cfg.d_k,
            cfg.lstm_hidden,
            cfg.decoder_input(),
            cfg.mlp_hidden,
        );
        let mut lstm_bias = Tensor::zeros(&[4 * h]);
        lstm_bias.data_mut()[h..2 * h].fill(1.0);
        Ok(Self {
            w_q: glorot(&mut rng, e, dk),
            w_k: glorot(&mut rng, e, dk),
            w_v: glorot(&mut rng, e, dk),
            w_o: glorot(&mut rng, dk, e),
            lstm_w_ih: glorot(&mut rng, x, 4 * h),
            lstm_w_hh: glorot(&mut rng, h, 4 * h),
            lstm_bias,
            mlp_w1: glorot(&mut rng, h, m),
            mlp_b1: Tensor::zeros(&[m]),
            mlp_w2: glorot(&mut rng, m, 3),
            mlp_b2: Tensor::zeros(&[3]),
        })
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        let s = Self::shapes(cfg);
        let z = |i: usize| Tensor::zeros(&s[i]);
        Self {
            w_q: z(0),
            w_k: z(1),
            w_v: z(2),
            w_o: z(3),
            lstm_w_ih: z(4),
            lstm_w_hh: z(5),
            lstm_bias: z(6),
            mlp_w1: z(7),
            mlp_b1: z(8),
            mlp_w2: z(9),
            mlp_b2: z(10),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 11] {
        [
            &self.w_q,
            &self.w_k,
            &self.w_v,
            &self.w_o,
            &self.lstm_w_ih,
            &self.lstm_w_hh,
            &self.lstm_bias,
            &self.mlp_w1,
            &self.mlp_b1,
            &self.mlp_w2,
            &self.mlp_b2,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 11] {
        [
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.w_o,
            &mut self.lstm_w_ih,
            &mut self.lstm_w_hh,
            &mut self.lstm_bias,
            &mut self.mlp_w1,
            &mut self.mlp_b1,
            &mut self.mlp_w2,
            &mut self.mlp_b2,
        ]
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, &Tensor)> {
        PARAM_NAMES.into_iter().zip(self.tensors())
    }

    /// Rebuilds parameters from tensors in [`PARAM_NAMES`] order.
    pub fn from_tensors(cfg: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        let shapes = Self::shapes(cfg);
        if tensors.len() != shapes.len() {
            return Err(Error::Contract(format!("expected 11 parameter tensors, got {}", tensors.len())));
        }
        for ((name, t), shape) in PARAM_NAMES.iter().zip(&tensors).zip(&shapes) {
            if t.shape() != shape.as_slice() {
                return Err(Error::Config(format!(
                    "parameter {name}: shape {:?} does not match model shape {shape:?}",
                    t.shape()
                )));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().unwrap();
        Ok(Self {
            w_q: next(),
            w_k: next(),
            w_v: next(),
            w_o: next(),
            lstm_w_ih: next(),
            lstm_w_hh: next(),
            lstm_bias: next(),
            mlp_w1: next(),
            mlp_b1: next(),
            mlp_w2: next(),
            mlp_b2: next(),
        })
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}
