use std::sync::Arc;

use super::ParamVars;
use crate::error::Result;
use crate::numeric::{Graph, Var};

/// Runs a single-layer LSTM over the rows of `H_6` (one subcarrier per step,
/// zero initial state) and maps every hidden state through the shared MLP.
/// Returns the per-subcarrier estimates, `N × 3`.
pub fn decoder_forward(g: &mut Graph<'_>, h6: Var, p: &ParamVars) -> Result<Var> {
    let steps = g.value(h6).rows();
    let hidden = g.value(p.lstm_w_hh).rows();

    // input projections for every step at once; row k depends on row k only
    let xw = g.matmul(h6, p.lstm_w_ih)?;
    let xw = g.add_row_bias(xw, p.lstm_bias)?;

    let block = |b: usize| -> Arc<[usize]> { (b * hidden..(b + 1) * hidden).collect() };
    let (gi, gf, gc, go) = (block(0), block(1), block(2), block(3));

    let mut h: Option<Var> = None;
    let mut c: Option<Var> = None;
    let mut states = Vec::with_capacity(steps);
    for k in 0..steps {
        let x_k = g.select_row(xw, k)?;
        let gates = match h {
            Some(prev) => {
                let rec = g.matmul(prev, p.lstm_w_hh)?;
                g.add(x_k, rec)?
            }
            None => x_k,
        };
        let i = g.gather(gates, gi.clone(), vec![1, hidden])?;
        let f = g.gather(gates, gf.clone(), vec![1, hidden])?;
        let cand = g.gather(gates, gc.clone(), vec![1, hidden])?;
        let o = g.gather(gates, go.clone(), vec![1, hidden])?;
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let cand = g.tanh(cand);
        let o = g.sigmoid(o);

        let written = g.mul(i, cand)?;
        let c_next = match c {
            Some(prev) => {
                let kept = g.mul(f, prev)?;
                g.add(kept, written)?
            }
            None => written,
        };
        let squashed = g.tanh(c_next);
        let h_next = g.mul(o, squashed)?;
        states.push(h_next);
        h = Some(h_next);
        c = Some(c_next);
    }

    let hs = g.concat_rows(&states)?;
    let z = g.matmul(hs, p.mlp_w1)?;
    let z = g.add_row_bias(z, p.mlp_b1)?;
    let z = g.relu(z);
    let out = g.matmul(z, p.mlp_w2)?;
    g.add_row_bias(out, p.mlp_b2)
}
