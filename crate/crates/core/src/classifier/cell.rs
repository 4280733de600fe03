//! Recurrent cells with hand-written backpropagation through time.
//!
//! All parameters live in one flat buffer so the optimizer, serializer and
//! gradient checks can treat them uniformly. For the LSTM the layout is
//! `W` (4H x D, gate order i, f, o, g), `U` (4H x H), `b` (4H), `W_y` (7 x H),
//! `b_y` (7). The vanilla cell uses a single gate block.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::label::NUM_EMOTIONS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    #[default]
    Lstm,
    /// Elman cell, `h' = tanh(W x + U h + b)`.
    Rnn,
}

impl CellKind {
    fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Rnn => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::Rnn => "rnn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub cell: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub data: Vec<f64>,
}

const LSTM_GATES: [&str; 4] = ["i", "f", "o", "g"];

impl LstmParams {
    pub fn zeros(cell: CellKind, input_dim: usize, hidden_dim: usize) -> Self {
        let len = Self::param_count(cell, input_dim, hidden_dim);
        LstmParams { cell, input_dim, hidden_dim, data: vec![0.0; len] }
    }

    /// Uniform(-k, k) initialization with k = 1/sqrt(hidden_dim).
    pub fn init<R: Rng>(cell: CellKind, input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(cell, input_dim, hidden_dim);
        let k = 1.0 / (hidden_dim as f64).sqrt();
        for v in &mut p.data {
            *v = rng.random_range(-k..k);
        }
        p
    }

    pub fn param_count(cell: CellKind, input_dim: usize, hidden_dim: usize) -> usize {
        let g = cell.gates() * hidden_dim;
        g * input_dim + g * hidden_dim + g + NUM_EMOTIONS * hidden_dim + NUM_EMOTIONS
    }

    fn gate_rows(&self) -> usize {
        self.cell.gates() * self.hidden_dim
    }

    pub fn w_range(&self) -> Range<usize> {
        0..self.gate_rows() * self.input_dim
    }

    pub fn u_range(&self) -> Range<usize> {
        let s = self.w_range().end;
        s..s + self.gate_rows() * self.hidden_dim
    }

    pub fn b_range(&self) -> Range<usize> {
        let s = self.u_range().end;
        s..s + self.gate_rows()
    }

    pub fn wy_range(&self) -> Range<usize> {
        let s = self.b_range().end;
        s..s + NUM_EMOTIONS * self.hidden_dim
    }

    pub fn by_range(&self) -> Range<usize> {
        let s = self.wy_range().end;
        s..s + NUM_EMOTIONS
    }

    /// Named parameter tensors as ranges into `data`, one per gate block.
    pub fn tensors(&self) -> Vec<(String, Range<usize>)> {
        let h = self.hidden_dim;
        let mut out = Vec::new();
        let blocks = [("W", self.w_range(), self.input_dim), ("U", self.u_range(), self.hidden_dim), ("b", self.b_range(), 1)];
        for (name, range, cols) in blocks {
            match self.cell {
                CellKind::Lstm => {
                    for (k, gate) in LSTM_GATES.iter().enumerate() {
                        let s = range.start + k * h * cols;
                        out.push((format!("{name}_{gate}"), s..s + h * cols));
                    }
                }
                CellKind::Rnn => out.push((format!("{name}_h"), range)),
            }
        }
        out.push(("W_y".to_string(), self.wy_range()));
        out.push(("b_y".to_string(), self.by_range()));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// rows x cols row-major matrix times vector, accumulated into `out`.
fn matvec_acc(m: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &m[r * cols..(r + 1) * cols];
        out[r] += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Transposed product `m^T v`, accumulated into `out`.
fn matvec_t_acc(m: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let vr = v[r];
        if vr == 0.0 {
            continue;
        }
        let row = &m[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * vr;
        }
    }
}

/// Rank-one update `g += u v^T`.
fn outer_acc(g: &mut [f64], u: &[f64], v: &[f64]) {
    let cols = v.len();
    for (r, &ur) in u.iter().enumerate() {
        if ur == 0.0 {
            continue;
        }
        for (gv, &vv) in g[r * cols..(r + 1) * cols].iter_mut().zip(v) {
            *gv += ur * vv;
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("ShapeMismatch: expected {expected} entries for {what}, got {got}")]
pub struct ShapeMismatch {
    pub what: &'static str,
    pub expected: usize,
    pub got: usize,
}

/// Per-step activations kept for the backward pass.
#[derive(Debug, Clone)]
struct StepCache {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Post-activation gates; for the LSTM `[i, f, o, g]`, for the RNN `[h']`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn step_cached(x: &[f64], h: &[f64], c: &[f64], p: &LstmParams) -> (Vec<f64>, Vec<f64>, StepCache) {
    let hd = p.hidden_dim;
    let rows = p.gate_rows();
    let mut a = p.data[p.b_range()].to_vec();
    matvec_acc(&p.data[p.w_range()], rows, p.input_dim, x, &mut a);
    matvec_acc(&p.data[p.u_range()], rows, hd, h, &mut a);
    match p.cell {
        CellKind::Lstm => {
            for v in &mut a[..3 * hd] {
                *v = sigmoid(*v);
            }
            for v in &mut a[3 * hd..] {
                *v = v.tanh();
            }
            let (i, rest) = a.split_at(hd);
            let (f, rest) = rest.split_at(hd);
            let (o, g) = rest.split_at(hd);
            let c_new: Vec<f64> = (0..hd).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
            let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
            let h_new: Vec<f64> = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
            let cache = StepCache { h_prev: h.to_vec(), c_prev: c.to_vec(), gates: a, tanh_c };
            (h_new, c_new, cache)
        }
        CellKind::Rnn => {
            for v in &mut a {
                *v = v.tanh();
            }
            let cache = StepCache { h_prev: h.to_vec(), c_prev: c.to_vec(), gates: a.clone(), tanh_c: Vec::new() };
            (a, c.to_vec(), cache)
        }
    }
}

/// One recurrent step. For the RNN cell `c` passes through unchanged.
pub fn lstm_step(x: &[f64], h: &[f64], c: &[f64], p: &LstmParams) -> Result<(Vec<f64>, Vec<f64>), ShapeMismatch> {
    check_len("x", p.input_dim, x.len())?;
    check_len("h", p.hidden_dim, h.len())?;
    check_len("c", p.hidden_dim, c.len())?;
    check_len("params", LstmParams::param_count(p.cell, p.input_dim, p.hidden_dim), p.data.len())?;
    let (h, c, _) = step_cached(x, h, c, p);
    Ok((h, c))
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), ShapeMismatch> {
    if expected == got {
        Ok(())
    } else {
        Err(ShapeMismatch { what, expected, got })
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-ln p[label]` with the probability clamped to at least 1e-12.
pub fn cross_entropy(pred: &[f64], label: usize) -> f64 {
    -pred[label].max(1e-12).ln()
}

/// Runs the cell over `inputs` from a zero state and returns the readout logits.
pub fn sequence_logits(p: &LstmParams, inputs: &[&[f64]]) -> Vec<f64> {
    let hd = p.hidden_dim;
    let mut h = vec![0.0; hd];
    let mut c = vec![0.0; hd];
    for x in inputs {
        let (hn, cn, _) = step_cached(x, &h, &c, p);
        h = hn;
        c = cn;
    }
    readout(p, &h)
}

fn readout(p: &LstmParams, h: &[f64]) -> Vec<f64> {
    let mut logits = p.data[p.by_range()].to_vec();
    matvec_acc(&p.data[p.wy_range()], NUM_EMOTIONS, p.hidden_dim, h, &mut logits);
    logits
}

/// Cross-entropy of one sequence and its gradient, accumulated into `grad`
/// (scaled by `weight`). Returns the unscaled loss.
pub fn sequence_loss_grad(p: &LstmParams, inputs: &[&[f64]], label: usize, weight: f64, grad: &mut [f64]) -> f64 {
    let hd = p.hidden_dim;
    let mut h = vec![0.0; hd];
    let mut c = vec![0.0; hd];
    let mut caches = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (hn, cn, cache) = step_cached(x, &h, &c, p);
        caches.push(cache);
        h = hn;
        c = cn;
    }
    let probs = softmax(&readout(p, &h));
    let loss = cross_entropy(&probs, label);

    let mut dlogits = probs;
    dlogits[label] -= 1.0;
    for v in &mut dlogits {
        *v *= weight;
    }
    outer_acc(&mut grad[p.wy_range()], &dlogits, &h);
    for (g, d) in grad[p.by_range()].iter_mut().zip(&dlogits) {
        *g += d;
    }
    let mut dh = vec![0.0; hd];
    matvec_t_acc(&p.data[p.wy_range()], NUM_EMOTIONS, hd, &dlogits, &mut dh);
    let mut dc = vec![0.0; hd];

    let rows = p.gate_rows();
    let (w_r, u_r, b_r) = (p.w_range(), p.u_range(), p.b_range());
    for (x, cache) in inputs.iter().zip(&caches).rev() {
        let mut da = vec![0.0; rows];
        match p.cell {
            CellKind::Lstm => {
                let g = &cache.gates;
                let (i, f, o, gg) = (&g[..hd], &g[hd..2 * hd], &g[2 * hd..3 * hd], &g[3 * hd..]);
                for k in 0..hd {
                    let tc = cache.tanh_c[k];
                    let d_o = dh[k] * tc;
                    dc[k] += dh[k] * o[k] * (1.0 - tc * tc);
                    let d_i = dc[k] * gg[k];
                    let d_g = dc[k] * i[k];
                    let d_f = dc[k] * cache.c_prev[k];
                    da[k] = d_i * i[k] * (1.0 - i[k]);
                    da[hd + k] = d_f * f[k] * (1.0 - f[k]);
                    da[2 * hd + k] = d_o * o[k] * (1.0 - o[k]);
                    da[3 * hd + k] = d_g * (1.0 - gg[k] * gg[k]);
                    dc[k] *= f[k];
                }
            }
            CellKind::Rnn => {
                for k in 0..hd {
                    let hk = cache.gates[k];
                    da[k] = dh[k] * (1.0 - hk * hk);
                }
            }
        }
        outer_acc(&mut grad[w_r.clone()], &da, x);
        outer_acc(&mut grad[u_r.clone()], &da, &cache.h_prev);
        for (g, d) in grad[b_r.clone()].iter_mut().zip(&da) {
            *g += d;
        }
        dh.iter_mut().for_each(|v| *v = 0.0);
        matvec_t_acc(&p.data[u_r.clone()], rows, hd, &da, &mut dh);
    }
    loss
}
