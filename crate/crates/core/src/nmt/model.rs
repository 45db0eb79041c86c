//! GRU encoder–decoder with bilinear attention and its reverse pass.
//!
//! Encoder: `h_t = GRU_enc(E_src[x_t], h_{t-1})`, `h_0 = 0`.
//! Decoder: `s_0 = h_T`, `s_j = GRU_dec(E_tgt[y_{j-1}], s_{j-1})` with
//! `y_0 = BOS`. Attention scores are `s_jᵀ A h_i`, the context `c_j` is the
//! softmax-weighted sum of encoder states, and the output distribution is
//! `softmax(W_o tanh(W_c [s_j; c_j] + b_c) + b_o)`.
//!
//! GRU cell, gates stacked `[z; r; n]` in `W`, `U` and `b`:
//! `z = σ(W_z x + U_z h + b_z)`, `r = σ(W_r x + U_r h + b_r)`,
//! `n = tanh(W_n x + U_n (r ⊙ h) + b_n)`, `h' = (1 - z) ⊙ n + z ⊙ h`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{axpy, dot, matvec_acc, matvec_t_acc, outer_acc, sigmoid, softmax_in_place, Tensor};
use super::vocab::{Vocab, BOS, EOS, PAD};

pub const INIT_SCALE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Filled in from the training data when a model is built.
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub max_decode_len: usize,
    /// Fraction of the training pairs held out for best-epoch selection.
    pub heldout_fraction: f64,
    /// Global gradient-norm clip per batch; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            embed_dim: 32,
            hidden_dim: 64,
            src_vocab: 0,
            tgt_vocab: 0,
            epochs: 13,
            learning_rate: 0.05,
            batch_size: 16,
            seed: 1,
            max_decode_len: 30,
            heldout_fraction: 0.1,
            clip_norm: None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), String> {
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err("embed_dim and hidden_dim must be positive".into());
        }
        if self.epochs == 0 || self.batch_size == 0 || self.max_decode_len == 0 {
            return Err("epochs, batch_size and max_decode_len must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err("learning_rate must be positive".into());
        }
        if !(0.0..1.0).contains(&self.heldout_fraction) {
            return Err("heldout_fraction must be in [0, 1)".into());
        }
        if self.clip_norm.is_some_and(|c| !(c.is_finite() && c > 0.0)) {
            return Err("clip_norm must be positive".into());
        }
        Ok(())
    }
}

/// All trainable tensors. Field order is the initialization and checkpoint order.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub src_emb: Tensor,
    pub tgt_emb: Tensor,
    pub enc_w: Tensor,
    pub enc_u: Tensor,
    pub enc_b: Tensor,
    pub dec_w: Tensor,
    pub dec_u: Tensor,
    pub dec_b: Tensor,
    pub attn: Tensor,
    pub comb_w: Tensor,
    pub comb_b: Tensor,
    pub out_w: Tensor,
    pub out_b: Tensor,
}

pub const PARAM_NAMES: [&str; 13] = [
    "src_emb", "tgt_emb", "enc_w", "enc_u", "enc_b", "dec_w", "dec_u", "dec_b", "attn", "comb_w", "comb_b", "out_w", "out_b",
];

impl Params {
    pub fn zeros(hp: &Hyperparams) -> Self {
        let (e, h) = (hp.embed_dim, hp.hidden_dim);
        Params {
            src_emb: Tensor::zeros(hp.src_vocab, e),
            tgt_emb: Tensor::zeros(hp.tgt_vocab, e),
            enc_w: Tensor::zeros(3 * h, e),
            enc_u: Tensor::zeros(3 * h, h),
            enc_b: Tensor::zeros(3 * h, 1),
            dec_w: Tensor::zeros(3 * h, e),
            dec_u: Tensor::zeros(3 * h, h),
            dec_b: Tensor::zeros(3 * h, 1),
            attn: Tensor::zeros(h, h),
            comb_w: Tensor::zeros(h, 2 * h),
            comb_b: Tensor::zeros(h, 1),
            out_w: Tensor::zeros(hp.tgt_vocab, h),
            out_b: Tensor::zeros(hp.tgt_vocab, 1),
        }
    }

    /// Uniform(-0.1, 0.1) draws from one seeded stream, tensor by tensor in
    /// field order, row-major within each tensor.
    pub fn init(hp: &Hyperparams) -> Self {
        Self::init_scaled(hp, INIT_SCALE)
    }

    /// Same draw order as [`Params::init`] over `(-scale, scale)`.
    pub fn init_scaled(hp: &Hyperparams, scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let mut p = Params::zeros(hp);
        for t in p.tensors_mut() {
            *t = Tensor::uniform(t.rows, t.cols, scale, &mut rng);
        }
        p
    }

    pub fn tensors(&self) -> [&Tensor; 13] {
        [
            &self.src_emb, &self.tgt_emb, &self.enc_w, &self.enc_u, &self.enc_b, &self.dec_w, &self.dec_u, &self.dec_b,
            &self.attn, &self.comb_w, &self.comb_b, &self.out_w, &self.out_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 13] {
        [
            &mut self.src_emb, &mut self.tgt_emb, &mut self.enc_w, &mut self.enc_u, &mut self.enc_b, &mut self.dec_w,
            &mut self.dec_u, &mut self.dec_b, &mut self.attn, &mut self.comb_w, &mut self.comb_b, &mut self.out_w,
            &mut self.out_b,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.tensors().iter().map(|t| dot(&t.data, &t.data)).sum()
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &Params) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(alpha, &b.data, &mut a.data);
        }
    }
}

/// A trained or freshly initialized translation model.
#[derive(Clone, Debug, PartialEq)]
pub struct Seq2SeqModel {
    pub hp: Hyperparams,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    pub params: Params,
}

struct GruStep {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    h: Vec<f64>,
}

struct DecStep {
    gru: GruStep,
    alpha: Vec<f64>,
    ctx: Vec<f64>,
    o: Vec<f64>,
    probs: Vec<f64>,
}

/// Cached activations of one teacher-forced forward pass.
pub struct ForwardTrace {
    src_ids: Vec<usize>,
    enc: Vec<GruStep>,
    /// `A h_i` per encoder state.
    attn_keys: Vec<Vec<f64>>,
    dec: Vec<DecStep>,
    dec_inputs: Vec<usize>,
    targets: Vec<usize>,
    pub loss: f64,
}

impl ForwardTrace {
    /// Attention weights per decoder step.
    pub fn attention(&self) -> impl Iterator<Item = &[f64]> {
        self.dec.iter().map(|d| d.alpha.as_slice())
    }

    /// Output distribution per decoder step.
    pub fn output_probs(&self) -> impl Iterator<Item = &[f64]> {
        self.dec.iter().map(|d| d.probs.as_slice())
    }
}

fn gru_forward(w: &Tensor, u: &Tensor, b: &Tensor, x: &[f64], h_prev: &[f64]) -> GruStep {
    let hd = h_prev.len();
    let mut z = b.data[..hd].to_vec();
    let mut r = b.data[hd..2 * hd].to_vec();
    let mut n = b.data[2 * hd..].to_vec();
    matvec_acc(w.rows_slice(0, hd), x, &mut z);
    matvec_acc(u.rows_slice(0, hd), h_prev, &mut z);
    matvec_acc(w.rows_slice(hd, hd), x, &mut r);
    matvec_acc(u.rows_slice(hd, hd), h_prev, &mut r);
    z.iter_mut().for_each(|v| *v = sigmoid(*v));
    r.iter_mut().for_each(|v| *v = sigmoid(*v));
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    matvec_acc(w.rows_slice(2 * hd, hd), x, &mut n);
    matvec_acc(u.rows_slice(2 * hd, hd), &rh, &mut n);
    n.iter_mut().for_each(|v| *v = v.tanh());
    let h = (0..hd).map(|i| (1.0 - z[i]) * n[i] + z[i] * h_prev[i]).collect();
    GruStep { x: x.to_vec(), h_prev: h_prev.to_vec(), z, r, n, h }
}

/// Backpropagates `dh` through one GRU step; returns `(dx, dh_prev)`.
fn gru_backward(
    step: &GruStep,
    dh: &[f64],
    u: &Tensor,
    w: &Tensor,
    gw: &mut Tensor,
    gu: &mut Tensor,
    gb: &mut Tensor,
) -> (Vec<f64>, Vec<f64>) {
    let hd = dh.len();
    let GruStep { x, h_prev, z, r, n, .. } = step;
    let mut dh_prev: Vec<f64> = (0..hd).map(|i| dh[i] * z[i]).collect();
    let dan: Vec<f64> = (0..hd).map(|i| dh[i] * (1.0 - z[i]) * (1.0 - n[i] * n[i])).collect();
    let daz: Vec<f64> = (0..hd).map(|i| dh[i] * (h_prev[i] - n[i]) * z[i] * (1.0 - z[i])).collect();
    let rh: Vec<f64> = r.iter().zip(h_prev.iter()).map(|(a, b)| a * b).collect();
    let mut drh = vec![0.0; hd];
    matvec_t_acc(u.rows_slice(2 * hd, hd), &dan, &mut drh);
    let dar: Vec<f64> = (0..hd).map(|i| drh[i] * h_prev[i] * r[i] * (1.0 - r[i])).collect();
    for i in 0..hd {
        dh_prev[i] += drh[i] * r[i];
    }

    let ew = x.len();
    let mut dx = vec![0.0; ew];
    for (gate, da) in [(0, &daz), (1, &dar), (2, &dan)] {
        let (ws, wl) = (gate * hd * ew, (gate + 1) * hd * ew);
        let (us, ul) = (gate * hd * hd, (gate + 1) * hd * hd);
        outer_acc(&mut gw.data[ws..wl], da, x);
        let hin: &[f64] = if gate == 2 { &rh } else { h_prev };
        outer_acc(&mut gu.data[us..ul], da, hin);
        axpy(1.0, da, &mut gb.data[gate * hd..(gate + 1) * hd]);
        matvec_t_acc(&w.data[ws..wl], da, &mut dx);
        if gate != 2 {
            matvec_t_acc(&u.data[us..ul], da, &mut dh_prev);
        }
    }
    (dx, dh_prev)
}

impl Seq2SeqModel {
    /// Builds vocabularies from the training lines and initializes parameters.
    pub fn new<S: AsRef<str>>(mut hp: Hyperparams, src_lines: &[S], tgt_lines: &[S]) -> Self {
        let src_vocab = Vocab::build(src_lines);
        let tgt_vocab = Vocab::build(tgt_lines);
        hp.src_vocab = src_vocab.len();
        hp.tgt_vocab = tgt_vocab.len();
        let params = Params::init(&hp);
        Seq2SeqModel { hp, src_vocab, tgt_vocab, params }
    }

    /// Model over explicit vocabularies with the given parameters.
    pub fn from_parts(mut hp: Hyperparams, src_vocab: Vocab, tgt_vocab: Vocab, params: Option<Params>) -> Self {
        hp.src_vocab = src_vocab.len();
        hp.tgt_vocab = tgt_vocab.len();
        let params = params.unwrap_or_else(|| Params::init(&hp));
        Seq2SeqModel { hp, src_vocab, tgt_vocab, params }
    }

    fn encode(&self, src: &[usize]) -> (Vec<GruStep>, Vec<Vec<f64>>) {
        let p = &self.params;
        let mut h = vec![0.0; self.hp.hidden_dim];
        let mut steps = Vec::with_capacity(src.len());
        for &tok in src {
            let step = gru_forward(&p.enc_w, &p.enc_u, &p.enc_b, p.src_emb.row(tok), &h);
            h.clone_from(&step.h);
            steps.push(step);
        }
        let keys = steps
            .iter()
            .map(|s| {
                let mut k = vec![0.0; self.hp.hidden_dim];
                matvec_acc(&p.attn.data, &s.h, &mut k);
                k
            })
            .collect();
        (steps, keys)
    }

    fn decode_step(&self, enc: &[GruStep], keys: &[Vec<f64>], input: usize, s_prev: &[f64]) -> DecStep {
        let p = &self.params;
        let hd = self.hp.hidden_dim;
        let gru = gru_forward(&p.dec_w, &p.dec_u, &p.dec_b, p.tgt_emb.row(input), s_prev);
        let mut alpha: Vec<f64> = keys.iter().map(|k| dot(&gru.h, k)).collect();
        softmax_in_place(&mut alpha);
        let mut ctx = vec![0.0; hd];
        for (a, e) in alpha.iter().zip(enc) {
            axpy(*a, &e.h, &mut ctx);
        }
        let mut o = p.comb_b.data.clone();
        matvec_acc(&p.comb_w.data, &[gru.h.as_slice(), ctx.as_slice()].concat(), &mut o);
        o.iter_mut().for_each(|v| *v = v.tanh());
        let mut probs = p.out_b.data.clone();
        matvec_acc(&p.out_w.data, &o, &mut probs);
        softmax_in_place(&mut probs);
        DecStep { gru, alpha, ctx, o, probs }
    }

    /// Teacher-forced forward pass over `src` → `tgt` (ids without BOS/EOS).
    pub fn forward(&self, src: &[usize], tgt: &[usize]) -> ForwardTrace {
        assert!(!src.is_empty(), "source sequence must be non-empty");
        let (enc, attn_keys) = self.encode(src);
        let dec_inputs: Vec<usize> = std::iter::once(BOS).chain(tgt.iter().copied()).collect();
        let targets: Vec<usize> = tgt.iter().copied().chain(std::iter::once(EOS)).collect();
        let mut s = enc.last().unwrap().h.clone();
        let mut dec = Vec::with_capacity(dec_inputs.len());
        let mut loss = 0.0;
        for (&inp, &tgt_id) in dec_inputs.iter().zip(&targets) {
            let step = self.decode_step(&enc, &attn_keys, inp, &s);
            loss -= step.probs[tgt_id].ln();
            s.clone_from(&step.gru.h);
            dec.push(step);
        }
        loss /= targets.len() as f64;
        ForwardTrace { src_ids: src.to_vec(), enc, attn_keys, dec, dec_inputs, targets, loss }
    }

    /// Mean per-token cross-entropy.
    pub fn loss(&self, src: &[usize], tgt: &[usize]) -> f64 {
        self.forward(src, tgt).loss
    }

    /// Accumulates `scale · ∂loss/∂θ` into `grads`.
    pub fn backward(&self, trace: &ForwardTrace, scale: f64, grads: &mut Params) {
        let p = &self.params;
        let hd = self.hp.hidden_dim;
        let steps = trace.targets.len() as f64;
        let mut d_enc: Vec<Vec<f64>> = vec![vec![0.0; hd]; trace.enc.len()];
        let mut ds_next = vec![0.0; hd];

        for (j, step) in trace.dec.iter().enumerate().rev() {
            let mut dlogits = step.probs.clone();
            dlogits[trace.targets[j]] -= 1.0;
            dlogits.iter_mut().for_each(|v| *v *= scale / steps);
            outer_acc(&mut grads.out_w.data, &dlogits, &step.o);
            axpy(1.0, &dlogits, &mut grads.out_b.data);
            let mut d_o = vec![0.0; hd];
            matvec_t_acc(&p.out_w.data, &dlogits, &mut d_o);
            let dpre: Vec<f64> = d_o.iter().zip(&step.o).map(|(d, o)| d * (1.0 - o * o)).collect();
            let sc: Vec<f64> = [step.gru.h.as_slice(), step.ctx.as_slice()].concat();
            outer_acc(&mut grads.comb_w.data, &dpre, &sc);
            axpy(1.0, &dpre, &mut grads.comb_b.data);
            let mut dsc = vec![0.0; 2 * hd];
            matvec_t_acc(&p.comb_w.data, &dpre, &mut dsc);
            let (ds_out, dctx) = dsc.split_at(hd);

            // attention
            let dalpha: Vec<f64> = trace.enc.iter().map(|e| dot(dctx, &e.h)).collect();
            let mean: f64 = step.alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
            let dscore: Vec<f64> = step.alpha.iter().zip(&dalpha).map(|(a, d)| a * (d - mean)).collect();
            let mut ds = ds_out.to_vec();
            axpy(1.0, &ds_next, &mut ds);
            let mut weighted_h = vec![0.0; hd];
            for (i, e) in trace.enc.iter().enumerate() {
                axpy(step.alpha[i], dctx, &mut d_enc[i]);
                axpy(dscore[i], &trace.attn_keys[i], &mut ds);
                axpy(dscore[i], &e.h, &mut weighted_h);
            }
            outer_acc(&mut grads.attn.data, &step.gru.h, &weighted_h);
            let mut at_s = vec![0.0; hd];
            matvec_t_acc(&p.attn.data, &step.gru.h, &mut at_s);
            for (i, d) in d_enc.iter_mut().enumerate() {
                axpy(dscore[i], &at_s, d);
            }

            let (dx, dprev) = gru_backward(&step.gru, &ds, &p.dec_u, &p.dec_w, &mut grads.dec_w, &mut grads.dec_u, &mut grads.dec_b);
            axpy(1.0, &dx, grads.tgt_emb.row_mut(trace.dec_inputs[j]));
            ds_next = dprev;
        }

        // s_0 is the last encoder state
        let last = d_enc.len() - 1;
        axpy(1.0, &ds_next, &mut d_enc[last]);
        let mut dh_next = vec![0.0; hd];
        for (t, step) in trace.enc.iter().enumerate().rev() {
            let mut dh = d_enc[t].clone();
            axpy(1.0, &dh_next, &mut dh);
            let (dx, dprev) = gru_backward(step, &dh, &p.enc_u, &p.enc_w, &mut grads.enc_w, &mut grads.enc_u, &mut grads.enc_b);
            axpy(1.0, &dx, grads.src_emb.row_mut(trace.src_ids[t]));
            dh_next = dprev;
        }
    }

    /// Loss and gradient of one example.
    pub fn loss_and_grad(&self, src: &[usize], tgt: &[usize], scale: f64, grads: &mut Params) -> f64 {
        let trace = self.forward(src, tgt);
        self.backward(&trace, scale, grads);
        trace.loss
    }

    /// Greedy decoding until EOS or `max_decode_len` tokens.
    pub fn translate_ids(&self, src: &[usize]) -> Vec<usize> {
        if src.is_empty() {
            return Vec::new();
        }
        let (enc, keys) = self.encode(src);
        let mut s = enc.last().unwrap().h.clone();
        let mut input = BOS;
        let mut out = Vec::new();
        for _ in 0..self.hp.max_decode_len {
            let step = self.decode_step(&enc, &keys, input, &s);
            let next = step
                .probs
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != BOS && *i != PAD)
                .fold((EOS, f64::NEG_INFINITY), |best, (i, &pr)| if pr > best.1 { (i, pr) } else { best })
                .0;
            if next == EOS {
                break;
            }
            out.push(next);
            s = step.gru.h;
            input = next;
        }
        out
    }

    /// Greedy translation of a whitespace-tokenized line.
    pub fn translate(&self, line: &str) -> Vec<String> {
        let ids = self.src_vocab.encode(line);
        self.tgt_vocab.decode(&self.translate_ids(&ids))
    }
}
