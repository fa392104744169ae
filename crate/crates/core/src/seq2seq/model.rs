//! Encoder-decoder with stacked LSTM cells and bilinear attention.
//!
//! All parameters live in one flat `f64` vector; [`Layout`] names the
//! row-major blocks inside it. The decoder input at step `k` is the target
//! token `k - 1` (the start token for `k = 0`), its initial state is the final
//! encoder state, and the output at each step is
//! `W_out tanh(W_c [ctx; h] + b_c) + b_out` with `ctx` the attention-weighted
//! sum of encoder outputs under scores `h^T W_a e_j`.

use std::ops::Range;

use rand::Rng;

use super::linalg::{affine, axpy, dot, log_softmax, matvec, matvec_t_acc, outer_acc, sigmoid, softmax_in_place};
use super::vocab::{target_sequence, Vocab, TARGET_BOS, TARGET_LEN, TARGET_SIZE};
use super::ModelError;
use crate::env::{Action, LocalView, NUM_ACTIONS};
use crate::seeding::{rng_for, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub source_vocab: usize,
    pub layers: usize,
    pub hidden: usize,
    pub embedding: usize,
}

impl ModelShape {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.source_vocab < 2 || self.layers == 0 || self.hidden == 0 || self.embedding == 0 {
            return Err(ModelError::Shape(format!("degenerate model shape {self:?}")));
        }
        Ok(())
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.embedding
        } else {
            self.hidden
        }
    }
}

/// Offsets of every parameter block. LSTM weights are `4H x (input + H)` with
/// gate rows ordered input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub src_embed: Block,
    pub tgt_embed: Block,
    pub enc: Vec<(Block, Block)>,
    pub dec: Vec<(Block, Block)>,
    pub attn: Block,
    pub combine_w: Block,
    pub combine_b: Block,
    pub out_w: Block,
    pub out_b: Block,
    pub total: usize,
}

impl Layout {
    pub fn new(shape: &ModelShape) -> Self {
        let mut offset = 0;
        let mut block = |rows: usize, cols: usize| {
            let b = Block { offset, rows, cols };
            offset += rows * cols;
            b
        };
        let h = shape.hidden;
        let src_embed = block(shape.source_vocab, shape.embedding);
        let tgt_embed = block(TARGET_SIZE, shape.embedding);
        let enc = (0..shape.layers)
            .map(|l| (block(4 * h, shape.layer_input(l) + h), block(4 * h, 1)))
            .collect();
        let dec = (0..shape.layers)
            .map(|l| (block(4 * h, shape.layer_input(l) + h), block(4 * h, 1)))
            .collect();
        let attn = block(h, h);
        let combine_w = block(h, 2 * h);
        let combine_b = block(h, 1);
        let out_w = block(TARGET_SIZE, h);
        let out_b = block(TARGET_SIZE, 1);
        Layout {
            src_embed,
            tgt_embed,
            enc,
            dec,
            attn,
            combine_w,
            combine_b,
            out_w,
            out_b,
            total: offset,
        }
    }

    /// Every block with a stable name, in storage order.
    pub fn named_blocks(&self) -> Vec<(String, Block)> {
        let mut out = vec![
            ("src_embed".to_string(), self.src_embed),
            ("tgt_embed".to_string(), self.tgt_embed),
        ];
        for (l, (w, b)) in self.enc.iter().enumerate() {
            out.push((format!("enc{l}.w"), *w));
            out.push((format!("enc{l}.b"), *b));
        }
        for (l, (w, b)) in self.dec.iter().enumerate() {
            out.push((format!("dec{l}.w"), *w));
            out.push((format!("dec{l}.b"), *b));
        }
        out.push(("attn.w".to_string(), self.attn));
        out.push(("combine.w".to_string(), self.combine_w));
        out.push(("combine.b".to_string(), self.combine_b));
        out.push(("out.w".to_string(), self.out_w));
        out.push(("out.b".to_string(), self.out_b));
        out
    }
}

/// Activated gates and memory of one LSTM cell application.
#[derive(Debug, Clone, Default)]
struct CellCache {
    xcat: Vec<f64>,
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// One LSTM step. `xcat` and `gates` are scratch buffers that end up holding
/// `[input; h_prev]` and the activated gates.
#[allow(clippy::too_many_arguments)]
fn lstm_forward(
    w: &[f64],
    b: &[f64],
    input: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    xcat: &mut Vec<f64>,
    gates: &mut Vec<f64>,
    c_out: &mut [f64],
    h_out: &mut [f64],
) {
    let hidden = h_prev.len();
    xcat.clear();
    xcat.extend_from_slice(input);
    xcat.extend_from_slice(h_prev);
    gates.resize(4 * hidden, 0.0);
    affine(w, b, xcat, gates);
    for g in &mut gates[..2 * hidden] {
        *g = sigmoid(*g);
    }
    for g in &mut gates[2 * hidden..3 * hidden] {
        *g = g.tanh();
    }
    for g in &mut gates[3 * hidden..] {
        *g = sigmoid(*g);
    }
    for j in 0..hidden {
        let (i, f, g, o) = (gates[j], gates[hidden + j], gates[2 * hidden + j], gates[3 * hidden + j]);
        let c = f * c_prev[j] + i * g;
        c_out[j] = c;
        h_out[j] = o * c.tanh();
    }
}

/// Gradient of one LSTM step. Writes the pre-activation gradient into `dz`,
/// the memory gradient flowing to the previous step into `dc_prev`, and
/// overwrites `dxcat` with `W^T dz`.
fn lstm_backward(
    w: &[f64],
    cache: &CellCache,
    dh: &[f64],
    dc_next: &[f64],
    dz: &mut [f64],
    dc_prev: &mut [f64],
    dxcat: &mut [f64],
) {
    let hidden = dh.len();
    let g = &cache.gates;
    for j in 0..hidden {
        let (i, f, cand, o) = (g[j], g[hidden + j], g[2 * hidden + j], g[3 * hidden + j]);
        let tc = cache.tanh_c[j];
        let dc = dc_next[j] + dh[j] * o * (1.0 - tc * tc);
        dz[j] = dc * cand * i * (1.0 - i);
        dz[hidden + j] = dc * cache.c_prev[j] * f * (1.0 - f);
        dz[2 * hidden + j] = dc * i * (1.0 - cand * cand);
        dz[3 * hidden + j] = dh[j] * tc * o * (1.0 - o);
        dc_prev[j] = dc * f;
    }
    dxcat.fill(0.0);
    matvec_t_acc(w, dz, dxcat);
}

/// Encoder outputs for one source sequence, plus the attention keys
/// `W_a e_j` and the final per-layer states.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub len: usize,
    /// `len x H`, row-major.
    pub outputs: Vec<f64>,
    keys: Vec<f64>,
    /// `layers x H`.
    pub final_h: Vec<f64>,
    pub final_c: Vec<f64>,
}

impl Encoded {
    pub fn output(&self, t: usize) -> &[f64] {
        let h = self.outputs.len() / self.len;
        &self.outputs[t * h..(t + 1) * h]
    }
}

/// Reusable buffers for inference.
#[derive(Debug, Default)]
struct Workspace {
    xcat: Vec<f64>,
    gates: Vec<f64>,
    h_new: Vec<f64>,
    c_new: Vec<f64>,
    alpha: Vec<f64>,
    comb: Vec<f64>,
    attn_h: Vec<f64>,
}

/// Per-step teacher-forced output.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub log_probs: [f64; TARGET_SIZE],
    pub attention: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqModel {
    vocab: Vocab,
    shape: ModelShape,
    layout: Layout,
    params: Vec<f64>,
}

impl Seq2SeqModel {
    /// Uniform initialisation in `[-scale, scale]`, forget-gate biases at 1.
    pub fn new(vocab: Vocab, layers: usize, hidden: usize, embedding: usize, init_scale: f64, seed: u64) -> Result<Self, ModelError> {
        let mut model = Self::zeros(vocab, layers, hidden, embedding)?;
        let mut rng = rng_for(seed, streams::MODEL_INIT, 0);
        if init_scale > 0.0 {
            for p in &mut model.params {
                *p = rng.gen_range(-init_scale..=init_scale);
            }
        }
        let h = hidden;
        for (_, b) in model.layout.enc.iter().chain(&model.layout.dec) {
            model.params[b.offset + h..b.offset + 2 * h].fill(1.0);
        }
        Ok(model)
    }

    pub fn zeros(vocab: Vocab, layers: usize, hidden: usize, embedding: usize) -> Result<Self, ModelError> {
        let shape = ModelShape {
            source_vocab: vocab.source_size(),
            layers,
            hidden,
            embedding,
        };
        shape.validate()?;
        let layout = Layout::new(&shape);
        Ok(Seq2SeqModel {
            params: vec![0.0; layout.total],
            vocab,
            shape,
            layout,
        })
    }

    /// Assembles a model from raw parameters, checking every size.
    pub fn from_parts(vocab: Vocab, shape: ModelShape, params: Vec<f64>) -> Result<Self, ModelError> {
        shape.validate()?;
        if shape.source_vocab != vocab.source_size() {
            return Err(ModelError::Shape(format!(
                "source vocabulary has {} tokens, shape expects {}",
                vocab.source_size(),
                shape.source_vocab
            )));
        }
        let layout = Layout::new(&shape);
        if params.len() != layout.total {
            return Err(ModelError::Shape(format!(
                "expected {} parameters, found {}",
                layout.total,
                params.len()
            )));
        }
        if let Some(bad) = params.iter().find(|p| !p.is_finite()) {
            return Err(ModelError::Shape(format!("non-finite parameter {bad}")));
        }
        Ok(Seq2SeqModel {
            vocab,
            shape,
            layout,
            params,
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn p(&self, b: Block) -> &[f64] {
        &self.params[b.range()]
    }

    fn row(&self, b: Block, r: usize) -> &[f64] {
        &self.params[b.offset + r * b.cols..b.offset + (r + 1) * b.cols]
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Result<Encoded, ModelError> {
        Ok(self.encode_ids(&self.vocab.encode_source(words)?))
    }

    pub fn encode_ids(&self, ids: &[usize]) -> Encoded {
        let (layers, h) = (self.shape.layers, self.shape.hidden);
        let mut ws = Workspace::default();
        let mut hs = vec![0.0; layers * h];
        let mut cs = vec![0.0; layers * h];
        let mut outputs = Vec::with_capacity(ids.len() * h);
        ws.h_new.resize(h, 0.0);
        ws.c_new.resize(h, 0.0);
        for &tok in ids {
            for l in 0..layers {
                let (w, b) = self.layout.enc[l];
                let input: Vec<f64> = if l == 0 {
                    self.row(self.layout.src_embed, tok).to_vec()
                } else {
                    hs[(l - 1) * h..l * h].to_vec()
                };
                lstm_forward(
                    self.p(w),
                    self.p(b),
                    &input,
                    &hs[l * h..(l + 1) * h],
                    &cs[l * h..(l + 1) * h],
                    &mut ws.xcat,
                    &mut ws.gates,
                    &mut ws.c_new,
                    &mut ws.h_new,
                );
                hs[l * h..(l + 1) * h].copy_from_slice(&ws.h_new);
                cs[l * h..(l + 1) * h].copy_from_slice(&ws.c_new);
            }
            outputs.extend_from_slice(&hs[(layers - 1) * h..]);
        }
        let mut keys = vec![0.0; outputs.len()];
        for (e, k) in outputs.chunks_exact(h).zip(keys.chunks_exact_mut(h)) {
            matvec(self.p(self.layout.attn), e, k);
        }
        Encoded {
            len: ids.len(),
            outputs,
            keys,
            final_h: hs,
            final_c: cs,
        }
    }

    /// Advances the decoder one step on `token`; leaves logits in `logits`
    /// and attention weights in `ws.alpha`.
    fn decoder_step(&self, enc: &Encoded, hs: &mut [f64], cs: &mut [f64], token: usize, ws: &mut Workspace, logits: &mut [f64; TARGET_SIZE]) {
        let (layers, h) = (self.shape.layers, self.shape.hidden);
        ws.h_new.resize(h, 0.0);
        ws.c_new.resize(h, 0.0);
        let mut below = self.row(self.layout.tgt_embed, token).to_vec();
        for l in 0..layers {
            let (w, b) = self.layout.dec[l];
            lstm_forward(
                self.p(w),
                self.p(b),
                &below,
                &hs[l * h..(l + 1) * h],
                &cs[l * h..(l + 1) * h],
                &mut ws.xcat,
                &mut ws.gates,
                &mut ws.c_new,
                &mut ws.h_new,
            );
            hs[l * h..(l + 1) * h].copy_from_slice(&ws.h_new);
            cs[l * h..(l + 1) * h].copy_from_slice(&ws.c_new);
            below.clear();
            below.extend_from_slice(&ws.h_new);
        }
        let top = &hs[(layers - 1) * h..];
        ws.alpha.clear();
        ws.alpha.extend(enc.keys.chunks_exact(h).map(|k| dot(top, k)));
        softmax_in_place(&mut ws.alpha);
        ws.comb.clear();
        ws.comb.resize(2 * h, 0.0);
        for (j, &a) in ws.alpha.iter().enumerate() {
            axpy(a, enc.output(j), &mut ws.comb[..h]);
        }
        ws.comb[h..].copy_from_slice(top);
        ws.attn_h.resize(h, 0.0);
        affine(self.p(self.layout.combine_w), self.p(self.layout.combine_b), &ws.comb, &mut ws.attn_h);
        for x in &mut ws.attn_h {
            *x = x.tanh();
        }
        affine(self.p(self.layout.out_w), self.p(self.layout.out_b), &ws.attn_h, logits);
    }

    /// Teacher-forced pass over `targets`: the input at step `k` is the start
    /// token then `targets[k - 1]`. Calls `visit(k, logits, attention)`.
    fn teacher_forced<F: FnMut(usize, &[f64; TARGET_SIZE], &[f64])>(&self, enc: &Encoded, targets: &[usize], mut visit: F) {
        let mut hs = enc.final_h.clone();
        let mut cs = enc.final_c.clone();
        let mut ws = Workspace::default();
        let mut logits = [0.0; TARGET_SIZE];
        let mut input = TARGET_BOS;
        for (k, &t) in targets.iter().enumerate() {
            self.decoder_step(enc, &mut hs, &mut cs, input, &mut ws, &mut logits);
            visit(k, &logits, &ws.alpha);
            input = t;
        }
    }

    pub fn step_outputs(&self, enc: &Encoded, targets: &[usize]) -> Vec<StepOutput> {
        let mut out = Vec::with_capacity(targets.len());
        self.teacher_forced(enc, targets, |_, logits, alpha| {
            let mut log_probs = [0.0; TARGET_SIZE];
            log_softmax(logits, &mut log_probs);
            out.push(StepOutput {
                log_probs,
                attention: alpha.to_vec(),
            });
        });
        out
    }

    /// Sum over steps of the log-softmax probability of each target token.
    pub fn decode_logprob(&self, enc: &Encoded, targets: &[usize]) -> Result<f64, ModelError> {
        if let Some(&bad) = targets.iter().find(|&&t| t >= TARGET_SIZE) {
            return Err(ModelError::UnknownToken(format!("target index {bad}")));
        }
        let mut total = 0.0;
        let mut lp = [0.0; TARGET_SIZE];
        self.teacher_forced(enc, targets, |k, logits, _| {
            log_softmax(logits, &mut lp);
            total += lp[targets[k]];
        });
        Ok(total)
    }

    /// Log probability of reconstructing `view` then `action` from `utterance`.
    pub fn score<S: AsRef<str>>(&self, utterance: &[S], view: &LocalView, action: Action) -> Result<f64, ModelError> {
        let enc = self.encode(utterance)?;
        self.decode_logprob(&enc, &target_sequence(view, action))
    }

    /// Scores of all five actions for one view; the view prefix is decoded
    /// once and shared.
    pub fn score_actions(&self, enc: &Encoded, view: &LocalView) -> [f64; NUM_ACTIONS] {
        let targets = target_sequence(view, Action::Up);
        let mut prefix = 0.0;
        let mut last = [0.0; TARGET_SIZE];
        let mut lp = [0.0; TARGET_SIZE];
        self.teacher_forced(enc, &targets, |k, logits, _| {
            log_softmax(logits, &mut lp);
            if k + 1 < TARGET_LEN {
                prefix += lp[targets[k]];
            } else {
                last = lp;
            }
        });
        std::array::from_fn(|a| prefix + last[super::vocab::action_index(Action::from_index(a))])
    }

    /// Number of target positions whose teacher-forced argmax is correct.
    pub fn correct_tokens(&self, enc: &Encoded, targets: &[usize]) -> usize {
        let mut correct = 0;
        self.teacher_forced(enc, targets, |k, logits, _| {
            if crate::rl::argmax(logits) == targets[k] {
                correct += 1;
            }
        });
        correct
    }

    /// Negative log likelihood of one example (summed over target tokens).
    /// Its gradient, multiplied by `scale`, is accumulated into `grad`.
    pub fn loss_and_grad(&self, src: &[usize], targets: &[usize], scale: f64, grad: &mut [f64]) -> f64 {
        debug_assert_eq!(grad.len(), self.layout.total);
        let (layers, h) = (self.shape.layers, self.shape.hidden);
        let lay = &self.layout;
        let src_len = src.len();
        let tgt_len = targets.len();

        // Encoder forward with caches.
        let mut hs = vec![0.0; layers * h];
        let mut cs = vec![0.0; layers * h];
        let mut enc_cache: Vec<CellCache> = Vec::with_capacity(src_len * layers);
        let mut outputs = Vec::with_capacity(src_len * h);
        let mut h_new = vec![0.0; h];
        let mut c_new = vec![0.0; h];
        for &tok in src {
            for l in 0..layers {
                let (w, b) = lay.enc[l];
                let input: Vec<f64> = if l == 0 {
                    self.row(lay.src_embed, tok).to_vec()
                } else {
                    hs[(l - 1) * h..l * h].to_vec()
                };
                let mut cache = CellCache {
                    c_prev: cs[l * h..(l + 1) * h].to_vec(),
                    ..Default::default()
                };
                lstm_forward(
                    self.p(w),
                    self.p(b),
                    &input,
                    &hs[l * h..(l + 1) * h],
                    &cache.c_prev,
                    &mut cache.xcat,
                    &mut cache.gates,
                    &mut c_new,
                    &mut h_new,
                );
                cache.tanh_c = c_new.iter().map(|c| c.tanh()).collect();
                hs[l * h..(l + 1) * h].copy_from_slice(&h_new);
                cs[l * h..(l + 1) * h].copy_from_slice(&c_new);
                enc_cache.push(cache);
            }
            outputs.extend_from_slice(&hs[(layers - 1) * h..]);
        }
        let mut keys = vec![0.0; outputs.len()];
        for (e, k) in outputs.chunks_exact(h).zip(keys.chunks_exact_mut(h)) {
            matvec(self.p(lay.attn), e, k);
        }

        // Decoder forward with caches.
        let mut dec_cache: Vec<CellCache> = Vec::with_capacity(tgt_len * layers);
        let mut tops = Vec::with_capacity(tgt_len * h);
        let mut alphas = Vec::with_capacity(tgt_len * src_len);
        let mut combs = Vec::with_capacity(tgt_len * 2 * h);
        let mut attn_hs = Vec::with_capacity(tgt_len * h);
        let mut probs = Vec::with_capacity(tgt_len * TARGET_SIZE);
        let mut loss = 0.0;
        let mut input_tok = TARGET_BOS;
        for &target in targets {
            let mut below = self.row(lay.tgt_embed, input_tok).to_vec();
            for l in 0..layers {
                let (w, b) = lay.dec[l];
                let mut cache = CellCache {
                    c_prev: cs[l * h..(l + 1) * h].to_vec(),
                    ..Default::default()
                };
                lstm_forward(
                    self.p(w),
                    self.p(b),
                    &below,
                    &hs[l * h..(l + 1) * h],
                    &cache.c_prev,
                    &mut cache.xcat,
                    &mut cache.gates,
                    &mut c_new,
                    &mut h_new,
                );
                cache.tanh_c = c_new.iter().map(|c| c.tanh()).collect();
                hs[l * h..(l + 1) * h].copy_from_slice(&h_new);
                cs[l * h..(l + 1) * h].copy_from_slice(&c_new);
                below.clear();
                below.extend_from_slice(&h_new);
                dec_cache.push(cache);
            }
            let top = &hs[(layers - 1) * h..];
            tops.extend_from_slice(top);
            let mut alpha: Vec<f64> = keys.chunks_exact(h).map(|k| dot(top, k)).collect();
            softmax_in_place(&mut alpha);
            let mut comb = vec![0.0; 2 * h];
            for (j, &a) in alpha.iter().enumerate() {
                axpy(a, &outputs[j * h..(j + 1) * h], &mut comb[..h]);
            }
            comb[h..].copy_from_slice(top);
            let mut attn_h = vec![0.0; h];
            affine(self.p(lay.combine_w), self.p(lay.combine_b), &comb, &mut attn_h);
            for x in &mut attn_h {
                *x = x.tanh();
            }
            let mut logits = [0.0; TARGET_SIZE];
            affine(self.p(lay.out_w), self.p(lay.out_b), &attn_h, &mut logits);
            let mut lp = [0.0; TARGET_SIZE];
            log_softmax(&logits, &mut lp);
            loss -= lp[target];
            probs.extend(lp.iter().map(|x| x.exp()));
            alphas.extend_from_slice(&alpha);
            combs.extend_from_slice(&comb);
            attn_hs.extend_from_slice(&attn_h);
            input_tok = target;
        }

        // Decoder backward.
        let mut d_outputs = vec![0.0; src_len * h];
        let mut d_keys = vec![0.0; src_len * h];
        let mut dh_carry = vec![0.0; layers * h];
        let mut dc_carry = vec![0.0; layers * h];
        let mut dz = vec![0.0; 4 * h];
        let mut dc_prev = vec![0.0; h];
        let mut dx: Vec<f64> = Vec::new();
        let mut dh = vec![0.0; h];
        for k in (0..tgt_len).rev() {
            let mut dlogits = [0.0; TARGET_SIZE];
            for (v, d) in dlogits.iter_mut().enumerate() {
                *d = scale * probs[k * TARGET_SIZE + v];
            }
            dlogits[targets[k]] -= scale;
            let attn_h = &attn_hs[k * h..(k + 1) * h];
            outer_acc(&mut grad[lay.out_w.range()], &dlogits, attn_h);
            axpy(1.0, &dlogits, &mut grad[lay.out_b.range()]);
            let mut d_attn_h = vec![0.0; h];
            matvec_t_acc(self.p(lay.out_w), &dlogits, &mut d_attn_h);
            for (d, a) in d_attn_h.iter_mut().zip(attn_h) {
                *d *= 1.0 - a * a;
            }
            let comb = &combs[k * 2 * h..(k + 1) * 2 * h];
            outer_acc(&mut grad[lay.combine_w.range()], &d_attn_h, comb);
            axpy(1.0, &d_attn_h, &mut grad[lay.combine_b.range()]);
            let mut d_comb = vec![0.0; 2 * h];
            matvec_t_acc(self.p(lay.combine_w), &d_attn_h, &mut d_comb);
            let (d_ctx, d_top_direct) = d_comb.split_at(h);
            let alpha = &alphas[k * src_len..(k + 1) * src_len];
            let top = &tops[k * h..(k + 1) * h];
            let d_alpha: Vec<f64> = (0..src_len)
                .map(|j| dot(d_ctx, &outputs[j * h..(j + 1) * h]))
                .collect();
            let weighted: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
            let mut d_top = d_top_direct.to_vec();
            for j in 0..src_len {
                axpy(alpha[j], d_ctx, &mut d_outputs[j * h..(j + 1) * h]);
                let ds = alpha[j] * (d_alpha[j] - weighted);
                axpy(ds, &keys[j * h..(j + 1) * h], &mut d_top);
                axpy(ds, top, &mut d_keys[j * h..(j + 1) * h]);
            }
            for l in (0..layers).rev() {
                let (w, b) = lay.dec[l];
                dh.copy_from_slice(&dh_carry[l * h..(l + 1) * h]);
                if l == layers - 1 {
                    axpy(1.0, &d_top, &mut dh);
                } else {
                    axpy(1.0, &dx[..h], &mut dh);
                }
                let cache = &dec_cache[k * layers + l];
                dx.resize(cache.xcat.len(), 0.0);
                lstm_backward(self.p(w), cache, &dh, &dc_carry[l * h..(l + 1) * h], &mut dz, &mut dc_prev, &mut dx);
                outer_acc(&mut grad[w.range()], &dz, &cache.xcat);
                axpy(1.0, &dz, &mut grad[b.range()]);
                let in_len = cache.xcat.len() - h;
                dh_carry[l * h..(l + 1) * h].copy_from_slice(&dx[in_len..]);
                dc_carry[l * h..(l + 1) * h].copy_from_slice(&dc_prev);
                dx.truncate(in_len);
            }
            let tok = if k == 0 { TARGET_BOS } else { targets[k - 1] };
            let emb = lay.tgt_embed;
            axpy(1.0, &dx, &mut grad[emb.offset + tok * emb.cols..emb.offset + (tok + 1) * emb.cols]);
        }

        // Attention keys back to W_a and the encoder outputs.
        for j in 0..src_len {
            let e = &outputs[j * h..(j + 1) * h];
            let dk = &d_keys[j * h..(j + 1) * h];
            outer_acc(&mut grad[lay.attn.range()], dk, e);
            matvec_t_acc(self.p(lay.attn), dk, &mut d_outputs[j * h..(j + 1) * h]);
        }

        // Encoder backward.
        for t in (0..src_len).rev() {
            for l in (0..layers).rev() {
                let (w, b) = lay.enc[l];
                dh.copy_from_slice(&dh_carry[l * h..(l + 1) * h]);
                if l == layers - 1 {
                    axpy(1.0, &d_outputs[t * h..(t + 1) * h], &mut dh);
                } else {
                    axpy(1.0, &dx[..h], &mut dh);
                }
                let cache = &enc_cache[t * layers + l];
                dx.resize(cache.xcat.len(), 0.0);
                lstm_backward(self.p(w), cache, &dh, &dc_carry[l * h..(l + 1) * h], &mut dz, &mut dc_prev, &mut dx);
                outer_acc(&mut grad[w.range()], &dz, &cache.xcat);
                axpy(1.0, &dz, &mut grad[b.range()]);
                let in_len = cache.xcat.len() - h;
                dh_carry[l * h..(l + 1) * h].copy_from_slice(&dx[in_len..]);
                dc_carry[l * h..(l + 1) * h].copy_from_slice(&dc_prev);
                dx.truncate(in_len);
            }
            let emb = lay.src_embed;
            let tok = src[t];
            axpy(1.0, &dx, &mut grad[emb.offset + tok * emb.cols..emb.offset + (tok + 1) * emb.cols]);
        }
        loss
    }
}
