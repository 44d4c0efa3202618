//! Mix-attention encoder built on the tape.
//!
//! Each kernel letter owns one head per layer:
//! * absolute heads attend with `(Q + Qᵃ)(K + Kᵃ)ᵀ`, where `Qᵃ`, `Kᵃ` project the
//!   per-token kernel embedding;
//! * relative heads add a second attention term scored by `(q_i + bʳ)·Kʳ_ij`;
//! * the distance head multiplies its logits by Gaussian position weights.
//!
//! Heads are concatenated, projected, and passed through post-norm residual
//! attention and feed-forward sublayers. Attention is causal and never
//! looks at padding; a padded query attends only to itself.

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use crate::config::PositionalKind;
use crate::corpus::{SeqInput, SequenceBatch};
use crate::error::Result;
use crate::kernels::{exp_diff_kernel, fixed_positional, freq_ladder, log1p_diff_kernel, time_diff_matrix, HeadKind, Letter};
use crate::matrix::Matrix;
use crate::model::{HeadExtra, HeadIds, LayerIds, Model, ParamStore};
use crate::rng::Stream;
use crate::tape::{RelKernel, Tape, Var};

/// Binds every parameter as a borrowed tape leaf; the result is indexed by `ParamId`.
pub fn bind<'a>(tape: &mut Tape<'a>, params: &'a ParamStore) -> Vec<Var> {
    params.tensors().iter().map(|m| tape.leaf(m)).collect()
}

/// Row-major `N×N` permission matrix: query `i` may attend key `j` when
/// `j == i`, or `j < i` and both positions are real.
pub fn attention_mask(real: &[bool]) -> Vec<bool> {
    let n = real.len();
    let mut mask = vec![false; n * n];
    for i in 0..n {
        for j in 0..=i {
            mask[i * n + j] = i == j || (real[i] && real[j]);
        }
    }
    mask
}

/// Kernel input consumed by one head.
#[derive(Clone, Debug)]
pub enum HeadInput {
    Absolute(Var),
    Relative(RelKernel),
    Distance(Var),
}

/// Perturbation of the noisy input projection: `ε_w` is `d×d`, `ε_b` is `1×d`.
#[derive(Clone, Debug)]
pub struct NoiseDraw {
    pub eps_w: Matrix,
    pub eps_b: Matrix,
}

/// Inverted-dropout masks, generated on first use and replayed after [`Dropout::rewind`]
/// so a clean and a perturbed pass see identical masks.
pub struct Dropout {
    rate: f64,
    rng: Option<Stream>,
    masks: Vec<Rc<Matrix>>,
    cursor: usize,
}

impl Dropout {
    pub fn disabled() -> Self {
        Self { rate: 0.0, rng: None, masks: Vec::new(), cursor: 0 }
    }

    pub fn new(rate: f64, rng: Stream) -> Self {
        if rate <= 0.0 {
            return Self::disabled();
        }
        Self { rate, rng: Some(rng), masks: Vec::new(), cursor: 0 }
    }

    pub fn rewind(&mut self) {
        self.cursor = 0;
    }

    pub fn apply(&mut self, tape: &mut Tape<'_>, x: Var) -> Var {
        let Some(rng) = self.rng.as_mut() else { return x };
        if self.cursor == self.masks.len() {
            let (r, c) = tape.value(x).shape();
            let keep = 1.0 - self.rate;
            let rate = self.rate;
            let mask = Matrix::from_fn(r, c, |_, _| if rand::Rng::random::<f64>(rng) < rate { 0.0 } else { 1.0 / keep });
            self.masks.push(Rc::new(mask));
        }
        let mask = self.masks[self.cursor].clone();
        self.cursor += 1;
        tape.mul_const(x, mask)
    }
}

/// `softmax_mask(Q Kᵀ / √d_h) V`.
pub fn scaled_dot_attention(tape: &mut Tape<'_>, q: Var, k: Var, v: Var, mask: &Rc<Vec<bool>>) -> (Var, Var) {
    let d_h = tape.value(q).cols() as f64;
    let s = tape.matmul_t(q, k);
    let s = tape.scale(s, 1.0 / libm::sqrt(d_h));
    let p = tape.masked_softmax(s, mask.clone());
    (tape.matmul(p, v), p)
}

struct HeadVars {
    wq: Var,
    wk: Var,
    wv: Var,
}

fn head_vars(vars: &[Var], ids: &HeadIds) -> HeadVars {
    HeadVars { wq: vars[ids.wq.index()], wk: vars[ids.wk.index()], wv: vars[ids.wv.index()] }
}

/// `Attention(Q + Qᵃ, K + Kᵃ, V)` with `Qᵃ = A W_qa`, `Kᵃ = A W_ka`.
pub fn absolute_head(tape: &mut Tape<'_>, x: Var, a: Var, w: [Var; 5], mask: &Rc<Vec<bool>>) -> (Var, Var) {
    let [wq, wk, wv, wqa, wka] = w;
    let q = tape.matmul(x, wq);
    let k = tape.matmul(x, wk);
    let v = tape.matmul(x, wv);
    let qa = tape.matmul(a, wqa);
    let ka = tape.matmul(a, wka);
    let q = tape.add(q, qa);
    let k = tape.add(k, ka);
    scaled_dot_attention(tape, q, k, v, mask)
}

/// `Attention(Q, K, V) + Attention(Q + bʳ, Kʳ, V)` where `Kʳ_ij = R_ij W_r` and the
/// second term's logits are `(q_i + bʳ)·Kʳ_ij / √d_h`.
pub fn relative_head(tape: &mut Tape<'_>, x: Var, r: RelKernel, w: [Var; 5], mask: &Rc<Vec<bool>>) -> (Var, Var) {
    let [wq, wk, wv, wr, br] = w;
    let q = tape.matmul(x, wq);
    let k = tape.matmul(x, wk);
    let v = tape.matmul(x, wv);
    let d_h = tape.value(q).cols() as f64;
    let (term1, p1) = scaled_dot_attention(tape, q, k, v, mask);
    let qb = tape.add_row(q, br);
    let u = tape.matmul_t(qb, wr);
    let s = tape.rel_scores(u, r);
    let s = tape.scale(s, 1.0 / libm::sqrt(d_h));
    let p2 = tape.masked_softmax(s, mask.clone());
    let term2 = tape.matmul(p2, v);
    (tape.add(term1, term2), p1)
}

/// `softmax_mask(G ∘ (Q Kᵀ / √d_h)) V`.
pub fn distance_head(tape: &mut Tape<'_>, x: Var, g: Var, w: [Var; 3], mask: &Rc<Vec<bool>>) -> (Var, Var) {
    let [wq, wk, wv] = w;
    let q = tape.matmul(x, wq);
    let k = tape.matmul(x, wk);
    let v = tape.matmul(x, wv);
    let d_h = tape.value(q).cols() as f64;
    let s = tape.matmul_t(q, k);
    let s = tape.scale(s, 1.0 / libm::sqrt(d_h));
    let s = tape.mul(g, s);
    let p = tape.masked_softmax(s, mask.clone());
    (tape.matmul(p, v), p)
}

/// Output of one sequence's pass.
pub struct Encoded {
    pub hidden: Var,
    pub taps: Vec<Var>,
    /// `[layer][head]` attention weights (first term for relative heads).
    pub attention: Vec<Vec<Var>>,
}

impl Model {
    /// Per-head kernel inputs for one sequence; shared by every layer and both passes.
    pub fn kernel_inputs(&self, tape: &mut Tape<'_>, vars: &[Var], seq: &SeqInput) -> Result<Vec<HeadInput>> {
        let n = seq.len();
        let d_h = self.config.head_dim;
        let kc = &self.config.kernels;
        let lay = &self.layout;
        let mut diffs: Option<Rc<Matrix>> = None;
        let mut diff_matrix = || diffs.get_or_insert_with(|| Rc::new(time_diff_matrix(&seq.times, kc.tau_secs))).clone();
        let mut out = Vec::new();
        for kind in self.mode.heads() {
            let input = match kind {
                HeadKind::Absolute(Letter::P) => match (kc.positional, lay.positional) {
                    (PositionalKind::Learnable, Some(id)) => {
                        if n > self.params.get(id).rows() {
                            return Err(crate::error::Error::Bounds(alloc::format!("sequence of {n} exceeds positional table")));
                        }
                        HeadInput::Absolute(tape.gather(vars[id.index()], (0..n).collect()))
                    }
                    _ => HeadInput::Absolute(tape.constant(fixed_positional(n, d_h))),
                },
                HeadKind::Absolute(Letter::B) => {
                    let (freq, phase) = lay.bochner.as_ref().expect("bochner params");
                    let t: Vec<f64> = seq.times.iter().map(|t| (t - self.config.t_min) as f64 / kc.tau_secs).collect();
                    HeadInput::Absolute(tape.periodic(vars[freq.index()], vars[phase.index()], Rc::new(t)))
                }
                HeadKind::Absolute(_) => {
                    let ids = lay.calendar.as_ref().expect("calendar params");
                    let idx = kc.calendar.indices(&seq.times)?;
                    let mut parts = Vec::with_capacity(idx.len());
                    for (u, rows) in idx.into_iter().enumerate() {
                        let e = tape.gather(vars[ids.tables[u].index()], rows);
                        let e = tape.scale_by(e, vars[ids.scales[u].index()]);
                        parts.push(tape.add_row(e, vars[ids.biases[u].index()]));
                    }
                    HeadInput::Absolute(tape.concat_cols(parts))
                }
                HeadKind::Relative(Letter::S) => {
                    let (freq, phase) = lay.sinusoid.as_ref().expect("sinusoid params");
                    HeadInput::Relative(RelKernel::Sinusoid { freq: vars[freq.index()], phase: vars[phase.index()], diffs: diff_matrix() })
                }
                HeadKind::Relative(Letter::E) => {
                    HeadInput::Relative(RelKernel::Fixed(Rc::new(exp_diff_kernel(&diff_matrix(), &freq_ladder(d_h, kc.freq_base)))))
                }
                HeadKind::Relative(_) => {
                    HeadInput::Relative(RelKernel::Fixed(Rc::new(log1p_diff_kernel(&diff_matrix(), &freq_ladder(d_h, kc.freq_base)))))
                }
                HeadKind::Distance => {
                    let (mu, raw) = lay.gaussian.as_ref().expect("gaussian params");
                    HeadInput::Distance(tape.gaussian(vars[mu.index()], vars[raw.index()], n))
                }
            };
            out.push(input);
        }
        Ok(out)
    }

    /// Item lookup followed by the noisy projection (noise-free when `noise` is `None`).
    pub fn embed(&self, tape: &mut Tape<'_>, vars: &[Var], seq: &SeqInput, noise: Option<&NoiseDraw>) -> Var {
        let ids = &self.layout.noisy;
        let e = tape.gather(vars[self.layout.item_emb.index()], seq.items.iter().map(|i| *i as usize).collect());
        let (mu_w, mu_b) = (vars[ids.mu_w.index()], vars[ids.mu_b.index()]);
        match noise {
            None => {
                let x = tape.matmul(e, mu_w);
                tape.add_row(x, mu_b)
            }
            Some(draw) => {
                let sw = tape.abs(vars[ids.sigma_w.index()]);
                let sw = tape.mul_const(sw, Rc::new(draw.eps_w.clone()));
                let w = tape.add(mu_w, sw);
                let sb = tape.abs(vars[ids.sigma_b.index()]);
                let sb = tape.mul_const(sb, Rc::new(draw.eps_b.clone()));
                let b = tape.add(mu_b, sb);
                let x = tape.matmul(e, w);
                tape.add_row(x, b)
            }
        }
    }

    pub fn layer(
        &self,
        tape: &mut Tape<'_>,
        vars: &[Var],
        ids: &LayerIds,
        x: Var,
        inputs: &[HeadInput],
        mask: &Rc<Vec<bool>>,
        dropout: &mut Dropout,
    ) -> (Var, Vec<Var>) {
        let mut outs = Vec::with_capacity(ids.heads.len());
        let mut maps = Vec::with_capacity(ids.heads.len());
        for (h, input) in ids.heads.iter().zip(inputs) {
            let hv = head_vars(vars, h);
            let (o, p) = match (&h.extra, input) {
                (HeadExtra::Absolute { wqa, wka }, HeadInput::Absolute(a)) => {
                    absolute_head(tape, x, *a, [hv.wq, hv.wk, hv.wv, vars[wqa.index()], vars[wka.index()]], mask)
                }
                (HeadExtra::Relative { wr, br }, HeadInput::Relative(r)) => {
                    relative_head(tape, x, r.clone(), [hv.wq, hv.wk, hv.wv, vars[wr.index()], vars[br.index()]], mask)
                }
                (HeadExtra::Distance, HeadInput::Distance(g)) => distance_head(tape, x, *g, [hv.wq, hv.wk, hv.wv], mask),
                _ => unreachable!("head inputs are built from the same mode as the layout"),
            };
            outs.push(o);
            maps.push(p);
        }
        let cat = if outs.len() == 1 { outs[0] } else { tape.concat_cols(outs) };
        let a = tape.matmul(cat, vars[ids.wo.index()]);
        let a = tape.add_row(a, vars[ids.bo.index()]);
        let a = dropout.apply(tape, a);
        let y = tape.add(x, a);
        let y = tape.layer_norm(y, vars[ids.ln1_gain.index()], vars[ids.ln1_bias.index()]);

        let f = tape.matmul(y, vars[ids.w1.index()]);
        let f = tape.add_row(f, vars[ids.b1.index()]);
        let f = tape.gelu(f);
        let f = tape.matmul(f, vars[ids.w2.index()]);
        let f = tape.add_row(f, vars[ids.b2.index()]);
        let f = dropout.apply(tape, f);
        let z = tape.add(y, f);
        (tape.layer_norm(z, vars[ids.ln2_gain.index()], vars[ids.ln2_bias.index()]), maps)
    }

    /// Full stack for one sequence; `noise_input` (`N×d`) is added after the input projection.
    #[allow(clippy::too_many_arguments)]
    pub fn encode(
        &self,
        tape: &mut Tape<'_>,
        vars: &[Var],
        seq: &SeqInput,
        inputs: &[HeadInput],
        mask: &Rc<Vec<bool>>,
        noise: Option<&NoiseDraw>,
        noise_input: Option<Rc<Matrix>>,
        dropout: &mut Dropout,
    ) -> Encoded {
        let mut x = self.embed(tape, vars, seq, noise);
        if let Some(extra) = noise_input {
            let c = tape.constant((*extra).clone());
            x = tape.add(x, c);
        }
        x = dropout.apply(tape, x);
        let mut taps = Vec::with_capacity(self.layout.layers.len());
        let mut attention = Vec::with_capacity(self.layout.layers.len());
        for ids in &self.layout.layers {
            let (y, maps) = self.layer(tape, vars, ids, x, inputs, mask, dropout);
            taps.push(y);
            attention.push(maps);
            x = y;
        }
        Encoded { hidden: x, taps, attention }
    }

    /// Deterministic (no noise, no dropout) final hidden states for one sequence.
    pub fn hidden_states(&self, seq: &SeqInput) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = bind(&mut tape, &self.params);
        let inputs = self.kernel_inputs(&mut tape, &vars, seq)?;
        let mask = Rc::new(attention_mask(&seq.real));
        let enc = self.encode(&mut tape, &vars, seq, &inputs, &mask, None, None, &mut Dropout::disabled());
        Ok(tape.value(enc.hidden).clone())
    }
}

/// Batched encoder output; `layer_taps` is indexed `[layer][row]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    pub hidden: Vec<Matrix>,
    pub layer_taps: Vec<Vec<Matrix>>,
    pub attention_maps: Vec<Vec<Vec<Matrix>>>,
}

/// Deterministic forward pass over a batch; `noise_input[row]` (`N×d`) perturbs the embedded input.
pub fn encoder_forward(model: &Model, batch: &SequenceBatch, noise_input: Option<&[Matrix]>) -> Result<EncoderOutput> {
    let layers = model.layout.layers.len();
    let mut out = EncoderOutput { hidden: Vec::new(), layer_taps: vec![Vec::new(); layers], attention_maps: Vec::new() };
    for b in 0..batch.batch_size {
        let seq = batch.row(b);
        let mut tape = Tape::new();
        let vars = bind(&mut tape, &model.params);
        let inputs = model.kernel_inputs(&mut tape, &vars, &seq)?;
        let mask = Rc::new(attention_mask(&seq.real));
        let extra = noise_input.map(|n| Rc::new(n[b].clone()));
        let enc = model.encode(&mut tape, &vars, &seq, &inputs, &mask, None, extra, &mut Dropout::disabled());
        out.hidden.push(tape.value(enc.hidden).clone());
        for (l, t) in enc.taps.iter().enumerate() {
            out.layer_taps[l].push(tape.value(*t).clone());
        }
        out.attention_maps.push(enc.attention.iter().map(|layer| layer.iter().map(|p| tape.value(*p).clone()).collect()).collect());
    }
    Ok(out)
}

/// `logits[n][v] = hidden[n] · item_table[v]`, with the padding item pinned to `-∞`.
pub fn predict_scores(hidden: &Matrix, item_table: &Matrix) -> Matrix {
    let mut logits = hidden.matmul_t(item_table);
    for r in 0..logits.rows() {
        logits.row_mut(r)[0] = f64::NEG_INFINITY;
    }
    logits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrainConfig;
    use crate::corpus::Event;
    use crate::model::ModelConfig;
    use rand::Rng;

    fn model(mode: &str, d: usize, head_dim: Option<usize>) -> Model {
        let cfg = TrainConfig { mode: mode.into(), d_model: d, head_dim, layers: 2, d_ff: 16, max_len: 6, ..TrainConfig::default() };
        Model::new(ModelConfig::from_train(&cfg, 12, 1_400_000_000).unwrap(), 4).unwrap()
    }

    fn seq(items: &[u32]) -> SeqInput {
        let ev: Vec<Event> = items.iter().enumerate().map(|(k, &i)| Event { item: i, timestamp: 1_400_000_000 + k as i64 * 5000 + (i as i64) * 77 }).collect();
        SeqInput::from_events(&ev, 6)
    }

    fn rand_matrix(r: usize, c: usize, seed: u64) -> Matrix {
        let mut rng = crate::rng::stream(seed, crate::rng::Purpose::Synthetic, 0, 0);
        Matrix::from_fn(r, c, |_, _| rng.random::<f64>() - 0.5)
    }

    const MODES: [&str; 4] = ["p-b-s-l-r-o", "p", "t-e-r", "p-b-s-l"];

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::new();
        let q = tape.constant(Matrix::zeros(3, 2));
        let v = tape.constant(Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 9.0]));
        let mask = Rc::new(attention_mask(&[true, true, true]));
        let (o, p) = scaled_dot_attention(&mut tape, q, q, v, &mask);
        assert_eq!(tape.value(o).row(0), &[1.0, 2.0]);
        assert!((tape.value(o).get(2, 1) - 5.0).abs() < 1e-12);
        assert!((tape.value(p).get(1, 0) - 0.5).abs() < 1e-15);

        let s = tape.constant(Matrix::from_vec(1, 2, vec![0.0, libm::log(3.0)]));
        let w = tape.masked_softmax(s, Rc::new(vec![true, true]));
        assert!((tape.value(w).get(0, 0) - 0.25).abs() < 1e-15);
        assert!((tape.value(w).get(0, 1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn mask_is_causal_and_self_allowed() {
        let real = [false, true, false, true];
        let m = attention_mask(&real);
        for i in 0..4 {
            assert!(m[i * 4 + i]);
            for j in 0..4 {
                if j > i || (j != i && (!real[i] || !real[j])) {
                    assert!(!m[i * 4 + j]);
                }
            }
        }
        assert!(m[3 * 4 + 1]);
    }

    #[test]
    fn head_reductions() {
        let x = rand_matrix(5, 8, 1);
        let ws: Vec<Matrix> = (0..5).map(|k| rand_matrix(if k < 3 { 8 } else { 4 }, 4, 10 + k)).collect();
        let mask = Rc::new(attention_mask(&[false, true, true, true, true]));
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let w: Vec<Var> = ws.iter().map(|m| tape.leaf(m)).collect();
        let q = tape.matmul(xv, w[0]);
        let k = tape.matmul(xv, w[1]);
        let v = tape.matmul(xv, w[2]);
        let (plain, _) = scaled_dot_attention(&mut tape, q, k, v, &mask);
        let zero = tape.constant(Matrix::zeros(5, 4));
        let (abs, _) = absolute_head(&mut tape, xv, zero, [w[0], w[1], w[2], w[3], w[4]], &mask);
        assert_eq!(tape.value(abs), tape.value(plain));
        let ones = tape.constant(Matrix::filled(5, 5, 1.0));
        let (dist, _) = distance_head(&mut tape, xv, ones, [w[0], w[1], w[2]], &mask);
        assert_eq!(tape.value(dist), tape.value(plain));
        let g = tape.constant(crate::kernels::gaussian_weights(5, 0.0, 1e6));
        let (wide, _) = distance_head(&mut tape, xv, g, [w[0], w[1], w[2]], &mask);
        assert!(tape.value(wide).max_abs_diff(tape.value(plain)) < 1e-6);

        // Zero input with a non-zero kernel embedding: values are zero.
        let zx = tape.constant(Matrix::zeros(5, 8));
        let a = tape.constant(rand_matrix(5, 4, 3));
        let (o, _) = absolute_head(&mut tape, zx, a, [w[0], w[1], w[2], w[3], w[4]], &mask);
        assert!(tape.value(o).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn relative_head_examples() {
        let x = rand_matrix(4, 8, 2);
        let ws: Vec<Matrix> = (0..3).map(|k| rand_matrix(8, 4, 20 + k)).collect();
        let all = Rc::new(attention_mask(&[true; 4]));
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let w: Vec<Var> = ws.iter().map(|m| tape.leaf(m)).collect();
        let wr = tape.constant(Matrix::zeros(4, 4));
        let br = tape.constant(Matrix::zeros(1, 4));
        let r = RelKernel::Fixed(Rc::new(crate::matrix::Tensor3::zeros(4, 4, 4)));
        let (out, _) = relative_head(&mut tape, xv, r.clone(), [w[0], w[1], w[2], wr, br], &all);
        let q = tape.matmul(xv, w[0]);
        let k = tape.matmul(xv, w[1]);
        let v = tape.matmul(xv, w[2]);
        let (t1, _) = scaled_dot_attention(&mut tape, q, k, v, &all);
        let vv = tape.value(v).clone();
        for i in 0..4 {
            for c in 0..4 {
                let mean = (0..=i).map(|j| vv.get(j, c)).sum::<f64>() / (i + 1) as f64;
                assert!((tape.value(out).get(i, c) - tape.value(t1).get(i, c) - mean).abs() < 1e-12);
            }
        }
        let own = Rc::new(attention_mask(&[false; 4]));
        let (selfish, _) = relative_head(&mut tape, xv, r, [w[0], w[1], w[2], wr, br], &own);
        for i in 0..4 {
            for c in 0..4 {
                assert!((tape.value(selfish).get(i, c) - 2.0 * vv.get(i, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn causality_is_exact() {
        for mode in MODES {
            let m = model(mode, 12, Some(4));
            let base = seq(&[3, 5, 7, 2, 9, 4]);
            let h0 = m.hidden_states(&base).unwrap();
            for j in 1..6 {
                let mut changed = base.clone();
                changed.items[j] = 11;
                changed.times[j] += 86_400 * 3;
                for later in j + 1..6 {
                    changed.times[later] += 86_400 * 3;
                }
                let h1 = m.hidden_states(&changed).unwrap();
                for i in 0..j {
                    assert_eq!(h0.row(i), h1.row(i), "mode {mode}: position {i} saw {j}");
                }
            }
        }
    }

    #[test]
    fn padding_is_invisible() {
        for mode in MODES {
            let mut m = model(mode, 12, Some(4));
            let base = seq(&[3, 5, 7]);
            let h0 = m.hidden_states(&base).unwrap();
            let mut other = base.clone();
            other.items[1] = 6;
            other.times[0] -= 999_999;
            let h1 = m.hidden_states(&other).unwrap();
            let id = m.layout.item_emb;
            let t = &mut m.params.tensors_mut()[id.index()];
            for c in 0..t.cols() {
                t.set(0, c, 3.0 + c as f64);
            }
            let h2 = m.hidden_states(&base).unwrap();
            for i in 3..6 {
                assert_eq!(h0.row(i), h1.row(i), "mode {mode}");
                assert_eq!(h0.row(i), h2.row(i), "mode {mode}");
            }
        }
    }

    #[test]
    fn attention_rows_normalized_and_shapes() {
        let m = model("p-b-s-l-r", 10, Some(2));
        let ev: Vec<Event> = (1..=7).map(|i| Event { item: i, timestamp: 1_400_000_000 + i as i64 * 4000 }).collect();
        let batch = SequenceBatch::from_rows(&[(1, &ev[..])], 6);
        let out = encoder_forward(&m, &batch, None).unwrap();
        assert_eq!(out.layer_taps.len(), 2);
        assert_eq!(out.hidden[0].shape(), (6, 10));
        for layer in &out.attention_maps[0] {
            assert_eq!(layer.len(), 5);
            for p in layer {
                for r in 0..p.rows() {
                    assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-6);
                }
            }
        }
        let zero: Vec<Matrix> = vec![Matrix::zeros(6, 10)];
        assert_eq!(encoder_forward(&m, &batch, Some(&zero)).unwrap(), out);
        assert_eq!(encoder_forward(&m, &batch, None).unwrap(), out);
    }

    #[test]
    fn readout() {
        let table = Matrix::from_fn(4, 3, |r, c| if r == c + 1 { 1.0 } else { 0.0 });
        let h = Matrix::from_vec(2, 3, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let s = predict_scores(&h, &table);
        assert_eq!(s.shape(), (2, 4));
        assert_eq!(s.get(0, 0), f64::NEG_INFINITY);
        assert_eq!(s.row(0)[1..], [0.0, 1.0, 0.0]);
        assert_eq!(s.row(1)[1..], [0.0, 0.0, 0.0]);
    }

}
