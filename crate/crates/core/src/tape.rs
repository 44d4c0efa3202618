//! Matrix-valued reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of one forward pass. Leaves either borrow
//! an existing parameter matrix or own a constant; [`Tape::backward`] walks the
//! record in reverse and returns the adjoint of every leaf.
//!
//! Operations are coarse: masked softmax, layer norm and the relative-kernel
//! score contraction are single nodes with hand-written adjoints, which keeps
//! the tape short for attention-sized graphs.

use alloc::borrow::Cow;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::{gemm, Matrix, Tensor3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pairwise kernel contracted against per-query vectors by [`Tape::rel_scores`].
#[derive(Clone, Debug)]
pub enum RelKernel {
    /// Precomputed `N×N×c` tensor without learnable parameters.
    Fixed(Rc<Tensor3>),
    /// `[cos(w_h d_ij + b_h), sin(w_h d_ij + b_h)]` channel pairs evaluated on the fly.
    Sinusoid { freq: Var, phase: Var, diffs: Rc<Matrix> },
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    ScaleBy(Var, Var),
    Scale(Var, f64),
    Abs(Var),
    MulConst(Var, Rc<Matrix>),
    Gather(Var, Vec<usize>),
    Concat(Vec<Var>),
    MaskedSoftmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Matrix, rstd: Vec<f64> },
    Gelu(Var),
    Periodic { freq: Var, phase: Var, t: Rc<Vec<f64>> },
    RelScores { u: Var, kernel: RelKernel },
    Gaussian { mu: Var, sigma_raw: Var },
    CrossEntropy { logits: Var, targets: Vec<usize>, scale: f64, probs: Matrix },
    SumSquares { x: Var, scale: f64 },
}

struct Node<'a> {
    value: Cow<'a, Matrix>,
    op: Op,
}

pub const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Adjoints produced by [`Tape::backward`]; only leaves are retained.
pub struct Grads {
    grads: Vec<Option<Matrix>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn gelu_parts(x: f64) -> (f64, f64) {
    const K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const C: f64 = 0.044_715;
    let inner = K * (x + C * x * x * x);
    let t = libm::tanh(inner);
    let y = 0.5 * x * (1.0 + t);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * K * (1.0 + 3.0 * C * x * x);
    (y, dy)
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        libm::log1p(libm::exp(x))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Inverse of [`softplus`] for positive `y`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        libm::log(libm::expm1(y))
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value: Cow::Owned(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Leaf that borrows `m` for the lifetime of the tape.
    pub fn leaf(&mut self, m: &'a Matrix) -> Var {
        self.nodes.push(Node { value: Cow::Borrowed(m), op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul_t(self.value(b));
        self.push(out, Op::MatMulT(a, b))
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "elementwise shape mismatch");
        Matrix::from_vec(x.rows(), x.cols(), x.data().iter().zip(y.data()).map(|(p, q)| f(*p, *q)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |p, q| p + q);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |p, q| p - q);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |p, q| p * q);
        self.push(out, Op::Mul(a, b))
    }

    /// Adds the `1×c` row vector `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!(r.shape(), (1, x.cols()), "broadcast row shape mismatch");
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    /// Multiplies `a` by the `1×1` variable `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let factor = self.value(s).item();
        let mut out = self.value(a).clone();
        out.scale_in_place(factor);
        self.push(out, Op::ScaleBy(a, s))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let mut out = self.value(a).clone();
        out.scale_in_place(factor);
        self.push(out, Op::Scale(a, factor))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let out = Matrix::from_vec(x.rows(), x.cols(), x.data().iter().map(|v| libm::fabs(*v)).collect());
        self.push(out, Op::Abs(a))
    }

    /// Elementwise product with a constant (dropout masks, noise draws).
    pub fn mul_const(&mut self, a: Var, c: Rc<Matrix>) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape(), c.shape(), "constant mask shape mismatch");
        let out = Matrix::from_vec(x.rows(), x.cols(), x.data().iter().zip(c.data()).map(|(p, q)| p * q).collect());
        self.push(out, Op::MulConst(a, c))
    }

    /// Row lookup: output row `r` is row `idx[r]` of `table`.
    pub fn gather(&mut self, table: Var, idx: Vec<usize>) -> Var {
        let t = self.value(table);
        let mut out = Matrix::zeros(idx.len(), t.cols());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(i));
        }
        self.push(out, Op::Gather(table, idx))
    }

    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for p in &parts {
            let m = self.value(*p);
            assert_eq!(m.rows(), rows, "concat row mismatch");
            for r in 0..rows {
                out.row_mut(r)[offset..offset + m.cols()].copy_from_slice(m.row(r));
            }
            offset += m.cols();
        }
        self.push(out, Op::Concat(parts))
    }

    /// Row-wise softmax restricted to entries where `mask` is true.
    ///
    /// Every row must allow at least one entry; disallowed entries get weight 0.
    pub fn masked_softmax(&mut self, a: Var, mask: Rc<Vec<bool>>) -> Var {
        let x = self.value(a);
        assert_eq!(mask.len(), x.len(), "softmax mask shape mismatch");
        let cols = x.cols();
        let mut out = Matrix::zeros(x.rows(), cols);
        for r in 0..x.rows() {
            let allowed = &mask[r * cols..(r + 1) * cols];
            let row = x.row(r);
            let max = row
                .iter()
                .zip(allowed)
                .filter(|(_, ok)| **ok)
                .map(|(v, _)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(max.is_finite() || max == f64::INFINITY, "softmax row {r} has no allowed entries");
            let o = out.row_mut(r);
            let mut total = 0.0;
            for c in 0..cols {
                if allowed[c] {
                    let e = libm::exp(row[c] - max);
                    o[c] = e;
                    total += e;
                }
            }
            o.iter_mut().for_each(|v| *v /= total);
        }
        self.push(out, Op::MaskedSoftmax(a))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xm = self.value(x);
        let (g, b) = (self.value(gain), self.value(bias));
        let cols = xm.cols();
        let mut xhat = Matrix::zeros(xm.rows(), cols);
        let mut rstd = Vec::with_capacity(xm.rows());
        let mut out = Matrix::zeros(xm.rows(), cols);
        for r in 0..xm.rows() {
            let row = xm.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let s = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
            rstd.push(s);
            for c in 0..cols {
                let h = (row[c] - mean) * s;
                xhat.set(r, c, h);
                out.set(r, c, h * g.data()[c] + b.data()[c]);
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, rstd })
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let out = Matrix::from_vec(x.rows(), x.cols(), x.data().iter().map(|v| gelu_parts(*v).0).collect());
        self.push(out, Op::Gelu(a))
    }

    /// `N×2m` matrix of `[cos(w_i t_n + b_i), sin(w_i t_n + b_i)]` channel pairs.
    pub fn periodic(&mut self, freq: Var, phase: Var, t: Rc<Vec<f64>>) -> Var {
        let (w, b) = (self.value(freq), self.value(phase));
        let m = w.len();
        let mut out = Matrix::zeros(t.len(), 2 * m);
        for (n, tn) in t.iter().enumerate() {
            let row = out.row_mut(n);
            for i in 0..m {
                let arg = w.data()[i] * tn + b.data()[i];
                row[2 * i] = libm::cos(arg);
                row[2 * i + 1] = libm::sin(arg);
            }
        }
        self.push(out, Op::Periodic { freq, phase, t })
    }

    /// `s_ij = Σ_c u_ic · R_ijc` for a pairwise kernel `R`.
    pub fn rel_scores(&mut self, u: Var, kernel: RelKernel) -> Var {
        let um = self.value(u);
        let n = um.rows();
        let c = um.cols();
        let mut out = Matrix::zeros(n, n);
        match &kernel {
            RelKernel::Fixed(t) => {
                assert_eq!((t.n0, t.n1, t.channels), (n, n, c), "relative kernel shape mismatch");
                for i in 0..n {
                    let ui = um.row(i);
                    for j in 0..n {
                        out.set(i, j, ui.iter().zip(t.at(i, j)).map(|(a, b)| a * b).sum());
                    }
                }
            }
            RelKernel::Sinusoid { freq, phase, diffs } => {
                let (w, b) = (self.value(*freq), self.value(*phase));
                assert_eq!(2 * w.len(), c, "sinusoid kernel width mismatch");
                for i in 0..n {
                    let ui = um.row(i);
                    for j in 0..n {
                        let d = diffs.get(i, j);
                        let mut s = 0.0;
                        for h in 0..w.len() {
                            let arg = w.data()[h] * d + b.data()[h];
                            s += ui[2 * h] * libm::cos(arg) + ui[2 * h + 1] * libm::sin(arg);
                        }
                        out.set(i, j, s);
                    }
                }
            }
        }
        self.push(out, Op::RelScores { u, kernel })
    }

    /// `N×N` Gaussian distance weights `exp(-((i-j) - mu)^2 / 2 sigma^2)`, `sigma = softplus(sigma_raw)`.
    pub fn gaussian(&mut self, mu: Var, sigma_raw: Var, n: usize) -> Var {
        let mu_v = self.value(mu).item();
        let sigma = softplus(self.value(sigma_raw).item());
        let out = crate::kernels::gaussian_weights(n, mu_v, sigma);
        self.push(out, Op::Gaussian { mu, sigma_raw })
    }

    /// `scale · Σ_r (logsumexp_{v≥1} logits[r] − logits[r][target_r])`; column 0 is the
    /// padding item and never receives probability mass.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<usize>, scale: f64) -> Var {
        let x = self.value(logits);
        assert_eq!(x.rows(), targets.len(), "one target per logit row");
        let mut probs = Matrix::zeros(x.rows(), x.cols());
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            assert!(t >= 1 && t < x.cols(), "target {t} outside item range");
            let row = &x.row(r)[1..];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| libm::exp(v - max)).sum();
            let lse = max + libm::log(z);
            total += lse - x.get(r, t);
            let p = probs.row_mut(r);
            for (c, v) in row.iter().enumerate() {
                p[c + 1] = libm::exp(v - lse);
            }
        }
        self.push(Matrix::scalar(scale * total), Op::CrossEntropy { logits, targets, scale, probs })
    }

    pub fn sum_squares(&mut self, x: Var, scale: f64) -> Var {
        let s = scale * self.value(x).sum_squares();
        self.push(Matrix::scalar(s), Op::SumSquares { x, scale })
    }

    /// Reverse sweep from the scalar `root`.
    pub fn backward(&self, root: Var) -> Grads {
        assert_eq!(self.value(root).len(), 1, "backward requires a scalar root");
        let mut grads: Vec<Option<Matrix>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Matrix::scalar(1.0));

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    let mut ga = Matrix::zeros(am.rows(), am.cols());
                    gemm(&g, false, bm, true, &mut ga, 1.0, 0.0);
                    let mut gb = Matrix::zeros(bm.rows(), bm.cols());
                    gemm(am, true, &g, false, &mut gb, 1.0, 0.0);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    let mut ga = Matrix::zeros(am.rows(), am.cols());
                    gemm(&g, false, bm, false, &mut ga, 1.0, 0.0);
                    let mut gb = Matrix::zeros(bm.rows(), bm.cols());
                    gemm(&g, true, am, false, &mut gb, 1.0, 0.0);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    let mut neg = g.clone();
                    neg.scale_in_place(-1.0);
                    acc(&mut grads, *a, g);
                    acc(&mut grads, *b, neg);
                }
                Op::Mul(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    let ga = Matrix::from_vec(g.rows(), g.cols(), g.data().iter().zip(bm.data()).map(|(p, q)| p * q).collect());
                    let gb = Matrix::from_vec(g.rows(), g.cols(), g.data().iter().zip(am.data()).map(|(p, q)| p * q).collect());
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let mut gr = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gr.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *row, gr);
                    acc(&mut grads, *a, g);
                }
                Op::ScaleBy(a, s) => {
                    let factor = self.value(*s).item();
                    let gs: f64 = g.data().iter().zip(self.value(*a).data()).map(|(p, q)| p * q).sum();
                    let mut ga = g;
                    ga.scale_in_place(factor);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *s, Matrix::scalar(gs));
                }
                Op::Scale(a, factor) => {
                    let mut ga = g;
                    ga.scale_in_place(*factor);
                    acc(&mut grads, *a, ga);
                }
                Op::Abs(a) => {
                    let am = self.value(*a);
                    let ga = Matrix::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data()
                            .iter()
                            .zip(am.data())
                            .map(|(p, x)| if *x > 0.0 { *p } else if *x < 0.0 { -*p } else { 0.0 })
                            .collect(),
                    );
                    acc(&mut grads, *a, ga);
                }
                Op::MulConst(a, c) => {
                    let ga = Matrix::from_vec(g.rows(), g.cols(), g.data().iter().zip(c.data()).map(|(p, q)| p * q).collect());
                    acc(&mut grads, *a, ga);
                }
                Op::Gather(table, idx) => {
                    let t = self.value(*table);
                    let mut gt = Matrix::zeros(t.rows(), t.cols());
                    for (r, &i) in idx.iter().enumerate() {
                        for (o, v) in gt.row_mut(i).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *table, gt);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        let gp = Matrix::from_fn(g.rows(), w, |r, c| g.get(r, offset + c));
                        offset += w;
                        acc(&mut grads, *p, gp);
                    }
                }
                Op::MaskedSoftmax(a) => {
                    let p = &node.value;
                    let mut ga = Matrix::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let (pr, gr) = (p.row(r), g.row(r));
                        let dot: f64 = pr.iter().zip(gr).map(|(x, y)| x * y).sum();
                        for (o, (pv, gv)) in ga.row_mut(r).iter_mut().zip(pr.iter().zip(gr)) {
                            *o = pv * (gv - dot);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                    let gm = self.value(*gain);
                    let cols = g.cols() as f64;
                    let mut gx = Matrix::zeros(g.rows(), g.cols());
                    let mut gg = Matrix::zeros(1, g.cols());
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        let (gr, hr) = (g.row(r), xhat.row(r));
                        let mut mean_d = 0.0;
                        let mut mean_dh = 0.0;
                        for c in 0..g.cols() {
                            let d = gr[c] * gm.data()[c];
                            mean_d += d;
                            mean_dh += d * hr[c];
                            gg.data_mut()[c] += gr[c] * hr[c];
                            gb.data_mut()[c] += gr[c];
                        }
                        mean_d /= cols;
                        mean_dh /= cols;
                        let out = gx.row_mut(r);
                        for c in 0..out.len() {
                            let d = gr[c] * gm.data()[c];
                            out[c] = rstd[r] * (d - mean_d - hr[c] * mean_dh);
                        }
                    }
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *gain, gg);
                    acc(&mut grads, *bias, gb);
                }
                Op::Gelu(a) => {
                    let am = self.value(*a);
                    let ga = Matrix::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(am.data()).map(|(p, x)| p * gelu_parts(*x).1).collect(),
                    );
                    acc(&mut grads, *a, ga);
                }
                Op::Periodic { freq, phase, t } => {
                    let out = &node.value;
                    let m = out.cols() / 2;
                    let mut gw = Matrix::zeros(1, m);
                    let mut gb = Matrix::zeros(1, m);
                    for (n, tn) in t.iter().enumerate() {
                        for i in 0..m {
                            let (cos, sin) = (out.get(n, 2 * i), out.get(n, 2 * i + 1));
                            let d_arg = -g.get(n, 2 * i) * sin + g.get(n, 2 * i + 1) * cos;
                            gw.data_mut()[i] += d_arg * tn;
                            gb.data_mut()[i] += d_arg;
                        }
                    }
                    acc(&mut grads, *freq, gw);
                    acc(&mut grads, *phase, gb);
                }
                Op::RelScores { u, kernel } => {
                    let um = self.value(*u);
                    let n = um.rows();
                    let c = um.cols();
                    let mut gu = Matrix::zeros(n, c);
                    match kernel {
                        RelKernel::Fixed(t) => {
                            for i in 0..n {
                                let gui = gu.row_mut(i);
                                for j in 0..n {
                                    let gij = g.get(i, j);
                                    if gij != 0.0 {
                                        for (o, r) in gui.iter_mut().zip(t.at(i, j)) {
                                            *o += gij * r;
                                        }
                                    }
                                }
                            }
                        }
                        RelKernel::Sinusoid { freq, phase, diffs } => {
                            let (w, b) = (self.value(*freq), self.value(*phase));
                            let m = w.len();
                            let mut gw = Matrix::zeros(1, m);
                            let mut gb = Matrix::zeros(1, m);
                            for i in 0..n {
                                for j in 0..n {
                                    let gij = g.get(i, j);
                                    if gij == 0.0 {
                                        continue;
                                    }
                                    let d = diffs.get(i, j);
                                    for h in 0..m {
                                        let arg = w.data()[h] * d + b.data()[h];
                                        let (cos, sin) = (libm::cos(arg), libm::sin(arg));
                                        let (uc, us) = (um.get(i, 2 * h), um.get(i, 2 * h + 1));
                                        let row = gu.row_mut(i);
                                        row[2 * h] += gij * cos;
                                        row[2 * h + 1] += gij * sin;
                                        let d_arg = gij * (-uc * sin + us * cos);
                                        gw.data_mut()[h] += d_arg * d;
                                        gb.data_mut()[h] += d_arg;
                                    }
                                }
                            }
                            acc(&mut grads, *freq, gw);
                            acc(&mut grads, *phase, gb);
                        }
                    }
                    acc(&mut grads, *u, gu);
                }
                Op::Gaussian { mu, sigma_raw } => {
                    let gmat = &node.value;
                    let mu_v = self.value(*mu).item();
                    let raw = self.value(*sigma_raw).item();
                    let sigma = softplus(raw);
                    let n = gmat.rows();
                    let (mut d_mu, mut d_sigma) = (0.0, 0.0);
                    for i in 0..n {
                        for j in 0..n {
                            let e = (i as f64 - j as f64) - mu_v;
                            let w = g.get(i, j) * gmat.get(i, j);
                            d_mu += w * e / (sigma * sigma);
                            d_sigma += w * e * e / (sigma * sigma * sigma);
                        }
                    }
                    acc(&mut grads, *mu, Matrix::scalar(d_mu));
                    acc(&mut grads, *sigma_raw, Matrix::scalar(d_sigma * sigmoid(raw)));
                }
                Op::CrossEntropy { logits, targets, scale, probs } => {
                    let factor = g.item() * scale;
                    let mut gl = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        gl.row_mut(r)[t] -= 1.0;
                    }
                    gl.scale_in_place(factor);
                    acc(&mut grads, *logits, gl);
                }
                Op::SumSquares { x, scale } => {
                    let mut gx = self.value(*x).clone();
                    gx.scale_in_place(2.0 * scale * g.item());
                    acc(&mut grads, *x, gx);
                }
            }
        }
        Grads { grads }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central-difference check of `build` with respect to leaf `which`.
    fn check(leaves: &[Matrix], which: usize, build: impl Fn(&mut Tape<'_>, &[Var]) -> Var) {
        let analytic = {
            let mut tape = Tape::new();
            let vars: Vec<Var> = leaves.iter().map(|m| tape.leaf(m)).collect();
            let root = build(&mut tape, &vars);
            tape.backward(root).get(vars[which]).cloned().unwrap_or_else(|| Matrix::zeros(leaves[which].rows(), leaves[which].cols()))
        };
        let eval = |ls: &[Matrix]| {
            let mut tape = Tape::new();
            let vars: Vec<Var> = ls.iter().map(|m| tape.leaf(m)).collect();
            let root = build(&mut tape, &vars);
            tape.value(root).item()
        };
        let h = 1e-6;
        for k in 0..leaves[which].len() {
            let mut plus = leaves.to_vec();
            plus[which].data_mut()[k] += h;
            let mut minus = leaves.to_vec();
            minus[which].data_mut()[k] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic.data()[k];
            assert!((a - numeric).abs() < 1e-6 * (1.0 + numeric.abs()), "leaf {which} entry {k}: analytic {a} vs numeric {numeric}");
        }
    }

    fn m(rows: usize, cols: usize, seed: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |r, c| libm::sin(seed + 1.3 * r as f64 + 0.7 * c as f64))
    }

    #[test]
    fn matmul_and_softmax_adjoints() {
        let leaves = [m(3, 4, 0.1), m(3, 4, 0.9), m(3, 2, 2.0)];
        let mask: Rc<Vec<bool>> = Rc::new((0..9).map(|k| k % 3 <= k / 3).collect());
        let build = |t: &mut Tape<'_>, v: &[Var]| {
            let s = t.matmul_t(v[0], v[1]);
            let p = t.masked_softmax(s, mask.clone());
            let o = t.matmul(p, v[2]);
            t.sum_squares(o, 0.5)
        };
        for which in 0..3 {
            check(&leaves, which, build);
        }
    }

    #[test]
    fn layer_norm_gelu_and_row_ops_adjoints() {
        let leaves = [m(3, 5, 0.3), m(1, 5, 1.1), m(1, 5, 0.4), Matrix::scalar(0.7)];
        let build = |t: &mut Tape<'_>, v: &[Var]| {
            let y = t.layer_norm(v[0], v[1], v[2]);
            let y = t.gelu(y);
            let y = t.scale_by(y, v[3]);
            let y = t.add_row(y, v[2]);
            let a = t.abs(y);
            t.sum_squares(a, 1.0)
        };
        for which in 0..4 {
            check(&leaves, which, build);
        }
    }

    #[test]
    fn kernel_and_loss_adjoints() {
        let diffs = Rc::new(Matrix::from_fn(3, 3, |i, j| i as f64 - j as f64 * 1.5));
        let times = Rc::new(alloc::vec![0.0, 0.5, 2.0]);
        let leaves = [m(3, 4, 0.2), m(1, 2, 0.5), m(1, 2, 1.5), Matrix::scalar(0.3), Matrix::scalar(0.2)];
        let build = |t: &mut Tape<'_>, v: &[Var]| {
            let s = t.rel_scores(v[0], RelKernel::Sinusoid { freq: v[1], phase: v[2], diffs: diffs.clone() });
            let gw = t.gaussian(v[3], v[4], 3);
            let s = t.mul(s, gw);
            let p = t.periodic(v[1], v[2], times.clone());
            let logits = t.matmul(s, p);
            t.cross_entropy(logits, alloc::vec![1, 3, 2], 0.5)
        };
        for which in 0..5 {
            check(&leaves, which, build);
        }
    }
}
