//! Reverse-mode automatic differentiation over dense row-major matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Calling
//! [`Tape::backward`] on a scalar node propagates adjoints back to the leaves.
//! Only the operations the forecasters need are provided.

use std::ops::Range;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// a (m x k) * b (k x n)
    MatMul(Var, Var),
    /// a (m x k) * b^T, b (n x k)
    MatMulT(Var, Var),
    Add(Var, Var),
    /// a (m x n) + row vector b (1 x n), broadcast over rows
    AddRow(Var, Var),
    /// a (m x n) * row vector b (1 x n), elementwise, broadcast over rows
    MulRow(Var, Var),
    Scale(Var, f64),
    /// s (m x n) + scale (1 x 1) * profile[j], broadcast over rows
    KeyBias(Var, Var, Vec<f64>),
    SoftmaxRows(Var),
    Gelu(Var),
    /// per-row standardization; caches 1/sigma per row
    NormalizeRows(Var, Vec<f64>),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Reshape(Var),
    /// mean squared error against a constant target, 1 x 1
    Mse(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    rows: usize,
    cols: usize,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const LN_EPS: f64 = 1e-5;

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, rows: usize, cols: usize, op: Op) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node { value, rows, cols, op });
        Var(self.nodes.len() - 1)
    }

    /// A leaf: either a parameter (read its gradient after `backward`) or a constant.
    pub fn leaf(&mut self, value: Vec<f64>, rows: usize, cols: usize) -> Var {
        assert_eq!(value.len(), rows * cols, "leaf shape");
        self.push(value, rows, cols, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        (self.nodes[v.0].rows, self.nodes[v.0].cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        assert_eq!(self.shape(v), (1, 1));
        self.nodes[v.0].value[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dimension");
        let mut out = vec![0.0; m * n];
        matmul_into(self.value(a), self.value(b), &mut out, m, k, n);
        self.push(out, m, n, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        assert_eq!(k, k2, "matmul_t inner dimension");
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(dot(&av[i * k..(i + 1) * k], &bv[j * k..(j + 1) * k]));
            }
        }
        self.push(out, m, n, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let shape = self.shape(a);
        assert_eq!(shape, self.shape(b), "add shapes");
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        self.push(out, shape.0, shape.1, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (m, n) = self.shape(a);
        assert_eq!(self.shape(row), (1, n), "add_row shape");
        let r = self.value(row);
        let out = self.value(a).iter().enumerate().map(|(i, x)| x + r[i % n]).collect();
        self.push(out, m, n, Op::AddRow(a, row))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (m, n) = self.shape(a);
        assert_eq!(self.shape(row), (1, n), "mul_row shape");
        let r = self.value(row);
        let out = self.value(a).iter().enumerate().map(|(i, x)| x * r[i % n]).collect();
        self.push(out, m, n, Op::MulRow(a, row))
    }

    /// `x * weight + bias`.
    pub fn affine(&mut self, x: Var, weight: Var, bias: Var) -> Var {
        let h = self.matmul(x, weight);
        self.add_row(h, bias)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let (m, n) = self.shape(a);
        let out = self.value(a).iter().map(|x| x * c).collect();
        self.push(out, m, n, Op::Scale(a, c))
    }

    /// Add `scale * profile[j]` to every row of the score matrix `s`.
    /// `scale` is a 1 x 1 node; `profile` is a constant over the key axis.
    pub fn key_bias(&mut self, s: Var, scale: Var, profile: Vec<f64>) -> Var {
        let (m, n) = self.shape(s);
        assert_eq!(profile.len(), n, "key_bias profile length");
        let c = self.scalar(scale);
        let out = self
            .value(s)
            .iter()
            .enumerate()
            .map(|(i, x)| x + c * profile[i % n])
            .collect();
        self.push(out, m, n, Op::KeyBias(s, scale, profile))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let mut out = self.value(a).to_vec();
        for row in out.chunks_mut(n) {
            softmax_in_place(row);
        }
        self.push(out, m, n, Op::SoftmaxRows(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let out = self
            .value(a)
            .iter()
            .map(|&x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()))
            .collect();
        self.push(out, m, n, Op::Gelu(a))
    }

    /// Standardize each row to zero mean and unit variance.
    pub fn normalize_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let mut out = self.value(a).to_vec();
        let mut inv_sigma = Vec::with_capacity(m);
        for row in out.chunks_mut(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mean) * inv;
            }
            inv_sigma.push(inv);
        }
        self.push(out, m, n, Op::NormalizeRows(a, inv_sigma))
    }

    pub fn layer_norm(&mut self, a: Var, gain: Var, bias: Var) -> Var {
        let z = self.normalize_rows(a);
        let g = self.mul_row(z, gain);
        self.add_row(g, bias)
    }

    pub fn slice_cols(&mut self, a: Var, cols: Range<usize>) -> Var {
        let (m, n) = self.shape(a);
        assert!(cols.end <= n, "slice_cols range");
        let w = cols.len();
        let v = self.value(a);
        let mut out = Vec::with_capacity(m * w);
        for i in 0..m {
            out.extend_from_slice(&v[i * n + cols.start..i * n + cols.end]);
        }
        self.push(out, m, w, Op::SliceCols(a, cols.start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let m = self.shape(parts[0]).0;
        let n: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for &p in parts {
                let w = self.shape(p).1;
                assert_eq!(self.shape(p).0, m, "concat_cols rows");
                out.extend_from_slice(&self.value(p)[i * w..(i + 1) * w]);
            }
        }
        self.push(out, m, n, Op::ConcatCols(parts.to_vec()))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let (m, n) = self.shape(a);
        assert_eq!(m * n, rows * cols, "reshape size");
        let out = self.value(a).to_vec();
        self.push(out, rows, cols, Op::Reshape(a))
    }

    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Var {
        let n = self.value(pred).len();
        assert_eq!(n, target.len(), "mse length");
        let loss = self
            .value(pred)
            .iter()
            .zip(target)
            .map(|(p, t)| (p - t).powi(2))
            .sum::<f64>()
            / n as f64;
        self.push(vec![loss], 1, 1, Op::Mse(pred, target.to_vec()))
    }

    /// Sum of 1 x 1 nodes scaled by `c`.
    pub fn sum_scaled(&mut self, terms: &[Var], c: f64) -> Var {
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = self.add(acc, t);
        }
        self.scale(acc, c)
    }

    /// Adjoints of every node with respect to the scalar `root`.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.shape(root), (1, 1), "backward from a scalar");
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let (m, n) = (node.rows, node.cols);
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let k = self.shape(*a).1;
                    let (av, bv) = (self.value(*a), self.value(*b));
                    // dA = G * B^T
                    let ga = accumulate(&mut grads, *a, m * k);
                    for i in 0..m {
                        for p in 0..k {
                            ga[i * k + p] += dot(&g[i * n..(i + 1) * n], &bv[p * n..(p + 1) * n]);
                        }
                    }
                    // dB = A^T * G
                    let gb = accumulate(&mut grads, *b, k * n);
                    for i in 0..m {
                        for p in 0..k {
                            let av = av[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for (o, gv) in gb[p * n..(p + 1) * n].iter_mut().zip(&g[i * n..(i + 1) * n]) {
                                *o += av * gv;
                            }
                        }
                    }
                }
                Op::MatMulT(a, b) => {
                    let k = self.shape(*a).1;
                    let (av, bv) = (self.value(*a), self.value(*b));
                    // out = A B^T: dA = G B, dB = G^T A
                    let ga = accumulate(&mut grads, *a, m * k);
                    matmul_into(&g, bv, ga, m, n, k);
                    let gb = accumulate(&mut grads, *b, n * k);
                    for i in 0..m {
                        for j in 0..n {
                            let gv = g[i * n + j];
                            for (o, x) in gb[j * k..(j + 1) * k].iter_mut().zip(&av[i * k..(i + 1) * k]) {
                                *o += gv * x;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(accumulate(&mut grads, *a, m * n), &g);
                    add_into(accumulate(&mut grads, *b, m * n), &g);
                }
                Op::AddRow(a, row) => {
                    add_into(accumulate(&mut grads, *a, m * n), &g);
                    let gr = accumulate(&mut grads, *row, n);
                    for chunk in g.chunks(n) {
                        add_into(gr, chunk);
                    }
                }
                Op::MulRow(a, row) => {
                    let (av, rv) = (self.value(*a), self.value(*row));
                    let ga = accumulate(&mut grads, *a, m * n);
                    for (i, o) in ga.iter_mut().enumerate() {
                        *o += g[i] * rv[i % n];
                    }
                    let gr = accumulate(&mut grads, *row, n);
                    for (i, gv) in g.iter().enumerate() {
                        gr[i % n] += gv * av[i];
                    }
                }
                Op::Scale(a, c) => {
                    for (o, gv) in accumulate(&mut grads, *a, m * n).iter_mut().zip(&g) {
                        *o += c * gv;
                    }
                }
                Op::KeyBias(s, scale, profile) => {
                    add_into(accumulate(&mut grads, *s, m * n), &g);
                    let d: f64 = g.chunks(n).map(|row| dot(row, profile)).sum();
                    accumulate(&mut grads, *scale, 1)[0] += d;
                }
                Op::SoftmaxRows(a) => {
                    let p = &node.value;
                    let ga = accumulate(&mut grads, *a, m * n);
                    for i in 0..m {
                        let (pr, gr) = (&p[i * n..(i + 1) * n], &g[i * n..(i + 1) * n]);
                        let s = dot(pr, gr);
                        for j in 0..n {
                            ga[i * n + j] += pr[j] * (gr[j] - s);
                        }
                    }
                }
                Op::Gelu(a) => {
                    let av = self.value(*a);
                    let ga = accumulate(&mut grads, *a, m * n);
                    for (i, &x) in av.iter().enumerate() {
                        let u = GELU_C * (x + 0.044715 * x * x * x);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                        let d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
                        ga[i] += g[i] * d;
                    }
                }
                Op::NormalizeRows(a, inv_sigma) => {
                    let y = &node.value;
                    let ga = accumulate(&mut grads, *a, m * n);
                    for i in 0..m {
                        let (yr, gr) = (&y[i * n..(i + 1) * n], &g[i * n..(i + 1) * n]);
                        let mean_g = gr.iter().sum::<f64>() / n as f64;
                        let mean_gy = dot(gr, yr) / n as f64;
                        for j in 0..n {
                            ga[i * n + j] += inv_sigma[i] * (gr[j] - mean_g - yr[j] * mean_gy);
                        }
                    }
                }
                Op::SliceCols(a, start) => {
                    let an = self.shape(*a).1;
                    let ga = accumulate(&mut grads, *a, m * an);
                    for i in 0..m {
                        add_into(&mut ga[i * an + start..i * an + start + n], &g[i * n..(i + 1) * n]);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        let gp = accumulate(&mut grads, p, m * w);
                        for i in 0..m {
                            add_into(&mut gp[i * w..(i + 1) * w], &g[i * n + offset..i * n + offset + w]);
                        }
                        offset += w;
                    }
                }
                Op::Reshape(a) => add_into(accumulate(&mut grads, *a, m * n), &g),
                Op::Mse(pred, target) => {
                    let pv = self.value(*pred);
                    let c = 2.0 * g[0] / target.len() as f64;
                    for ((o, p), t) in accumulate(&mut grads, *pred, pv.len()).iter_mut().zip(pv).zip(target) {
                        *o += c * (p - t);
                    }
                }
            }
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// Leaf adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of a leaf; zeros if the root does not depend on it.
    pub fn of(&self, v: Var, len: usize) -> Vec<f64> {
        self.grads[v.0].clone().unwrap_or_else(|| vec![0.0; len])
    }

    pub fn add_to(&self, v: Var, dst: &mut [f64]) {
        if let Some(g) = &self.grads[v.0] {
            add_into(dst, g);
        }
    }
}
