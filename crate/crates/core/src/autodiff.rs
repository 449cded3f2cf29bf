//! Reverse-mode gradient engine over dense float64 matrices.
//!
//! A [`Graph`] is a tape of matrix-valued nodes built forward; [`Graph::backward`]
//! walks the tape in reverse and accumulates gradients for every node created
//! with [`Graph::param`]. The op set is exactly what the graph encoder needs:
//! matmul, elementwise arithmetic, the four activations, row-wise layer norm,
//! masked row softmax, row normalization and norms, row gather, column
//! concatenation, and summation. Every op validates shapes and rejects
//! non-finite outputs.

use crate::error::{Error, Result};
use std::rc::Rc;

/// Dense row-major float64 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        assert!(rows.iter().all(|x| x.len() == c), "ragged matrix");
        Matrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len());
        Matrix { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Matrix { rows: 1, cols: 1, data: vec![v] }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// self * other, naive but cache-friendly.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let src = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    /// self^T * other.
    pub fn matmul_tn(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "matmul_tn shape mismatch");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            for i in 0..self.cols {
                let a = self.get(k, i);
                if a == 0.0 {
                    continue;
                }
                let src = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    /// self * other^T.
    pub fn matmul_nt(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_nt shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                let a = self.row(i);
                let b = other.row(j);
                let mut acc = 0.0;
                for (x, y) in a.iter().zip(b) {
                    acc += x * y;
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn add_in_place(&mut self, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Handle to a node in the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    /// Position in the tape; indexes the gradient list from [`Graph::backward`].
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    /// a * b^T.
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// a * x + b, elementwise; only the scale matters on the way back.
    Affine(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Gelu(Var),
    /// Per-row layer norm with learnable scale and shift (1 x d each).
    LayerNorm { x: Var, gamma: Var, beta: Var },
    /// Row-wise softmax restricted to mask entries (mask is 0/1, constant).
    MaskedSoftmaxRows { x: Var, mask: Rc<Matrix> },
    /// Rows scaled to unit L2 norm.
    NormalizeRows(Var),
    /// Row L2 norms as an n x 1 column.
    L2NormRows(Var),
    /// Row selection with repetition; gradients accumulate per source row.
    GatherRows { x: Var, idx: Rc<Vec<usize>> },
    ConcatCols(Var, Var),
    /// Sum of all entries, 1 x 1.
    Sum(Var),
    /// Elementwise product with a constant matrix (dropout masks).
    MulConst { x: Var, m: Rc<Matrix> },
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Forward tape. Build values with the op methods, then call
/// [`Graph::backward`] on a scalar node.
pub struct Graph {
    nodes: Vec<Node>,
}

const LN_EPS: f64 = 1e-5;

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, m: Matrix) -> Var {
        self.nodes.push(Node { value: m, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, m: Matrix) -> Var {
        self.nodes.push(Node { value: m, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let m = &self.nodes[v.0].value;
        (m.rows, m.cols)
    }

    fn push(&mut self, value: Matrix, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Tensor("non-finite value produced".into()));
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b)
            | Op::MatMulNT(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::ConcatCols(a, b) => {
                self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad
            }
            Op::LayerNorm { x, gamma, beta } => {
                self.nodes[x.0].requires_grad
                    || self.nodes[gamma.0].requires_grad
                    || self.nodes[beta.0].requires_grad
            }
            Op::Affine(a, _)
            | Op::Relu(a)
            | Op::LeakyRelu(a, _)
            | Op::Tanh(a)
            | Op::Gelu(a)
            | Op::MaskedSoftmaxRows { x: a, .. }
            | Op::NormalizeRows(a)
            | Op::L2NormRows(a)
            | Op::GatherRows { x: a, .. }
            | Op::Sum(a)
            | Op::MulConst { x: a, .. } => self.nodes[a.0].requires_grad,
        };
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Tensor(format!(
                "{what}: shape mismatch {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a).1 != self.shape(b).0 {
            return Err(Error::Tensor(format!(
                "matmul: inner dims {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let v = self.nodes[a.0].value.matmul(&self.nodes[b.0].value);
        self.push(v, Op::MatMul(a, b))
    }

    /// a * b^T.
    pub fn matmul_nt_op(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a).1 != self.shape(b).1 {
            return Err(Error::Tensor(format!(
                "matmul_nt: col dims {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let v = self.nodes[a.0].value.matmul_nt(&self.nodes[b.0].value);
        self.push(v, Op::MatMulNT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut v = self.nodes[a.0].value.clone();
        v.add_in_place(&self.nodes[b.0].value);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let mut v = self.nodes[a.0].value.clone();
        for (x, y) in v.data.iter_mut().zip(&self.nodes[b.0].value.data) {
            *x -= y;
        }
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let mut v = self.nodes[a.0].value.clone();
        for (x, y) in v.data.iter_mut().zip(&self.nodes[b.0].value.data) {
            *x *= y;
        }
        self.push(v, Op::Mul(a, b))
    }

    /// scale * x + shift, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let mut v = self.nodes[x.0].value.clone();
        for e in v.data.iter_mut() {
            *e = scale * *e + shift;
        }
        self.push(v, Op::Affine(x, scale))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let mut v = self.nodes[x.0].value.clone();
        for e in v.data.iter_mut() {
            *e = e.max(0.0);
        }
        self.push(v, Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let mut v = self.nodes[x.0].value.clone();
        for e in v.data.iter_mut() {
            if *e < 0.0 {
                *e *= slope;
            }
        }
        self.push(v, Op::LeakyRelu(x, slope))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let mut v = self.nodes[x.0].value.clone();
        for e in v.data.iter_mut() {
            *e = e.tanh();
        }
        self.push(v, Op::Tanh(x))
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let mut v = self.nodes[x.0].value.clone();
        for e in v.data.iter_mut() {
            *e = gelu(*e);
        }
        self.push(v, Op::Gelu(x))
    }

    /// Row-wise layer norm followed by the learnable affine: gamma and beta
    /// are 1 x d.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (_, d) = self.shape(x);
        if self.shape(gamma) != (1, d) || self.shape(beta) != (1, d) {
            return Err(Error::Tensor("layer_norm: gamma/beta must be 1 x d".into()));
        }
        let xm = &self.nodes[x.0].value;
        let g = &self.nodes[gamma.0].value;
        let b = &self.nodes[beta.0].value;
        let mut v = Matrix::zeros(xm.rows, d);
        for r in 0..xm.rows {
            let row = xm.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for c in 0..d {
                let y = (row[c] - mean) * inv;
                v.set(r, c, y * g.data[c] + b.data[c]);
            }
        }
        self.push(v, Op::LayerNorm { x, gamma, beta })
    }

    /// Row-wise softmax over the entries where `mask` is nonzero; other
    /// entries are zero in the output. Rows with an empty mask stay zero.
    pub fn masked_softmax_rows(&mut self, x: Var, mask: Rc<Matrix>) -> Result<Var> {
        if self.shape(x) != (mask.rows, mask.cols) {
            return Err(Error::Tensor("masked_softmax_rows: mask shape mismatch".into()));
        }
        let xm = &self.nodes[x.0].value;
        let mut v = Matrix::zeros(xm.rows, xm.cols);
        for r in 0..xm.rows {
            let mut max = f64::NEG_INFINITY;
            for c in 0..xm.cols {
                if mask.get(r, c) != 0.0 {
                    max = max.max(xm.get(r, c));
                }
            }
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut denom = 0.0;
            for c in 0..xm.cols {
                if mask.get(r, c) != 0.0 {
                    denom += (xm.get(r, c) - max).exp();
                }
            }
            for c in 0..xm.cols {
                if mask.get(r, c) != 0.0 {
                    v.set(r, c, (xm.get(r, c) - max).exp() / denom);
                }
            }
        }
        self.push(v, Op::MaskedSoftmaxRows { x, mask })
    }

    /// Rows scaled to unit L2 norm; errors on a (near-)zero row.
    pub fn normalize_rows(&mut self, x: Var) -> Result<Var> {
        let xm = &self.nodes[x.0].value;
        let mut v = xm.clone();
        for r in 0..v.rows {
            let norm = row_norm(xm.row(r));
            if norm < 1e-30 {
                return Err(Error::Encoder(format!("zero-norm embedding block in row {r}")));
            }
            for c in 0..v.cols {
                let val = v.get(r, c) / norm;
                v.set(r, c, val);
            }
        }
        self.push(v, Op::NormalizeRows(x))
    }

    /// Row L2 norms as an n x 1 column vector.
    pub fn l2_norm_rows(&mut self, x: Var) -> Result<Var> {
        let xm = &self.nodes[x.0].value;
        let mut v = Matrix::zeros(xm.rows, 1);
        for r in 0..xm.rows {
            v.set(r, 0, row_norm(xm.row(r)));
        }
        self.push(v, Op::L2NormRows(x))
    }

    pub fn gather_rows(&mut self, x: Var, idx: Rc<Vec<usize>>) -> Result<Var> {
        let xm = &self.nodes[x.0].value;
        let mut v = Matrix::zeros(idx.len(), xm.cols);
        for (out_r, &src_r) in idx.iter().enumerate() {
            if src_r >= xm.rows {
                return Err(Error::Tensor(format!("gather_rows: row {src_r} out of range")));
            }
            v.data[out_r * xm.cols..(out_r + 1) * xm.cols].copy_from_slice(xm.row(src_r));
        }
        self.push(v, Op::GatherRows { x, idx })
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ra != rb {
            return Err(Error::Tensor("concat_cols: row mismatch".into()));
        }
        let am = &self.nodes[a.0].value;
        let bm = &self.nodes[b.0].value;
        let mut v = Matrix::zeros(ra, ca + cb);
        for r in 0..ra {
            v.data[r * (ca + cb)..r * (ca + cb) + ca].copy_from_slice(am.row(r));
            v.data[r * (ca + cb) + ca..(r + 1) * (ca + cb)].copy_from_slice(bm.row(r));
        }
        self.push(v, Op::ConcatCols(a, b))
    }

    /// Sum of all entries as a 1 x 1 matrix.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.nodes[x.0].value.data.iter().sum();
        self.push(Matrix::scalar(s), Op::Sum(x))
    }

    /// Elementwise product with a constant matrix (e.g. a dropout mask).
    pub fn mul_const(&mut self, x: Var, m: Rc<Matrix>) -> Result<Var> {
        if self.shape(x) != (m.rows, m.cols) {
            return Err(Error::Tensor("mul_const: shape mismatch".into()));
        }
        let mut v = self.nodes[x.0].value.clone();
        for (a, b) in v.data.iter_mut().zip(&m.data) {
            *a *= b;
        }
        self.push(v, Op::MulConst { x, m })
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let m = &self.nodes[v.0].value;
        assert_eq!((m.rows, m.cols), (1, 1), "scalar_value of non-scalar");
        m.data[0]
    }

    /// Reverse pass from a 1 x 1 loss node. Returns one gradient slot per
    /// node; only nodes that require grad are populated.
    pub fn backward(&self, loss: Var) -> Result<Vec<Option<Matrix>>> {
        {
            let m = &self.nodes[loss.0].value;
            if (m.rows, m.cols) != (1, 1) {
                return Err(Error::Tensor("backward: loss must be 1 x 1".into()));
            }
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..self.nodes.len()).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[i];
            if !node.requires_grad && !matches!(node.op, Op::Leaf) {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.nodes[a.0].requires_grad {
                        let da = g.matmul_nt(&self.nodes[b.0].value);
                        accumulate(&mut grads, a.0, da);
                    }
                    if self.nodes[b.0].requires_grad {
                        let db = self.nodes[a.0].value.matmul_tn(&g);
                        accumulate(&mut grads, b.0, db);
                    }
                }
                Op::MatMulNT(a, b) => {
                    // y = a b^T: da = g b, db = g^T a.
                    if self.nodes[a.0].requires_grad {
                        let da = g.matmul(&self.nodes[b.0].value);
                        accumulate(&mut grads, a.0, da);
                    }
                    if self.nodes[b.0].requires_grad {
                        let db = g.matmul_tn(&self.nodes[a.0].value);
                        accumulate(&mut grads, b.0, db);
                    }
                }
                Op::Add(a, b) => {
                    if self.nodes[a.0].requires_grad {
                        accumulate(&mut grads, a.0, g.clone());
                    }
                    if self.nodes[b.0].requires_grad {
                        accumulate(&mut grads, b.0, g.clone());
                    }
                }
                Op::Sub(a, b) => {
                    if self.nodes[a.0].requires_grad {
                        accumulate(&mut grads, a.0, g.clone());
                    }
                    if self.nodes[b.0].requires_grad {
                        let mut neg = g.clone();
                        for e in neg.data.iter_mut() {
                            *e = -*e;
                        }
                        accumulate(&mut grads, b.0, neg);
                    }
                }
                Op::Mul(a, b) => {
                    if self.nodes[a.0].requires_grad {
                        let mut da = g.clone();
                        for (x, y) in da.data.iter_mut().zip(&self.nodes[b.0].value.data) {
                            *x *= y;
                        }
                        accumulate(&mut grads, a.0, da);
                    }
                    if self.nodes[b.0].requires_grad {
                        let mut db = g.clone();
                        for (x, y) in db.data.iter_mut().zip(&self.nodes[a.0].value.data) {
                            *x *= y;
                        }
                        accumulate(&mut grads, b.0, db);
                    }
                }
                Op::Affine(a, scale) => {
                    let mut da = g.clone();
                    for e in da.data.iter_mut() {
                        *e *= scale;
                    }
                    accumulate(&mut grads, a.0, da);
                }
                Op::Relu(a) => {
                    let mut da = g.clone();
                    for (e, x) in da.data.iter_mut().zip(&self.nodes[a.0].value.data) {
                        if *x <= 0.0 {
                            *e = 0.0;
                        }
                    }
                    accumulate(&mut grads, a.0, da);
                }
                Op::LeakyRelu(a, slope) => {
                    let mut da = g.clone();
                    for (e, x) in da.data.iter_mut().zip(&self.nodes[a.0].value.data) {
                        if *x < 0.0 {
                            *e *= slope;
                        }
                    }
                    accumulate(&mut grads, a.0, da);
                }
                Op::Tanh(a) => {
                    let mut da = g.clone();
                    for (e, y) in da.data.iter_mut().zip(&node.value.data) {
                        *e *= 1.0 - y * y;
                    }
                    accumulate(&mut grads, a.0, da);
                }
                Op::Gelu(a) => {
                    let mut da = g.clone();
                    for (e, x) in da.data.iter_mut().zip(&self.nodes[a.0].value.data) {
                        *e *= gelu_grad(*x);
                    }
                    accumulate(&mut grads, a.0, da);
                }
                Op::LayerNorm { x, gamma, beta } => {
                    let xm = &self.nodes[x.0].value;
                    let gm = &self.nodes[gamma.0].value;
                    let d = xm.cols as f64;
                    let mut dx = Matrix::zeros(xm.rows, xm.cols);
                    let mut dgamma = Matrix::zeros(1, xm.cols);
                    let mut dbeta = Matrix::zeros(1, xm.cols);
                    for r in 0..xm.rows {
                        let row = xm.row(r);
                        let mean = row.iter().sum::<f64>() / d;
                        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
                        let inv = 1.0 / (var + LN_EPS).sqrt();
                        // y is the normalized pre-affine row.
                        let y: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                        let grow = g.row(r);
                        let mut dy = vec![0.0; xm.cols];
                        for c in 0..xm.cols {
                            dbeta.data[c] += grow[c];
                            dgamma.data[c] += grow[c] * y[c];
                            dy[c] = grow[c] * gm.data[c];
                        }
                        let mean_dy = dy.iter().sum::<f64>() / d;
                        let mean_dy_y = dy.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / d;
                        for c in 0..xm.cols {
                            dx.set(r, c, inv * (dy[c] - mean_dy - y[c] * mean_dy_y));
                        }
                    }
                    if self.nodes[x.0].requires_grad {
                        accumulate(&mut grads, x.0, dx);
                    }
                    if self.nodes[gamma.0].requires_grad {
                        accumulate(&mut grads, gamma.0, dgamma);
                    }
                    if self.nodes[beta.0].requires_grad {
                        accumulate(&mut grads, beta.0, dbeta);
                    }
                }
                Op::MaskedSoftmaxRows { x, mask } => {
                    let y = &node.value;
                    let mut dx = Matrix::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let mut dot = 0.0;
                        for c in 0..y.cols {
                            if mask.get(r, c) != 0.0 {
                                dot += g.get(r, c) * y.get(r, c);
                            }
                        }
                        for c in 0..y.cols {
                            if mask.get(r, c) != 0.0 {
                                dx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                            }
                        }
                    }
                    accumulate(&mut grads, x.0, dx);
                }
                Op::NormalizeRows(a) => {
                    let xm = &self.nodes[a.0].value;
                    let y = &node.value;
                    let mut dx = Matrix::zeros(xm.rows, xm.cols);
                    for r in 0..xm.rows {
                        let norm = row_norm(xm.row(r));
                        let grow = g.row(r);
                        let yrow = y.row(r);
                        let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for c in 0..xm.cols {
                            dx.set(r, c, (grow[c] - yrow[c] * dot) / norm);
                        }
                    }
                    accumulate(&mut grads, a.0, dx);
                }
                Op::L2NormRows(a) => {
                    let xm = &self.nodes[a.0].value;
                    let mut dx = Matrix::zeros(xm.rows, xm.cols);
                    for r in 0..xm.rows {
                        let norm = row_norm(xm.row(r));
                        if norm > 0.0 {
                            let gr = g.get(r, 0);
                            for c in 0..xm.cols {
                                dx.set(r, c, gr * xm.get(r, c) / norm);
                            }
                        }
                    }
                    accumulate(&mut grads, a.0, dx);
                }
                Op::GatherRows { x, idx } => {
                    let xm = &self.nodes[x.0].value;
                    let mut dx = Matrix::zeros(xm.rows, xm.cols);
                    for (out_r, &src_r) in idx.iter().enumerate() {
                        for c in 0..xm.cols {
                            let v = dx.get(src_r, c) + g.get(out_r, c);
                            dx.set(src_r, c, v);
                        }
                    }
                    accumulate(&mut grads, x.0, dx);
                }
                Op::ConcatCols(a, b) => {
                    let (ra, ca) = self.shape(*a);
                    let (_, cb) = self.shape(*b);
                    let mut da = Matrix::zeros(ra, ca);
                    let mut db = Matrix::zeros(ra, cb);
                    for r in 0..ra {
                        for c in 0..ca {
                            da.set(r, c, g.get(r, c));
                        }
                        for c in 0..cb {
                            db.set(r, c, g.get(r, ca + c));
                        }
                    }
                    if self.nodes[a.0].requires_grad {
                        accumulate(&mut grads, a.0, da);
                    }
                    if self.nodes[b.0].requires_grad {
                        accumulate(&mut grads, b.0, db);
                    }
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    let scalar = g.data[0];
                    let da = Matrix::from_vec(r, c, vec![scalar; r * c]);
                    accumulate(&mut grads, a.0, da);
                }
                Op::MulConst { x, m } => {
                    let mut dx = g.clone();
                    for (e, k) in dx.data.iter_mut().zip(&m.data) {
                        *e *= k;
                    }
                    accumulate(&mut grads, x.0, dx);
                }
            }
        }
        Ok(grads)
    }
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new()
    }
}

fn accumulate(grads: &mut [Option<Matrix>], idx: usize, g: Matrix) {
    match &mut grads[idx] {
        Some(existing) => existing.add_in_place(&g),
        slot @ None => *slot = Some(g),
    }
}

fn row_norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Tanh-approximated GeLU.
fn gelu(x: f64) -> f64 {
    const C: f64 = 0.7978845608028654; // sqrt(2/pi)
    const A: f64 = 0.044715;
    0.5 * x * (1.0 + (C * (x + A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.7978845608028654;
    const A: f64 = 0.044715;
    let u = C * (x + A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * A * x * x)
}
