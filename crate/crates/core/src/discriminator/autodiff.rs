//! Minimal reverse-mode automatic differentiation over dense matrices.
//!
//! Nodes are appended in topological order, so a reverse sweep is a walk
//! over decreasing node indices. Every backward rule is written once against
//! the [`Algebra`] trait and evaluated either numerically or by recording new
//! nodes on the tape. The recorded form makes adjoints themselves
//! differentiable, which the gradient penalty needs.

use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Self { rows, cols, data }
    }

    pub fn column(values: &[f64]) -> Self {
        Self::from_vec(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape(), other.shape(), "elementwise shape mismatch");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self^T * other`.
    pub fn matmul_tn(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "matmul_tn inner dimension");
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let b_row = other.row(k);
            for i in 0..self.cols {
                let a = self.data[k * self.cols + i];
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * other^T`.
    pub fn matmul_nt(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols, "matmul_nt inner dimension");
        self.matmul(&other.transpose())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Adds the column vector `bias` to every column.
    pub fn add_bias(&self, bias: &Self) -> Self {
        assert_eq!((self.rows, 1), bias.shape(), "bias shape");
        let mut out = self.clone();
        for r in 0..self.rows {
            let b = bias.data[r];
            for x in &mut out.data[r * self.cols..(r + 1) * self.cols] {
                *x += b;
            }
        }
        out
    }

    /// Row sums as a column vector.
    pub fn sum_cols(&self) -> Self {
        Self::from_vec(
            self.rows,
            1,
            (0..self.rows).map(|r| self.row(r).iter().sum()).collect(),
        )
    }

    pub fn broadcast_cols(&self, cols: usize) -> Self {
        assert_eq!(self.cols, 1, "broadcast source must be a column");
        let mut data = Vec::with_capacity(self.rows * cols);
        for &x in &self.data {
            data.extend(std::iter::repeat_n(x, cols));
        }
        Self::from_vec(self.rows, cols, data)
    }

    pub fn concat_rows(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols, "concat column mismatch");
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self::from_vec(self.rows + other.rows, self.cols, data)
    }

    pub fn slice_rows(&self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.rows, "row slice out of range");
        Self::from_vec(
            len,
            self.cols,
            self.data[start * self.cols..(start + len) * self.cols].to_vec(),
        )
    }

    /// Embeds `self` at row `start` of a zero matrix with `total` rows.
    pub fn pad_rows(&self, start: usize, total: usize) -> Self {
        assert!(start + self.rows <= total, "row padding out of range");
        let mut out = Self::zeros(total, self.cols);
        out.data[start * self.cols..(start + self.rows) * self.cols].copy_from_slice(&self.data);
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    ConcatRows(Var, Var),
    SliceRows(Var, usize, usize),
    PadRows(Var, usize, usize),
    Transpose(Var),
    SumCols(Var),
    BroadcastCols(Var, usize),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Arc<Matrix>,
    requires_grad: bool,
}

/// Recorded computation graph with value slots. Adjoint slots live in the
/// [`Adjoints`] produced by a reverse sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, op: Op, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value: Arc::new(value),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A differentiable input (parameter or data input).
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// A value that never receives an adjoint (dropout masks, initial states).
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::MatMul(a, b), v, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::Add(a, b), v, rg)
    }

    /// `a + bias 1^T` for a column vector `bias`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let v = self.value(a).add_bias(self.value(bias));
        let rg = self.rg(a) || self.rg(bias);
        self.push(Op::AddBias(a, bias), v, rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::Mul(a, b), v, rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| c * x);
        let rg = self.rg(a);
        self.push(Op::Scale(a, c), v, rg)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 - x);
        let rg = self.rg(a);
        self.push(Op::OneMinus(a), v, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(Op::Sigmoid(a), v, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(Op::Tanh(a), v, rg)
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).concat_rows(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::ConcatRows(a, b), v, rg)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice_rows(start, len);
        let rg = self.rg(a);
        self.push(Op::SliceRows(a, start, len), v, rg)
    }

    pub fn pad_rows(&mut self, a: Var, start: usize, total: usize) -> Var {
        let v = self.value(a).pad_rows(start, total);
        let rg = self.rg(a);
        self.push(Op::PadRows(a, start, total), v, rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(Op::Transpose(a), v, rg)
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_cols();
        let rg = self.rg(a);
        self.push(Op::SumCols(a), v, rg)
    }

    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Var {
        let v = self.value(a).broadcast_cols(cols);
        let rg = self.rg(a);
        self.push(Op::BroadcastCols(a, cols), v, rg)
    }

    /// Numeric reverse sweep from `root` seeded with `seed`; marks the tape
    /// consumed. A second call is a state error.
    pub fn backward(&mut self, root: Var, seed: Matrix) -> Result<Adjoints> {
        if self.consumed {
            return Err(Error::State("tape already consumed by a backward pass".into()));
        }
        let adjoints = self.adjoints(root, seed)?;
        self.consumed = true;
        Ok(adjoints)
    }

    /// Numeric reverse sweep that leaves the tape reusable.
    pub fn adjoints(&self, root: Var, seed: Matrix) -> Result<Adjoints> {
        if seed.shape() != self.shape(root) {
            return Err(Error::Shape {
                expected: self.shape(root).0 * self.shape(root).1,
                got: seed.rows() * seed.cols(),
            });
        }
        let mut adj: Vec<Option<Arc<Matrix>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Arc::new(seed));
        let mut alg = Numeric { tape: self };
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            for (input, contrib) in vjp(&mut alg, node.op, Var(i), &g) {
                if !self.rg(input) {
                    continue;
                }
                let slot = &mut adj[input.0];
                *slot = Some(match slot.take() {
                    Some(prev) => alg.add(&prev, &contrib),
                    None => contrib,
                });
            }
            // keep leaf adjoints, drop interior ones
            adj[i] = None;
        }
        Ok(Adjoints(adj))
    }

    /// Recorded reverse sweep: returns a differentiable node holding
    /// `d(seed . root)/d(wrt)`. The tape is not consumed.
    pub fn grad_graph(&mut self, root: Var, seed: Var, wrt: Var) -> Result<Var> {
        if self.shape(seed) != self.shape(root) {
            return Err(Error::Shape {
                expected: self.shape(root).0 * self.shape(root).1,
                got: self.shape(seed).0 * self.shape(seed).1,
            });
        }
        let mut adj: Vec<Option<Var>> = vec![None; root.0 + 1];
        adj[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            let op = self.nodes[i].op;
            if !self.nodes[i].requires_grad || matches!(op, Op::Leaf) {
                continue;
            }
            let Some(g) = adj[i] else { continue };
            let contribs = {
                let mut alg = Recording { tape: self };
                vjp(&mut alg, op, Var(i), &g)
            };
            for (input, contrib) in contribs {
                if !self.rg(input) {
                    continue;
                }
                adj[input.0] = Some(match adj[input.0] {
                    Some(prev) => self.add(prev, contrib),
                    None => contrib,
                });
            }
        }
        Ok(match adj[wrt.0] {
            Some(v) => v,
            None => {
                let (r, c) = self.shape(wrt);
                self.constant(Matrix::zeros(r, c))
            }
        })
    }
}

/// Adjoints of leaves after a numeric sweep.
#[derive(Debug)]
pub struct Adjoints(Vec<Option<Arc<Matrix>>>);

impl Adjoints {
    /// Adjoint of `v`, or `None` when nothing flowed into it.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.0.get(v.0).and_then(|m| m.as_deref())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

trait Algebra {
    type M;
    fn operand(&mut self, v: Var) -> Self::M;
    fn shape(&self, v: Var) -> (usize, usize);
    fn matmul_nt(&mut self, a: &Self::M, b: &Self::M) -> Self::M;
    fn matmul_tn(&mut self, a: &Self::M, b: &Self::M) -> Self::M;
    fn add(&mut self, a: &Self::M, b: &Self::M) -> Self::M;
    fn mul(&mut self, a: &Self::M, b: &Self::M) -> Self::M;
    fn scale(&mut self, a: &Self::M, c: f64) -> Self::M;
    fn one_minus(&mut self, a: &Self::M) -> Self::M;
    fn slice_rows(&mut self, a: &Self::M, start: usize, len: usize) -> Self::M;
    fn pad_rows(&mut self, a: &Self::M, start: usize, total: usize) -> Self::M;
    fn transpose(&mut self, a: &Self::M) -> Self::M;
    fn sum_cols(&mut self, a: &Self::M) -> Self::M;
    fn broadcast_cols(&mut self, a: &Self::M, cols: usize) -> Self::M;
}

/// Vector-Jacobian products of one node: `(input, adjoint contribution)`.
fn vjp<A: Algebra>(alg: &mut A, op: Op, out: Var, g: &A::M) -> Vec<(Var, A::M)> {
    match op {
        Op::Leaf => Vec::new(),
        Op::MatMul(a, b) => {
            let av = alg.operand(a);
            let bv = alg.operand(b);
            vec![(a, alg.matmul_nt(g, &bv)), (b, alg.matmul_tn(&av, g))]
        }
        Op::Add(a, b) => vec![(a, alg.scale(g, 1.0)), (b, alg.scale(g, 1.0))],
        Op::AddBias(a, bias) => vec![(a, alg.scale(g, 1.0)), (bias, alg.sum_cols(g))],
        Op::Mul(a, b) => {
            let av = alg.operand(a);
            let bv = alg.operand(b);
            vec![(a, alg.mul(g, &bv)), (b, alg.mul(g, &av))]
        }
        Op::Scale(a, c) => vec![(a, alg.scale(g, c))],
        Op::OneMinus(a) => vec![(a, alg.scale(g, -1.0))],
        Op::Sigmoid(a) => {
            let y = alg.operand(out);
            let dy = alg.one_minus(&y);
            let local = alg.mul(&y, &dy);
            vec![(a, alg.mul(g, &local))]
        }
        Op::Tanh(a) => {
            let y = alg.operand(out);
            let sq = alg.mul(&y, &y);
            let local = alg.one_minus(&sq);
            vec![(a, alg.mul(g, &local))]
        }
        Op::ConcatRows(a, b) => {
            let ra = alg.shape(a).0;
            let rb = alg.shape(b).0;
            vec![(a, alg.slice_rows(g, 0, ra)), (b, alg.slice_rows(g, ra, rb))]
        }
        Op::SliceRows(a, start, _) => {
            let total = alg.shape(a).0;
            vec![(a, alg.pad_rows(g, start, total))]
        }
        Op::PadRows(a, start, _) => {
            let len = alg.shape(a).0;
            vec![(a, alg.slice_rows(g, start, len))]
        }
        Op::Transpose(a) => vec![(a, alg.transpose(g))],
        Op::SumCols(a) => {
            let cols = alg.shape(a).1;
            vec![(a, alg.broadcast_cols(g, cols))]
        }
        Op::BroadcastCols(a, _) => vec![(a, alg.sum_cols(g))],
    }
}

struct Numeric<'a> {
    tape: &'a Tape,
}

impl Algebra for Numeric<'_> {
    type M = Arc<Matrix>;

    fn operand(&mut self, v: Var) -> Arc<Matrix> {
        Arc::clone(&self.tape.nodes[v.0].value)
    }
    fn shape(&self, v: Var) -> (usize, usize) {
        self.tape.shape(v)
    }
    fn matmul_nt(&mut self, a: &Arc<Matrix>, b: &Arc<Matrix>) -> Arc<Matrix> {
        Arc::new(a.matmul_nt(b))
    }
    fn matmul_tn(&mut self, a: &Arc<Matrix>, b: &Arc<Matrix>) -> Arc<Matrix> {
        Arc::new(a.matmul_tn(b))
    }
    fn add(&mut self, a: &Arc<Matrix>, b: &Arc<Matrix>) -> Arc<Matrix> {
        Arc::new(a.zip_map(b, |x, y| x + y))
    }
    fn mul(&mut self, a: &Arc<Matrix>, b: &Arc<Matrix>) -> Arc<Matrix> {
        Arc::new(a.zip_map(b, |x, y| x * y))
    }
    fn scale(&mut self, a: &Arc<Matrix>, c: f64) -> Arc<Matrix> {
        if c == 1.0 {
            Arc::clone(a)
        } else {
            Arc::new(a.map(|x| c * x))
        }
    }
    fn one_minus(&mut self, a: &Arc<Matrix>) -> Arc<Matrix> {
        Arc::new(a.map(|x| 1.0 - x))
    }
    fn slice_rows(&mut self, a: &Arc<Matrix>, start: usize, len: usize) -> Arc<Matrix> {
        Arc::new(a.slice_rows(start, len))
    }
    fn pad_rows(&mut self, a: &Arc<Matrix>, start: usize, total: usize) -> Arc<Matrix> {
        Arc::new(a.pad_rows(start, total))
    }
    fn transpose(&mut self, a: &Arc<Matrix>) -> Arc<Matrix> {
        Arc::new(a.transpose())
    }
    fn sum_cols(&mut self, a: &Arc<Matrix>) -> Arc<Matrix> {
        Arc::new(a.sum_cols())
    }
    fn broadcast_cols(&mut self, a: &Arc<Matrix>, cols: usize) -> Arc<Matrix> {
        Arc::new(a.broadcast_cols(cols))
    }
}

struct Recording<'a> {
    tape: &'a mut Tape,
}

impl Algebra for Recording<'_> {
    type M = Var;

    fn operand(&mut self, v: Var) -> Var {
        v
    }
    fn shape(&self, v: Var) -> (usize, usize) {
        self.tape.shape(v)
    }
    fn matmul_nt(&mut self, a: &Var, b: &Var) -> Var {
        let bt = self.tape.transpose(*b);
        self.tape.matmul(*a, bt)
    }
    fn matmul_tn(&mut self, a: &Var, b: &Var) -> Var {
        let at = self.tape.transpose(*a);
        self.tape.matmul(at, *b)
    }
    fn add(&mut self, a: &Var, b: &Var) -> Var {
        self.tape.add(*a, *b)
    }
    fn mul(&mut self, a: &Var, b: &Var) -> Var {
        self.tape.mul(*a, *b)
    }
    fn scale(&mut self, a: &Var, c: f64) -> Var {
        if c == 1.0 {
            *a
        } else {
            self.tape.scale(*a, c)
        }
    }
    fn one_minus(&mut self, a: &Var) -> Var {
        self.tape.one_minus(*a)
    }
    fn slice_rows(&mut self, a: &Var, start: usize, len: usize) -> Var {
        self.tape.slice_rows(*a, start, len)
    }
    fn pad_rows(&mut self, a: &Var, start: usize, total: usize) -> Var {
        self.tape.pad_rows(*a, start, total)
    }
    fn transpose(&mut self, a: &Var) -> Var {
        self.tape.transpose(*a)
    }
    fn sum_cols(&mut self, a: &Var) -> Var {
        self.tape.sum_cols(*a)
    }
    fn broadcast_cols(&mut self, a: &Var, cols: usize) -> Var {
        self.tape.broadcast_cols(*a, cols)
    }
}
