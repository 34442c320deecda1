//! Dense `f64` vectors and matrices, and a small reverse-mode tape over the
//! handful of operations the fusion functions are built from.
//!
//! There is no broadcasting anywhere: every operand pair must agree in
//! dimension or the operation fails with a [`ShapeError`].

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Index;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("{op}: dimension mismatch ({left} vs {right})")]
    Mismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },
    #[error("sum_pool: window {window} does not divide dimension {dim}")]
    Pool { dim: usize, window: usize },
    #[error("matrix data length {len} does not equal {rows}x{cols}")]
    MatrixData { rows: usize, cols: usize, len: usize },
}

fn check(op: &'static str, left: usize, right: usize) -> Result<(), ShapeError> {
    if left == right {
        Ok(())
    } else {
        Err(ShapeError::Mismatch { op, left, right })
    }
}

/// A dense column vector.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        Self(data)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Self(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> core::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector(self.0.iter().map(|&v| f(v)).collect())
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Self(data)
    }
}

impl<const N: usize> From<[f64; N]> for Vector {
    fn from(data: [f64; N]) -> Self {
        Self(data.to_vec())
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ShapeError> {
        if rows * cols != data.len() {
            return Err(ShapeError::MatrixData {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, ShapeError> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check("from_rows", cols, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
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

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.data
    }
}

fn matvec_raw(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|i| {
            w[i * cols..(i + 1) * cols]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

pub fn matvec(w: &Matrix, x: &Vector) -> Result<Vector, ShapeError> {
    check("matvec", w.cols, x.dim())?;
    Ok(Vector(matvec_raw(&w.data, w.rows, w.cols, &x.0)))
}

fn zip_with(
    op: &'static str,
    a: &Vector,
    b: &Vector,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Vector, ShapeError> {
    check(op, a.dim(), b.dim())?;
    Ok(Vector(a.0.iter().zip(&b.0).map(|(&x, &y)| f(x, y)).collect()))
}

pub fn add(a: &Vector, b: &Vector) -> Result<Vector, ShapeError> {
    zip_with("add", a, b, |x, y| x + y)
}

pub fn sub(a: &Vector, b: &Vector) -> Result<Vector, ShapeError> {
    zip_with("sub", a, b, |x, y| x - y)
}

/// Element-wise product.
pub fn hadamard(a: &Vector, b: &Vector) -> Result<Vector, ShapeError> {
    zip_with("hadamard", a, b, |x, y| x * y)
}

pub fn scale(a: &Vector, factor: f64) -> Vector {
    a.map(|v| v * factor)
}

/// Largest double strictly below one; sigmoid never leaves `(0, 1)`.
const SIGMOID_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

pub fn sigmoid_scalar(t: f64) -> f64 {
    let s = if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, SIGMOID_MAX)
}

pub fn sigmoid(x: &Vector) -> Vector {
    x.map(sigmoid_scalar)
}

pub fn relu(x: &Vector) -> Vector {
    x.map(|t| if t > 0.0 { t } else { 0.0 })
}

pub fn square(x: &Vector) -> Vector {
    x.map(|t| t * t)
}

pub fn sum_pool(x: &Vector, window: usize) -> Result<Vector, ShapeError> {
    if window == 0 || !x.dim().is_multiple_of(window) {
        return Err(ShapeError::Pool {
            dim: x.dim(),
            window,
        });
    }
    Ok(Vector(
        x.0.chunks_exact(window).map(|c| c.iter().sum()).collect(),
    ))
}

pub fn mean(x: &Vector) -> f64 {
    x.0.iter().sum::<f64>() / x.dim() as f64
}

pub fn dot(a: &Vector, b: &Vector) -> Result<f64, ShapeError> {
    check("dot", a.dim(), b.dim())?;
    Ok(a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum())
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + libm::log(x.iter().map(|&v| libm::exp(v - max)).sum::<f64>())
}

pub fn softmax(x: &Vector) -> Vector {
    let lse = log_sum_exp(&x.0);
    x.map(|v| libm::exp(v - lse))
}

/// `-log softmax(logits)[target]`, evaluated in log-space.
pub fn cross_entropy(logits: &Vector, target: usize) -> f64 {
    log_sum_exp(&logits.0) - logits.0[target]
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TapeError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("backward needs a scalar output, node {node} has {len} entries")]
    NotScalar { node: usize, len: usize },
    #[error("node {0} is not on this tape")]
    UnknownNode(usize),
    #[error("node {0} is not a matrix")]
    NotMatrix(usize),
    #[error("node {0} is a matrix where a vector was expected")]
    NotVector(usize),
    #[error("target class {target} out of range for {classes} logits")]
    Target { target: usize, classes: usize },
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Leaf,
    MatVec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Square(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    SumPool(NodeId, usize),
    Mean(NodeId),
    Scale(NodeId, f64),
    CrossEntropy(NodeId, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Vector,
    Matrix { rows: usize, cols: usize },
}

#[derive(Debug, Clone)]
struct Node {
    shape: Shape,
    value: Vec<f64>,
    op: Op,
}

/// Records a forward computation so gradients can be pulled back through it.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and the backward pass is a single reverse sweep.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    /// Drops every node recorded after the first `len`, so a tape holding
    /// parameter leaves can be reused across samples.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    fn push(&mut self, shape: Shape, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { shape, value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> Result<&Node, TapeError> {
        self.nodes.get(id.0).ok_or(TapeError::UnknownNode(id.0))
    }

    fn vector(&self, id: NodeId) -> Result<&[f64], TapeError> {
        let node = self.node(id)?;
        match node.shape {
            Shape::Vector => Ok(&node.value),
            Shape::Matrix { .. } => Err(TapeError::NotVector(id.0)),
        }
    }

    pub fn matrix_leaf(&mut self, m: &Matrix) -> NodeId {
        self.push(
            Shape::Matrix {
                rows: m.rows,
                cols: m.cols,
            },
            m.data.clone(),
            Op::Leaf,
        )
    }

    pub fn vector_leaf(&mut self, v: &Vector) -> NodeId {
        self.push(Shape::Vector, v.0.clone(), Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> Result<&[f64], TapeError> {
        Ok(&self.node(id)?.value)
    }

    pub fn vector_value(&self, id: NodeId) -> Result<Vector, TapeError> {
        Ok(Vector(self.vector(id)?.to_vec()))
    }

    pub fn scalar_value(&self, id: NodeId) -> Result<f64, TapeError> {
        let v = self.vector(id)?;
        if v.len() != 1 {
            return Err(TapeError::NotScalar {
                node: id.0,
                len: v.len(),
            });
        }
        Ok(v[0])
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId, TapeError> {
        let wn = self.node(w)?;
        let (rows, cols) = match wn.shape {
            Shape::Matrix { rows, cols } => (rows, cols),
            Shape::Vector => return Err(TapeError::NotMatrix(w.0)),
        };
        let xv = self.vector(x)?;
        check("matvec", cols, xv.len())?;
        let out = matvec_raw(&wn.value, rows, cols, xv);
        Ok(self.push(Shape::Vector, out, Op::MatVec(w, x)))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<NodeId, TapeError> {
        let (av, bv) = (self.vector(a)?, self.vector(b)?);
        check(name, av.len(), bv.len())?;
        let out = av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect();
        Ok(self.push(Shape::Vector, out, op))
    }

    fn unary(
        &mut self,
        a: NodeId,
        op: Op,
        f: impl Fn(f64) -> f64,
    ) -> Result<NodeId, TapeError> {
        let out = self.vector(a)?.iter().map(|&x| f(x)).collect();
        Ok(self.push(Shape::Vector, out, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.binary("hadamard", a, b, Op::Hadamard(a, b), |x, y| x * y)
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.unary(a, Op::Square(a), |t| t * t)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.unary(a, Op::Sigmoid(a), sigmoid_scalar)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.unary(a, Op::Relu(a), |t| if t > 0.0 { t } else { 0.0 })
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId, TapeError> {
        self.unary(a, Op::Scale(a, factor), |t| t * factor)
    }

    pub fn sum_pool(&mut self, a: NodeId, window: usize) -> Result<NodeId, TapeError> {
        let out = sum_pool(&Vector(self.vector(a)?.to_vec()), window)?;
        Ok(self.push(Shape::Vector, out.0, Op::SumPool(a, window)))
    }

    /// Mean of all entries; the result is a one-element vector.
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        let v = self.vector(a)?;
        let m = v.iter().sum::<f64>() / v.len() as f64;
        Ok(self.push(Shape::Vector, vec![m], Op::Mean(a)))
    }

    /// Softmax cross-entropy of `logits` against class `target`.
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId, TapeError> {
        let v = self.vector(logits)?;
        if target >= v.len() {
            return Err(TapeError::Target {
                target,
                classes: v.len(),
            });
        }
        let loss = log_sum_exp(v) - v[target];
        Ok(self.push(
            Shape::Vector,
            vec![loss],
            Op::CrossEntropy(logits, target),
        ))
    }

    /// Reverse sweep from a scalar `output`. Nodes that do not feed into the
    /// output, including unused leaves, get zero gradients.
    pub fn backward(&self, output: NodeId) -> Result<Gradients, TapeError> {
        let out = self.node(output)?;
        if out.shape != Shape::Vector || out.value.len() != 1 {
            return Err(TapeError::NotScalar {
                node: output.0,
                len: out.value.len(),
            });
        }
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .take(output.0 + 1)
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        grads[output.0][0] = 1.0;

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let g = core::mem::take(&mut grads[idx]);
            if g.iter().all(|&v| v == 0.0) {
                grads[idx] = g;
                continue;
            }
            match node.op {
                Op::Leaf => {}
                Op::MatVec(w, x) => {
                    let (rows, cols) = match self.nodes[w.0].shape {
                        Shape::Matrix { rows, cols } => (rows, cols),
                        Shape::Vector => unreachable!("matvec operand checked at record time"),
                    };
                    let wv = &self.nodes[w.0].value;
                    let xv = &self.nodes[x.0].value;
                    {
                        let gw = &mut grads[w.0];
                        for i in 0..rows {
                            let gi = g[i];
                            if gi == 0.0 {
                                continue;
                            }
                            let row = &mut gw[i * cols..(i + 1) * cols];
                            for (r, &xj) in row.iter_mut().zip(xv) {
                                *r += gi * xj;
                            }
                        }
                    }
                    let gx = &mut grads[x.0];
                    for i in 0..rows {
                        let gi = g[i];
                        for (j, acc) in gx.iter_mut().enumerate() {
                            *acc += gi * wv[i * cols + j];
                        }
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], &g, |_, gi| gi);
                    accumulate(&mut grads[b.0], &g, |_, gi| gi);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[a.0], &g, |_, gi| gi);
                    accumulate(&mut grads[b.0], &g, |_, gi| -gi);
                }
                Op::Hadamard(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    accumulate(&mut grads[a.0], &g, |i, gi| gi * bv[i]);
                    accumulate(&mut grads[b.0], &g, |i, gi| gi * av[i]);
                }
                Op::Square(a) => {
                    let av = &self.nodes[a.0].value;
                    accumulate(&mut grads[a.0], &g, |i, gi| 2.0 * av[i] * gi);
                }
                Op::Sigmoid(a) => {
                    let s = &node.value;
                    accumulate(&mut grads[a.0], &g, |i, gi| gi * s[i] * (1.0 - s[i]));
                }
                Op::Relu(a) => {
                    let av = &self.nodes[a.0].value;
                    accumulate(&mut grads[a.0], &g, |i, gi| if av[i] > 0.0 { gi } else { 0.0 });
                }
                Op::Scale(a, factor) => {
                    accumulate(&mut grads[a.0], &g, |_, gi| gi * factor);
                }
                Op::SumPool(a, window) => {
                    let ga = &mut grads[a.0];
                    for (i, acc) in ga.iter_mut().enumerate() {
                        *acc += g[i / window];
                    }
                }
                Op::Mean(a) => {
                    let ga = &mut grads[a.0];
                    let share = g[0] / ga.len() as f64;
                    for acc in ga.iter_mut() {
                        *acc += share;
                    }
                }
                Op::CrossEntropy(logits, target) => {
                    let probs = softmax(&Vector(self.nodes[logits.0].value.clone()));
                    let gl = &mut grads[logits.0];
                    for (i, acc) in gl.iter_mut().enumerate() {
                        let onehot = if i == target { 1.0 } else { 0.0 };
                        *acc += g[0] * (probs.0[i] - onehot);
                    }
                }
            }
            grads[idx] = g;
        }
        grads.resize_with(self.nodes.len(), Vec::new);
        for (g, n) in grads.iter_mut().zip(&self.nodes).skip(output.0 + 1) {
            *g = vec![0.0; n.value.len()];
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.shape).collect(),
        })
    }
}

fn accumulate(dst: &mut [f64], g: &[f64], f: impl Fn(usize, f64) -> f64) {
    for (i, (d, &gi)) in dst.iter_mut().zip(g).enumerate() {
        *d += f(i, gi);
    }
}

/// Gradients of a scalar output with respect to every node on the tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
    shapes: Vec<Shape>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Result<&[f64], TapeError> {
        self.grads
            .get(id.0)
            .map(Vec::as_slice)
            .ok_or(TapeError::UnknownNode(id.0))
    }

    pub fn matrix(&self, id: NodeId) -> Result<Matrix, TapeError> {
        match self.shapes.get(id.0) {
            Some(Shape::Matrix { rows, cols }) => Ok(Matrix {
                rows: *rows,
                cols: *cols,
                data: self.grads[id.0].clone(),
            }),
            Some(Shape::Vector) => Err(TapeError::NotMatrix(id.0)),
            None => Err(TapeError::UnknownNode(id.0)),
        }
    }

    pub fn vector(&self, id: NodeId) -> Result<Vector, TapeError> {
        match self.shapes.get(id.0) {
            Some(Shape::Vector) => Ok(Vector(self.grads[id.0].clone())),
            Some(Shape::Matrix { .. }) => Err(TapeError::NotVector(id.0)),
            None => Err(TapeError::UnknownNode(id.0)),
        }
    }
}
