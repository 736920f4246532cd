//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation whose inputs include at least one
//! gradient-carrying tensor. Operations on constants only are evaluated eagerly
//! and leave no trace, which doubles as a cheap no-grad mode: build the same
//! computation from [`DiffTensor::constant`] leaves and nothing is recorded.

use std::cell::{Cell, RefCell};
use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::matrix::{Lu, Matrix};
use crate::error::{Error, Result};

/// Pre-activations of saturating nonlinearities are clamped to this magnitude.
pub const ACTIVATION_CLAMP: f64 = 40.0;

pub type NodeId = usize;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct NodeRef {
    tape: u64,
    id: NodeId,
}

/// An immutable matrix value, optionally attached to a node on a [`Tape`].
#[derive(Clone, Debug)]
pub struct DiffTensor {
    value: Arc<Matrix>,
    node: Option<NodeRef>,
}

impl DiffTensor {
    /// A leaf that never receives a gradient.
    pub fn constant(value: Matrix) -> Self {
        Self {
            value: Arc::new(value),
            node: None,
        }
    }

    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn rows(&self) -> usize {
        self.value.rows()
    }

    pub fn cols(&self) -> usize {
        self.value.cols()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    pub fn node_id(&self) -> Option<NodeId> {
        self.node.map(|n| n.id)
    }
}

impl From<Matrix> for DiffTensor {
    fn from(m: Matrix) -> Self {
        DiffTensor::constant(m)
    }
}

#[derive(Clone, Debug)]
struct Input {
    node: Option<NodeId>,
    value: Arc<Matrix>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul,
    Add,
    Sub,
    Hadamard,
    Scale(f64),
    ScaleBy,
    Transpose,
    Solve(Lu),
    Sigmoid,
    Tanh,
    ConcatRows,
    ConcatCols,
    SliceRows(usize),
    SliceCols(usize),
    Reshape,
    UnpackLower(usize),
    Sum,
    Mse,
}

#[derive(Debug)]
struct Node {
    op: Op,
    inputs: Vec<Input>,
    value: Arc<Matrix>,
}

/// Operation recorder. Single-threaded; use one tape per thread.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Adjoints produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `t`. `None` when `t` is a constant
    /// or lies on another tape; a zero matrix when `t` did not influence the loss.
    pub fn get(&self, t: &DiffTensor) -> Option<Matrix> {
        let node = t.node?;
        if node.tape != self.tape {
            return None;
        }
        Some(match &self.grads[node.id] {
            Some(g) => g.clone(),
            None => Matrix::zeros(t.rows(), t.cols()),
        })
    }
}

fn shape_err(op: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Dimension(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
            consumed: Cell::new(false),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A gradient-carrying leaf.
    pub fn param(&self, value: Matrix) -> DiffTensor {
        let value = Arc::new(value);
        let id = self.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            value: value.clone(),
        });
        DiffTensor {
            value,
            node: Some(NodeRef { tape: self.id, id }),
        }
    }

    fn push(&self, node: Node) -> NodeId {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    fn input(&self, t: &DiffTensor) -> Result<Input> {
        match t.node {
            Some(n) if n.tape != self.id => {
                Err(Error::Usage("tensor belongs to a different tape".into()))
            }
            _ => Ok(Input {
                node: t.node.map(|n| n.id),
                value: t.value.clone(),
            }),
        }
    }

    fn record(&self, op: Op, inputs: &[&DiffTensor], value: Matrix) -> Result<DiffTensor> {
        if self.consumed.get() {
            return Err(Error::Usage("tape already consumed by backward".into()));
        }
        let inputs = inputs
            .iter()
            .map(|t| self.input(t))
            .collect::<Result<Vec<_>>>()?;
        let value = Arc::new(value);
        if inputs.iter().all(|i| i.node.is_none()) {
            return Ok(DiffTensor { value, node: None });
        }
        let id = self.push(Node {
            op,
            inputs,
            value: value.clone(),
        });
        Ok(DiffTensor {
            value,
            node: Some(NodeRef { tape: self.id, id }),
        })
    }

    pub fn matmul(&self, a: &DiffTensor, b: &DiffTensor) -> Result<DiffTensor> {
        if a.cols() != b.rows() {
            return Err(shape_err("matmul", a.shape(), b.shape()));
        }
        let v = a.value.matmul(&b.value);
        self.record(Op::MatMul, &[a, b], v)
    }

    fn check_same(op: &str, a: &DiffTensor, b: &DiffTensor) -> Result<()> {
        if a.shape() != b.shape() {
            return Err(shape_err(op, a.shape(), b.shape()));
        }
        Ok(())
    }

    pub fn add(&self, a: &DiffTensor, b: &DiffTensor) -> Result<DiffTensor> {
        Self::check_same("add", a, b)?;
        self.record(Op::Add, &[a, b], a.value.add(&b.value))
    }

    pub fn sub(&self, a: &DiffTensor, b: &DiffTensor) -> Result<DiffTensor> {
        Self::check_same("sub", a, b)?;
        self.record(Op::Sub, &[a, b], a.value.sub(&b.value))
    }

    pub fn hadamard(&self, a: &DiffTensor, b: &DiffTensor) -> Result<DiffTensor> {
        Self::check_same("hadamard", a, b)?;
        self.record(Op::Hadamard, &[a, b], a.value.hadamard(&b.value))
    }

    /// `s·a` for a fixed scalar.
    pub fn scale(&self, a: &DiffTensor, s: f64) -> Result<DiffTensor> {
        self.record(Op::Scale(s), &[a], a.value.scale(s))
    }

    /// `s·a` where `s` is a differentiable 1×1 tensor.
    pub fn scale_by(&self, a: &DiffTensor, s: &DiffTensor) -> Result<DiffTensor> {
        if s.shape() != (1, 1) {
            return Err(shape_err("scale_by", a.shape(), s.shape()));
        }
        let v = a.value.scale(s.value.item());
        self.record(Op::ScaleBy, &[a, s], v)
    }

    pub fn transpose(&self, a: &DiffTensor) -> Result<DiffTensor> {
        self.record(Op::Transpose, &[a], a.value.transpose())
    }

    /// `x` with `a·x = b`, via LU with partial pivoting.
    pub fn solve(&self, a: &DiffTensor, b: &DiffTensor) -> Result<DiffTensor> {
        if a.rows() != a.cols() || a.rows() != b.rows() {
            return Err(shape_err("solve", a.shape(), b.shape()));
        }
        let lu = a.value.lu()?;
        let x = lu.solve(&b.value)?;
        self.record(Op::Solve(lu), &[a, b], x)
    }

    pub fn sigmoid(&self, a: &DiffTensor) -> Result<DiffTensor> {
        let v = a.value.map(|x| {
            let x = x.clamp(-ACTIVATION_CLAMP, ACTIVATION_CLAMP);
            1.0 / (1.0 + (-x).exp())
        });
        self.record(Op::Sigmoid, &[a], v)
    }

    pub fn tanh(&self, a: &DiffTensor) -> Result<DiffTensor> {
        let v = a
            .value
            .map(|x| x.clamp(-ACTIVATION_CLAMP, ACTIVATION_CLAMP).tanh());
        self.record(Op::Tanh, &[a], v)
    }

    /// Stacks tensors vertically.
    pub fn concat_rows(&self, parts: &[&DiffTensor]) -> Result<DiffTensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("concat_rows of nothing".into()))?;
        if let Some(bad) = parts.iter().find(|p| p.cols() != first.cols()) {
            return Err(shape_err("concat_rows", first.shape(), bad.shape()));
        }
        let rows: usize = parts.iter().map(|p| p.rows()).sum();
        let mut data = Vec::with_capacity(rows * first.cols());
        for p in parts {
            data.extend_from_slice(p.value.as_slice());
        }
        let v = Matrix::from_vec(rows, first.cols(), data)?;
        self.record(Op::ConcatRows, parts, v)
    }

    /// Stacks tensors horizontally.
    pub fn concat_cols(&self, parts: &[&DiffTensor]) -> Result<DiffTensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("concat_cols of nothing".into()))?;
        if let Some(bad) = parts.iter().find(|p| p.rows() != first.rows()) {
            return Err(shape_err("concat_cols", first.shape(), bad.shape()));
        }
        let cols: usize = parts.iter().map(|p| p.cols()).sum();
        let mut data = Vec::with_capacity(first.rows() * cols);
        for r in 0..first.rows() {
            for p in parts {
                data.extend_from_slice(p.value.row(r));
            }
        }
        let v = Matrix::from_vec(first.rows(), cols, data)?;
        self.record(Op::ConcatCols, parts, v)
    }

    fn check_range(op: &str, range: &Range<usize>, len: usize) -> Result<()> {
        if range.start >= range.end || range.end > len {
            return Err(Error::OutOfRange(format!(
                "{op}: range {range:?} invalid for extent {len}"
            )));
        }
        Ok(())
    }

    pub fn slice_rows(&self, a: &DiffTensor, range: Range<usize>) -> Result<DiffTensor> {
        Self::check_range("slice_rows", &range, a.rows())?;
        let v = a.value.slice_rows(range.start, range.end);
        self.record(Op::SliceRows(range.start), &[a], v)
    }

    pub fn slice_cols(&self, a: &DiffTensor, range: Range<usize>) -> Result<DiffTensor> {
        Self::check_range("slice_cols", &range, a.cols())?;
        let v = a.value.slice_cols(range.start, range.end);
        self.record(Op::SliceCols(range.start), &[a], v)
    }

    /// Reinterprets row-major data under a new shape.
    pub fn reshape(&self, a: &DiffTensor, rows: usize, cols: usize) -> Result<DiffTensor> {
        if rows * cols != a.value.len() || rows == 0 {
            return Err(shape_err("reshape", a.shape(), (rows, cols)));
        }
        self.record(Op::Reshape, &[a], a.value.reshaped(rows, cols))
    }

    /// Expands a column of `n(n+1)/2` packed lower-triangular entries (row-major)
    /// into an `n×n` lower-triangular matrix.
    pub fn unpack_lower(&self, v: &DiffTensor, n: usize) -> Result<DiffTensor> {
        if v.cols() != 1 || v.rows() != n * (n + 1) / 2 {
            return Err(shape_err("unpack_lower", v.shape(), (n * (n + 1) / 2, 1)));
        }
        let src = v.value.as_slice();
        let mut out = Matrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in 0..=i {
                out.set(i, j, src[k]);
                k += 1;
            }
        }
        self.record(Op::UnpackLower(n), &[v], out)
    }

    pub fn sum(&self, a: &DiffTensor) -> Result<DiffTensor> {
        self.record(Op::Sum, &[a], Matrix::scalar(a.value.sum()))
    }

    /// Mean of squared elementwise differences.
    pub fn mse(&self, a: &DiffTensor, b: &DiffTensor) -> Result<DiffTensor> {
        Self::check_same("mse", a, b)?;
        let n = a.value.len() as f64;
        let s: f64 = a
            .value
            .as_slice()
            .iter()
            .zip(b.value.as_slice())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        self.record(Op::Mse, &[a, b], Matrix::scalar(s / n))
    }

    pub fn backward(&self, loss: &DiffTensor) -> Result<Gradients> {
        self.backward_scaled(loss, 1.0)
    }

    /// Backward pass seeded with `d loss = seed`. Allowed once per tape.
    pub fn backward_scaled(&self, loss: &DiffTensor, seed: f64) -> Result<Gradients> {
        if loss.shape() != (1, 1) {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got {:?}",
                loss.shape()
            )));
        }
        if self.consumed.replace(true) {
            return Err(Error::Usage("backward already ran on this tape".into()));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Matrix>> = vec![None; nodes.len()];
        let Some(root) = loss.node else {
            return Ok(Gradients {
                tape: self.id,
                grads,
            });
        };
        if root.tape != self.id {
            return Err(Error::Usage("loss belongs to a different tape".into()));
        }
        grads[root.id] = Some(Matrix::scalar(seed));

        for id in (0..=root.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            for (slot, adj) in input_adjoints(node, &g)? {
                if let Some(target) = node.inputs[slot].node {
                    match &mut grads[target] {
                        Some(acc) => acc.add_assign(&adj),
                        empty => *empty = Some(adj),
                    }
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }
}

/// Adjoint contributions `(input slot, dInput)` of one node given its output adjoint.
fn input_adjoints(node: &Node, g: &Matrix) -> Result<Vec<(usize, Matrix)>> {
    let wants = |slot: usize| node.inputs[slot].node.is_some();
    let val = |slot: usize| node.inputs[slot].value.as_ref();
    let mut out = Vec::with_capacity(node.inputs.len());
    match &node.op {
        Op::Leaf => {}
        Op::MatMul => {
            if wants(0) {
                out.push((0, g.matmul_nt(val(1))));
            }
            if wants(1) {
                out.push((1, val(0).matmul_tn(g)));
            }
        }
        Op::Add => {
            for slot in 0..2 {
                if wants(slot) {
                    out.push((slot, g.clone()));
                }
            }
        }
        Op::Sub => {
            if wants(0) {
                out.push((0, g.clone()));
            }
            if wants(1) {
                out.push((1, g.scale(-1.0)));
            }
        }
        Op::Hadamard => {
            if wants(0) {
                out.push((0, g.hadamard(val(1))));
            }
            if wants(1) {
                out.push((1, g.hadamard(val(0))));
            }
        }
        Op::Scale(s) => out.push((0, g.scale(*s))),
        Op::ScaleBy => {
            if wants(0) {
                out.push((0, g.scale(val(1).item())));
            }
            if wants(1) {
                let ds: f64 = g
                    .as_slice()
                    .iter()
                    .zip(val(0).as_slice())
                    .map(|(x, y)| x * y)
                    .sum();
                out.push((1, Matrix::scalar(ds)));
            }
        }
        Op::Transpose => out.push((0, g.transpose())),
        Op::Solve(lu) => {
            let db = lu.solve_transpose(g)?;
            if wants(0) {
                out.push((0, db.matmul_nt(&node.value).scale(-1.0)));
            }
            if wants(1) {
                out.push((1, db));
            }
        }
        Op::Sigmoid => {
            out.push((0, g.zip_map(&node.value, |g, y| g * y * (1.0 - y))));
        }
        Op::Tanh => {
            out.push((0, g.zip_map(&node.value, |g, y| g * (1.0 - y * y))));
        }
        Op::ConcatRows => {
            let mut start = 0;
            for (slot, inp) in node.inputs.iter().enumerate() {
                let r = inp.value.rows();
                if inp.node.is_some() {
                    out.push((slot, g.slice_rows(start, start + r)));
                }
                start += r;
            }
        }
        Op::ConcatCols => {
            let mut start = 0;
            for (slot, inp) in node.inputs.iter().enumerate() {
                let c = inp.value.cols();
                if inp.node.is_some() {
                    out.push((slot, g.slice_cols(start, start + c)));
                }
                start += c;
            }
        }
        Op::SliceRows(start) => {
            let src = val(0);
            let mut d = Matrix::zeros(src.rows(), src.cols());
            let w = src.cols();
            d.as_mut_slice()[start * w..(start + g.rows()) * w].copy_from_slice(g.as_slice());
            out.push((0, d));
        }
        Op::SliceCols(start) => {
            let src = val(0);
            let mut d = Matrix::zeros(src.rows(), src.cols());
            for r in 0..g.rows() {
                d.row_mut(r)[*start..start + g.cols()].copy_from_slice(g.row(r));
            }
            out.push((0, d));
        }
        Op::Reshape => {
            let (r, c) = val(0).shape();
            out.push((0, g.reshaped(r, c)));
        }
        Op::UnpackLower(n) => {
            let mut d = Vec::with_capacity(n * (n + 1) / 2);
            for i in 0..*n {
                for j in 0..=i {
                    d.push(g.get(i, j));
                }
            }
            out.push((0, Matrix::column(&d)));
        }
        Op::Sum => {
            let src = val(0);
            out.push((0, Matrix::filled(src.rows(), src.cols(), g.item())));
        }
        Op::Mse => {
            let n = val(0).len() as f64;
            let k = 2.0 * g.item() / n;
            let diff = val(0).sub(val(1));
            if wants(0) {
                out.push((0, diff.scale(k)));
            }
            if wants(1) {
                out.push((1, diff.scale(-k)));
            }
        }
    }
    Ok(out)
}
