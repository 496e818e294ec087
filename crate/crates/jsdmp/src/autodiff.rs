//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records each operation as it executes. Every node stores its
//! forward value plus a one-shot backward closure that scatters the node's
//! adjoint into its inputs. [`Tape::backward`] walks the nodes once in
//! reverse creation order, which is already a topological order, so each
//! closure runs exactly once.
//!
//! Gradients only flow where they are needed: a node participates in the
//! backward sweep when at least one of its inputs does, and leaves opt in via
//! `requires_grad`. Constant subtrees cost nothing at backward time.

use std::cell::RefCell;
use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{Matrix, SparseMatrix};

/// Log arguments below this are clamped up before taking `ln`, and their
/// gradient contribution is zeroed to match.
pub const LOG_EPS: f64 = 1e-12;

/// Exponents are clamped to this magnitude before `exp`.
pub const EXP_CLAMP: f64 = 30.0;

/// Minimum product size before a matmul kernel fans out across threads.
const PAR_FLOPS: usize = 1 << 16;

pub type NodeId = usize;

type BackwardFn = Box<dyn FnOnce(&mut TapeInner)>;

struct Node {
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
    needs_grad: bool,
    backward: Option<BackwardFn>,
}

#[derive(Default)]
pub(crate) struct TapeInner {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl TapeInner {
    fn values(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].values
    }

    fn add_to_grad(&mut self, id: NodeId, contrib: Vec<f64>) {
        let node = &mut self.nodes[id];
        debug_assert_eq!(node.values.len(), contrib.len());
        match &mut node.grad {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(&contrib) {
                    *gi += ci;
                }
            }
            None => node.grad = Some(contrib),
        }
    }

    /// Gradient buffer for `id`, allocated as zeros on first touch.
    fn grad_mut(&mut self, id: NodeId) -> &mut [f64] {
        let node = &mut self.nodes[id];
        let len = node.values.len();
        node.grad.get_or_insert_with(|| vec![0.0; len])
    }
}

/// Shared handle to a recording tape.
#[derive(Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn num_nodes(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    /// Record a leaf that never receives gradient.
    pub fn constant(&self, m: &Matrix) -> Tensor {
        self.leaf(m, false)
    }

    /// Record a leaf. With `requires_grad`, the backward sweep accumulates
    /// into it and [`Tensor::grad`] reads the result.
    pub fn leaf(&self, m: &Matrix, requires_grad: bool) -> Tensor {
        let mut t = self.push_node(
            "leaf",
            m.rows(),
            m.cols(),
            m.data().to_vec(),
            requires_grad,
            None,
        );
        t.requires_grad = requires_grad;
        t
    }

    /// Run the reverse sweep from a scalar loss. Each recorded operation's
    /// backward closure fires at most once; calling this a second time on the
    /// same tape is an error because the closures are gone.
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        if !Rc::ptr_eq(&self.inner, &loss.tape.inner) {
            return Err(Error::State(
                "loss tensor belongs to a different tape".into(),
            ));
        }
        let mut inner = self.inner.borrow_mut();
        if inner.backward_done {
            return Err(Error::State("backward already ran on this tape".into()));
        }
        if loss.rows != 1 || loss.cols != 1 {
            return Err(Error::Dimension(format!(
                "backward needs a 1x1 loss, got {}x{}",
                loss.rows, loss.cols
            )));
        }
        inner.backward_done = true;
        inner.nodes[loss.id].grad = Some(vec![1.0]);
        for id in (0..inner.nodes.len()).rev() {
            let fire = inner.nodes[id].needs_grad && inner.nodes[id].grad.is_some();
            match inner.nodes[id].backward.take() {
                Some(f) if fire => f(&mut inner),
                _ => {}
            }
        }
        Ok(())
    }

    fn next_id(&self) -> NodeId {
        self.inner.borrow().nodes.len()
    }

    fn push_node(
        &self,
        op: &str,
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        needs_grad: bool,
        backward: Option<BackwardFn>,
    ) -> Tensor {
        debug_assert_eq!(values.len(), rows * cols, "{op}: bad value buffer");
        #[cfg(debug_assertions)]
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            panic!("{op} produced a non-finite value {bad}");
        }
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            values,
            grad: None,
            needs_grad,
            backward,
        });
        Tensor {
            tape: self.clone(),
            id,
            rows,
            cols,
            requires_grad: false,
        }
    }
}

/// Handle to one tape node: a dense matrix value plus its position in the
/// recorded computation.
#[derive(Clone)]
pub struct Tensor {
    tape: Tape,
    id: NodeId,
    rows: usize,
    cols: usize,
    /// True only for leaves created with gradient tracking enabled.
    pub requires_grad: bool,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.id)
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("requires_grad", &self.requires_grad)
            .finish()
    }
}

impl Tensor {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    /// Copy of the forward value.
    pub fn value(&self) -> Matrix {
        let inner = self.tape.inner.borrow();
        Matrix::new(self.rows, self.cols, inner.values(self.id).to_vec())
            .expect("node buffer consistent")
    }

    /// The single entry of a 1x1 tensor.
    pub fn scalar(&self) -> Result<f64> {
        if self.rows != 1 || self.cols != 1 {
            return Err(Error::Dimension(format!(
                "scalar() on a {}x{} tensor",
                self.rows, self.cols
            )));
        }
        Ok(self.tape.inner.borrow().values(self.id)[0])
    }

    /// Accumulated gradient after `backward`; zeros for untouched nodes, so
    /// parameters that never reached the loss read back as exactly zero.
    pub fn grad(&self) -> Matrix {
        let inner = self.tape.inner.borrow();
        let data = match &inner.nodes[self.id].grad {
            Some(g) => g.clone(),
            None => vec![0.0; self.rows * self.cols],
        };
        Matrix::new(self.rows, self.cols, data).expect("grad buffer consistent")
    }

    fn node_needs_grad(&self) -> bool {
        self.tape.inner.borrow().nodes[self.id].needs_grad
    }

    fn same_tape(&self, other: &Tensor) {
        assert!(
            Rc::ptr_eq(&self.tape.inner, &other.tape.inner),
            "operands recorded on different tapes"
        );
    }

    // ── basic elementwise structure ──

    fn unary_ew<F, D>(&self, op: &'static str, f: F, df: D) -> Tensor
    where
        F: Fn(f64) -> f64,
        D: Fn(f64, f64) -> f64 + 'static,
    {
        let out_vals: Vec<f64> = {
            let inner = self.tape.inner.borrow();
            inner.values(self.id).iter().map(|&x| f(x)).collect()
        };
        let needs = self.node_needs_grad();
        let a = self.id;
        let out_id = self.tape.next_id();
        let backward = needs.then(|| -> BackwardFn {
            Box::new(move |inner| {
                let g = inner.nodes[out_id].grad.clone().expect("adjoint present");
                let contrib: Vec<f64> = {
                    let xs = inner.values(a);
                    let ys = inner.values(out_id);
                    g.iter()
                        .zip(xs.iter().zip(ys))
                        .map(|(&gi, (&x, &y))| gi * df(x, y))
                        .collect()
                };
                inner.add_to_grad(a, contrib);
            })
        });
        self.tape
            .push_node(op, self.rows, self.cols, out_vals, needs, backward)
    }

    fn binary_ew<F>(&self, other: &Tensor, op: &'static str, f: F, kind: BinKind) -> Result<Tensor>
    where
        F: Fn(f64, f64) -> f64,
    {
        self.same_tape(other);
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "{op}: shape {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let out_vals: Vec<f64> = {
            let inner = self.tape.inner.borrow();
            inner
                .values(self.id)
                .iter()
                .zip(inner.values(other.id))
                .map(|(&x, &y)| f(x, y))
                .collect()
        };
        let a = self.id;
        let b = other.id;
        let a_needs = self.node_needs_grad();
        let b_needs = other.node_needs_grad();
        let needs = a_needs || b_needs;
        let out_id = self.tape.next_id();
        let backward = needs.then(|| -> BackwardFn {
            Box::new(move |inner| {
                let g = inner.nodes[out_id].grad.clone().expect("adjoint present");
                if a_needs {
                    let contrib: Vec<f64> = match kind {
                        BinKind::Add | BinKind::Sub => g.clone(),
                        BinKind::Mul => {
                            let bv = inner.values(b);
                            g.iter().zip(bv).map(|(&gi, &y)| gi * y).collect()
                        }
                    };
                    inner.add_to_grad(a, contrib);
                }
                if b_needs {
                    let contrib: Vec<f64> = match kind {
                        BinKind::Add => g.clone(),
                        BinKind::Sub => g.iter().map(|&gi| -gi).collect(),
                        BinKind::Mul => {
                            let av = inner.values(a);
                            g.iter().zip(av).map(|(&gi, &x)| gi * x).collect()
                        }
                    };
                    inner.add_to_grad(b, contrib);
                }
            })
        });
        Ok(self
            .tape
            .push_node(op, self.rows, self.cols, out_vals, needs, backward))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary_ew(other, "add", |x, y| x + y, BinKind::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary_ew(other, "sub", |x, y| x - y, BinKind::Sub)
    }

    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        self.binary_ew(other, "hadamard", |x, y| x * y, BinKind::Mul)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.unary_ew("scale", move |x| c * x, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        self.unary_ew("add_scalar", move |x| x + c, |_, _| 1.0)
    }

    pub fn exp(&self) -> Tensor {
        self.unary_ew("exp", f64::exp, |_, y| y)
    }

    pub fn relu(&self) -> Tensor {
        self.unary_ew(
            "relu",
            |x| x.max(0.0),
            |x, _| if x > 0.0 { 1.0 } else { 0.0 },
        )
    }

    pub fn sigmoid(&self) -> Tensor {
        self.unary_ew(
            "sigmoid",
            |x| 1.0 / (1.0 + (-x).exp()),
            |_, y| y * (1.0 - y),
        )
    }

    /// Natural log with an epsilon floor: arguments below [`LOG_EPS`] are
    /// clamped and contribute zero gradient. Negative entries are a hard
    /// domain error rather than silently clamped.
    pub fn log(&self) -> Result<Tensor> {
        {
            let inner = self.tape.inner.borrow();
            if let Some(pos) = inner.values(self.id).iter().position(|&v| v < 0.0) {
                return Err(Error::Domain(format!(
                    "log of negative entry {} at flat index {pos}",
                    inner.values(self.id)[pos]
                )));
            }
        }
        Ok(self.unary_ew(
            "log",
            |x| x.max(LOG_EPS).ln(),
            |x, _| if x > LOG_EPS { 1.0 / x } else { 0.0 },
        ))
    }

    /// Reciprocal square root; every entry must be strictly positive.
    pub fn rsqrt(&self) -> Result<Tensor> {
        {
            let inner = self.tape.inner.borrow();
            if let Some(pos) = inner.values(self.id).iter().position(|&v| v <= 0.0) {
                return Err(Error::Domain(format!(
                    "rsqrt of non-positive entry {} at flat index {pos}",
                    inner.values(self.id)[pos]
                )));
            }
        }
        Ok(self.unary_ew("rsqrt", |x| 1.0 / x.sqrt(), |_, y| -0.5 * y * y * y))
    }

    /// Clamp to `[lo, hi]`; gradient passes only through the interior.
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        self.unary_ew(
            "clamp",
            move |x| x.clamp(lo, hi),
            move |x, _| if x > lo && x < hi { 1.0 } else { 0.0 },
        )
    }

    // ── matrix products ──

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        self.same_tape(other);
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "matmul: {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let out_vals = {
            let inner = self.tape.inner.borrow();
            matmul_nn(inner.values(self.id), inner.values(other.id), m, k, n)
        };
        let a = self.id;
        let b = other.id;
        let a_needs = self.node_needs_grad();
        let b_needs = other.node_needs_grad();
        let needs = a_needs || b_needs;
        let out_id = self.tape.next_id();
        let backward = needs.then(|| -> BackwardFn {
            Box::new(move |inner| {
                let g = inner.nodes[out_id].grad.clone().expect("adjoint present");
                if a_needs {
                    let contrib = matmul_nt(&g, inner.values(b), m, n, k);
                    inner.add_to_grad(a, contrib);
                }
                if b_needs {
                    let contrib = matmul_tn(inner.values(a), &g, m, k, n);
                    inner.add_to_grad(b, contrib);
                }
            })
        });
        Ok(self
            .tape
            .push_node("matmul", m, n, out_vals, needs, backward))
    }

    pub fn transpose(&self) -> Tensor {
        let (m, n) = (self.rows, self.cols);
        let out_vals = {
            let inner = self.tape.inner.borrow();
            transpose_raw(inner.values(self.id), m, n)
        };
        let a = self.id;
        let needs = self.node_needs_grad();
        let out_id = self.tape.next_id();
        let backward = needs.then(|| -> BackwardFn {
            Box::new(move |inner| {
                let g = inner.nodes[out_id].grad.clone().expect("adjoint present");
                let contrib = transpose_raw(&g, n, m);
                inner.add_to_grad(a, contrib);
            })
        });
        self.tape
            .push_node("transpose", n, m, out_vals, needs, backward)
    }

    // ── row-structured operations ──

    /// Numerically stable softmax over each row.
    pub fn row_softmax(&self) -> Tensor {
        let (m, n) = (self.rows, self.cols);
        let out_vals = {
            let inner = self.tape.inner.borrow();
            let x = inner.values(self.id);
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let row = &x[i * n..(i + 1) * n];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let dst = &mut out[i * n..(i + 1) * n];
                let mut sum = 0.0;
                for (d, &v) in dst.iter_mut().zip(row) {
                    *d = (v - max).exp();
                    sum += *d;
                }
                for d in dst.iter_mut() {
                    *d /= sum;
                }
            }
            out
        };
        let a = self.id;
        let needs = self.node_needs_grad();
        let out_id = self.tape.next_id();
        let backward = needs.then(|| -> BackwardFn {
            Box::new(move |inner| {
                let g = inner.nodes[out_id].grad.clone().expect("adjoint present");
                let contrib: Vec<f64> = {
                    let p = inner.values(out_id);
                    let mut contrib = vec![0.0; m * n];
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        let pr = &p[i * n..(i + 1) * n];
                        let dot: f64 = gr.iter().zip(pr).map(|(&gi, &pi)| gi * pi).sum();
                        let cr = &mut contrib[i * n..(i + 1) * n];
                        for ((c, &gi), &pi) in cr.iter_mut().zip(gr).zip(pr) {
                            *c = pi * (gi - dot);
                        }
                    }
                    contrib
                };
                inner.add_to_grad(a, contrib);
            })
        });
        self.tape
            .push_node("row_softmax", m, n, out_vals, needs, backward)
    }

    /// Sum each row down to a single column.
    pub fn row_sum(&self) -> Tensor {
        let (m, n) = (self.rows, self.cols);
        let out_vals = {
            let inner = self.tape.inner.borrow();
            let x = inner.values(self.id);
            (0..m).map(|i| x[i * n..(i + 1) * n].iter().sum()).collect()
        };
        let a = self.id;
        let needs = self.node_needs_grad();
        let out_id = self.tape.next_id();
        let backward = needs.then(|| -> BackwardFn {
            Box::new(move |inner| {
                let g = inner.nodes[out_id].grad.clone().expect("adjoint present");
                let mut contrib = vec![0.0; m * n];
                for i in 0..m {
                    let gi = g[i];
                    for c in &mut contrib[i * n..(i + 1) * n] {
                        *c = gi;
                    }
                }
                inner.add_to_grad(a, contrib);
            })
        });
        self.tape
            .push_node("row_sum", m, 1, out_vals, needs, backward)
    }

    /// Sum of all entries, as a 1x1 tensor.
    pub fn sum_all(&self) -> Tensor {
        let total: f64 = {
            let inner = self.tape.inner.borrow();
            inner.values(self.id).iter().sum()
        };
        let a = self.id;
        let len = self.rows * self.cols;
        let needs = self.node_needs_grad();
        let out_id = self.tape.next_id();
        let backward = needs.then(|| -> BackwardFn {
            Box::new(move |inner| {
                let g0 = inner.nodes[out_id].grad.as_ref().expect("adjoint present")[0];
                inner.add_to_grad(a, vec![g0; len]);
            })
        });
        self.tape
            .push_node("sum_all", 1, 1, vec![total], needs, backward)
    }

    /// Pick rows by index: `out[e] = x[idx[e]]`. Duplicate indices are fine;
    /// the backward pass scatter-adds in ascending `e` order.
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Tensor> {
        let (m, n) = (self.rows, self.cols);
        if let Some(pos) = idx.iter().position(|&i| i >= m) {
            return Err(Error::Index(format!(
                "gather_rows: index {} at position {pos} exceeds {} rows",
                idx[pos], m
            )));
        }
        let e = idx.len();
        let out_vals = {
            let inner = self.tape.inner.borrow();
            let x = inner.values(self.id);
            let mut out = Vec::with_capacity(e * n);
            for &i in idx {
                out.extend_from_slice(&x[i * n..(i + 1) * n]);
            }
            out
        };
        let a = self.id;
        let needs = self.node_needs_grad();
        let out_id = self.tape.next_id();
        let idx_owned: Vec<usize> = idx.to_vec();
        let backward = needs.then(|| -> BackwardFn {
            Box::new(move |inner| {
                let g = inner.nodes[out_id].grad.clone().expect("adjoint present");
                let grad = inner.grad_mut(a);
                for (e, &i) in idx_owned.iter().enumerate() {
                    let src = &g[e * n..(e + 1) * n];
                    let dst = &mut grad[i * n..(i + 1) * n];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            })
        });
        Ok(self
            .tape
            .push_node("gather_rows", e, n, out_vals, needs, backward))
    }

    /// Scatter-add rows into an `n_out`-row result: `out[idx[e]] += x[e]`,
    /// accumulated in ascending `e` order.
    pub fn scatter_sum_rows(&self, idx: &[usize], n_out: usize) -> Result<Tensor> {
        let (e, n) = (self.rows, self.cols);
        if idx.len() != e {
            return Err(Error::Dimension(format!(
                "scatter_sum_rows: {} indices for {} rows",
                idx.len(),
                e
            )));
        }
        if let Some(pos) = idx.iter().position(|&i| i >= n_out) {
            return Err(Error::Index(format!(
                "scatter_sum_rows: index {} at position {pos} exceeds {n_out} rows",
                idx[pos]
            )));
        }
        let out_vals = {
            let inner = self.tape.inner.borrow();
            let x = inner.values(self.id);
            let mut out = vec![0.0; n_out * n];
            for (row, &i) in idx.iter().enumerate() {
                let src = &x[row * n..(row + 1) * n];
                let dst = &mut out[i * n..(i + 1) * n];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
            out
        };
        let a = self.id;
        let needs = self.node_needs_grad();
        let out_id = self.tape.next_id();
        let idx_owned: Vec<usize> = idx.to_vec();
        let backward = needs.then(|| -> BackwardFn {
            Box::new(move |inner| {
                let g = inner.nodes[out_id].grad.clone().expect("adjoint present");
                let mut contrib = Vec::with_capacity(e * n);
                for &i in &idx_owned {
                    contrib.extend_from_slice(&g[i * n..(i + 1) * n]);
                }
                inner.add_to_grad(a, contrib);
            })
        });
        Ok(self
            .tape
            .push_node("scatter_sum_rows", n_out, n, out_vals, needs, backward))
    }

    /// Multiply row `i` by `s[i]`, where `s` is a column vector.
    pub fn scale_rows(&self, s: &Tensor) -> Result<Tensor> {
        self.same_tape(s);
        if s.cols != 1 || s.rows != self.rows {
            return Err(Error::Dimension(format!(
                "scale_rows: scales {}x{} against {}x{}",
                s.rows, s.cols, self.rows, self.cols
            )));
        }
        let (m, n) = (self.rows, self.cols);
        let out_vals = {
            let inner = self.tape.inner.borrow();
            let x = inner.values(self.id);
            let sv = inner.values(s.id);
            let mut out = Vec::with_capacity(m * n);
            for i in 0..m {
                out.extend(x[i * n..(i + 1) * n].iter().map(|&v| v * sv[i]));
            }
            out
        };
        let a = self.id;
        let b = s.id;
        let a_needs = self.node_needs_grad();
        let b_needs = s.node_needs_grad();
        let needs = a_needs || b_needs;
        let out_id = self.tape.next_id();
        let backward = needs.then(|| -> BackwardFn {
            Box::new(move |inner| {
                let g = inner.nodes[out_id].grad.clone().expect("adjoint present");
                if a_needs {
                    let contrib: Vec<f64> = {
                        let sv = inner.values(b);
                        let mut c = Vec::with_capacity(m * n);
                        for i in 0..m {
                            c.extend(g[i * n..(i + 1) * n].iter().map(|&v| v * sv[i]));
                        }
                        c
                    };
                    inner.add_to_grad(a, contrib);
                }
                if b_needs {
                    let contrib: Vec<f64> = {
                        let x = inner.values(a);
                        (0..m)
                            .map(|i| {
                                g[i * n..(i + 1) * n]
                                    .iter()
                                    .zip(&x[i * n..(i + 1) * n])
                                    .map(|(&gv, &xv)| gv * xv)
                                    .sum()
                            })
                            .collect()
                    };
                    inner.add_to_grad(b, contrib);
                }
            })
        });
        Ok(self
            .tape
            .push_node("scale_rows", m, n, out_vals, needs, backward))
    }

    /// Multiply the whole tensor by a 1x1 tensor.
    pub fn scale_by(&self, s: &Tensor) -> Result<Tensor> {
        self.same_tape(s);
        if s.rows != 1 || s.cols != 1 {
            return Err(Error::Dimension(format!(
                "scale_by: scale must be 1x1, got {}x{}",
                s.rows, s.cols
            )));
        }
        let (m, n) = (self.rows, self.cols);
        let out_vals = {
            let inner = self.tape.inner.borrow();
            let sv = inner.values(s.id)[0];
            inner.values(self.id).iter().map(|&x| x * sv).collect()
        };
        let a = self.id;
        let b = s.id;
        let a_needs = self.node_needs_grad();
        let b_needs = s.node_needs_grad();
        let needs = a_needs || b_needs;
        let out_id = self.tape.next_id();
        let backward = needs.then(|| -> BackwardFn {
            Box::new(move |inner| {
                let g = inner.nodes[out_id].grad.clone().expect("adjoint present");
                if a_needs {
                    let sv = inner.values(b)[0];
                    let contrib: Vec<f64> = g.iter().map(|&gi| gi * sv).collect();
                    inner.add_to_grad(a, contrib);
                }
                if b_needs {
                    let dot: f64 = {
                        let x = inner.values(a);
                        g.iter().zip(x).map(|(&gi, &xi)| gi * xi).sum()
                    };
                    inner.add_to_grad(b, vec![dot]);
                }
            })
        });
        Ok(self
            .tape
            .push_node("scale_by", m, n, out_vals, needs, backward))
    }

    /// Contiguous row slice `[start, start+len)`.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Tensor> {
        let (m, n) = (self.rows, self.cols);
        if start + len > m {
            return Err(Error::Index(format!(
                "slice_rows: rows {start}..{} of a {m}-row tensor",
                start + len
            )));
        }
        let out_vals = {
            let inner = self.tape.inner.borrow();
            inner.values(self.id)[start * n..(start + len) * n].to_vec()
        };
        let a = self.id;
        let needs = self.node_needs_grad();
        let out_id = self.tape.next_id();
        let backward = needs.then(|| -> BackwardFn {
            Box::new(move |inner| {
                let g = inner.nodes[out_id].grad.clone().expect("adjoint present");
                let grad = inner.grad_mut(a);
                for (gi, d) in g.iter().zip(&mut grad[start * n..(start + len) * n]) {
                    *d += gi;
                }
            })
        });
        Ok(self
            .tape
            .push_node("slice_rows", len, n, out_vals, needs, backward))
    }

    /// Inverted dropout. In training mode each entry is zeroed independently
    /// with probability `rate` and survivors are rescaled by `1/(1-rate)`;
    /// in eval mode (or at rate 0) the input passes through untouched.
    pub fn dropout(&self, rate: f64, training: bool, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(self.clone());
        }
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        let len = self.rows * self.cols;
        let mask: Vec<f64> = (0..len)
            .map(|_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    scale
                }
            })
            .collect();
        let out_vals: Vec<f64> = {
            let inner = self.tape.inner.borrow();
            inner
                .values(self.id)
                .iter()
                .zip(&mask)
                .map(|(&x, &m)| x * m)
                .collect()
        };
        let a = self.id;
        let needs = self.node_needs_grad();
        let out_id = self.tape.next_id();
        let backward = needs.then(|| -> BackwardFn {
            Box::new(move |inner| {
                let g = inner.nodes[out_id].grad.clone().expect("adjoint present");
                let contrib: Vec<f64> = g.iter().zip(&mask).map(|(&gi, &m)| gi * m).collect();
                inner.add_to_grad(a, contrib);
            })
        });
        Ok(self
            .tape
            .push_node("dropout", self.rows, self.cols, out_vals, needs, backward))
    }

    /// Quadratic form `trace(X^T L X)` against a symmetric sparse matrix,
    /// returned as a 1x1 tensor.
    pub fn quad_form(&self, l: &SparseMatrix) -> Result<Tensor> {
        if l.n != self.rows {
            return Err(Error::Dimension(format!(
                "quad_form: {}x{} tensor against a {}-dim sparse matrix",
                self.rows, self.cols, l.n
            )));
        }
        let n = self.cols;
        let total: f64 = {
            let inner = self.tape.inner.borrow();
            let x = inner.values(self.id);
            l.triplets
                .iter()
                .map(|&(i, j, w)| {
                    let xi = &x[i * n..(i + 1) * n];
                    let xj = &x[j * n..(j + 1) * n];
                    w * xi.iter().zip(xj).map(|(&a, &b)| a * b).sum::<f64>()
                })
                .sum()
        };
        let a = self.id;
        let rows = self.rows;
        let needs = self.node_needs_grad();
        let out_id = self.tape.next_id();
        let triplets = l.triplets.clone();
        let backward = needs.then(|| -> BackwardFn {
            Box::new(move |inner| {
                let g0 = inner.nodes[out_id].grad.as_ref().expect("adjoint present")[0];
                let contrib: Vec<f64> = {
                    let x = inner.values(a);
                    let mut c = vec![0.0; rows * n];
                    for &(i, j, w) in &triplets {
                        for s in 0..n {
                            c[i * n + s] += g0 * w * x[j * n + s];
                            c[j * n + s] += g0 * w * x[i * n + s];
                        }
                    }
                    c
                };
                inner.add_to_grad(a, contrib);
            })
        });
        Ok(self
            .tape
            .push_node("quad_form", 1, 1, vec![total], needs, backward))
    }

    /// Mean softmax cross-entropy over the masked rows, fused for stability.
    pub fn softmax_cross_entropy(&self, labels: &[usize], mask: &[bool]) -> Result<Tensor> {
        let (m, c) = (self.rows, self.cols);
        if labels.len() != m || mask.len() != m {
            return Err(Error::Dimension(format!(
                "cross_entropy: {} logit rows, {} labels, {} mask entries",
                m,
                labels.len(),
                mask.len()
            )));
        }
        let count = mask.iter().filter(|&&b| b).count();
        if count == 0 {
            return Err(Error::Config("cross_entropy: mask selects no rows".into()));
        }
        for (i, (&y, &on)) in labels.iter().zip(mask).enumerate() {
            if on && y >= c {
                return Err(Error::Index(format!(
                    "cross_entropy: label {y} at row {i} exceeds {c} classes"
                )));
            }
        }
        let total: f64 = {
            let inner = self.tape.inner.borrow();
            let x = inner.values(self.id);
            let mut acc = 0.0;
            for i in 0..m {
                if !mask[i] {
                    continue;
                }
                let row = &x[i * c..(i + 1) * c];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
                acc += lse - row[labels[i]];
            }
            acc / count as f64
        };
        let a = self.id;
        let needs = self.node_needs_grad();
        let out_id = self.tape.next_id();
        let labels_owned: Vec<usize> = labels.to_vec();
        let mask_owned: Vec<bool> = mask.to_vec();
        let backward = needs.then(|| -> BackwardFn {
            Box::new(move |inner| {
                let g0 = inner.nodes[out_id].grad.as_ref().expect("adjoint present")[0];
                let contrib: Vec<f64> = {
                    let x = inner.values(a);
                    let mut grad = vec![0.0; m * c];
                    let inv = g0 / count as f64;
                    for i in 0..m {
                        if !mask_owned[i] {
                            continue;
                        }
                        let row = &x[i * c..(i + 1) * c];
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
                        let gr = &mut grad[i * c..(i + 1) * c];
                        for (j, (g, &v)) in gr.iter_mut().zip(row).enumerate() {
                            let p = (v - max).exp() / sum;
                            let target = if j == labels_owned[i] { 1.0 } else { 0.0 };
                            *g = inv * (p - target);
                        }
                    }
                    grad
                };
                inner.add_to_grad(a, contrib);
            })
        });
        Ok(self
            .tape
            .push_node("softmax_cross_entropy", 1, 1, vec![total], needs, backward))
    }

    /// Row-wise argmax of the forward value, ties going to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        let inner = self.tape.inner.borrow();
        let x = inner.values(self.id);
        let n = self.cols;
        (0..self.rows)
            .map(|i| {
                let row = &x[i * n..(i + 1) * n];
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// True if any forward entry is NaN; used for descriptive errors before
    /// values reach `exp`.
    pub fn first_nan(&self) -> Option<usize> {
        let inner = self.tape.inner.borrow();
        inner.values(self.id).iter().position(|v| v.is_nan())
    }
}

#[derive(Clone, Copy)]
enum BinKind {
    Add,
    Sub,
    Mul,
}

// ── raw kernels ──

/// `out = a (m×k) · b (k×n)`, row-parallel above the size threshold. Each
/// output row is accumulated by exactly one thread in a fixed order, so the
/// result does not depend on the thread count.
pub(crate) fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    let body = |i: usize, row: &mut [f64]| {
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                let brow = &b[p * n..(p + 1) * n];
                for (o, &bv) in row.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    };
    if m * k * n >= PAR_FLOPS {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| body(i, row));
    } else {
        for (i, row) in out.chunks_mut(n).enumerate() {
            body(i, row);
        }
    }
    out
}

/// `out = a (m×n) · b^T (n×k)` where `b` is stored `k×n`.
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    let body = |i: usize, row: &mut [f64]| {
        let arow = &a[i * n..(i + 1) * n];
        for (p, o) in row.iter_mut().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            *o = arow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
        }
    };
    if m * n * k >= PAR_FLOPS {
        out.par_chunks_mut(k)
            .enumerate()
            .for_each(|(i, row)| body(i, row));
    } else {
        for (i, row) in out.chunks_mut(k).enumerate() {
            body(i, row);
        }
    }
    out
}

/// `out = a^T (k×m) · b (m×n)` where `a` is stored `m×k`.
pub(crate) fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    let body = |p: usize, row: &mut [f64]| {
        for i in 0..m {
            let av = a[i * k + p];
            if av != 0.0 {
                let brow = &b[i * n..(i + 1) * n];
                for (o, &bv) in row.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    };
    if m * k * n >= PAR_FLOPS {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(p, row)| body(p, row));
    } else {
        for (p, row) in out.chunks_mut(n).enumerate() {
            body(p, row);
        }
    }
    out
}

fn transpose_raw(x: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for r in 0..m {
        for c in 0..n {
            out[c * m + r] = x[r * n + c];
        }
    }
    out
}
