//! Dense f64 tensors with reverse-mode gradients, the Adam optimizer and a
//! named-tensor checkpoint format.
//!
//! The computation graph is a tape of reference-counted nodes: every op
//! produces a fresh node pointing at its inputs along with a closure that
//! routes the output gradient back to them. A graph is confined to one thread
//! (`Rc` interior); distinct graphs run concurrently without sharing.
//!
//! Gradients accumulate additively until explicitly zeroed, so per-sample
//! backward passes across a mini-batch sum into the parameter gradients and a
//! second backward over the same graph doubles them. Any op that produces a
//! non-finite value fails immediately rather than letting NaN propagate.

use crate::binio;
use std::cell::RefCell;
use std::collections::HashSet;
use std::io::{self, Read, Write};
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: shape {shape:?} does not hold {len} values")]
    BadLength {
        op: &'static str,
        shape: Vec<usize>,
        len: usize,
    },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("parameter {index} has no gradient")]
    MissingGrad { index: usize },
    #[error("{op}: index {index} out of bounds for {bound}")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("optimizer state tracks {expected} parameters, got {got}")]
    StateMismatch { expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

type Result<T> = std::result::Result<T, TensorError>;

struct Op {
    parents: Vec<Tensor>,
    /// Called with (output gradient, output data) in reverse topological
    /// order; accumulates into the parents' gradients.
    backward: Box<dyn Fn(&[f64], &[f64])>,
}

struct Inner {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Option<Op>,
}

/// A shared handle to one node of the computation graph.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<Inner>>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &inner.shape)
            .field("requires_grad", &inner.requires_grad)
            .finish()
    }
}

fn product(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if product(&shape) != data.len() {
            return Err(TensorError::BadLength {
                op: "new",
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor {
            inner: Rc::new(RefCell::new(Inner {
                shape,
                data,
                grad: None,
                requires_grad: false,
                op: None,
            })),
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = product(&shape);
        Tensor::new(shape, vec![0.0; len]).expect("length matches by construction")
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::new(vec![1], vec![value]).expect("scalar")
    }

    /// Marks this leaf as trainable and returns it.
    pub fn with_grad(self) -> Self {
        self.inner.borrow_mut().requires_grad = true;
        self
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    /// Copy of the stored values.
    pub fn value(&self) -> Vec<f64> {
        self.inner.borrow().data.clone()
    }

    /// The single value of a scalar tensor.
    pub fn item(&self) -> f64 {
        let inner = self.inner.borrow();
        debug_assert_eq!(inner.data.len(), 1);
        inner.data[0]
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        let mut inner = self.inner.borrow_mut();
        if let Some(g) = inner.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Overwrites the stored values in place; shape is unchanged.
    pub fn set_data(&self, values: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(inner.data.len(), values.len(), "set_data length mismatch");
        inner.data.copy_from_slice(values);
    }

    /// Adds `delta` to one element; used by finite-difference probes and
    /// optimizer updates.
    pub fn nudge(&self, index: usize, delta: f64) {
        self.inner.borrow_mut().data[index] += delta;
    }

    fn with_grad_buffer<F: FnOnce(&mut [f64])>(&self, f: F) {
        let mut inner = self.inner.borrow_mut();
        if !inner.requires_grad {
            return;
        }
        let len = inner.data.len();
        let grad = inner.grad.get_or_insert_with(|| vec![0.0; len]);
        f(grad);
    }

    fn make(
        op_name: &'static str,
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward: Box<dyn Fn(&[f64], &[f64])>,
    ) -> Result<Tensor> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let requires_grad = parents.iter().any(Tensor::requires_grad);
        let op = requires_grad.then_some(Op { parents, backward });
        Ok(Tensor {
            inner: Rc::new(RefCell::new(Inner {
                shape,
                data,
                grad: None,
                requires_grad,
                op,
            })),
        })
    }

    /// Reverse-mode sweep from a scalar loss: every tensor with
    /// `requires_grad` reachable from it accumulates its partial derivative.
    /// Leaf gradients persist across sweeps (they add up); intermediate
    /// gradients are transient and reset on every sweep.
    pub fn backward(&self) -> Result<()> {
        {
            let inner = self.inner.borrow();
            if inner.data.len() != 1 {
                return Err(TensorError::NotScalar {
                    shape: inner.shape.clone(),
                });
            }
        }
        if !self.requires_grad() {
            self.with_grad_buffer(|g| g[0] += 1.0);
            return Ok(());
        }

        // Iterative post-order DFS; reversal gives the topological order.
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: HashSet<*const RefCell<Inner>> = HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        visited.insert(Rc::as_ptr(&self.inner));
        while let Some((node, child_idx)) = stack.pop() {
            let next_parent = {
                let inner = node.inner.borrow();
                inner.op.as_ref().and_then(|op| op.parents.get(child_idx).cloned())
            };
            match next_parent {
                Some(parent) => {
                    stack.push((node, child_idx + 1));
                    if visited.insert(Rc::as_ptr(&parent.inner)) {
                        stack.push((parent, 0));
                    }
                }
                None => order.push(node),
            }
        }

        for node in &order {
            let mut inner = node.inner.borrow_mut();
            if inner.op.is_some() {
                inner.grad = None;
            }
        }
        self.with_grad_buffer(|g| g[0] += 1.0);

        for node in order.iter().rev() {
            let (grad_out, data) = {
                let inner = node.inner.borrow();
                match (&inner.op, &inner.grad) {
                    (Some(_), Some(grad)) => (grad.clone(), inner.data.clone()),
                    _ => continue,
                }
            };
            let inner = node.inner.borrow();
            if let Some(op) = &inner.op {
                (op.backward)(&grad_out, &data);
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

fn matmul_raw(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * m..(i + 1) * m];
        for (p, &a_val) in a_row.iter().enumerate() {
            if a_val == 0.0 {
                continue;
            }
            let b_row = &b[p * m..(p + 1) * m];
            for (o, &b_val) in out_row.iter_mut().zip(b_row) {
                *o += a_val * b_val;
            }
        }
    }
}

impl Tensor {
    fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        let shape = self.shape();
        match shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(TensorError::ShapeMismatch {
                op,
                lhs: shape,
                rhs: vec![],
            }),
        }
    }

    /// `(n,k) x (k,m) -> (n,m)`.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (n, k) = self.dims2("matmul")?;
        let (k2, m) = rhs.dims2("matmul")?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let mut out = vec![0.0; n * m];
        matmul_raw(&self.value(), &rhs.value(), n, k, m, &mut out);
        let a = self.clone();
        let b = rhs.clone();
        Tensor::make(
            "matmul",
            vec![n, m],
            out,
            vec![self.clone(), rhs.clone()],
            Box::new(move |go, _| {
                let a_data = a.value();
                let b_data = b.value();
                a.with_grad_buffer(|ga| {
                    // dA = dOut . B^T
                    for i in 0..n {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..m {
                                acc += go[i * m + j] * b_data[p * m + j];
                            }
                            ga[i * k + p] += acc;
                        }
                    }
                });
                b.with_grad_buffer(|gb| {
                    // dB = A^T . dOut
                    for p in 0..k {
                        for i in 0..n {
                            let a_val = a_data[i * k + p];
                            if a_val == 0.0 {
                                continue;
                            }
                            for j in 0..m {
                                gb[p * m + j] += a_val * go[i * m + j];
                            }
                        }
                    }
                });
            }),
        )
    }

    /// `(n,m) x (m,) -> (n,)`.
    pub fn matvec(&self, v: &Tensor) -> Result<Tensor> {
        let (n, m) = self.dims2("matvec")?;
        if v.shape() != [m] {
            return Err(TensorError::ShapeMismatch {
                op: "matvec",
                lhs: self.shape(),
                rhs: v.shape(),
            });
        }
        let h_data = self.value();
        let v_data = v.value();
        let out: Vec<f64> = (0..n)
            .map(|i| {
                h_data[i * m..(i + 1) * m]
                    .iter()
                    .zip(&v_data)
                    .map(|(h, x)| h * x)
                    .sum()
            })
            .collect();
        let h = self.clone();
        let vv = v.clone();
        Tensor::make(
            "matvec",
            vec![n],
            out,
            vec![self.clone(), v.clone()],
            Box::new(move |go, _| {
                let h_data = h.value();
                let v_data = vv.value();
                h.with_grad_buffer(|gh| {
                    for i in 0..n {
                        for j in 0..m {
                            gh[i * m + j] += go[i] * v_data[j];
                        }
                    }
                });
                vv.with_grad_buffer(|gv| {
                    for i in 0..n {
                        for j in 0..m {
                            gv[j] += go[i] * h_data[i * m + j];
                        }
                    }
                });
            }),
        )
    }

    /// `(n,) x (n,m) -> (m,)`.
    pub fn vecmat(&self, h: &Tensor) -> Result<Tensor> {
        let (n, m) = h.dims2("vecmat")?;
        if self.shape() != [n] {
            return Err(TensorError::ShapeMismatch {
                op: "vecmat",
                lhs: self.shape(),
                rhs: h.shape(),
            });
        }
        let v_data = self.value();
        let h_data = h.value();
        let mut out = vec![0.0; m];
        for i in 0..n {
            if v_data[i] == 0.0 {
                continue;
            }
            for j in 0..m {
                out[j] += v_data[i] * h_data[i * m + j];
            }
        }
        let v = self.clone();
        let hh = h.clone();
        Tensor::make(
            "vecmat",
            vec![m],
            out,
            vec![self.clone(), h.clone()],
            Box::new(move |go, _| {
                let v_data = v.value();
                let h_data = hh.value();
                v.with_grad_buffer(|gv| {
                    for i in 0..n {
                        let mut acc = 0.0;
                        for j in 0..m {
                            acc += go[j] * h_data[i * m + j];
                        }
                        gv[i] += acc;
                    }
                });
                hh.with_grad_buffer(|gh| {
                    for i in 0..n {
                        for j in 0..m {
                            gh[i * m + j] += v_data[i] * go[j];
                        }
                    }
                });
            }),
        )
    }

    /// Elementwise sum; a 1-D right operand broadcasts across the leading
    /// axis of a 2-D left operand.
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        let ls = self.shape();
        let rs = rhs.shape();
        let broadcast = ls.len() == 2 && rs.len() == 1 && rs[0] == ls[1];
        if !broadcast && ls != rs {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                lhs: ls,
                rhs: rs,
            });
        }
        let a_data = self.value();
        let b_data = rhs.value();
        let width = if broadcast { rs[0] } else { b_data.len() };
        let out: Vec<f64> = a_data
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b_data[if broadcast { i % width } else { i }])
            .collect();
        let a = self.clone();
        let b = rhs.clone();
        Tensor::make(
            "add",
            ls,
            out,
            vec![self.clone(), rhs.clone()],
            Box::new(move |go, _| {
                a.with_grad_buffer(|ga| {
                    for (g, &o) in ga.iter_mut().zip(go) {
                        *g += o;
                    }
                });
                b.with_grad_buffer(|gb| {
                    if broadcast {
                        for (i, &o) in go.iter().enumerate() {
                            gb[i % width] += o;
                        }
                    } else {
                        for (g, &o) in gb.iter_mut().zip(go) {
                            *g += o;
                        }
                    }
                });
            }),
        )
    }

    /// Elementwise difference of same-shape tensors.
    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.shape() != rhs.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "sub",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let out: Vec<f64> = self
            .value()
            .iter()
            .zip(rhs.value())
            .map(|(a, b)| a - b)
            .collect();
        let a = self.clone();
        let b = rhs.clone();
        Tensor::make(
            "sub",
            self.shape(),
            out,
            vec![self.clone(), rhs.clone()],
            Box::new(move |go, _| {
                a.with_grad_buffer(|ga| {
                    for (g, &o) in ga.iter_mut().zip(go) {
                        *g += o;
                    }
                });
                b.with_grad_buffer(|gb| {
                    for (g, &o) in gb.iter_mut().zip(go) {
                        *g -= o;
                    }
                });
            }),
        )
    }

    /// Elementwise product of same-shape tensors.
    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.shape() != rhs.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mul",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let out: Vec<f64> = self
            .value()
            .iter()
            .zip(rhs.value())
            .map(|(a, b)| a * b)
            .collect();
        let a = self.clone();
        let b = rhs.clone();
        Tensor::make(
            "mul",
            self.shape(),
            out,
            vec![self.clone(), rhs.clone()],
            Box::new(move |go, _| {
                let a_data = a.value();
                let b_data = b.value();
                a.with_grad_buffer(|ga| {
                    for i in 0..go.len() {
                        ga[i] += go[i] * b_data[i];
                    }
                });
                b.with_grad_buffer(|gb| {
                    for i in 0..go.len() {
                        gb[i] += go[i] * a_data[i];
                    }
                });
            }),
        )
    }

    /// Multiplication by a constant.
    pub fn scale(&self, factor: f64) -> Result<Tensor> {
        let out: Vec<f64> = self.value().iter().map(|v| v * factor).collect();
        let a = self.clone();
        Tensor::make(
            "scale",
            self.shape(),
            out,
            vec![self.clone()],
            Box::new(move |go, _| {
                a.with_grad_buffer(|ga| {
                    for (g, &o) in ga.iter_mut().zip(go) {
                        *g += factor * o;
                    }
                });
            }),
        )
    }

    /// Concatenation along the last axis of two 1-D or two 2-D tensors.
    pub fn concat(&self, rhs: &Tensor) -> Result<Tensor> {
        let ls = self.shape();
        let rs = rhs.shape();
        let mismatch = || TensorError::ShapeMismatch {
            op: "concat",
            lhs: ls.clone(),
            rhs: rs.clone(),
        };
        let (rows, lw, rw) = match (ls.as_slice(), rs.as_slice()) {
            ([a], [b]) => (1usize, *a, *b),
            ([r1, a], [r2, b]) if r1 == r2 => (*r1, *a, *b),
            _ => return Err(mismatch()),
        };
        let a_data = self.value();
        let b_data = rhs.value();
        let mut out = Vec::with_capacity(rows * (lw + rw));
        for i in 0..rows {
            out.extend_from_slice(&a_data[i * lw..(i + 1) * lw]);
            out.extend_from_slice(&b_data[i * rw..(i + 1) * rw]);
        }
        let shape = if ls.len() == 1 {
            vec![lw + rw]
        } else {
            vec![rows, lw + rw]
        };
        let a = self.clone();
        let b = rhs.clone();
        Tensor::make(
            "concat",
            shape,
            out,
            vec![self.clone(), rhs.clone()],
            Box::new(move |go, _| {
                let width = lw + rw;
                a.with_grad_buffer(|ga| {
                    for i in 0..rows {
                        for j in 0..lw {
                            ga[i * lw + j] += go[i * width + j];
                        }
                    }
                });
                b.with_grad_buffer(|gb| {
                    for i in 0..rows {
                        for j in 0..rw {
                            gb[i * rw + j] += go[i * width + lw + j];
                        }
                    }
                });
            }),
        )
    }

    /// Stacks same-width 1-D tensors into a 2-D tensor, one row each.
    pub fn stack_rows(rows: &[Tensor]) -> Result<Tensor> {
        let Some(first) = rows.first() else {
            return Err(TensorError::BadLength {
                op: "stack_rows",
                shape: vec![0],
                len: 0,
            });
        };
        let width = first.len();
        let mut out = Vec::with_capacity(rows.len() * width);
        for row in rows {
            if row.shape() != [width] {
                return Err(TensorError::ShapeMismatch {
                    op: "stack_rows",
                    lhs: first.shape(),
                    rhs: row.shape(),
                });
            }
            out.extend(row.value());
        }
        let parents: Vec<Tensor> = rows.to_vec();
        let captured = parents.clone();
        Tensor::make(
            "stack_rows",
            vec![rows.len(), width],
            out,
            parents,
            Box::new(move |go, _| {
                for (i, row) in captured.iter().enumerate() {
                    row.with_grad_buffer(|gr| {
                        for j in 0..width {
                            gr[j] += go[i * width + j];
                        }
                    });
                }
            }),
        )
    }

    /// Row `i` of a 2-D tensor as a 1-D tensor (slice over the leading axis).
    pub fn row(&self, index: usize) -> Result<Tensor> {
        let (n, m) = self.dims2("row")?;
        if index >= n {
            return Err(TensorError::IndexOutOfBounds {
                op: "row",
                index,
                bound: n,
            });
        }
        let out = self.value()[index * m..(index + 1) * m].to_vec();
        let a = self.clone();
        Tensor::make(
            "row",
            vec![m],
            out,
            vec![self.clone()],
            Box::new(move |go, _| {
                a.with_grad_buffer(|ga| {
                    for j in 0..m {
                        ga[index * m + j] += go[j];
                    }
                });
            }),
        )
    }

    /// Element `i` of a 1-D tensor as a scalar.
    pub fn element(&self, index: usize) -> Result<Tensor> {
        let shape = self.shape();
        if shape.len() != 1 || index >= shape[0] {
            return Err(TensorError::IndexOutOfBounds {
                op: "element",
                index,
                bound: *shape.first().unwrap_or(&0),
            });
        }
        let out = vec![self.value()[index]];
        let a = self.clone();
        Tensor::make(
            "element",
            vec![1],
            out,
            vec![self.clone()],
            Box::new(move |go, _| {
                a.with_grad_buffer(|ga| {
                    ga[index] += go[0];
                });
            }),
        )
    }

    /// 2-D transpose.
    pub fn transpose(&self) -> Result<Tensor> {
        let (n, m) = self.dims2("transpose")?;
        let data = self.value();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = data[i * m + j];
            }
        }
        let a = self.clone();
        Tensor::make(
            "transpose",
            vec![m, n],
            out,
            vec![self.clone()],
            Box::new(move |go, _| {
                a.with_grad_buffer(|ga| {
                    for i in 0..n {
                        for j in 0..m {
                            ga[i * m + j] += go[j * n + i];
                        }
                    }
                });
            }),
        )
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&self) -> Result<Tensor> {
        let out = vec![self.value().iter().sum()];
        let a = self.clone();
        Tensor::make(
            "sum",
            vec![1],
            out,
            vec![self.clone()],
            Box::new(move |go, _| {
                a.with_grad_buffer(|ga| {
                    for g in ga.iter_mut() {
                        *g += go[0];
                    }
                });
            }),
        )
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&self) -> Result<Tensor> {
        let len = self.len().max(1) as f64;
        let out = vec![self.value().iter().sum::<f64>() / len];
        let a = self.clone();
        Tensor::make(
            "mean",
            vec![1],
            out,
            vec![self.clone()],
            Box::new(move |go, _| {
                a.with_grad_buffer(|ga| {
                    for g in ga.iter_mut() {
                        *g += go[0] / len;
                    }
                });
            }),
        )
    }

    /// Column sums of a 2-D tensor: `(n,m) -> (m,)`.
    pub fn sum_rows(&self) -> Result<Tensor> {
        let (n, m) = self.dims2("sum_rows")?;
        let data = self.value();
        let mut out = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                out[j] += data[i * m + j];
            }
        }
        let a = self.clone();
        Tensor::make(
            "sum_rows",
            vec![m],
            out,
            vec![self.clone()],
            Box::new(move |go, _| {
                a.with_grad_buffer(|ga| {
                    for i in 0..n {
                        for j in 0..m {
                            ga[i * m + j] += go[j];
                        }
                    }
                });
            }),
        )
    }

    fn unary(
        &self,
        op_name: &'static str,
        forward: impl Fn(f64) -> f64,
        backward: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Result<Tensor> {
        let a_data = self.value();
        let out: Vec<f64> = a_data.iter().map(|&v| forward(v)).collect();
        let a = self.clone();
        Tensor::make(
            op_name,
            self.shape(),
            out,
            vec![self.clone()],
            Box::new(move |go, out_data| {
                let a_data = a.value();
                a.with_grad_buffer(|ga| {
                    for i in 0..go.len() {
                        ga[i] += go[i] * backward(a_data[i], out_data[i]);
                    }
                });
            }),
        )
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        self.unary("sigmoid", |v| 1.0 / (1.0 + (-v).exp()), |_, y| y * (1.0 - y))
    }

    pub fn tanh(&self) -> Result<Tensor> {
        self.unary("tanh", f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn leaky_relu(&self, slope: f64) -> Result<Tensor> {
        self.unary(
            "leaky_relu",
            move |v| if v > 0.0 { v } else { slope * v },
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    /// Natural log; inputs must already be positive (clamp first).
    pub fn ln(&self) -> Result<Tensor> {
        self.unary("ln", f64::ln, |x, _| 1.0 / x)
    }

    /// Clamps into `[lo, hi]`; the gradient passes through unclipped entries.
    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Tensor> {
        self.unary(
            "clamp",
            move |v| v.clamp(lo, hi),
            move |x, _| if x >= lo && x <= hi { 1.0 } else { 0.0 },
        )
    }

    /// Softmax over the last axis (each row of a 2-D tensor, or the whole
    /// 1-D vector).
    pub fn softmax(&self) -> Result<Tensor> {
        let shape = self.shape();
        let width = *shape.last().ok_or(TensorError::BadLength {
            op: "softmax",
            shape: shape.clone(),
            len: 0,
        })?;
        let data = self.value();
        let rows = data.len() / width.max(1);
        let mut out = vec![0.0; data.len()];
        for r in 0..rows {
            let row = &data[r * width..(r + 1) * width];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for (o, e) in out[r * width..(r + 1) * width].iter_mut().zip(exps) {
                *o = e / total;
            }
        }
        let a = self.clone();
        Tensor::make(
            "softmax",
            shape,
            out,
            vec![self.clone()],
            Box::new(move |go, out_data| {
                a.with_grad_buffer(|ga| {
                    let rows = go.len() / width.max(1);
                    for r in 0..rows {
                        let y = &out_data[r * width..(r + 1) * width];
                        let g = &go[r * width..(r + 1) * width];
                        let dot: f64 = y.iter().zip(g).map(|(yi, gi)| yi * gi).sum();
                        for j in 0..width {
                            ga[r * width + j] += y[j] * (g[j] - dot);
                        }
                    }
                });
            }),
        )
    }

    /// Sum of squared entries, as a scalar.
    pub fn l2_norm_squared(&self) -> Result<Tensor> {
        let out = vec![self.value().iter().map(|v| v * v).sum()];
        let a = self.clone();
        Tensor::make(
            "l2_norm_squared",
            vec![1],
            out,
            vec![self.clone()],
            Box::new(move |go, _| {
                let a_data = a.value();
                a.with_grad_buffer(|ga| {
                    for i in 0..a_data.len() {
                        ga[i] += 2.0 * a_data[i] * go[0];
                    }
                });
            }),
        )
    }

    /// Multiplies by a constant row-sparse matrix: `out[i] = w_i * sum_{j in
    /// cols_i} h[j]`. Rows are (columns, shared weight) pairs, one per output
    /// row; used for the graph propagation matrix.
    pub fn propagate(&self, rows: Rc<Vec<(Vec<usize>, f64)>>) -> Result<Tensor> {
        let (n, m) = self.dims2("propagate")?;
        if rows.len() != n {
            return Err(TensorError::ShapeMismatch {
                op: "propagate",
                lhs: vec![rows.len()],
                rhs: self.shape(),
            });
        }
        let data = self.value();
        let mut out = vec![0.0; n * m];
        for (i, (cols, weight)) in rows.iter().enumerate() {
            for &j in cols {
                if j >= n {
                    return Err(TensorError::IndexOutOfBounds {
                        op: "propagate",
                        index: j,
                        bound: n,
                    });
                }
                for c in 0..m {
                    out[i * m + c] += weight * data[j * m + c];
                }
            }
        }
        let a = self.clone();
        let rows_bwd = Rc::clone(&rows);
        Tensor::make(
            "propagate",
            vec![n, m],
            out,
            vec![self.clone()],
            Box::new(move |go, _| {
                a.with_grad_buffer(|ga| {
                    for (i, (cols, weight)) in rows_bwd.iter().enumerate() {
                        for &j in cols {
                            for c in 0..m {
                                ga[j * m + c] += weight * go[i * m + c];
                            }
                        }
                    }
                });
            }),
        )
    }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

/// Adam optimizer state for a fixed list of parameters.
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// Defaults: beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(learning_rate: f64, params: &[Tensor]) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second_moment: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update with bias correction; gradients are zeroed afterwards.
pub fn adam_step(params: &[Tensor], state: &mut AdamState) -> Result<()> {
    if params.len() != state.first_moment.len() {
        return Err(TensorError::StateMismatch {
            expected: state.first_moment.len(),
            got: params.len(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    for (index, param) in params.iter().enumerate() {
        let grad = param
            .grad()
            .ok_or(TensorError::MissingGrad { index })?;
        let m = &mut state.first_moment[index];
        let v = &mut state.second_moment[index];
        let mut inner = param.inner.borrow_mut();
        for i in 0..grad.len() {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            inner.data[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
        if let Some(g) = inner.grad.as_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Checkpoint archive
// ---------------------------------------------------------------------------

const CHECKPOINT_MAGIC: &[u8; 8] = b"ACRTNS01";
const MAX_DIMS: usize = 8;
const MAX_ELEMENTS: u64 = 1 << 32;

/// Writes a named-tensor archive.
pub fn save_checkpoint<W: Write>(w: &mut W, entries: &[(String, Tensor)]) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    binio::write_u64(w, entries.len() as u64)?;
    for (name, tensor) in entries {
        binio::write_string(w, name)?;
        let shape = tensor.shape();
        binio::write_u32(w, shape.len() as u32)?;
        for &dim in &shape {
            binio::write_u64(w, dim as u64)?;
        }
        binio::write_f64_slice(w, &tensor.value())?;
    }
    Ok(())
}

/// Reads a named-tensor archive written by [`save_checkpoint`]. Loaded
/// tensors do not require gradients.
pub fn load_checkpoint<R: Read>(r: &mut R) -> Result<Vec<(String, Tensor)>> {
    let bad = |msg: &str| TensorError::Checkpoint(msg.to_string());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("bad magic header"));
    }
    let count = binio::read_u64(r)?;
    let mut entries = Vec::new();
    for _ in 0..count {
        let name = binio::read_string(r)?;
        let ndims = binio::read_u32(r)? as usize;
        if ndims > MAX_DIMS {
            return Err(bad("too many dimensions"));
        }
        let mut shape = Vec::with_capacity(ndims);
        let mut elements: u64 = 1;
        for _ in 0..ndims {
            let dim = binio::read_u64(r)?;
            elements = elements.saturating_mul(dim.max(1));
            if elements > MAX_ELEMENTS {
                return Err(bad("tensor too large"));
            }
            shape.push(dim as usize);
        }
        let len = shape.iter().product::<usize>();
        let data = binio::read_f64_vec(r, len)?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite value in archive"));
        }
        entries.push((name, Tensor::new(shape, data)?));
    }
    Ok(entries)
}

/// Finite-difference probes shared by gradient-check tests across modules.
#[cfg(test)]
pub(crate) mod testutil {
    use super::Tensor;

    /// Central finite difference of `f` with respect to one element of
    /// `param`.
    pub(crate) fn finite_difference(
        param: &Tensor,
        index: usize,
        step: f64,
        mut f: impl FnMut() -> f64,
    ) -> f64 {
        param.nudge(index, step);
        let plus = f();
        param.nudge(index, -2.0 * step);
        let minus = f();
        param.nudge(index, step);
        (plus - minus) / (2.0 * step)
    }

    pub(crate) fn assert_close(actual: f64, expected: f64, rel: f64, abs: f64, what: &str) {
        let scale = expected.abs().max(actual.abs());
        let tol = abs.max(rel * scale);
        assert!(
            (actual - expected).abs() <= tol,
            "{what}: {actual} vs {expected} (tol {tol})"
        );
    }
}
