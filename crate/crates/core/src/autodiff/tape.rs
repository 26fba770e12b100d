//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive applied during a forward pass. Values
//! are computed eagerly; [`Tape::backward`] then walks the records in reverse
//! and applies each primitive's local rule. Parameters are borrowed from a
//! [`ParamStore`] rather than copied, so a tape is cheap to build per example.
//!
//! Every primitive validates its inputs' shapes and refuses to record a
//! non-finite output, naming itself in the error.

use std::collections::HashMap;

use crate::autodiff::params::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{matmul_raw, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    SoftmaxCols(Var),
    VCat(Vec<Var>),
    HCat(Vec<Var>),
    GatherRows {
        parts: Vec<Var>,
        start: usize,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    Col {
        x: Var,
        index: usize,
    },
    Embed {
        table: Var,
        ids: Vec<usize>,
    },
    LstmCell {
        x: Var,
        state: Var,
        w: Var,
        b: Var,
        // activated gates i, f, g, o stacked (4h) and tanh of the new cell (h)
        gates: Vec<f64>,
        tanh_c: Vec<f64>,
    },
    Sum(Var),
    Mean(Var),
    MeanCols(Var),
    ScaleCols(Var, Var),
    AddColBroadcast(Var, Var),
    CopyMix {
        p_gen: Var,
        alpha: Var,
        lambda: Var,
        src: Vec<usize>,
    },
    Pick(Var, usize),
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::ScaleCols(a, b)
            | Op::AddColBroadcast(a, b) => vec![*a, *b],
            Op::Transpose(x)
            | Op::Affine(x, _)
            | Op::Sigmoid(x)
            | Op::Tanh(x)
            | Op::Exp(x)
            | Op::Log(x)
            | Op::SoftmaxCols(x)
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::MeanCols(x)
            | Op::Pick(x, _)
            | Op::SliceRows { x, .. }
            | Op::Col { x, .. }
            | Op::Dropout { x, .. } => vec![*x],
            Op::VCat(parts) | Op::HCat(parts) | Op::GatherRows { parts, .. } => parts.clone(),
            Op::Embed { table, .. } => vec![*table],
            Op::LstmCell { x, state, w, b, .. } => vec![*x, *state, *w, *b],
            Op::CopyMix {
                p_gen, alpha, lambda, ..
            } => vec![*p_gen, *alpha, *lambda],
        }
    }
}

struct Node {
    value: Value,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of primitive applications.
pub struct Tape<'p> {
    params: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Tape<'p> {
    /// A tape without parameters; only leaves and constants can seed it.
    pub fn new() -> Self {
        Tape {
            params: None,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn with_params(params: &'p ParamStore) -> Self {
        Tape {
            params: Some(params),
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.params.expect("parameter node without store").value(*id),
        }
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Registers a parameter of the bound store. Repeated calls return the
    /// same node so gradients accumulate in one place.
    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        if let Some(&v) = self.param_vars.get(&id) {
            return Ok(v);
        }
        let store = self
            .params
            .ok_or_else(|| Error::UnknownParam(format!("#{} (tape has no store)", id.0)))?;
        if id.0 >= store.len() {
            return Err(Error::UnknownParam(format!("#{}", id.0)));
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Leaf,
            requires_grad: store.get(id).trainable,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        Ok(v)
    }

    fn push(&mut self, name: &'static str, op: Op, value: Tensor) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    // ---------------------------------------------------------------------
    // Primitives

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::shape("matmul", &[m, k], &[k2, n]));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push("matmul", Op::MatMul(a, b), Tensor::from_parts(m, n, out))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims(x);
        let src = self.value(x).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        self.push("transpose", Op::Transpose(x), Tensor::from_parts(c, r, out))
    }

    fn zip_same(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ra, ca) = self.dims(a);
        let (rb, cb) = self.dims(b);
        if (ra, ca) != (rb, cb) {
            return Err(Error::shape(name, &[ra, ca], &[rb, cb]));
        }
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(name, op, Tensor::from_parts(ra, ca, out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, name: &'static str, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let (r, c) = self.dims(x);
        let out: Vec<f64> = self.value(x).data().iter().map(|&v| f(v)).collect();
        self.push(name, op, Tensor::from_parts(r, c, out))
    }

    /// `scale · x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        self.map("affine", x, |v| scale * v + shift, Op::Affine(x, scale))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map("sigmoid", x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.map("tanh", x, f64::tanh, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.map("exp", x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.map("log", x, f64::ln, Op::Log(x))
    }

    /// Softmax applied independently to each column.
    pub fn softmax_columns(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims(x);
        let src = self.value(x).data();
        let mut out = vec![0.0; r * c];
        for j in 0..c {
            let max = (0..r).map(|i| src[i * c + j]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for i in 0..r {
                let e = (src[i * c + j] - max).exp();
                out[i * c + j] = e;
                sum += e;
            }
            for i in 0..r {
                out[i * c + j] /= sum;
            }
        }
        self.push("softmax_columns", Op::SoftmaxCols(x), Tensor::from_parts(r, c, out))
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vcat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::EmptyInput { op: "vcat" })?;
        let (_, cols) = self.dims(first);
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.dims(p);
            if c != cols {
                return Err(Error::shape("vcat", &[rows, cols], &[r, c]));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        self.push("vcat", Op::VCat(parts.to_vec()), Tensor::from_parts(rows, cols, out))
    }

    /// Places matrices with equal row counts side by side.
    pub fn hcat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::EmptyInput { op: "hcat" })?;
        let (rows, _) = self.dims(first);
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims(p);
            if r != rows {
                return Err(Error::shape("hcat", &[rows, 0], &[r, c]));
            }
            widths.push(c);
        }
        let cols: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * cols];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for i in 0..rows {
                out[i * cols + offset..i * cols + offset + w].copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        self.push("hcat", Op::HCat(parts.to_vec()), Tensor::from_parts(rows, cols, out))
    }

    /// Takes rows `start..start + len` of each column vector in `parts` and
    /// lays them out as the columns of a `len × parts.len()` matrix.
    pub fn gather_rows(&mut self, parts: &[Var], start: usize, len: usize) -> Result<Var> {
        if parts.is_empty() || len == 0 {
            return Err(Error::EmptyInput { op: "gather_rows" });
        }
        let cols = parts.len();
        let mut out = vec![0.0; len * cols];
        for (j, &p) in parts.iter().enumerate() {
            let (r, c) = self.dims(p);
            if c != 1 || start + len > r {
                return Err(Error::shape("gather_rows", &[start + len, 1], &[r, c]));
            }
            let src = self.value(p).data();
            for i in 0..len {
                out[i * cols + j] = src[start + i];
            }
        }
        self.push(
            "gather_rows",
            Op::GatherRows {
                parts: parts.to_vec(),
                start,
            },
            Tensor::from_parts(len, cols, out),
        )
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims(x);
        if len == 0 || start + len > r {
            return Err(Error::shape("slice_rows", &[start + len, c], &[r, c]));
        }
        let out = self.value(x).data()[start * c..(start + len) * c].to_vec();
        self.push(
            "slice_rows",
            Op::SliceRows { x, start },
            Tensor::from_parts(len, c, out),
        )
    }

    pub fn col(&mut self, x: Var, index: usize) -> Result<Var> {
        let (r, c) = self.dims(x);
        if index >= c {
            return Err(Error::Index {
                op: "col",
                index,
                len: c,
            });
        }
        let out = self.value(x).column_values(index);
        self.push("col", Op::Col { x, index }, Tensor::from_parts(r, 1, out))
    }

    /// Looks up rows of `table` (`vocab × dim`) and returns them as the
    /// columns of a `dim × ids.len()` matrix.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        if ids.is_empty() {
            return Err(Error::EmptyInput { op: "embed" });
        }
        let (vocab, dim) = self.dims(table);
        let n = ids.len();
        let mut out = vec![0.0; dim * n];
        let src = self.value(table).data();
        for (t, &id) in ids.iter().enumerate() {
            if id >= vocab {
                return Err(Error::Index {
                    op: "embed",
                    index: id,
                    len: vocab,
                });
            }
            for e in 0..dim {
                out[e * n + t] = src[id * dim + e];
            }
        }
        self.push(
            "embed",
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
            Tensor::from_parts(dim, n, out),
        )
    }

    /// One LSTM step. `state` stacks the previous hidden and cell vectors
    /// (`2h × 1`); the result stacks the new ones the same way. `w` is
    /// `4h × (in + h)` acting on `[x; h]`, gate order input, forget, cell,
    /// output.
    pub fn lstm_cell(&mut self, x: Var, state: Var, w: Var, b: Var) -> Result<Var> {
        let (in_dim, xc) = self.dims(x);
        let (s_rows, sc) = self.dims(state);
        let (w_rows, w_cols) = self.dims(w);
        let (b_rows, bc) = self.dims(b);
        let h = s_rows / 2;
        if xc != 1 || sc != 1 || s_rows % 2 != 0 {
            return Err(Error::shape("lstm_cell", &[in_dim, xc], &[s_rows, sc]));
        }
        if w_rows != 4 * h || w_cols != in_dim + h {
            return Err(Error::shape("lstm_cell", &[4 * h, in_dim + h], &[w_rows, w_cols]));
        }
        if b_rows != 4 * h || bc != 1 {
            return Err(Error::shape("lstm_cell", &[4 * h, 1], &[b_rows, bc]));
        }
        let xv = self.value(x).data();
        let sv = self.value(state).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        let mut gates = bv.to_vec();
        for (r, z) in gates.iter_mut().enumerate() {
            let row = &wv[r * w_cols..(r + 1) * w_cols];
            let mut acc = 0.0;
            for (wi, xi) in row[..in_dim].iter().zip(xv) {
                acc += wi * xi;
            }
            for (wi, hi) in row[in_dim..].iter().zip(&sv[..h]) {
                acc += wi * hi;
            }
            *z += acc;
        }
        for (r, z) in gates.iter_mut().enumerate() {
            *z = if (2 * h..3 * h).contains(&r) {
                z.tanh()
            } else {
                sigmoid(*z)
            };
        }
        let mut out = vec![0.0; 2 * h];
        let mut tanh_c = vec![0.0; h];
        for k in 0..h {
            let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            let c = f * sv[h + k] + i * g;
            tanh_c[k] = c.tanh();
            out[k] = o * tanh_c[k];
            out[h + k] = c;
        }
        self.push(
            "lstm_cell",
            Op::LstmCell {
                x,
                state,
                w,
                b,
                gates,
                tanh_c,
            },
            Tensor::from_parts(2 * h, 1, out),
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push("sum", Op::Sum(x), Tensor::scalar(s))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push("mean", Op::Mean(x), Tensor::scalar(s))
    }

    /// Row-wise mean over columns: `r × c → r × 1`.
    pub fn mean_columns(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims(x);
        let src = self.value(x).data();
        let out = (0..r)
            .map(|i| src[i * c..(i + 1) * c].iter().sum::<f64>() / c as f64)
            .collect();
        self.push("mean_columns", Op::MeanCols(x), Tensor::from_parts(r, 1, out))
    }

    /// Multiplies column `j` of `x` by `p[j]`, where `p` is `1 × cols`.
    pub fn scale_columns(&mut self, x: Var, p: Var) -> Result<Var> {
        let (r, c) = self.dims(x);
        let (pr, pc) = self.dims(p);
        if pr != 1 || pc != c {
            return Err(Error::shape("scale_columns", &[r, c], &[pr, pc]));
        }
        let xv = self.value(x).data();
        let pv = self.value(p).data();
        let out = (0..r * c).map(|k| xv[k] * pv[k % c]).collect();
        self.push("scale_columns", Op::ScaleCols(x, p), Tensor::from_parts(r, c, out))
    }

    /// Adds the column vector `v` to every column of `m`.
    pub fn add_column_broadcast(&mut self, m: Var, v: Var) -> Result<Var> {
        let (r, c) = self.dims(m);
        let (vr, vc) = self.dims(v);
        if vr != r || vc != 1 {
            return Err(Error::shape("add_column_broadcast", &[r, c], &[vr, vc]));
        }
        let mv = self.value(m).data();
        let vv = self.value(v).data();
        let out = (0..r * c).map(|k| mv[k] + vv[k / c]).collect();
        self.push(
            "add_column_broadcast",
            Op::AddColBroadcast(m, v),
            Tensor::from_parts(r, c, out),
        )
    }

    /// Pointer-generator mixture over an extended vocabulary of size
    /// `ext_size ≥ |p_gen|`: `λ·p_gen(y) + (1 − λ)·Σ_{i: src_i = y} α_i`.
    pub fn copy_mix(&mut self, p_gen: Var, alpha: Var, lambda: Var, src: &[usize], ext_size: usize) -> Result<Var> {
        let (v, pc) = self.dims(p_gen);
        let (n, ac) = self.dims(alpha);
        let (lr, lc) = self.dims(lambda);
        if pc != 1 || ac != 1 || (lr, lc) != (1, 1) {
            return Err(Error::shape("copy_mix", &[v, pc], &[n, ac]));
        }
        if n != src.len() {
            return Err(Error::shape("copy_mix", &[n, 1], &[src.len(), 1]));
        }
        if ext_size < v {
            return Err(Error::shape("copy_mix", &[v, 1], &[ext_size, 1]));
        }
        if let Some(&bad) = src.iter().find(|&&s| s >= ext_size) {
            return Err(Error::Index {
                op: "copy_mix",
                index: bad,
                len: ext_size,
            });
        }
        let lam = self.scalar(lambda);
        let mut out = vec![0.0; ext_size];
        for (o, &p) in out.iter_mut().zip(self.value(p_gen).data()) {
            *o = lam * p;
        }
        for (&s, &a) in src.iter().zip(self.value(alpha).data()) {
            out[s] += (1.0 - lam) * a;
        }
        self.push(
            "copy_mix",
            Op::CopyMix {
                p_gen,
                alpha,
                lambda,
                src: src.to_vec(),
            },
            Tensor::from_parts(ext_size, 1, out),
        )
    }

    /// Extracts element `index` (row-major) as a scalar.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let t = self.value(x);
        if index >= t.len() {
            return Err(Error::Index {
                op: "pick",
                index,
                len: t.len(),
            });
        }
        let v = t.data()[index];
        self.push("pick", Op::Pick(x, index), Tensor::scalar(v))
    }

    /// Multiplies by a fixed mask (inverted dropout supplies `0` or `1/keep`).
    pub fn dropout_mask(&mut self, x: Var, mask: Vec<f64>) -> Result<Var> {
        let (r, c) = self.dims(x);
        if mask.len() != r * c {
            return Err(Error::shape("dropout", &[r, c], &[mask.len()]));
        }
        let out = self.value(x).data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        self.push("dropout", Op::Dropout { x, mask }, Tensor::from_parts(r, c, out))
    }

    // ---------------------------------------------------------------------
    // Backward

    /// Reverse pass from a scalar `loss`; returns the gradient of every node.
    pub fn backward(&self, loss: Var) -> Result<NodeGrads> {
        let shape = self.value(loss).shape().to_vec();
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.apply_rule(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(NodeGrads { grads })
    }

    /// Backward pass that adds `scale · ∂loss/∂param` into `out`.
    pub fn accumulate_gradients(&self, loss: Var, scale: f64, out: &mut Gradients) -> Result<()> {
        let grads = self.backward(loss)?;
        for (&id, &v) in &self.param_vars {
            if let Some(g) = grads.raw(v) {
                out.accumulate(id, g, scale);
            }
        }
        Ok(())
    }

    /// Convenience: fresh [`Gradients`] for the bound store.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let store = self
            .params
            .ok_or_else(|| Error::UnknownParam("tape has no parameter store".into()))?;
        let mut out = Gradients::new(store);
        self.accumulate_gradients(loss, 1.0, &mut out)?;
        Ok(out)
    }

    fn apply_rule(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = self.value(Var(idx));
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if self.requires_grad(*a) {
                    let ga = self.slot(grads, *a);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            ga[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if self.requires_grad(*b) {
                    let gb = self.slot(grads, *b);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = av[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for (o, &gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += av * gv;
                            }
                        }
                    }
                }
            }
            Op::Transpose(x) => {
                let (r, c) = self.dims(*x);
                let gx = self.slot(grads, *x);
                for i in 0..r {
                    for j in 0..c {
                        gx[i * c + j] += g[j * r + i];
                    }
                }
            }
            Op::Add(a, b) => {
                self.add_into(grads, *a, g, 1.0);
                self.add_into(grads, *b, g, 1.0);
            }
            Op::Sub(a, b) => {
                self.add_into(grads, *a, g, 1.0);
                self.add_into(grads, *b, g, -1.0);
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if self.requires_grad(*a) {
                    let ga = self.slot(grads, *a);
                    for k in 0..g.len() {
                        ga[k] += g[k] * bv[k];
                    }
                }
                if self.requires_grad(*b) {
                    let gb = self.slot(grads, *b);
                    for k in 0..g.len() {
                        gb[k] += g[k] * av[k];
                    }
                }
            }
            Op::Affine(x, scale) => self.add_into(grads, *x, g, *scale),
            Op::Sigmoid(x) => {
                let y = out.data();
                let gx = self.slot(grads, *x);
                for k in 0..g.len() {
                    gx[k] += g[k] * y[k] * (1.0 - y[k]);
                }
            }
            Op::Tanh(x) => {
                let y = out.data();
                let gx = self.slot(grads, *x);
                for k in 0..g.len() {
                    gx[k] += g[k] * (1.0 - y[k] * y[k]);
                }
            }
            Op::Exp(x) => {
                let y = out.data();
                let gx = self.slot(grads, *x);
                for k in 0..g.len() {
                    gx[k] += g[k] * y[k];
                }
            }
            Op::Log(x) => {
                let xv = self.value(*x).data();
                let gx = self.slot(grads, *x);
                for k in 0..g.len() {
                    gx[k] += g[k] / xv[k];
                }
            }
            Op::SoftmaxCols(x) => {
                let (r, c) = (out.rows(), out.cols());
                let y = out.data();
                let gx = self.slot(grads, *x);
                for j in 0..c {
                    let dot: f64 = (0..r).map(|i| g[i * c + j] * y[i * c + j]).sum();
                    for i in 0..r {
                        gx[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
                    }
                }
            }
            Op::VCat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    self.add_into(grads, p, &g[offset..offset + len], 1.0);
                    offset += len;
                }
            }
            Op::HCat(parts) => {
                let rows = out.rows();
                let cols = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.dims(p).1;
                    if self.requires_grad(p) {
                        let gp = self.slot(grads, p);
                        for i in 0..rows {
                            for j in 0..w {
                                gp[i * w + j] += g[i * cols + offset + j];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::GatherRows { parts, start } => {
                let len = out.rows();
                let cols = out.cols();
                for (j, &p) in parts.iter().enumerate() {
                    if self.requires_grad(p) {
                        let gp = self.slot(grads, p);
                        for i in 0..len {
                            gp[start + i] += g[i * cols + j];
                        }
                    }
                }
            }
            Op::SliceRows { x, start } => {
                let c = out.cols();
                let gx = self.slot(grads, *x);
                for (k, &gv) in g.iter().enumerate() {
                    gx[start * c + k] += gv;
                }
            }
            Op::Col { x, index } => {
                let c = self.dims(*x).1;
                let gx = self.slot(grads, *x);
                for (i, &gv) in g.iter().enumerate() {
                    gx[i * c + index] += gv;
                }
            }
            Op::Embed { table, ids } => {
                let dim = self.dims(*table).1;
                let n = ids.len();
                let gt = self.slot(grads, *table);
                for (t, &id) in ids.iter().enumerate() {
                    for e in 0..dim {
                        gt[id * dim + e] += g[e * n + t];
                    }
                }
            }
            Op::LstmCell {
                x,
                state,
                w,
                b,
                gates,
                tanh_c,
            } => self.lstm_backward(grads, g, [*x, *state, *w, *b], gates, tanh_c),
            Op::Sum(x) => {
                let gx = self.slot(grads, *x);
                for v in gx.iter_mut() {
                    *v += g[0];
                }
            }
            Op::Mean(x) => {
                let gx = self.slot(grads, *x);
                let scale = g[0] / gx.len() as f64;
                for v in gx.iter_mut() {
                    *v += scale;
                }
            }
            Op::MeanCols(x) => {
                let (r, c) = self.dims(*x);
                let gx = self.slot(grads, *x);
                for i in 0..r {
                    for j in 0..c {
                        gx[i * c + j] += g[i] / c as f64;
                    }
                }
            }
            Op::ScaleCols(x, p) => {
                let (r, c) = self.dims(*x);
                let xv = self.value(*x).data();
                let pv = self.value(*p).data();
                if self.requires_grad(*x) {
                    let gx = self.slot(grads, *x);
                    for k in 0..r * c {
                        gx[k] += g[k] * pv[k % c];
                    }
                }
                if self.requires_grad(*p) {
                    let gp = self.slot(grads, *p);
                    for k in 0..r * c {
                        gp[k % c] += g[k] * xv[k];
                    }
                }
            }
            Op::AddColBroadcast(m, v) => {
                let c = out.cols();
                self.add_into(grads, *m, g, 1.0);
                if self.requires_grad(*v) {
                    let gv = self.slot(grads, *v);
                    for (k, &gk) in g.iter().enumerate() {
                        gv[k / c] += gk;
                    }
                }
            }
            Op::CopyMix {
                p_gen,
                alpha,
                lambda,
                src,
            } => {
                let lam = self.scalar(*lambda);
                let pv = self.value(*p_gen).data();
                let av = self.value(*alpha).data();
                if self.requires_grad(*p_gen) {
                    let gp = self.slot(grads, *p_gen);
                    for (k, o) in gp.iter_mut().enumerate() {
                        *o += lam * g[k];
                    }
                }
                if self.requires_grad(*alpha) {
                    let ga = self.slot(grads, *alpha);
                    for (i, &s) in src.iter().enumerate() {
                        ga[i] += (1.0 - lam) * g[s];
                    }
                }
                if self.requires_grad(*lambda) {
                    let gen: f64 = pv.iter().zip(g).map(|(p, gk)| p * gk).sum();
                    let copy: f64 = src.iter().zip(av).map(|(&s, a)| a * g[s]).sum();
                    self.slot(grads, *lambda)[0] += gen - copy;
                }
            }
            Op::Pick(x, index) => {
                self.slot(grads, *x)[*index] += g[0];
            }
            Op::Dropout { x, mask } => {
                let gx = self.slot(grads, *x);
                for k in 0..g.len() {
                    gx[k] += g[k] * mask[k];
                }
            }
        }
    }

    fn lstm_backward(
        &self,
        grads: &mut [Option<Vec<f64>>],
        g: &[f64],
        [x, state, w, b]: [Var; 4],
        gates: &[f64],
        tanh_c: &[f64],
    ) {
        let h = tanh_c.len();
        let xv = self.value(x).data();
        let sv = self.value(state).data();
        let wv = self.value(w).data();
        let in_dim = xv.len();
        let cols = in_dim + h;

        let mut dz = vec![0.0; 4 * h];
        let mut dc_prev = vec![0.0; h];
        for k in 0..h {
            let (i, f, gg, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            let dh = g[k];
            let dc = g[h + k] + dh * o * (1.0 - tanh_c[k] * tanh_c[k]);
            let d_o = dh * tanh_c[k];
            let d_i = dc * gg;
            let d_g = dc * i;
            let d_f = dc * sv[h + k];
            dc_prev[k] = dc * f;
            dz[k] = d_i * i * (1.0 - i);
            dz[h + k] = d_f * f * (1.0 - f);
            dz[2 * h + k] = d_g * (1.0 - gg * gg);
            dz[3 * h + k] = d_o * o * (1.0 - o);
        }

        if self.requires_grad(w) {
            let gw = self.slot(grads, w);
            for (r, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut gw[r * cols..(r + 1) * cols];
                for (o, &xi) in row[..in_dim].iter_mut().zip(xv) {
                    *o += d * xi;
                }
                for (o, &hi) in row[in_dim..].iter_mut().zip(&sv[..h]) {
                    *o += d * hi;
                }
            }
        }
        if self.requires_grad(b) {
            self.add_into(grads, b, &dz, 1.0);
        }
        let need_x = self.requires_grad(x);
        let need_s = self.requires_grad(state);
        if need_x || need_s {
            // d[x; h] = Wᵀ dz
            let mut dxh = vec![0.0; cols];
            for (r, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (o, &wv) in dxh.iter_mut().zip(&wv[r * cols..(r + 1) * cols]) {
                    *o += d * wv;
                }
            }
            if need_x {
                self.add_into(grads, x, &dxh[..in_dim], 1.0);
            }
            if need_s {
                let gs = self.slot(grads, state);
                for k in 0..h {
                    gs[k] += dxh[in_dim + k];
                    gs[h + k] += dc_prev[k];
                }
            }
        }
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut Vec<f64> {
        let len = self.value(v).len();
        grads[v.0].get_or_insert_with(|| vec![0.0; len])
    }

    fn add_into(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64], scale: f64) {
        if !self.requires_grad(v) {
            return;
        }
        let slot = self.slot(grads, v);
        for (o, &gv) in slot.iter_mut().zip(g) {
            *o += scale * gv;
        }
    }
}

/// Gradients of every node from one backward pass.
pub struct NodeGrads {
    grads: Vec<Option<Vec<f64>>>,
}

impl NodeGrads {
    pub fn raw(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient with respect to `v`, zero when `v` is off the loss path.
    pub fn wrt(&self, tape: &Tape<'_>, v: Var) -> Tensor {
        let shape = tape.value(v).shape().to_vec();
        match self.raw(v) {
            Some(g) => Tensor::new(shape, g.to_vec()).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        }
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
