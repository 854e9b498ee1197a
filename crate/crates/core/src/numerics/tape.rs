//! Reverse-mode automatic differentiation over rank-2 tensors.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and `backward` is a single reverse sweep. Every op
//! checks its output for non-finite values and fails at the op that
//! produced them.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::attention::{self, EdgeLayout, SeqLayout};
use super::params::{Grads, ParamStore};
use super::tensor::{matmul, matmul_nt_acc, matmul_tn_acc, Tensor};
use crate::error::{shape_err, Error, Result};
use crate::math::{exp, ln, ln_1p, sqrt};

const LN_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Relu(Var),
    Softplus(Var),
    Sigmoid(Var),
    Abs(Var),
    LnFloor(Var, f64),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Sparse {
        x: Var,
        entries: Vec<(usize, usize, f64)>,
    },
    Gather(Var, Vec<usize>),
    Blend {
        a: Var,
        b: Var,
        take_a: Vec<bool>,
    },
    Sum(Var),
    SeqAttn {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        layout: SeqLayout,
        probs: Vec<f64>,
    },
    EdgeAttn {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        layout: EdgeLayout,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// One forward evaluation recorded for differentiation.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    bound: BTreeMap<String, Var>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            bound: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Leaf bound to a named parameter; repeated calls share one node.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let value = self
            .params
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_owned()))?
            .clone();
        let v = self.push("param", value, Op::Leaf)?;
        self.bound.insert(name.to_owned(), v);
        Ok(v)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push("constant", value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.dims(a);
        let (k2, m) = self.dims(b);
        if k != k2 {
            return Err(shape_err("matmul", format!("{n}x{k} * {k2}x{m}")));
        }
        let out = matmul(self.value(a).data(), self.value(b).data(), n, k, m);
        self.push("matmul", Tensor::from_parts(n, m, out), Op::MatMul(a, b))
    }

    /// `x [n x m] + b [1 x m]` broadcast over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (n, m) = self.dims(x);
        if self.dims(b) != (1, m) {
            return Err(shape_err("add_row", format!("{n}x{m} + {:?}", self.dims(b))));
        }
        let bias = self.value(b).data();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(m.max(1)) {
            for (o, bv) in row.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        self.push("add_row", Tensor::from_parts(n, m, out), Op::AddRow(x, b))
    }

    fn zip(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (n, m) = self.dims(a);
        if self.dims(b) != (n, m) {
            return Err(shape_err(name, format!("{n}x{m} vs {:?}", self.dims(b))));
        }
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(name, Tensor::from_parts(n, m, out), op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    fn map(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let (n, m) = self.dims(a);
        let out = self.value(a).data().iter().map(|&x| f(x)).collect();
        self.push(name, Tensor::from_parts(n, m, out), op)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map("scale", a, |x| x * c, Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map("add_const", a, |x| x + c, Op::AddConst(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.map("softplus", a, softplus, Op::Softplus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.map("abs", a, f64::abs, Op::Abs(a))
    }

    /// `ln(max(x, floor))`; no gradient flows where the floor is active.
    pub fn ln_floor(&mut self, a: Var, floor: f64) -> Result<Var> {
        self.map("ln", a, |x| ln(x.max(floor)), Op::LnFloor(a, floor))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (n, m) = self.dims(a);
        let t = self.value(a);
        if !t.is_finite() {
            return Err(Error::NonFinite { op: "softmax" });
        }
        let s = Tensor::from_parts(n, m, t.data().to_vec()).softmax(1)?;
        self.push("softmax", s, Op::SoftmaxRows(a))
    }

    /// Row-wise layer normalization with `[1 x m]` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (n, m) = self.dims(x);
        if self.dims(gain) != (1, m) || self.dims(bias) != (1, m) {
            return Err(shape_err("layer_norm", format!("input width {m}")));
        }
        let xs = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![0.0; n * m];
        let mut inv_std = vec![0.0; n];
        let mut out = vec![0.0; n * m];
        for r in 0..n {
            let row = &xs[r * m..(r + 1) * m];
            let mean = row.iter().sum::<f64>() / m as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let inv = 1.0 / sqrt(var + LN_EPS);
            inv_std[r] = inv;
            for c in 0..m {
                let h = (row[c] - mean) * inv;
                xhat[r * m + c] = h;
                out[r * m + c] = h * g[c] + b[c];
            }
        }
        self.push(
            "layer_norm",
            Tensor::from_parts(n, m, out),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let n = parts
            .first()
            .map(|&p| self.dims(p).0)
            .ok_or_else(|| shape_err("concat_cols", "no inputs"))?;
        if parts.iter().any(|&p| self.dims(p).0 != n) {
            return Err(shape_err("concat_cols", "row counts differ"));
        }
        let m: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut out = Vec::with_capacity(n * m);
        for r in 0..n {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        self.push(
            "concat_cols",
            Tensor::from_parts(n, m, out),
            Op::ConcatCols(parts.to_vec()),
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let (n, m) = self.dims(a);
        if start + width > m {
            return Err(shape_err("slice_cols", format!("{start}+{width} > {m}")));
        }
        let t = self.value(a);
        let mut out = Vec::with_capacity(n * width);
        for r in 0..n {
            out.extend_from_slice(&t.row_slice(r)[start..start + width]);
        }
        self.push("slice_cols", Tensor::from_parts(n, width, out), Op::SliceCols(a, start))
    }

    /// Sparse row mixing: output row `o` accumulates `w * x[i]` for each
    /// `(o, i, w)`. Covers row gathers, masked means and scatter-adds.
    pub fn sparse_rows(&mut self, x: Var, out_rows: usize, entries: Vec<(usize, usize, f64)>) -> Result<Var> {
        let (n, m) = self.dims(x);
        if entries.iter().any(|&(o, i, _)| o >= out_rows || i >= n) {
            return Err(shape_err("sparse_rows", "index out of range"));
        }
        let xs = self.value(x).data();
        let mut out = vec![0.0; out_rows * m];
        for &(o, i, w) in &entries {
            for c in 0..m {
                out[o * m + c] += w * xs[i * m + c];
            }
        }
        self.push(
            "sparse_rows",
            Tensor::from_parts(out_rows, m, out),
            Op::Sparse { x, entries },
        )
    }

    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let entries = rows.iter().enumerate().map(|(o, &i)| (o, i, 1.0)).collect();
        self.sparse_rows(x, rows.len(), entries)
    }

    /// Flat element gather into an `[rows x cols]` result.
    pub fn gather(&mut self, x: Var, idx: Vec<usize>, rows: usize, cols: usize) -> Result<Var> {
        if idx.len() != rows * cols {
            return Err(shape_err("gather", "index count does not match output shape"));
        }
        let xs = self.value(x).data();
        if idx.iter().any(|&i| i >= xs.len()) {
            return Err(shape_err("gather", "index out of range"));
        }
        let out = idx.iter().map(|&i| xs[i]).collect();
        self.push("gather", Tensor::from_parts(rows, cols, out), Op::Gather(x, idx))
    }

    /// Row select: `take_a[r] ? a[r] : b[r]`; a single-row `b` broadcasts.
    pub fn blend_rows(&mut self, a: Var, b: Var, take_a: Vec<bool>) -> Result<Var> {
        let (n, m) = self.dims(a);
        let (bn, bm) = self.dims(b);
        if take_a.len() != n || bm != m || (bn != n && bn != 1) {
            return Err(shape_err("blend_rows", format!("{n}x{m} vs {bn}x{bm}")));
        }
        let (at, bt) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(n * m);
        for (r, &ta) in take_a.iter().enumerate() {
            if ta {
                out.extend_from_slice(at.row_slice(r));
            } else {
                out.extend_from_slice(bt.row_slice(if bn == 1 { 0 } else { r }));
            }
        }
        self.push("blend_rows", Tensor::from_parts(n, m, out), Op::Blend { a, b, take_a })
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a))
    }

    /// Multi-head scaled dot-product attention over a batch of sequences.
    pub fn seq_attention(&mut self, q: Var, k: Var, v: Var, heads: usize, layout: SeqLayout) -> Result<Var> {
        let (nq, d) = self.dims(q);
        let (nk, dk) = self.dims(k);
        if self.dims(v) != (nk, dk) || dk != d {
            return Err(shape_err("seq_attention", "q/k/v widths differ"));
        }
        if heads == 0 || d % heads != 0 {
            return Err(shape_err(
                "seq_attention",
                format!("width {d} not divisible by {heads} heads"),
            ));
        }
        if nq != layout.n_seqs * layout.tq || nk != layout.n_seqs * layout.tk {
            return Err(shape_err("seq_attention", "row count does not match layout"));
        }
        let (out, probs) = attention::seq_forward(
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
            d,
            heads,
            &layout,
        )?;
        self.push(
            "seq_attention",
            Tensor::from_parts(nq, d, out),
            Op::SeqAttn {
                q,
                k,
                v,
                heads,
                layout,
                probs,
            },
        )
    }

    /// Multi-head attention of node queries over incoming edge keys/values.
    /// Nodes without incoming edges produce zero rows.
    pub fn edge_attention(&mut self, q: Var, k: Var, v: Var, heads: usize, layout: EdgeLayout) -> Result<Var> {
        let (nq, d) = self.dims(q);
        let (ne, dk) = self.dims(k);
        if self.dims(v) != (ne, dk) || dk != d {
            return Err(shape_err("edge_attention", "q/k/v widths differ"));
        }
        if heads == 0 || d % heads != 0 {
            return Err(shape_err(
                "edge_attention",
                format!("width {d} not divisible by {heads} heads"),
            ));
        }
        if nq != layout.n_nodes() || ne != layout.n_edges() {
            return Err(shape_err("edge_attention", "row count does not match layout"));
        }
        let (out, probs) = attention::edge_forward(
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
            d,
            heads,
            &layout,
        );
        self.push(
            "edge_attention",
            Tensor::from_parts(nq, d, out),
            Op::EdgeAttn {
                q,
                k,
                v,
                heads,
                layout,
                probs,
            },
        )
    }

    /// Gradients of a scalar `loss` for every parameter in the store.
    /// Parameters the loss does not reach get zero gradients.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let (r, c) = self.dims(loss);
        if (r, c) != (1, 1) {
            return Err(Error::NotScalar { rows: r, cols: c });
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backprop(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let mut out = Grads::default();
        for (name, value) in self.params.iter() {
            let g = match self.bound.get(name).and_then(|v| grads[v.0].take()) {
                Some(g) => Tensor::new(value.shape(), g)?,
                None => Tensor::zeros(value.shape()),
            };
            if !g.is_finite() {
                return Err(Error::NanGradient(name.clone()));
            }
            out.insert(name.clone(), g);
        }
        Ok(out)
    }

    fn backprop(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let val = |v: Var| self.nodes[v.0].value.data();
        let (n, m) = (node.value.rows(), node.value.cols());
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (_, k) = self.dims(*a);
                let ga = slot(grads, *a, n * k);
                matmul_nt_acc(g, val(*b), n, m, k, ga);
                let gb = slot(grads, *b, k * m);
                matmul_tn_acc(val(*a), g, n, k, m, gb);
            }
            Op::AddRow(x, b) => {
                add_into(slot(grads, *x, n * m), g);
                let gb = slot(grads, *b, m);
                for row in g.chunks(m.max(1)) {
                    add_into(gb, row);
                }
            }
            Op::Add(a, b) => {
                add_into(slot(grads, *a, g.len()), g);
                add_into(slot(grads, *b, g.len()), g);
            }
            Op::Sub(a, b) => {
                add_into(slot(grads, *a, g.len()), g);
                for (o, gv) in slot(grads, *b, g.len()).iter_mut().zip(g) {
                    *o -= gv;
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                for ((o, gv), y) in slot(grads, *a, g.len()).iter_mut().zip(g).zip(bv) {
                    *o += gv * y;
                }
                for ((o, gv), x) in slot(grads, *b, g.len()).iter_mut().zip(g).zip(av) {
                    *o += gv * x;
                }
            }
            Op::Div(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                for ((o, gv), y) in slot(grads, *a, g.len()).iter_mut().zip(g).zip(bv) {
                    *o += gv / y;
                }
                let gb = slot(grads, *b, g.len());
                for i in 0..g.len() {
                    gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                }
            }
            Op::Scale(a, c) => {
                for (o, gv) in slot(grads, *a, g.len()).iter_mut().zip(g) {
                    *o += c * gv;
                }
            }
            Op::AddConst(a) => add_into(slot(grads, *a, g.len()), g),
            Op::Relu(a) => {
                let x = val(*a);
                for i in 0..g.len() {
                    if x[i] > 0.0 {
                        slot(grads, *a, g.len())[i] += g[i];
                    }
                }
            }
            Op::Softplus(a) => {
                let x = val(*a);
                let ga = slot(grads, *a, g.len());
                for i in 0..g.len() {
                    ga[i] += g[i] * sigmoid(x[i]);
                }
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                let ga = slot(grads, *a, g.len());
                for i in 0..g.len() {
                    ga[i] += g[i] * y[i] * (1.0 - y[i]);
                }
            }
            Op::Abs(a) => {
                let x = val(*a);
                let ga = slot(grads, *a, g.len());
                for i in 0..g.len() {
                    if x[i] > 0.0 {
                        ga[i] += g[i];
                    } else if x[i] < 0.0 {
                        ga[i] -= g[i];
                    }
                }
            }
            Op::LnFloor(a, floor) => {
                let x = val(*a);
                let ga = slot(grads, *a, g.len());
                for i in 0..g.len() {
                    if x[i] >= *floor {
                        ga[i] += g[i] / x[i];
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let y = node.value.data();
                let ga = slot(grads, *a, n * m);
                for r in 0..n {
                    let row = r * m..(r + 1) * m;
                    let dot: f64 = g[row.clone()].iter().zip(&y[row.clone()]).map(|(a, b)| a * b).sum();
                    for i in row {
                        ga[i] += y[i] * (g[i] - dot);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let gv = val(*gain);
                {
                    let gg = slot(grads, *gain, m);
                    for r in 0..n {
                        for c in 0..m {
                            gg[c] += g[r * m + c] * xhat[r * m + c];
                        }
                    }
                }
                {
                    let gb = slot(grads, *bias, m);
                    for row in g.chunks(m.max(1)) {
                        add_into(gb, row);
                    }
                }
                let gx = slot(grads, *x, n * m);
                let mf = m as f64;
                for r in 0..n {
                    let mut sum_d = 0.0;
                    let mut sum_dx = 0.0;
                    for c in 0..m {
                        let d = g[r * m + c] * gv[c];
                        sum_d += d;
                        sum_dx += d * xhat[r * m + c];
                    }
                    for c in 0..m {
                        let d = g[r * m + c] * gv[c];
                        gx[r * m + c] += inv_std[r] / mf * (mf * d - sum_d - xhat[r * m + c] * sum_dx);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.dims(p).1;
                    let gp = slot(grads, p, n * w);
                    for r in 0..n {
                        add_into(&mut gp[r * w..(r + 1) * w], &g[r * m + off..r * m + off + w]);
                    }
                    off += w;
                }
            }
            Op::SliceCols(a, start) => {
                let wa = self.dims(*a).1;
                let ga = slot(grads, *a, n * wa);
                for r in 0..n {
                    add_into(&mut ga[r * wa + start..r * wa + start + m], &g[r * m..(r + 1) * m]);
                }
            }
            Op::Sparse { x, entries } => {
                let nx = self.dims(*x).0;
                let gx = slot(grads, *x, nx * m);
                for &(o, i, w) in entries {
                    for c in 0..m {
                        gx[i * m + c] += w * g[o * m + c];
                    }
                }
            }
            Op::Gather(x, idx) => {
                let len = val(*x).len();
                let gx = slot(grads, *x, len);
                for (e, &i) in idx.iter().enumerate() {
                    gx[i] += g[e];
                }
            }
            Op::Blend { a, b, take_a } => {
                let bn = self.dims(*b).0;
                {
                    let ga = slot(grads, *a, n * m);
                    for (r, &ta) in take_a.iter().enumerate() {
                        if ta {
                            add_into(&mut ga[r * m..(r + 1) * m], &g[r * m..(r + 1) * m]);
                        }
                    }
                }
                let gb = slot(grads, *b, bn * m);
                for (r, &ta) in take_a.iter().enumerate() {
                    if !ta {
                        let br = if bn == 1 { 0 } else { r };
                        add_into(&mut gb[br * m..(br + 1) * m], &g[r * m..(r + 1) * m]);
                    }
                }
            }
            Op::Sum(a) => {
                for o in slot(grads, *a, val(*a).len()).iter_mut() {
                    *o += g[0];
                }
            }
            Op::SeqAttn {
                q,
                k,
                v,
                heads,
                layout,
                probs,
            } => {
                let d = m;
                let (nq, nk) = (self.dims(*q).0, self.dims(*k).0);
                let mut gq = vec![0.0; nq * d];
                let mut gk = vec![0.0; nk * d];
                let mut gv = vec![0.0; nk * d];
                attention::seq_backward(
                    val(*q),
                    val(*k),
                    val(*v),
                    probs,
                    g,
                    d,
                    *heads,
                    layout,
                    &mut gq,
                    &mut gk,
                    &mut gv,
                );
                add_into(slot(grads, *q, nq * d), &gq);
                add_into(slot(grads, *k, nk * d), &gk);
                add_into(slot(grads, *v, nk * d), &gv);
            }
            Op::EdgeAttn {
                q,
                k,
                v,
                heads,
                layout,
                probs,
            } => {
                let d = m;
                let (nq, ne) = (self.dims(*q).0, self.dims(*k).0);
                let mut gq = vec![0.0; nq * d];
                let mut gk = vec![0.0; ne * d];
                let mut gv = vec![0.0; ne * d];
                attention::edge_backward(
                    val(*q),
                    val(*k),
                    val(*v),
                    probs,
                    g,
                    d,
                    *heads,
                    layout,
                    &mut gq,
                    &mut gk,
                    &mut gv,
                );
                add_into(slot(grads, *q, nq * d), &gq);
                add_into(slot(grads, *k, ne * d), &gk);
                add_into(slot(grads, *v, ne * d), &gv);
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + ln_1p(exp(-x.abs()))
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}
