//! Dense reverse-mode differentiation over row-major matrices.
//!
//! A [`Tape`] records every operation together with the values it produced.
//! Parameters are read from a borrowed [`ParamSet`]; [`Tape::backward`] writes
//! their gradients into a separate [`Gradients`] buffer. Every forward result
//! is checked for NaN and infinities.

mod check;
mod optim;
mod params;
mod sparse;

use std::sync::Arc;

use ndarray::{s, Array2, Axis, Zip};
use rand::Rng;

pub use check::{grad_check, GradCheckReport};
pub use optim::{Adam, AdamConfig, PlateauScheduler};
pub use params::{Gradients, ParamCheckpoint, ParamId, ParamSet, Tensor, TensorRecord, CHECKPOINT_VERSION};
pub use sparse::CsrMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Clamp applied to probabilities before the logarithms of the BCE loss.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Constant,
    Param(ParamId),
    GatherParam(ParamId, Vec<usize>),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, T),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    MeanRows(Var),
    SumAll(Var),
    Relu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    LayerNormRows { x: Var, xhat: Array2<T>, inv_std: Vec<T> },
    Dropout(Var, Array2<T>),
    GatherRows(Var, Vec<usize>),
    ScatterRows(Var, Vec<usize>),
    SparseMatMul(Arc<CsrMatrix<T>>, Var),
    Bce { p: Var, labels: Vec<T> },
}

struct Node<T> {
    value: Option<Array2<T>>,
    op: Op<T>,
}

pub struct Tape<'p, T: Scalar> {
    params: &'p ParamSet<T>,
    nodes: Vec<Node<T>>,
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p ParamSet<T>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamSet<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(x), _) => x,
            (None, Op::Param(id)) => self.params.value(*id),
            _ => unreachable!("only parameter leaves are stored by reference"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    /// The single element of a 1×1 result.
    pub fn scalar(&self, v: Var) -> T {
        let x = self.value(v);
        assert_eq!(x.dim(), (1, 1), "scalar() on a non-scalar value");
        x[[0, 0]]
    }

    fn push(&mut self, name: &'static str, value: Array2<T>, op: Op<T>) -> Result<Var> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name.to_string()));
        }
        self.nodes.push(Node { value: Some(value), op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Array2<T>) -> Result<Var> {
        self.push("constant", value, Op::Constant)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    /// Rows `rows` of a parameter matrix, e.g. an embedding lookup.
    pub fn gather_param(&mut self, id: ParamId, rows: &[usize]) -> Result<Var> {
        let table = self.params.value(id);
        if let Some(&bad) = rows.iter().find(|&&r| r >= table.nrows()) {
            return Err(shape_err("gather_param", format!("row {bad} of {} rows", table.nrows())));
        }
        let out = table.select(Axis(0), rows);
        self.push("gather_param", out, Op::GatherParam(id, rows.to_vec()))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.ncols() != y.nrows() {
            return Err(shape_err("matmul", format!("{:?} · {:?}", x.dim(), y.dim())));
        }
        let out = x.dot(y);
        self.push("matmul", out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.ncols() != y.ncols() {
            return Err(shape_err("matmul_t", format!("{:?} · {:?}ᵀ", x.dim(), y.dim())));
        }
        let out = x.dot(&y.t());
        self.push("matmul_t", out, Op::MatMulT(a, b))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a) + self.value(b);
        self.push("add", out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a) - self.value(b);
        self.push("sub", out, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a) * self.value(b);
        self.push("mul", out, Op::Mul(a, b))
    }

    fn row_operand(&self, op: &'static str, a: Var, row: Var) -> Result<()> {
        let (n, m) = self.shape(a);
        if self.shape(row) != (1, m) {
            return Err(shape_err(op, format!("{:?} with row {:?}", (n, m), self.shape(row))));
        }
        Ok(())
    }

    /// Adds the 1×m row `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_operand("add_row", a, row)?;
        let out = self.value(a) + self.value(row);
        self.push("add_row", out, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` elementwise by the 1×m row `row`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_operand("mul_row", a, row)?;
        let out = self.value(a) * self.value(row);
        self.push("mul_row", out, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Result<Var> {
        let out = self.value(a) * k;
        self.push("scale", out, Op::Scale(a, k))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(shape_err("concat_cols", "no operands".into()));
        };
        let n = self.shape(first).0;
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p).0 != n) {
            return Err(shape_err("concat_cols", format!("{n} rows vs {:?}", self.shape(bad))));
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let m = self.shape(a).1;
        if start > end || end > m {
            return Err(shape_err("slice_cols", format!("{start}..{end} of {m} columns")));
        }
        let out = self.value(a).slice(s![.., start..end]).to_owned();
        self.push("slice_cols", out, Op::SliceCols(a, start))
    }

    /// Column means as a 1×m row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.nrows() == 0 {
            return Err(shape_err("mean_rows", "zero rows".into()));
        }
        let out = x.mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
        self.push("mean_rows", out, Op::MeanRows(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        self.push("sum_all", out, Op::SumAll(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).mapv(|v| if v > T::zero() { v } else { T::zero() });
        self.push("relu", out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).mapv(sigmoid);
        self.push("sigmoid", out, Op::Sigmoid(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let mut out = self.value(a).clone();
        for mut row in out.rows_mut() {
            let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        self.push("softmax_rows", out, Op::SoftmaxRows(a))
    }

    /// Normalizes each row to zero mean and unit variance (no affine part).
    pub fn layer_norm_rows(&mut self, a: Var, eps: T) -> Result<Var> {
        let x = self.value(a);
        let m = T::from_usize(x.ncols()).expect("column count fits");
        let mut xhat = x.clone();
        let mut inv_std = Vec::with_capacity(x.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / m;
            row.mapv_inplace(|v| v - mean);
            let var = row.fold(T::zero(), |acc, &v| acc + v * v) / m;
            let inv = T::one() / (var + eps).sqrt();
            row.mapv_inplace(|v| v * inv);
            inv_std.push(inv);
        }
        self.push(
            "layer_norm_rows",
            xhat.clone(),
            Op::LayerNormRows { x: a, xhat, inv_std },
        )
    }

    /// Inverted dropout. Identity when `train` is false or `p` is zero.
    pub fn dropout(&mut self, a: Var, p: f64, train: bool, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout rate {p} outside [0, 1)")));
        }
        if !train || p == 0.0 {
            return Ok(a);
        }
        let mut rng = crate::rng::substream(seed, 0);
        let keep = T::of(1.0 / (1.0 - p));
        let mask = Array2::from_shape_simple_fn(self.value(a).raw_dim(), || {
            if rng.random::<f64>() < p {
                T::zero()
            } else {
                keep
            }
        });
        let out = self.value(a) * &mask;
        self.push("dropout", out, Op::Dropout(a, mask))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let n = self.shape(a).0;
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(shape_err("gather_rows", format!("row {bad} of {n}")));
        }
        let out = self.value(a).select(Axis(0), rows);
        self.push("gather_rows", out, Op::GatherRows(a, rows.to_vec()))
    }

    /// An `n`-row result whose row `rows[i]` accumulates row `i` of `a`.
    pub fn scatter_rows(&mut self, a: Var, rows: &[usize], n: usize) -> Result<Var> {
        let x = self.value(a);
        if rows.len() != x.nrows() || rows.iter().any(|&r| r >= n) {
            return Err(shape_err(
                "scatter_rows",
                format!("{} indices for {} rows into {n}", rows.len(), x.nrows()),
            ));
        }
        let mut out = Array2::zeros((n, x.ncols()));
        for (i, &r) in rows.iter().enumerate() {
            let mut dst = out.row_mut(r);
            dst += &x.row(i);
        }
        self.push("scatter_rows", out, Op::ScatterRows(a, rows.to_vec()))
    }

    /// `s · a` for a constant sparse `s`.
    pub fn sparse_matmul(&mut self, s: Arc<CsrMatrix<T>>, a: Var) -> Result<Var> {
        let x = self.value(a);
        if s.shape().1 != x.nrows() {
            return Err(shape_err("sparse_matmul", format!("{:?} · {:?}", s.shape(), x.dim())));
        }
        let out = s.matmul(x.view());
        self.push("sparse_matmul", out, Op::SparseMatMul(s, a))
    }

    /// Mean binary cross-entropy of an n×1 column of probabilities.
    pub fn bce(&mut self, p: Var, labels: &[T]) -> Result<Var> {
        let x = self.value(p);
        if x.ncols() != 1 || x.nrows() != labels.len() || labels.is_empty() {
            return Err(shape_err("bce", format!("{:?} against {} labels", x.dim(), labels.len())));
        }
        let loss = bce_value(x.column(0).iter().copied(), labels.iter().copied());
        self.push("bce", Array2::from_elem((1, 1), loss), Op::Bce { p, labels: labels.to_vec() })
    }

    /// Reverse sweep from the 1×1 node `out`, accumulating into `grads`.
    pub fn backward(&self, out: Var, grads: &mut Gradients<T>) -> Result<()> {
        let shape = self.shape(out);
        if shape != (1, 1) {
            return Err(Error::NonScalarBackward(shape));
        }
        let mut adj: Vec<Option<Array2<T>>> = Vec::new();
        adj.resize_with(out.0 + 1, || None);
        adj[out.0] = Some(Array2::ones((1, 1)));
        for i in (0..=out.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            self.propagate(i, g, &mut adj, grads);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: Array2<T>, adj: &mut [Option<Array2<T>>], grads: &mut Gradients<T>) {
        let mut acc = |v: Var, d: Array2<T>| match &mut adj[v.0] {
            Some(existing) => *existing += &d,
            slot => *slot = Some(d),
        };
        match &self.nodes[i].op {
            Op::Constant => {}
            Op::Param(id) => {
                if self.params.get(*id).trainable {
                    *grads.get_mut(*id) += &g;
                }
            }
            Op::GatherParam(id, rows) => {
                if self.params.get(*id).trainable {
                    let dst = grads.get_mut(*id);
                    for (k, &r) in rows.iter().enumerate() {
                        let mut row = dst.row_mut(r);
                        row += &g.row(k);
                    }
                }
            }
            Op::MatMul(a, b) => {
                let da = g.dot(&self.value(*b).t());
                let db = self.value(*a).t().dot(&g);
                acc(*a, da);
                acc(*b, db);
            }
            Op::MatMulT(a, b) => {
                let da = g.dot(self.value(*b));
                let db = g.t().dot(self.value(*a));
                acc(*a, da);
                acc(*b, db);
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g);
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Mul(a, b) => {
                let da = &g * self.value(*b);
                let db = &g * self.value(*a);
                acc(*a, da);
                acc(*b, db);
            }
            Op::AddRow(a, row) => {
                let drow = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                acc(*a, g);
                acc(*row, drow);
            }
            Op::MulRow(a, row) => {
                let drow = (&g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                let da = &g * self.value(*row);
                acc(*a, da);
                acc(*row, drow);
            }
            Op::Scale(a, k) => acc(*a, g * *k),
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    acc(p, g.slice(s![.., start..start + w]).to_owned());
                    start += w;
                }
            }
            Op::SliceCols(a, start) => {
                let mut da = Array2::zeros(self.value(*a).raw_dim());
                da.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                acc(*a, da);
            }
            Op::MeanRows(a) => {
                let (n, m) = self.shape(*a);
                let k = T::one() / T::from_usize(n).expect("row count fits");
                let row = g.row(0).mapv(|v| v * k);
                acc(*a, row.broadcast((n, m)).expect("row broadcast").to_owned());
            }
            Op::SumAll(a) => acc(*a, Array2::from_elem(self.value(*a).raw_dim(), g[[0, 0]])),
            Op::Relu(a) => {
                let mut da = g;
                Zip::from(&mut da).and(self.value(*a)).for_each(|d, &x| {
                    if x <= T::zero() {
                        *d = T::zero();
                    }
                });
                acc(*a, da);
            }
            Op::Sigmoid(a) => {
                let y = self.nodes[i].value.as_ref().expect("stored");
                let mut da = g;
                Zip::from(&mut da).and(y).for_each(|d, &y| *d = *d * y * (T::one() - y));
                acc(*a, da);
            }
            Op::SoftmaxRows(a) => {
                let y = self.nodes[i].value.as_ref().expect("stored");
                let mut da = g;
                for (mut d, yr) in da.rows_mut().into_iter().zip(y.rows()) {
                    let dot = d.dot(&yr);
                    Zip::from(&mut d).and(&yr).for_each(|d, &y| *d = y * (*d - dot));
                }
                acc(*a, da);
            }
            Op::LayerNormRows { x, xhat, inv_std } => {
                let m = T::from_usize(xhat.ncols()).expect("column count fits");
                let mut dx = g;
                for ((mut d, xh), &inv) in dx.rows_mut().into_iter().zip(xhat.rows()).zip(inv_std) {
                    let sum_g = d.sum();
                    let sum_gx = d.dot(&xh);
                    Zip::from(&mut d)
                        .and(&xh)
                        .for_each(|d, &xh| *d = inv / m * (m * *d - sum_g - xh * sum_gx));
                }
                acc(*x, dx);
            }
            Op::Dropout(a, mask) => acc(*a, g * mask),
            Op::GatherRows(a, rows) => {
                let mut da = Array2::zeros(self.value(*a).raw_dim());
                for (k, &r) in rows.iter().enumerate() {
                    let mut row = da.row_mut(r);
                    row += &g.row(k);
                }
                acc(*a, da);
            }
            Op::ScatterRows(a, rows) => acc(*a, g.select(Axis(0), rows)),
            Op::SparseMatMul(sp, a) => acc(*a, sp.t_matmul(g.view())),
            Op::Bce { p, labels } => {
                let probs = self.value(*p);
                let n = T::from_usize(labels.len()).expect("length fits");
                let (lo, hi) = (T::of(PROB_CLAMP), T::one() - T::of(PROB_CLAMP));
                let scale = g[[0, 0]];
                let mut dp = Array2::zeros(probs.raw_dim());
                for (k, &y) in labels.iter().enumerate() {
                    let q = probs[[k, 0]];
                    if q > lo && q < hi {
                        dp[[k, 0]] = -scale * (y / q - (T::one() - y) / (T::one() - q)) / n;
                    }
                }
                acc(*p, dp);
            }
        }
    }
}

pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// −(1/N) Σ [y ln p + (1−y) ln(1−p)] with p clamped to [1e-7, 1 − 1e-7].
pub fn bce_value<T: Scalar>(probs: impl Iterator<Item = T>, labels: impl Iterator<Item = T>) -> T {
    let (lo, hi) = (T::of(PROB_CLAMP), T::one() - T::of(PROB_CLAMP));
    let mut total = T::zero();
    let mut n = 0usize;
    for (p, y) in probs.zip(labels) {
        let q = p.max(lo).min(hi);
        total = total - (y * q.ln() + (T::one() - y) * (T::one() - q).ln());
        n += 1;
    }
    total / T::from_usize(n.max(1)).expect("count fits")
}
