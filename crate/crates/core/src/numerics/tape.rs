//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation in execution order, which is already a
//! topological order, so `backward` is a single reverse sweep. Nodes that do
//! not depend on any tracked leaf carry no gradient and are skipped.

use rayon::prelude::*;

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Option<Var> },
    MatMul(Var, Var),
    Relu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    RepeatRows(Var),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LogSumExp(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    SquaredL2(Var),
    Softplus(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op,
    tracked: bool,
}

/// Work size (multiply-adds) above which dense kernels fan out over rows.
const PAR_THRESHOLD: usize = 1 << 17;

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like `like` when nothing flowed into it.
    pub fn take_or_zeros(&mut self, v: Var, like: [usize; 2]) -> Tensor<T> {
        self.grads
            .get_mut(v.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(like[0], like[1]))
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += *x * *y;
    }
    s
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

fn fmt_shape(s: [usize; 2]) -> String {
    format!("[{}, {}]", s[0], s[1])
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Trainable leaf: gradients flow into it.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf: no gradient is computed for it or anything derived only from it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    /// Value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    /// `x · wᵀ + b` for `x: n×in`, `w: out×in`, `b: 1×out`.
    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let [n, k] = self.shape(x);
        let [out, wk] = self.shape(w);
        if k != wk {
            return Err(Error::shape(
                "affine",
                format!("input {} vs weight {}", fmt_shape([n, k]), fmt_shape([out, wk])),
            ));
        }
        if let Some(b) = b {
            if self.shape(b) != [1, out] {
                return Err(Error::shape(
                    "affine",
                    format!("bias {} for output width {out}", fmt_shape(self.shape(b))),
                ));
            }
        }
        let mut y = Tensor::zeros(n, out);
        {
            let xv = self.value(x);
            let wv = self.value(w);
            let bv = b.map(|b| self.value(b).data());
            let kernel = |(i, yr): (usize, &mut [T])| {
                let xr = xv.row(i);
                for (o, yo) in yr.iter_mut().enumerate() {
                    *yo = dot(xr, wv.row(o)) + bv.map_or(T::zero(), |b| b[o]);
                }
            };
            if n > 1 && n * k * out >= PAR_THRESHOLD {
                y.data_mut().par_chunks_mut(out.max(1)).enumerate().for_each(kernel);
            } else {
                y.data_mut().chunks_mut(out.max(1)).enumerate().for_each(kernel);
            }
        }
        let tracked = self.tracked(x) || self.tracked(w) || b.is_some_and(|b| self.tracked(b));
        Ok(self.push(y, Op::Affine { x, w, b }, tracked))
    }

    /// Matrix product `a · b` for `a: n×k`, `b: k×m`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let [n, k] = self.shape(a);
        let [bk, m] = self.shape(b);
        if k != bk {
            return Err(Error::shape(
                "matmul",
                format!("{} · {}", fmt_shape([n, k]), fmt_shape([bk, m])),
            ));
        }
        let mut y = Tensor::zeros(n, m);
        {
            let av = self.value(a);
            let bv = self.value(b);
            for i in 0..n {
                let yr = y.row_mut(i);
                for (l, &ail) in av.row(i).iter().enumerate() {
                    axpy(ail, bv.row(l), yr);
                }
            }
        }
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(y, Op::MatMul(a, b), tracked))
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(T) -> T) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| f(v)).collect();
        let y = Tensor::from_vec(xv.rows(), xv.cols(), data).expect("same shape");
        let tracked = self.tracked(x);
        self.push(y, op, tracked)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| if v > T::zero() { v } else { T::zero() })
    }

    /// `ln(1 + eˣ)`, elementwise.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, Op::Softplus(x), |v| {
            v.max(T::zero()) + (T::one() + (-v.abs()).exp()).ln()
        })
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let cs = T::from_f64(c);
        self.unary(x, Op::Scale(x, c), |v| v * cs)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(T, T) -> T,
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(
                name,
                format!("{} vs {}", fmt_shape(sa), fmt_shape(sb)),
            ));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let y = Tensor::from_vec(sa[0], sa[1], data)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(y, op, tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.shape(p)[0])
            .ok_or_else(|| Error::shape("concat_cols", "no inputs"))?;
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p)[0] != rows) {
            return Err(Error::shape(
                "concat_cols",
                format!("row count {} vs {rows}", self.shape(bad)[0]),
            ));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
        let mut y = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            let yr = y.row_mut(r);
            for &p in parts {
                let src = self.nodes[p.0].value.row(r);
                yr[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let tracked = parts.iter().any(|&p| self.tracked(p));
        Ok(self.push(y, Op::ConcatCols(parts.to_vec()), tracked))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        if values.is_empty() {
            return Err(Error::shape("concat_rows", "no inputs"));
        }
        let y = Tensor::stack_rows(&values)
            .map_err(|_| Error::shape("concat_rows", "column counts differ"))?;
        let tracked = parts.iter().any(|&p| self.tracked(p));
        Ok(self.push(y, Op::ConcatRows(parts.to_vec()), tracked))
    }

    /// Broadcasts a single row to `n` rows.
    pub fn repeat_rows(&mut self, x: Var, n: usize) -> Result<Var> {
        let [r, c] = self.shape(x);
        if r != 1 {
            return Err(Error::shape("repeat_rows", format!("expected one row, got {r}")));
        }
        let src = self.value(x).data().to_vec();
        let mut data = Vec::with_capacity(n * c);
        for _ in 0..n {
            data.extend_from_slice(&src);
        }
        let y = Tensor::from_vec(n, c, data)?;
        let tracked = self.tracked(x);
        Ok(self.push(y, Op::RepeatRows(x), tracked))
    }

    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let [r, c] = self.shape(x);
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::shape("gather_rows", format!("row {bad} of {r}")));
        }
        let xv = self.value(x);
        let mut data = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            data.extend_from_slice(xv.row(i));
        }
        let y = Tensor::from_vec(rows.len(), c, data)?;
        let tracked = self.tracked(x);
        Ok(self.push(y, Op::GatherRows(x, rows.to_vec()), tracked))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.len() != rows * cols {
            return Err(Error::shape(
                "reshape",
                format!("{} to {}", fmt_shape(xv.shape()), fmt_shape([rows, cols])),
            ));
        }
        let y = Tensor::from_vec(rows, cols, xv.data().to_vec())?;
        let tracked = self.tracked(x);
        Ok(self.push(y, Op::Reshape(x), tracked))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let mut y = self.value(x).clone();
        for r in 0..y.rows() {
            softmax_in_place(y.row_mut(r));
        }
        let tracked = self.tracked(x);
        self.push(y, Op::SoftmaxRows(x), tracked)
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        let mut y = self.value(x).clone();
        for r in 0..y.rows() {
            let row = y.row_mut(r);
            let lse = log_sum_exp(row.iter().copied());
            row.iter_mut().for_each(|v| *v = *v - lse);
        }
        let tracked = self.tracked(x);
        self.push(y, Op::LogSoftmaxRows(x), tracked)
    }

    /// `ln Σ_{i∈keep} eˣⁱ` over the flattened entries of `x` listed in `keep`.
    /// Entries outside `keep` do not influence the value or the gradient.
    pub fn log_sum_exp(&mut self, x: Var, keep: &[usize]) -> Result<Var> {
        let n = self.value(x).len();
        let mut idx = keep.to_vec();
        idx.sort_unstable();
        idx.dedup();
        if idx.is_empty() {
            return Err(Error::shape("log_sum_exp", "index set is empty"));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::shape("log_sum_exp", format!("index {bad} of {n}")));
        }
        let d = self.value(x).data();
        let v = log_sum_exp(idx.iter().map(|&i| d[i]));
        let tracked = self.tracked(x);
        Ok(self.push(Tensor::scalar(v), Op::LogSumExp(x, idx), tracked))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = self.value(x).data().iter().copied().sum();
        let tracked = self.tracked(x);
        self.push(Tensor::scalar(v), Op::Sum(x), tracked)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let v = xv.data().iter().copied().sum::<T>() / T::from_f64(xv.len().max(1) as f64);
        let tracked = self.tracked(x);
        self.push(Tensor::scalar(v), Op::Mean(x), tracked)
    }

    /// `Σ xᵢ²`.
    pub fn squared_l2(&mut self, x: Var) -> Var {
        let v = self.value(x).data().iter().map(|&a| a * a).sum();
        let tracked = self.tracked(x);
        self.push(Tensor::scalar(v), Op::SquaredL2(x), tracked)
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        if self.shape(root) != [1, 1] {
            return Err(Error::shape(
                "backward",
                format!("root must be a scalar, got {}", fmt_shape(self.shape(root))),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.tracked(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let y = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::Affine { x, w, b } => {
                let xv = self.value(x);
                let wv = self.value(w);
                let [n, k] = xv.shape();
                let out = wv.rows();
                let big = n * k * out >= PAR_THRESHOLD;
                if self.tracked(x) {
                    let mut dx = Tensor::zeros(n, k);
                    let kernel = |(r, dxr): (usize, &mut [T])| {
                        for (o, &gy) in g.row(r).iter().enumerate() {
                            if gy != T::zero() {
                                axpy(gy, wv.row(o), dxr);
                            }
                        }
                    };
                    if big && n > 1 {
                        dx.data_mut().par_chunks_mut(k.max(1)).enumerate().for_each(kernel);
                    } else {
                        dx.data_mut().chunks_mut(k.max(1)).enumerate().for_each(kernel);
                    }
                    self.accumulate(grads, x, dx);
                }
                if self.tracked(w) {
                    let mut dw = Tensor::zeros(out, k);
                    let kernel = |(o, dwr): (usize, &mut [T])| {
                        for r in 0..n {
                            let gy = g[(r, o)];
                            if gy != T::zero() {
                                axpy(gy, xv.row(r), dwr);
                            }
                        }
                    };
                    if big && out > 1 {
                        dw.data_mut().par_chunks_mut(k.max(1)).enumerate().for_each(kernel);
                    } else {
                        dw.data_mut().chunks_mut(k.max(1)).enumerate().for_each(kernel);
                    }
                    self.accumulate(grads, w, dw);
                }
                if let Some(b) = b.filter(|&b| self.tracked(b)) {
                    let mut db = Tensor::zeros(1, out);
                    for r in 0..n {
                        for (d, &gy) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *d += gy;
                        }
                    }
                    self.accumulate(grads, b, db);
                }
            }
            &Op::MatMul(a, b) => {
                let av = self.value(a);
                let bv = self.value(b);
                if self.tracked(a) {
                    let mut da = Tensor::zeros(av.rows(), av.cols());
                    for r in 0..av.rows() {
                        let gr = g.row(r);
                        for (l, d) in da.row_mut(r).iter_mut().enumerate() {
                            *d = dot(gr, bv.row(l));
                        }
                    }
                    self.accumulate(grads, a, da);
                }
                if self.tracked(b) {
                    let mut db = Tensor::zeros(bv.rows(), bv.cols());
                    for r in 0..av.rows() {
                        let gr = g.row(r);
                        for (l, &arl) in av.row(r).iter().enumerate() {
                            axpy(arl, gr, db.row_mut(l));
                        }
                    }
                    self.accumulate(grads, b, db);
                }
            }
            &Op::Relu(x) => {
                let xv = self.value(x);
                let d = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() })
                    .collect();
                self.accumulate(grads, x, Tensor::from_vec(g.rows(), g.cols(), d).unwrap());
            }
            &Op::Softplus(x) => {
                let xv = self.value(x);
                let d = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(&gv, &xv)| gv * sigmoid(xv))
                    .collect();
                self.accumulate(grads, x, Tensor::from_vec(g.rows(), g.cols(), d).unwrap());
            }
            &Op::Add(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.clone());
            }
            &Op::Sub(a, b) => {
                self.accumulate(grads, a, g.clone());
                let neg = g.data().iter().map(|&v| -v).collect();
                self.accumulate(grads, b, Tensor::from_vec(g.rows(), g.cols(), neg).unwrap());
            }
            &Op::Mul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                if self.tracked(a) {
                    let d = g.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
                    self.accumulate(grads, a, Tensor::from_vec(g.rows(), g.cols(), d).unwrap());
                }
                if self.tracked(b) {
                    let d = g.data().iter().zip(av.data()).map(|(&x, &y)| x * y).collect();
                    self.accumulate(grads, b, Tensor::from_vec(g.rows(), g.cols(), d).unwrap());
                }
            }
            &Op::Scale(x, c) => {
                let cs = T::from_f64(c);
                let d = g.data().iter().map(|&v| v * cs).collect();
                self.accumulate(grads, x, Tensor::from_vec(g.rows(), g.cols(), d).unwrap());
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let [rows, cols] = self.shape(p);
                    if self.tracked(p) {
                        let mut d = Tensor::zeros(rows, cols);
                        for r in 0..rows {
                            d.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                        }
                        self.accumulate(grads, p, d);
                    }
                    off += cols;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let [rows, cols] = self.shape(p);
                    if self.tracked(p) {
                        let d = g.data()[off * cols..(off + rows) * cols].to_vec();
                        self.accumulate(grads, p, Tensor::from_vec(rows, cols, d).unwrap());
                    }
                    off += rows;
                }
            }
            &Op::RepeatRows(x) => {
                let mut d = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (a, &b) in d.data_mut().iter_mut().zip(g.row(r)) {
                        *a += b;
                    }
                }
                self.accumulate(grads, x, d);
            }
            Op::GatherRows(x, rows) => {
                let [r, c] = self.shape(*x);
                let mut d = Tensor::zeros(r, c);
                for (k, &src) in rows.iter().enumerate() {
                    for (a, &b) in d.row_mut(src).iter_mut().zip(g.row(k)) {
                        *a += b;
                    }
                }
                self.accumulate(grads, *x, d);
            }
            &Op::Reshape(x) => {
                let [r, c] = self.shape(x);
                self.accumulate(grads, x, Tensor::from_vec(r, c, g.data().to_vec()).unwrap());
            }
            &Op::SoftmaxRows(x) => {
                let mut d = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let s = dot(yr, gr);
                    for ((dv, &yv), &gv) in d.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *dv = yv * (gv - s);
                    }
                }
                self.accumulate(grads, x, d);
            }
            &Op::LogSoftmaxRows(x) => {
                let mut d = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let s: T = gr.iter().copied().sum();
                    for ((dv, &yv), &gv) in d.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *dv = gv - yv.exp() * s;
                    }
                }
                self.accumulate(grads, x, d);
            }
            Op::LogSumExp(x, idx) => {
                let xv = self.value(*x);
                let lse = y.data()[0];
                let g0 = g.data()[0];
                let mut d = Tensor::zeros(xv.rows(), xv.cols());
                for &k in idx {
                    d.data_mut()[k] = g0 * (xv.data()[k] - lse).exp();
                }
                self.accumulate(grads, *x, d);
            }
            &Op::Sum(x) => {
                let [r, c] = self.shape(x);
                let mut d = Tensor::zeros(r, c);
                d.fill(g.data()[0]);
                self.accumulate(grads, x, d);
            }
            &Op::Mean(x) => {
                let [r, c] = self.shape(x);
                let mut d = Tensor::zeros(r, c);
                d.fill(g.data()[0] / T::from_f64((r * c).max(1) as f64));
                self.accumulate(grads, x, d);
            }
            &Op::SquaredL2(x) => {
                let xv = self.value(x);
                let two_g = T::from_f64(2.0) * g.data()[0];
                let d = xv.data().iter().map(|&v| two_g * v).collect();
                self.accumulate(grads, x, Tensor::from_vec(xv.rows(), xv.cols(), d).unwrap());
            }
        }
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable `ln Σ eˣ`. Returns `-∞` for an empty iterator.
pub fn log_sum_exp<T: Scalar>(values: impl Iterator<Item = T> + Clone) -> T {
    let m = values.clone().fold(T::neg_infinity(), |a, b| a.max(b));
    if !m.is_finite() {
        return m;
    }
    let s: T = values.map(|v| (v - m).exp()).sum();
    m + s.ln()
}

pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let mut s = T::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v = *v / s;
    }
}
