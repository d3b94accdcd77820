//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation as a node holding its forward value.
//! Calling [`Tape::backward`] on a scalar (1x1) node walks the tape in
//! reverse and accumulates adjoints. Leaves created with [`Tape::constant`]
//! never receive gradients, and nothing downstream of constants alone is
//! differentiated.
//!
//! Everything is `f64` so that central finite differences can be used as an
//! independent check on every gradient in this crate.

use std::cell::{Ref, RefCell};

use ndarray::{s, Array2, Axis, Zip};

pub type Mat = Array2<f64>;

/// Norm below which [`Tape::normalize_rows`] adds its guard vector.
pub const NORM_GUARD: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulTransB(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Mat),
    Scale(Var, f64),
    Offset(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    SumRows(Var),
    SumCols(Var),
    RepeatRow(Var),
    NormalizeRows { input: Var, norms: Vec<f64> },
    LogSoftmaxRows(Var),
    MaskedLogSumExpRows(Var, Mat),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    MinRows(Var, Vec<usize>),
    Sqrt(Var),
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

/// Records a computation for later differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Adjoints produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Mat>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` did not influence the output.
    pub fn wrt(&self, v: Var) -> Mat {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Mat::zeros((r, c))
            }
        }
    }

    pub fn collect(&self, vars: &[Var]) -> Vec<Mat> {
        vars.iter().map(|&v| self.wrt(v)).collect()
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

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn add_into(slot: &mut Option<Mat>, g: Mat) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Mat, op: Op, needs_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, needs_grad });
        Var(nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|v| nodes[v.0].needs_grad)
    }

    /// Differentiable leaf (a parameter or an input we want gradients for).
    pub fn var(&self, value: Mat) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, x: f64) -> Var {
        self.constant(Mat::from_elem((1, 1), x))
    }

    pub fn value(&self, v: Var) -> Ref<'_, Mat> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let val = self.value(v);
        debug_assert_eq!(val.dim(), (1, 1));
        val[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    fn unary(&self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).mapv(f);
        let ng = self.needs(&[a]);
        self.push(value, op, ng)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&*self.value(b));
        let ng = self.needs(&[a, b]);
        self.push(value, Op::MatMul(a, b), ng)
    }

    /// `a * b^T`.
    pub fn matmul_t(&self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        let ng = self.needs(&[a, b]);
        self.push(value, Op::MatMulTransB(a, b), ng)
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let value = &*self.value(a) + &*self.value(b);
        let ng = self.needs(&[a, b]);
        self.push(value, Op::Add(a, b), ng)
    }

    /// Adds the 1xm row `b` to every row of `a`.
    pub fn add_row(&self, a: Var, b: Var) -> Var {
        let value = {
            let av = self.value(a);
            let bv = self.value(b);
            assert_eq!(bv.nrows(), 1, "add_row expects a row vector");
            &*av + &bv.row(0)
        };
        let ng = self.needs(&[a, b]);
        self.push(value, Op::AddRow(a, b), ng)
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let value = &*self.value(a) - &*self.value(b);
        let ng = self.needs(&[a, b]);
        self.push(value, Op::Sub(a, b), ng)
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let value = &*self.value(a) * &*self.value(b);
        let ng = self.needs(&[a, b]);
        self.push(value, Op::Mul(a, b), ng)
    }

    /// Elementwise product with a constant matrix (masks).
    pub fn mul_const(&self, a: Var, c: Mat) -> Var {
        let value = &*self.value(a) * &c;
        let ng = self.needs(&[a]);
        self.push(value, Op::MulConst(a, c), ng)
    }

    pub fn scale(&self, a: Var, k: f64) -> Var {
        self.unary(a, |x| k * x, Op::Scale(a, k))
    }

    pub fn offset(&self, a: Var, k: f64) -> Var {
        self.unary(a, |x| x + k, Op::Offset(a))
    }

    pub fn relu(&self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn tanh(&self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn softplus(&self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    pub fn exp(&self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn sqrt(&self, a: Var) -> Var {
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn square(&self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    /// Hard clamp; the gradient is zero wherever the input lies outside `[lo, hi]`.
    pub fn clamp(&self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn sum(&self, a: Var) -> Var {
        let value = Mat::from_elem((1, 1), self.value(a).sum());
        let ng = self.needs(&[a]);
        self.push(value, Op::Sum(a), ng)
    }

    pub fn mean(&self, a: Var) -> Var {
        let n = {
            let v = self.value(a);
            v.len() as f64
        };
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Row sums, n x 1.
    pub fn sum_rows(&self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ng = self.needs(&[a]);
        self.push(value, Op::SumRows(a), ng)
    }

    /// Column sums, 1 x m.
    pub fn sum_cols(&self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        let ng = self.needs(&[a]);
        self.push(value, Op::SumCols(a), ng)
    }

    /// Mean over rows, 1 x m.
    pub fn mean_over_rows(&self, a: Var) -> Var {
        let n = self.shape(a).0 as f64;
        let s = self.sum_cols(a);
        self.scale(s, 1.0 / n)
    }

    /// Tiles a 1 x m row into n x m.
    pub fn repeat_row(&self, a: Var, n: usize) -> Var {
        let value = {
            let av = self.value(a);
            assert_eq!(av.nrows(), 1);
            av.broadcast((n, av.ncols())).unwrap().to_owned()
        };
        let ng = self.needs(&[a]);
        self.push(value, Op::RepeatRow(a), ng)
    }

    /// L2-normalizes each row. Rows with norm below [`NORM_GUARD`] are shifted
    /// by a fixed vector first so the result is always a unit vector.
    pub fn normalize_rows(&self, a: Var) -> Var {
        let (norms, value) = {
            let av = self.value(a);
            let mut guarded = av.to_owned();
            let mut norms = Vec::with_capacity(av.nrows());
            for mut row in guarded.rows_mut() {
                let n = row.dot(&row).sqrt();
                if n < NORM_GUARD {
                    let k = row.len() as f64;
                    row.mapv_inplace(|x| x + 1.0 / k.sqrt());
                }
                norms.push(row.dot(&row).sqrt());
            }
            let mut value = guarded;
            for (mut row, &n) in value.rows_mut().into_iter().zip(&norms) {
                row.mapv_inplace(|x| x / n);
            }
            (norms, value)
        };
        let ng = self.needs(&[a]);
        self.push(value, Op::NormalizeRows { input: a, norms }, ng)
    }

    pub fn log_softmax_rows(&self, a: Var) -> Var {
        let value = {
            let av = self.value(a);
            let mut out = av.to_owned();
            for mut row in out.rows_mut() {
                let m = row.fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
                let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
                row.mapv_inplace(|x| x - lse);
            }
            out
        };
        let ng = self.needs(&[a]);
        self.push(value, Op::LogSoftmaxRows(a), ng)
    }

    /// Per-row `log sum_j mask_ij * exp(a_ij)`, n x 1. Every row of `mask`
    /// must select at least one entry.
    pub fn masked_logsumexp_rows(&self, a: Var, mask: Mat) -> Var {
        let value = {
            let av = self.value(a);
            assert_eq!(av.dim(), mask.dim());
            let mut out = Mat::zeros((av.nrows(), 1));
            for (i, (row, mrow)) in av.rows().into_iter().zip(mask.rows()).enumerate() {
                assert!(mrow.iter().any(|&w| w != 0.0), "masked_logsumexp_rows: empty mask row {i}");
                let m = row
                    .iter()
                    .zip(mrow.iter())
                    .filter(|(_, &w)| w != 0.0)
                    .fold(f64::NEG_INFINITY, |acc, (&x, _)| if x.is_nan() { x } else { acc.max(x) });
                if !m.is_finite() {
                    // non-finite inputs propagate so callers can report them
                    out[[i, 0]] = f64::NAN;
                    continue;
                }
                let s: f64 = row
                    .iter()
                    .zip(mrow.iter())
                    .map(|(&x, &w)| w * (x - m).exp())
                    .sum();
                out[[i, 0]] = m + s.ln();
            }
            out
        };
        let ng = self.needs(&[a]);
        self.push(value, Op::MaskedLogSumExpRows(a, mask), ng)
    }

    pub fn concat_rows(&self, parts: &[Var]) -> Var {
        let value = {
            let views: Vec<Ref<'_, Mat>> = parts.iter().map(|&p| self.value(p)).collect();
            let vv: Vec<_> = views.iter().map(|v| v.view()).collect();
            ndarray::concatenate(Axis(0), &vv).expect("concat_rows: column mismatch")
        };
        let ng = self.needs(parts);
        self.push(value, Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        let value = {
            let views: Vec<Ref<'_, Mat>> = parts.iter().map(|&p| self.value(p)).collect();
            let vv: Vec<_> = views.iter().map(|v| v.view()).collect();
            ndarray::concatenate(Axis(1), &vv).expect("concat_cols: row mismatch")
        };
        let ng = self.needs(parts);
        self.push(value, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn slice_cols(&self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        let ng = self.needs(&[a]);
        self.push(value, Op::SliceCols(a, start, end), ng)
    }

    /// Row-wise minimum, n x 1; ties resolve to the lowest column.
    pub fn min_rows(&self, a: Var) -> Var {
        let (value, idx) = {
            let av = self.value(a);
            let mut value = Mat::zeros((av.nrows(), 1));
            let mut idx = Vec::with_capacity(av.nrows());
            for (i, row) in av.rows().into_iter().enumerate() {
                let mut best = 0;
                for j in 1..row.len() {
                    if row[j] < row[best] {
                        best = j;
                    }
                }
                value[[i, 0]] = row[best];
                idx.push(best);
            }
            (value, idx)
        };
        let ng = self.needs(&[a]);
        self.push(value, Op::MinRows(a, idx), ng)
    }

    /// Reverse pass from the scalar node `out`.
    pub fn backward(&self, out: Var) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[out.0].value.dim(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Mat>> = (0..nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Mat::ones((1, 1)));

        for i in (0..=out.0).rev() {
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let val = |v: Var| &nodes[v.0].value;
            let wants = |v: Var| nodes[v.0].needs_grad;
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if wants(*a) {
                        add_into(&mut grads[a.0], g.dot(&val(*b).t()));
                    }
                    if wants(*b) {
                        add_into(&mut grads[b.0], val(*a).t().dot(&g));
                    }
                }
                Op::MatMulTransB(a, b) => {
                    if wants(*a) {
                        add_into(&mut grads[a.0], g.dot(val(*b)));
                    }
                    if wants(*b) {
                        add_into(&mut grads[b.0], g.t().dot(val(*a)));
                    }
                }
                Op::Add(a, b) => {
                    if wants(*a) {
                        add_into(&mut grads[a.0], g.clone());
                    }
                    if wants(*b) {
                        add_into(&mut grads[b.0], g);
                    }
                }
                Op::AddRow(a, b) => {
                    if wants(*b) {
                        add_into(&mut grads[b.0], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if wants(*a) {
                        add_into(&mut grads[a.0], g);
                    }
                }
                Op::Sub(a, b) => {
                    if wants(*b) {
                        add_into(&mut grads[b.0], -&g);
                    }
                    if wants(*a) {
                        add_into(&mut grads[a.0], g);
                    }
                }
                Op::Mul(a, b) => {
                    if wants(*a) {
                        add_into(&mut grads[a.0], &g * val(*b));
                    }
                    if wants(*b) {
                        add_into(&mut grads[b.0], &g * val(*a));
                    }
                }
                Op::MulConst(a, c) => add_into(&mut grads[a.0], &g * c),
                Op::Scale(a, k) => add_into(&mut grads[a.0], g * *k),
                Op::Offset(a) => add_into(&mut grads[a.0], g),
                Op::Relu(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(val(*a)).for_each(|d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                    add_into(&mut grads[a.0], d);
                }
                Op::Tanh(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| *d *= 1.0 - y * y);
                    add_into(&mut grads[a.0], d);
                }
                Op::Sigmoid(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| *d *= y * (1.0 - y));
                    add_into(&mut grads[a.0], d);
                }
                Op::Softplus(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(val(*a)).for_each(|d, &x| *d *= sigmoid(x));
                    add_into(&mut grads[a.0], d);
                }
                Op::Exp(a) => add_into(&mut grads[a.0], &g * &node.value),
                Op::Log(a) => add_into(&mut grads[a.0], &g / val(*a)),
                Op::Sqrt(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| *d *= 0.5 / y);
                    add_into(&mut grads[a.0], d);
                }
                Op::Square(a) => add_into(&mut grads[a.0], &g * val(*a) * 2.0),
                Op::Clamp(a, lo, hi) => {
                    let mut d = g;
                    Zip::from(&mut d).and(val(*a)).for_each(|d, &x| {
                        if x < *lo || x > *hi {
                            *d = 0.0
                        }
                    });
                    add_into(&mut grads[a.0], d);
                }
                Op::Sum(a) => {
                    let dim = val(*a).dim();
                    add_into(&mut grads[a.0], Mat::from_elem(dim, g[[0, 0]]));
                }
                Op::SumRows(a) => {
                    let dim = val(*a).dim();
                    let d = g.broadcast(dim).unwrap().to_owned();
                    add_into(&mut grads[a.0], d);
                }
                Op::SumCols(a) => {
                    let dim = val(*a).dim();
                    let d = g.broadcast(dim).unwrap().to_owned();
                    add_into(&mut grads[a.0], d);
                }
                Op::RepeatRow(a) => {
                    add_into(&mut grads[a.0], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                Op::NormalizeRows { input, norms } => {
                    let y = &node.value;
                    let mut d = g;
                    for ((mut drow, yrow), &n) in d.rows_mut().into_iter().zip(y.rows()).zip(norms) {
                        let proj = drow.dot(&yrow);
                        Zip::from(&mut drow).and(&yrow).for_each(|dv, &yv| *dv = (*dv - yv * proj) / n);
                    }
                    add_into(&mut grads[input.0], d);
                }
                Op::LogSoftmaxRows(a) => {
                    let y = &node.value;
                    let mut d = g;
                    for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                        let total = drow.sum();
                        Zip::from(&mut drow).and(&yrow).for_each(|dv, &yv| *dv -= yv.exp() * total);
                    }
                    add_into(&mut grads[a.0], d);
                }
                Op::MaskedLogSumExpRows(a, mask) => {
                    let x = val(*a);
                    let mut d = Mat::zeros(x.dim());
                    for i in 0..x.nrows() {
                        let lse = node.value[[i, 0]];
                        let gi = g[[i, 0]];
                        for j in 0..x.ncols() {
                            let w = mask[[i, j]];
                            if w != 0.0 {
                                d[[i, j]] = gi * w * (x[[i, j]] - lse).exp();
                            }
                        }
                    }
                    add_into(&mut grads[a.0], d);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let r = val(*p).nrows();
                        if wants(*p) {
                            add_into(&mut grads[p.0], g.slice(s![start..start + r, ..]).to_owned());
                        }
                        start += r;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let c = val(*p).ncols();
                        if wants(*p) {
                            add_into(&mut grads[p.0], g.slice(s![.., start..start + c]).to_owned());
                        }
                        start += c;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let mut d = Mat::zeros(val(*a).dim());
                    d.slice_mut(s![.., *start..*end]).assign(&g);
                    add_into(&mut grads[a.0], d);
                }
                Op::MinRows(a, idx) => {
                    let mut d = Mat::zeros(val(*a).dim());
                    for (i, &j) in idx.iter().enumerate() {
                        d[[i, j]] = g[[i, 0]];
                    }
                    add_into(&mut grads[a.0], d);
                }
            }
        }

        let shapes = nodes.iter().map(|n| n.value.dim()).collect();
        Gradients { grads, shapes }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central differences of `f` with respect to every entry of `x`.
    fn numeric_grad(x: &Mat, f: impl Fn(&Mat) -> f64) -> Mat {
        let h = 1e-6;
        let mut g = Mat::zeros(x.dim());
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let mut xp = x.clone();
            xp[[r, c]] += h;
            let mut xm = x.clone();
            xm[[r, c]] -= h;
            g[[r, c]] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        g
    }

    fn check(x: Mat, build: impl Fn(&Tape, Var) -> Var) {
        let t = Tape::new();
        let v = t.var(x.clone());
        let out = build(&t, v);
        let analytic = t.backward(out).wrt(v);
        let numeric = numeric_grad(&x, |xx| {
            let t = Tape::new();
            let v = t.var(xx.clone());
            let o = build(&t, v);
            t.scalar_value(o)
        });
        for (a, n) in analytic.iter().zip(numeric.iter()) {
            assert!((a - n).abs() <= 1e-6 * (1.0 + n.abs()), "analytic {a} vs numeric {n}");
        }
    }

    fn x0() -> Mat {
        array![[0.3, -1.2, 0.7], [1.1, 0.4, -0.5]]
    }

    #[test]
    fn elementwise_ops() {
        check(x0(), |t, v| {
            let a = t.tanh(v);
            let b = t.sigmoid(v);
            let c = t.softplus(v);
            let d = t.mul(a, b);
            let e = t.add(d, c);
            let f = t.square(e);
            t.sum(f)
        });
        check(x0().mapv(|x: f64| x.abs() + 0.1), |t, v| {
            let l = t.log(v);
            let e = t.exp(l);
            let s = t.sqrt(e);
            let o = t.offset(s, 2.0);
            t.sum(o)
        });
    }

    #[test]
    fn matrix_ops() {
        let w = array![[0.5, -0.2], [0.1, 0.9], [-0.7, 0.3]];
        check(x0(), |t, v| {
            let wv = t.constant(w.clone());
            let m = t.matmul(v, wv);
            let r = t.relu(m);
            let n = t.matmul_t(r, r);
            t.sum(n)
        });
        check(w.clone(), |t, v| {
            let x = t.constant(x0());
            let m = t.matmul(x, v);
            let b = t.constant(array![[0.2, -0.3]]);
            let m = t.add_row(m, b);
            let n = t.normalize_rows(m);
            let s = t.sum_cols(n);
            let s = t.square(s);
            t.sum(s)
        });
    }

    #[test]
    fn reductions_and_softmax() {
        check(x0(), |t, v| {
            let ls = t.log_softmax_rows(v);
            let w = t.constant(array![[0.2, 0.5, 0.3], [0.1, 0.1, 0.8]]);
            let p = t.mul(ls, w);
            t.sum(p)
        });
        check(x0(), |t, v| {
            let mask = array![[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
            let l = t.masked_logsumexp_rows(v, mask);
            let l = t.square(l);
            t.sum(l)
        });
        check(x0(), |t, v| {
            let a = t.slice_cols(v, 1, 3);
            let b = t.slice_cols(v, 0, 1);
            let c = t.concat_cols(&[b, a, b]);
            let r = t.concat_rows(&[c, c]);
            let m = t.mean_over_rows(r);
            let rep = t.repeat_row(m, 4);
            let q = t.sum_rows(rep);
            let q = t.square(q);
            t.mean(q)
        });
        check(x0(), |t, v| {
            let m = t.min_rows(v);
            let c = t.clamp(v, -1.0, 1.0);
            let a = t.sum(m);
            let b = t.sum(c);
            t.sub(a, b)
        });
    }

    #[test]
    fn normalize_guard_yields_unit_row() {
        let t = Tape::new();
        let v = t.var(Mat::zeros((1, 4)));
        let n = t.normalize_rows(v);
        let row = t.value(n).row(0).to_owned();
        assert!((row.dot(&row) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constants_get_no_gradient() {
        let t = Tape::new();
        let c = t.constant(x0());
        let v = t.var(x0());
        let p = t.mul(c, v);
        let s = t.sum(p);
        let g = t.backward(s);
        assert_eq!(g.wrt(c), Mat::zeros((2, 3)));
        assert_eq!(g.wrt(v), x0());
    }
}
