//! Batched reverse-mode autodiff over dense matrices.
//!
//! Every node holds a `rows × cols` value, rows being samples. Input
//! gradients of a network are built from ordinary tape operations (see
//! [`TapedMlp::input_vjp`]), so losses that contain `∂V/∂z` are differentiated
//! with respect to parameters by the same single reverse sweep.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::mlp::MlpSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `a · wᵀ`
    MatMulBt(Var, Var),
    /// `a · w`
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    OneMinusSq(Var),
    Square(Var),
    Sqrt(Var),
    Abs(Var),
    Relu(Var),
    Clamp(Var, f64, f64),
    MulConst(Var, Matrix),
    RowSum(Var),
    Mean(Var),
    Sum(Var),
    MulCol(Var, Var),
    Cols(Var, usize),
    Rows(Var, Vec<usize>),
    BatchMatVec(Var, Var),
    BatchMatTVec(Var, Var),
    BatchOuter(Var, Var),
    /// Per-row Jacobians (`out × in`, row-major) of an external function.
    RowJacobian(Var, Vec<f64>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMulBt(..) => "matmul_bt",
            Op::MatMul(..) => "matmul",
            Op::AddRow(..) => "add_row",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Tanh(..) => "tanh",
            Op::OneMinusSq(..) => "one_minus_sq",
            Op::Square(..) => "square",
            Op::Sqrt(..) => "sqrt",
            Op::Abs(..) => "abs",
            Op::Relu(..) => "relu",
            Op::Clamp(..) => "clamp",
            Op::MulConst(..) => "mul_const",
            Op::RowSum(..) => "row_sum",
            Op::Mean(..) => "mean",
            Op::Sum(..) => "sum",
            Op::MulCol(..) => "mul_col",
            Op::Cols(..) => "cols",
            Op::Rows(..) => "rows",
            Op::BatchMatVec(..) => "batch_matvec",
            Op::BatchMatTVec(..) => "batch_mattvec",
            Op::BatchOuter(..) => "batch_outer",
            Op::RowJacobian(..) => "row_jacobian",
        }
    }
}

struct Node {
    op: Op,
    value: Matrix,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Matrix {
        match &self.adjoints[v.0] {
            Some(m) => m.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

fn col_sums(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, m.cols());
    for r in 0..m.rows() {
        for (o, v) in out.data_mut().iter_mut().zip(m.row(r)) {
            *o += v;
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Parameters and constants alike; gradients are available for every leaf.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m[(0, 0)]
    }

    pub fn matmul_bt(&mut self, a: Var, w: Var) -> Var {
        let v = self.value(a).matmul_bt(self.value(w));
        self.push(Op::MatMulBt(a, w), v)
    }

    pub fn matmul(&mut self, a: Var, w: Var) -> Var {
        let v = self.value(a).matmul(self.value(w));
        self.push(Op::MatMul(a, w), v)
    }

    pub fn add_row(&mut self, a: Var, r: Var) -> Var {
        let row = self.value(r).clone();
        let mut v = self.value(a).clone();
        assert_eq!(row.shape(), (1, v.cols()), "add_row shape");
        for i in 0..v.rows() {
            for (x, b) in v.row_mut(i).iter_mut().zip(row.data()) {
                *x += b;
            }
        }
        self.push(Op::AddRow(a, r), v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).add(self.value(b));
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).sub(self.value(b));
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_with(self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), v)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_with(self.value(b), |x, y| x / y);
        self.push(Op::Div(a, b), v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).scale(c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(Op::AddScalar(a), v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    /// `1 − a²`, the tanh derivative written in terms of the tanh output.
    pub fn one_minus_sq(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 - x * x);
        self.push(Op::OneMinusSq(a), v)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(Op::Square(a), v)
    }

    /// Square root; the derivative at 0 is taken as 0.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0).sqrt());
        self.push(Op::Sqrt(a), v)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::abs);
        self.push(Op::Abs(a), v)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), v)
    }

    /// Elementwise product with a constant matrix (masks, fixed weights).
    pub fn mul_const(&mut self, a: Var, m: Matrix) -> Var {
        let v = self.value(a).zip_with(&m, |x, y| x * y);
        self.push(Op::MulConst(a, m), v)
    }

    /// Per-row sums, `rows × 1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let sums: Vec<f64> = (0..m.rows()).map(|r| m.row(r).iter().sum()).collect();
        self.push(Op::RowSum(a), Matrix::column_vector(&sums))
    }

    /// Mean of all entries, `1 × 1`. An empty node has mean 0.
    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let n = m.data().len();
        let v = if n == 0 { 0.0 } else { pairwise_sum(m.data()) / n as f64 };
        self.push(Op::Mean(a), Matrix::filled(1, 1, v))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = pairwise_sum(self.value(a).data());
        self.push(Op::Sum(a), Matrix::filled(1, 1, v))
    }

    /// Scales row `b` of `a` by `s[b, 0]`.
    pub fn mul_col(&mut self, a: Var, s: Var) -> Var {
        let sv = self.value(s).clone();
        let mut v = self.value(a).clone();
        assert_eq!(sv.shape(), (v.rows(), 1), "mul_col shape");
        for r in 0..v.rows() {
            let k = sv[(r, 0)];
            v.row_mut(r).iter_mut().for_each(|x| *x *= k);
        }
        self.push(Op::MulCol(a, s), v)
    }

    pub fn cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).col_block(start, len);
        self.push(Op::Cols(a, start), v)
    }

    pub fn rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let v = self.value(a).select_rows(idx);
        self.push(Op::Rows(a, idx.to_vec()), v)
    }

    /// Row `b` of `w` holds an `r × c` matrix `W_b` (row-major); returns rows `W_b v_b`.
    pub fn batch_matvec(&mut self, w: Var, v: Var) -> Var {
        let (wm, vm) = (self.value(w), self.value(v));
        let c = vm.cols();
        let r = wm.cols() / c;
        assert_eq!(r * c, wm.cols(), "batch_matvec shape");
        let mut out = Matrix::zeros(wm.rows(), r);
        for b in 0..wm.rows() {
            let (wr, vr) = (wm.row(b), vm.row(b));
            for i in 0..r {
                out[(b, i)] = crate::numerics::dot(&wr[i * c..(i + 1) * c], vr);
            }
        }
        self.push(Op::BatchMatVec(w, v), out)
    }

    /// Row `b` of `w` holds `W_b` (`r × c`); returns rows `W_bᵀ v_b`.
    pub fn batch_mattvec(&mut self, w: Var, v: Var) -> Var {
        let (wm, vm) = (self.value(w), self.value(v));
        let r = vm.cols();
        let c = wm.cols() / r;
        assert_eq!(r * c, wm.cols(), "batch_mattvec shape");
        let mut out = Matrix::zeros(wm.rows(), c);
        for b in 0..wm.rows() {
            let (wr, vr) = (wm.row(b), vm.row(b));
            let orow = out.row_mut(b);
            for i in 0..r {
                for j in 0..c {
                    orow[j] += wr[i * c + j] * vr[i];
                }
            }
        }
        self.push(Op::BatchMatTVec(w, v), out)
    }

    /// Row-wise outer products flattened row-major: `out[b, i·c + j] = a[b, i] v[b, j]`.
    pub fn batch_outer(&mut self, a: Var, v: Var) -> Var {
        let (am, vm) = (self.value(a), self.value(v));
        let (r, c) = (am.cols(), vm.cols());
        let mut out = Matrix::zeros(am.rows(), r * c);
        for b in 0..am.rows() {
            for i in 0..r {
                for j in 0..c {
                    out[(b, i * c + j)] = am[(b, i)] * vm[(b, j)];
                }
            }
        }
        self.push(Op::BatchOuter(a, v), out)
    }

    /// Node whose value was computed outside the tape, with per-row Jacobians
    /// with respect to `a` supplied by the caller.
    pub fn external(&mut self, a: Var, value: Matrix, jacobians: Vec<f64>) -> Var {
        let k = self.value(a).cols();
        assert_eq!(jacobians.len(), value.rows() * value.cols() * k, "external jacobian size");
        self.push(Op::RowJacobian(a, jacobians), value)
    }

    /// Reverse sweep from the `1 × 1` node `out`.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        assert_eq!(self.value(out).shape(), (1, 1), "backward needs a scalar output");
        let mut adj: Vec<Option<Matrix>> = vec![None; out.0 + 1];
        adj[out.0] = Some(Matrix::filled(1, 1, 1.0));
        for idx in (0..=out.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.value.is_finite() || !g.is_finite() {
                return Err(Error::GradientOverflow { node: idx, op: node.op.name() });
            }
            let mut acc = |v: Var, d: Matrix| match &mut adj[v.0] {
                Some(m) => m.add_assign(&d),
                slot @ None => *slot = Some(d),
            };
            let val = |v: Var| &self.nodes[v.0].value;
            match &node.op {
                Op::Leaf => {
                    adj[idx] = Some(g);
                    continue;
                }
                Op::MatMulBt(a, w) => {
                    acc(*a, g.matmul(val(*w)));
                    acc(*w, g.matmul_at(val(*a)));
                }
                Op::MatMul(a, w) => {
                    acc(*a, g.matmul_bt(val(*w)));
                    acc(*w, val(*a).matmul_at(&g));
                }
                Op::AddRow(a, r) => {
                    acc(*r, col_sums(&g));
                    acc(*a, g);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.scale(-1.0));
                }
                Op::Mul(a, b) => {
                    acc(*a, g.zip_with(val(*b), |x, y| x * y));
                    acc(*b, g.zip_with(val(*a), |x, y| x * y));
                }
                Op::Div(a, b) => {
                    let bv = val(*b);
                    acc(*a, g.zip_with(bv, |x, y| x / y));
                    let t = g.zip_with(&node.value, |x, q| x * q).zip_with(bv, |x, y| -x / y);
                    acc(*b, t);
                }
                Op::Scale(a, c) => acc(*a, g.scale(*c)),
                Op::AddScalar(a) => acc(*a, g),
                Op::Tanh(a) => acc(*a, g.zip_with(&node.value, |x, y| x * (1.0 - y * y))),
                Op::OneMinusSq(a) => acc(*a, g.zip_with(val(*a), |x, y| -2.0 * x * y)),
                Op::Square(a) => acc(*a, g.zip_with(val(*a), |x, y| 2.0 * x * y)),
                Op::Sqrt(a) => acc(*a, g.zip_with(&node.value, |x, y| if y > 0.0 { 0.5 * x / y } else { 0.0 })),
                Op::Abs(a) => acc(
                    *a,
                    g.zip_with(val(*a), |x, y| {
                        if y > 0.0 {
                            x
                        } else if y < 0.0 {
                            -x
                        } else {
                            0.0
                        }
                    }),
                ),
                Op::Relu(a) => acc(*a, g.zip_with(val(*a), |x, y| if y > 0.0 { x } else { 0.0 })),
                Op::Clamp(a, lo, hi) => acc(*a, g.zip_with(val(*a), |x, y| if y > *lo && y < *hi { x } else { 0.0 })),
                Op::MulConst(a, m) => acc(*a, g.zip_with(m, |x, y| x * y)),
                Op::RowSum(a) => {
                    let av = val(*a);
                    let mut d = Matrix::zeros(av.rows(), av.cols());
                    for r in 0..av.rows() {
                        let k = g[(r, 0)];
                        d.row_mut(r).iter_mut().for_each(|x| *x = k);
                    }
                    acc(*a, d);
                }
                Op::Mean(a) => {
                    let av = val(*a);
                    let n = av.data().len().max(1) as f64;
                    acc(*a, Matrix::filled(av.rows(), av.cols(), g[(0, 0)] / n));
                }
                Op::Sum(a) => {
                    let av = val(*a);
                    acc(*a, Matrix::filled(av.rows(), av.cols(), g[(0, 0)]));
                }
                Op::MulCol(a, s) => {
                    let (av, sv) = (val(*a), val(*s));
                    let mut da = g.clone();
                    let mut ds = Matrix::zeros(sv.rows(), 1);
                    for r in 0..av.rows() {
                        let k = sv[(r, 0)];
                        ds[(r, 0)] = crate::numerics::dot(g.row(r), av.row(r));
                        da.row_mut(r).iter_mut().for_each(|x| *x *= k);
                    }
                    acc(*a, da);
                    acc(*s, ds);
                }
                Op::Cols(a, start) => {
                    let av = val(*a);
                    let mut d = Matrix::zeros(av.rows(), av.cols());
                    for r in 0..av.rows() {
                        d.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    acc(*a, d);
                }
                Op::Rows(a, rows) => {
                    let av = val(*a);
                    let mut d = Matrix::zeros(av.rows(), av.cols());
                    for (i, &r) in rows.iter().enumerate() {
                        for (x, y) in d.row_mut(r).iter_mut().zip(g.row(i)) {
                            *x += y;
                        }
                    }
                    acc(*a, d);
                }
                Op::BatchMatVec(w, v) => {
                    let (wm, vm) = (val(*w), val(*v));
                    let (r, c) = (g.cols(), vm.cols());
                    let mut dw = Matrix::zeros(wm.rows(), wm.cols());
                    let mut dv = Matrix::zeros(vm.rows(), c);
                    for b in 0..wm.rows() {
                        for i in 0..r {
                            let gi = g[(b, i)];
                            for j in 0..c {
                                dw[(b, i * c + j)] = gi * vm[(b, j)];
                                dv[(b, j)] += gi * wm[(b, i * c + j)];
                            }
                        }
                    }
                    acc(*w, dw);
                    acc(*v, dv);
                }
                Op::BatchMatTVec(w, v) => {
                    let (wm, vm) = (val(*w), val(*v));
                    let (r, c) = (vm.cols(), g.cols());
                    let mut dw = Matrix::zeros(wm.rows(), wm.cols());
                    let mut dv = Matrix::zeros(vm.rows(), r);
                    for b in 0..wm.rows() {
                        for i in 0..r {
                            let vi = vm[(b, i)];
                            let mut s = 0.0;
                            for j in 0..c {
                                dw[(b, i * c + j)] = g[(b, j)] * vi;
                                s += g[(b, j)] * wm[(b, i * c + j)];
                            }
                            dv[(b, i)] = s;
                        }
                    }
                    acc(*w, dw);
                    acc(*v, dv);
                }
                Op::BatchOuter(a, v) => {
                    let (am, vm) = (val(*a), val(*v));
                    let (r, c) = (am.cols(), vm.cols());
                    let mut da = Matrix::zeros(am.rows(), r);
                    let mut dv = Matrix::zeros(vm.rows(), c);
                    for b in 0..am.rows() {
                        for i in 0..r {
                            for j in 0..c {
                                let gij = g[(b, i * c + j)];
                                da[(b, i)] += gij * vm[(b, j)];
                                dv[(b, j)] += gij * am[(b, i)];
                            }
                        }
                    }
                    acc(*a, da);
                    acc(*v, dv);
                }
                Op::RowJacobian(a, jac) => {
                    let av = val(*a);
                    let (o, k) = (g.cols(), av.cols());
                    let mut d = Matrix::zeros(av.rows(), k);
                    for b in 0..av.rows() {
                        let jb = &jac[b * o * k..(b + 1) * o * k];
                        for i in 0..o {
                            let gi = g[(b, i)];
                            for j in 0..k {
                                d[(b, j)] += gi * jb[i * k + j];
                            }
                        }
                    }
                    acc(*a, d);
                }
            }
        }
        Ok(Gradients { adjoints: adj, shapes: self.nodes.iter().map(|n| n.value.shape()).collect() })
    }
}

/// Fixed-order pairwise summation, independent of how samples are batched
/// for a given length.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// An MLP whose parameters are tape leaves.
pub struct TapedMlp {
    pub spec: MlpSpec,
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
}

/// Activations recorded by [`TapedMlp::forward`]; `acts[0]` is the input.
pub struct TapedActs {
    pub acts: Vec<Var>,
}

impl TapedActs {
    pub fn output(&self) -> Var {
        *self.acts.last().unwrap()
    }
}

impl TapedMlp {
    pub fn new(tape: &mut Tape, spec: &MlpSpec, params: &[f64]) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for slot in spec.layers() {
            let w = params[slot.weight_offset..slot.bias_offset].to_vec();
            let b = params[slot.bias_offset..slot.bias_offset + slot.rows].to_vec();
            weights.push(tape.leaf(Matrix::from_vec(slot.rows, slot.cols, w).unwrap()));
            biases.push(tape.leaf(Matrix::from_vec(1, slot.rows, b).unwrap()));
        }
        TapedMlp { spec: spec.clone(), weights, biases }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> TapedActs {
        let mut acts = vec![x];
        for (i, slot) in self.spec.layers().iter().enumerate() {
            let h = tape.matmul_bt(*acts.last().unwrap(), self.weights[i]);
            let h = tape.add_row(h, self.biases[i]);
            acts.push(if slot.activated { tape.tanh(h) } else { h });
        }
        TapedActs { acts }
    }

    /// Rows of `upstream · ∂out/∂x`, recorded on the tape.
    pub fn input_vjp(&self, tape: &mut Tape, acts: &TapedActs, upstream: Var) -> Var {
        let mut g = upstream;
        for (i, slot) in self.spec.layers().iter().enumerate().rev() {
            if slot.activated {
                let d = tape.one_minus_sq(acts.acts[i + 1]);
                g = tape.mul(g, d);
            }
            g = tape.matmul(g, self.weights[i]);
        }
        g
    }

    /// Parameter gradient in the flat layout of [`MlpSpec::layers`].
    pub fn gather(&self, grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spec.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(grads.get(*w).data());
            out.extend_from_slice(grads.get(*b).data());
        }
        out
    }
}
