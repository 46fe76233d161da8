//! Reverse-mode differentiation over small dense matrices.
//!
//! A [`Tape`] records one forward evaluation. Trainable parameters enter as
//! [`Tape::param`] nodes carrying their index in an external parameter list;
//! [`Tape::backward`] seeds any number of scalar nodes with weights and
//! accumulates the parameter gradients into caller-owned buffers. Problem
//! quantities (Lagrangian, its gradient norm, the constraint norm) are
//! single nodes whose backward passes use the problem's derivative oracle.

use alloc::vec::Vec;

use crate::linalg::{dot, norm2, Matrix};
use crate::problem::ConstrainedProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", content = "slope", rename_all = "snake_case")
)]
pub enum Activation {
    #[default]
    Identity,
    Tanh,
    Relu,
    /// Negative-side slope in thousandths, kept integral so the enum is `Eq`.
    LeakyRelu(u32),
    Sigmoid,
}

impl Activation {
    pub fn leaky(slope: f64) -> Self {
        Activation::LeakyRelu(libm::round(slope * 1000.0) as u32)
    }

    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Tanh => libm::tanh(v),
            Activation::Relu => v.max(0.0),
            Activation::LeakyRelu(s) => {
                if v > 0.0 {
                    v
                } else {
                    v * s as f64 / 1000.0
                }
            }
            Activation::Sigmoid => sigmoid(v),
        }
    }

    /// Derivative from the pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    1.0
                } else {
                    s as f64 / 1000.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::LeakyRelu(_) => "leaky_relu",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + libm::exp(-v))
    } else {
        let e = libm::exp(v);
        e / (1.0 + e)
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<'a> {
    Const,
    Param(usize),
    MatMul(Var, Var),
    /// `S·X` with a constant shift operator.
    Shift(&'a Matrix, Var),
    Add(Var, Var),
    /// `X + c` with constant `c`; only the input carries gradient.
    Offset(Var),
    /// `X + c·1` with a 1×1 node `c`.
    AddScalar(Var, Var),
    Scale(Var, f64),
    /// Elementwise product with a constant.
    Mask(Var, Vec<f64>),
    Act(Var, Activation),
    HConcat(Vec<Var>),
    VConcat(Vec<Var>),
    SliceRows(Var, usize),
    MeanSquare(Var),
    Lagrangian {
        x: Var,
        lambda: Var,
        grad: Vec<f64>,
        f: Vec<f64>,
    },
    GradNorm {
        x: Var,
        lambda: Var,
        problem: &'a dyn ConstrainedProblem,
        g: Vec<f64>,
    },
    ConstraintNorm {
        x: Var,
        problem: &'a dyn ConstrainedProblem,
        f: Vec<f64>,
    },
}

struct Node<'a> {
    value: Matrix,
    op: Op<'a>,
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op<'a>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_slice()[0]
    }

    /// Column values of an `n×1` node.
    pub fn column(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.as_slice()
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Const)
    }

    pub fn constant_column(&mut self, values: &[f64]) -> Var {
        self.push(Matrix::column(values), Op::Const)
    }

    pub fn param(&mut self, index: usize, value: Matrix) -> Var {
        self.push(value, Op::Param(index))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn shift(&mut self, s: &'a Matrix, x: Var) -> Var {
        let v = s.matmul(self.value(x));
        self.push(v, Op::Shift(s, x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    pub fn offset(&mut self, x: Var, c: &Matrix) -> Var {
        let mut v = self.value(x).clone();
        v.add_assign(c);
        self.push(v, Op::Offset(x))
    }

    pub fn add_scalar(&mut self, x: Var, c: Var) -> Var {
        let s = self.scalar(c);
        let mut v = self.value(x).clone();
        v.as_mut_slice().iter_mut().for_each(|e| *e += s);
        self.push(v, Op::AddScalar(x, c))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let v = self.value(x).scale(s);
        self.push(v, Op::Scale(x, s))
    }

    pub fn mask(&mut self, x: Var, m: Vec<f64>) -> Var {
        let mut v = self.value(x).clone();
        assert_eq!(v.as_slice().len(), m.len(), "mask length");
        v.as_mut_slice()
            .iter_mut()
            .zip(&m)
            .for_each(|(e, m)| *e *= m);
        self.push(v, Op::Mask(x, m))
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Var {
        if act == Activation::Identity {
            return x;
        }
        let mut v = self.value(x).clone();
        v.as_mut_slice().iter_mut().for_each(|e| *e = act.apply(*e));
        self.push(v, Op::Act(x, act))
    }

    pub fn hconcat(&mut self, parts: &[Var]) -> Var {
        let mats: Vec<&Matrix> = parts.iter().map(|p| self.value(*p)).collect();
        let v = Matrix::hstack(&mats);
        self.push(v, Op::HConcat(parts.to_vec()))
    }

    pub fn vconcat(&mut self, parts: &[Var]) -> Var {
        let mats: Vec<&Matrix> = parts.iter().map(|p| self.value(*p)).collect();
        let v = Matrix::vstack(&mats);
        self.push(v, Op::VConcat(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self.value(x).slice_rows(start, len);
        self.push(v, Op::SliceRows(x, start))
    }

    /// Mean of the squared entries, as a 1×1 node.
    pub fn mean_square(&mut self, x: Var) -> Var {
        let v = self.value(x).as_slice();
        let value = dot(v, v) / v.len() as f64;
        self.push(Matrix::filled(1, 1, value), Op::MeanSquare(x))
    }

    /// `L(x, λ)` for column nodes `x`, `λ`.
    pub fn lagrangian(&mut self, problem: &'a dyn ConstrainedProblem, x: Var, lambda: Var) -> Var {
        let xv = self.column(x);
        let lv = self.column(lambda);
        let f = problem.constraints_raw(xv);
        let value = problem.objective_raw(xv) + dot(lv, &f);
        let grad = problem.lagrangian_grad_raw(xv, lv);
        self.push(
            Matrix::filled(1, 1, value),
            Op::Lagrangian { x, lambda, grad, f },
        )
    }

    /// `‖∇ₓL(x, λ)‖₂`.
    pub fn grad_norm(&mut self, problem: &'a dyn ConstrainedProblem, x: Var, lambda: Var) -> Var {
        let g = problem.lagrangian_grad_raw(self.column(x), self.column(lambda));
        let value = norm2(&g);
        self.push(
            Matrix::filled(1, 1, value),
            Op::GradNorm {
                x,
                lambda,
                problem,
                g,
            },
        )
    }

    /// `‖f(x)‖₂`.
    pub fn constraint_norm(&mut self, problem: &'a dyn ConstrainedProblem, x: Var) -> Var {
        let f = problem.constraints_raw(self.column(x));
        let value = norm2(&f);
        self.push(
            Matrix::filled(1, 1, value),
            Op::ConstraintNorm { x, problem, f },
        )
    }

    /// Back-propagate `Σ w·seed` and add `∂/∂θ_i` into `grads[i]` for every
    /// parameter node.
    pub fn backward(&self, seeds: &[(Var, f64)], grads: &mut [Matrix]) {
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        let Some(last) = seeds.iter().map(|(v, _)| v.0).max() else {
            return;
        };
        for &(v, w) in seeds {
            let shape = self.nodes[v.0].value.shape();
            accumulate(&mut adj, v, Matrix::filled(shape.0, shape.1, w));
        }
        for idx in (0..=last).rev() {
            let Some(g) = adj[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Const => {}
                Op::Param(i) => grads[*i].add_assign(&g),
                Op::MatMul(a, b) => {
                    let da = g.matmul_nt(self.value(*b));
                    let db = self.value(*a).matmul_tn(&g);
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Shift(s, x) => accumulate(&mut adj, *x, s.matmul_tn(&g)),
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::Offset(x) => accumulate(&mut adj, *x, g),
                Op::AddScalar(x, c) => {
                    let s: f64 = g.as_slice().iter().sum();
                    accumulate(&mut adj, *c, Matrix::filled(1, 1, s));
                    accumulate(&mut adj, *x, g);
                }
                Op::Scale(x, s) => accumulate(&mut adj, *x, g.scale(*s)),
                Op::Mask(x, m) => {
                    let mut d = g;
                    d.as_mut_slice()
                        .iter_mut()
                        .zip(m)
                        .for_each(|(e, m)| *e *= m);
                    accumulate(&mut adj, *x, d);
                }
                Op::Act(x, act) => {
                    let mut d = g;
                    let xin = self.value(*x).as_slice();
                    let y = node.value.as_slice();
                    for (k, e) in d.as_mut_slice().iter_mut().enumerate() {
                        *e *= act.derivative(xin[k], y[k]);
                    }
                    accumulate(&mut adj, *x, d);
                }
                Op::HConcat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let (r, c) = self.value(*p).shape();
                        let d = Matrix::from_fn(r, c, |i, j| g[(i, offset + j)]);
                        offset += c;
                        accumulate(&mut adj, *p, d);
                    }
                }
                Op::VConcat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let r = self.value(*p).rows();
                        accumulate(&mut adj, *p, g.slice_rows(offset, r));
                        offset += r;
                    }
                }
                Op::SliceRows(x, start) => {
                    let (r, c) = self.value(*x).shape();
                    let mut d = Matrix::zeros(r, c);
                    for i in 0..g.rows() {
                        d.row_mut(start + i).copy_from_slice(g.row(i));
                    }
                    accumulate(&mut adj, *x, d);
                }
                Op::MeanSquare(x) => {
                    let xv = self.value(*x);
                    let w = 2.0 * g.as_slice()[0] / xv.as_slice().len() as f64;
                    accumulate(&mut adj, *x, xv.scale(w));
                }
                Op::Lagrangian {
                    x, lambda, grad, f, ..
                } => {
                    let w = g.as_slice()[0];
                    accumulate(&mut adj, *x, Matrix::column(&scaled(grad, w)));
                    accumulate(&mut adj, *lambda, Matrix::column(&scaled(f, w)));
                }
                Op::GradNorm {
                    x,
                    lambda,
                    problem,
                    g: grad,
                } => {
                    let w = g.as_slice()[0];
                    let nrm = node.value.as_slice()[0];
                    if nrm > 0.0 {
                        let unit = scaled(grad, 1.0 / nrm);
                        let xv = self.column(*x);
                        let hv = problem.lagrangian_hvp_raw(xv, self.column(*lambda), &unit);
                        let jv = problem.constraint_jvp_raw(xv, &unit);
                        accumulate(&mut adj, *x, Matrix::column(&scaled(&hv, w)));
                        accumulate(&mut adj, *lambda, Matrix::column(&scaled(&jv, w)));
                    }
                }
                Op::ConstraintNorm { x, problem, f } => {
                    let w = g.as_slice()[0];
                    let nrm = node.value.as_slice()[0];
                    if nrm > 0.0 {
                        let unit = scaled(f, w / nrm);
                        let d = problem.constraint_vjp_raw(self.column(*x), &unit);
                        accumulate(&mut adj, *x, Matrix::column(&d));
                    }
                }
            }
        }
    }
}

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|e| e * s).collect()
}

fn accumulate(adj: &mut [Option<Matrix>], v: Var, d: Matrix) {
    match &mut adj[v.0] {
        Some(a) => a.add_assign(&d),
        slot => *slot = Some(d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::miqp::{generate_instance, relax};

    fn fd_check<'a>(build: impl Fn(&mut Tape<'a>, &[Matrix]) -> Var, params: Vec<Matrix>) {
        let mut tape = Tape::new();
        let out = build(&mut tape, &params);
        let mut grads: Vec<Matrix> = params
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        tape.backward(&[(out, 1.0)], &mut grads);
        let h = 1e-6;
        for (pi, p) in params.iter().enumerate() {
            for k in 0..p.as_slice().len() {
                let eval = |delta: f64| {
                    let mut ps = params.clone();
                    ps[pi].as_mut_slice()[k] += delta;
                    let mut t = Tape::new();
                    let o = build(&mut t, &ps);
                    t.scalar(o)
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = grads[pi].as_slice()[k];
                assert!(
                    (fd - an).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "param {pi}[{k}]: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn elementary_ops_match_finite_differences() {
        let s = Matrix::from_fn(3, 3, |i, j| ((i + 2 * j) as f64 * 0.37).sin());
        let params = vec![
            Matrix::from_fn(3, 2, |i, j| 0.3 * i as f64 - 0.2 * j as f64 + 0.1),
            Matrix::from_fn(2, 2, |i, j| if i == j { 0.8 } else { -0.4 }),
            Matrix::filled(1, 1, 0.05),
            Matrix::from_fn(2, 1, |i, _| 0.5 - i as f64),
        ];
        let s = &s;
        let build = builder(move |t, p| {
            let x = t.param(0, p[0].clone());
            let th = t.param(1, p[1].clone());
            let c = t.param(2, p[2].clone());
            let w = t.param(3, p[3].clone());
            let sx = t.shift(s, x);
            let cat = t.hconcat(&[x, sx]);
            let y = t.matmul(sx, th);
            let y = t.add_scalar(y, c);
            let y = t.activation(y, Activation::Tanh);
            let z = t.activation(y, Activation::Sigmoid);
            let z = t.add(z, x);
            let z = t.activation(z, Activation::leaky(0.01));
            let v = t.vconcat(&[z, x]);
            let v = t.mask(v, (0..12).map(|k| 1.0 + 0.1 * k as f64).collect());
            let v = t.scale(v, 0.7);
            let v = t.slice_rows(v, 1, 4);
            let u = t.matmul(v, w);
            let u = t.activation(u, Activation::Relu);
            let wide = t.slice_rows(cat, 0, 4 - 1);
            let ones = t_ones(t, 4, 1);
            let wide = t.matmul(wide, ones);
            let ones = t_ones(t, 1, 4);
            let a = t.matmul(ones, u);
            let ones = t_ones(t, 1, 3);
            let b = t.matmul(ones, wide);
            t.add(a, b)
        });
        fd_check(build, params);
    }

    fn builder<'a, F: Fn(&mut Tape<'a>, &[Matrix]) -> Var>(f: F) -> F {
        f
    }

    fn t_ones(t: &mut Tape, r: usize, c: usize) -> Var {
        t.constant(Matrix::filled(r, c, 1.0))
    }

    #[test]
    fn problem_nodes_match_finite_differences() {
        let qp = relax(&generate_instance(4, 2, 1, 3).unwrap()).unwrap();
        let rows = qp.rows();
        let params = vec![
            Matrix::from_fn(4, 1, |i, _| 0.3 - 0.2 * i as f64),
            Matrix::from_fn(rows, 1, |i, _| 0.2 + 0.1 * i as f64),
        ];
        let qp = &qp;
        let build = builder(move |t, p| {
            let x = t.param(0, p[0].clone());
            let l = t.param(1, p[1].clone());
            let a = t.lagrangian(qp, x, l);
            let b = t.grad_norm(qp, x, l);
            let c = t.constraint_norm(qp, x);
            let d = t.mean_square(l);
            let s = t.vconcat(&[a, b, c, d]);
            let w = t.constant(Matrix::from_vec(1, 4, vec![0.7, -1.3, 2.1, 0.4]).unwrap());
            t.matmul(w, s)
        });
        fd_check(build, params);
    }

    #[test]
    fn weighted_seeds_are_linear() {
        let mut t = Tape::new();
        let x = t.param(0, Matrix::filled(2, 1, 1.5));
        let a = t.scale(x, 2.0);
        let ones = t.constant(Matrix::filled(1, 2, 1.0));
        let s1 = t.matmul(ones, a);
        let s2 = t.matmul(ones, x);
        let mut g = vec![Matrix::zeros(2, 1)];
        t.backward(&[(s1, 0.5), (s2, -3.0)], &mut g);
        assert_eq!(g[0].as_slice(), &[-2.0, -2.0]);
    }
}
