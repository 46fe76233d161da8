//! Mixed-integer QPs, their box relaxation, and a convex-QP reference oracle.
//!
//! A [`MiqpInstance`] is `min ½xᵀPx + qᵀx s.t. Āx ≤ b̄, x_i ∈ {−1, 1} for i ∈ I`.
//! [`relax`] replaces the binary set by `−1 ≤ x_i ≤ 1`, giving a
//! [`RelaxedQp`] with `A = [Ā; M; −M]` and `b = [b̄; 1; 1]`.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{dot, norm2, spd_eigen_extremes, spectral_norm, Cholesky, LinalgError, Matrix};
use crate::problem::{check_len, Axis, ConstrainedProblem, Multipliers, PrimalPoint, ProblemError};
use crate::rng;

/// Largest condition number of `P` the analytic minimizer accepts.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MiqpError {
    #[error("invalid parameters: {0}")]
    Parameters(&'static str),
    #[error("P is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("binary index set is invalid: {0}")]
    BinarySet(&'static str),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("P is numerically singular (condition number {0:e})")]
    IllConditioned(f64),
    #[error("QP oracle did not converge after {iterations} iterations: {residuals:?}")]
    NotConverged {
        iterations: usize,
        residuals: KktResiduals,
    },
}

/// `min ½xᵀPx + qᵀx s.t. Āx ≤ b̄, x_i ∈ {−1,1} ∀ i ∈ I`.
#[derive(Debug, Clone, PartialEq)]
pub struct MiqpInstance {
    p: Matrix,
    q: Vec<f64>,
    a_bar: Matrix,
    b_bar: Vec<f64>,
    binary: Vec<usize>,
}

impl MiqpInstance {
    pub fn new(
        p: Matrix,
        q: Vec<f64>,
        a_bar: Matrix,
        b_bar: Vec<f64>,
        binary: Vec<usize>,
    ) -> Result<Self, MiqpError> {
        let n = q.len();
        if n == 0 {
            return Err(MiqpError::Parameters("n must be at least 1"));
        }
        check_square(&p, n)?;
        if a_bar.cols() != n && a_bar.rows() > 0 {
            return Err(ProblemError::Dimension {
                axis: Axis::Primal,
                expected: n,
                found: a_bar.cols(),
            }
            .into());
        }
        check_len(Axis::Multiplier, a_bar.rows(), b_bar.len())?;
        validate_binary(&binary, n)?;
        Cholesky::new(&p)?;
        Ok(Self {
            p,
            q,
            a_bar,
            b_bar,
            binary,
        })
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.b_bar.len()
    }

    pub fn r(&self) -> usize {
        self.binary.len()
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn a_bar(&self) -> &Matrix {
        &self.a_bar
    }

    pub fn b_bar(&self) -> &[f64] {
        &self.b_bar
    }

    pub fn binary(&self) -> &[usize] {
        &self.binary
    }
}

fn check_square(p: &Matrix, n: usize) -> Result<(), MiqpError> {
    if p.shape() != (n, n) {
        return Err(LinalgError::Shape {
            expected: (n, n),
            found: p.shape(),
        }
        .into());
    }
    let asym = p.asymmetry();
    if asym > 1e-10 {
        return Err(MiqpError::NotSymmetric(asym));
    }
    Ok(())
}

fn validate_binary(binary: &[usize], n: usize) -> Result<(), MiqpError> {
    if binary.len() > n {
        return Err(MiqpError::BinarySet("more binary variables than variables"));
    }
    if binary.iter().any(|&i| i >= n) {
        return Err(MiqpError::BinarySet("index out of range"));
    }
    let mut sorted = binary.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(MiqpError::BinarySet("duplicate index"));
    }
    Ok(())
}

/// Draw one instance of the `(n, m, r)` family.
///
/// `P = GᵀG/n + 0.1·I` with standard-normal `G`; `Ā` and `q` are standard
/// normal, `Ā` is divided by its spectral norm, and `b̄ = Āx₀ + ε` with
/// `x₀` a clipped standard-normal point and `ε ~ Unif[0,1]^m`, so `x₀` is
/// strictly feasible for the linear rows and lies in the box.
pub fn generate_instance(
    n: usize,
    m: usize,
    r: usize,
    seed: u64,
) -> Result<MiqpInstance, MiqpError> {
    if n == 0 {
        return Err(MiqpError::Parameters("n must be at least 1"));
    }
    if r > n {
        return Err(MiqpError::Parameters("r must not exceed n"));
    }
    let mut rng = rng::stream(seed, "miqp-instance", 0);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    let g = Matrix::from_fn(n, n, |_, _| normal());
    let mut p = g.matmul_tn(&g).scale(1.0 / n as f64);
    // Exact symmetry regardless of summation order.
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
        p[(i, i)] += 0.1;
    }
    let q: Vec<f64> = (0..n).map(|_| normal()).collect();
    let mut a_bar = Matrix::from_fn(m, n, |_, _| normal());
    let sigma = spectral_norm(&a_bar);
    if sigma > 0.0 {
        a_bar = a_bar.scale(1.0 / sigma);
    }
    let x0: Vec<f64> = (0..n).map(|_| normal().clamp(-1.0, 1.0)).collect();
    let ax0 = if m > 0 { a_bar.matvec(&x0) } else { Vec::new() };
    let b_bar: Vec<f64> = ax0.iter().map(|v| v + rng.random::<f64>()).collect();
    let mut binary = index::sample(&mut rng, n, r).into_vec();
    binary.sort_unstable();
    MiqpInstance::new(p, q, a_bar, b_bar, binary)
}

/// Convex relaxation `min ½xᵀPx + qᵀx s.t. Ax ≤ b`, with the factorization
/// of `P` cached for the analytic Lagrangian minimizer.
#[derive(Debug, Clone)]
pub struct RelaxedQp {
    p: Matrix,
    q: Vec<f64>,
    a: Matrix,
    b: Vec<f64>,
    m: usize,
    binary: Vec<usize>,
    chol: Cholesky,
    eig_min: f64,
    eig_max: f64,
}

impl PartialEq for RelaxedQp {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p
            && self.q == other.q
            && self.a == other.a
            && self.b == other.b
            && self.m == other.m
            && self.binary == other.binary
    }
}

impl RelaxedQp {
    /// Build from stacked data. `m` is the number of leading linear rows of
    /// `A`; it is informational (used for the GSO and dataset manifests).
    pub fn new(
        p: Matrix,
        q: Vec<f64>,
        a: Matrix,
        b: Vec<f64>,
        m: usize,
        binary: Vec<usize>,
    ) -> Result<Self, MiqpError> {
        let n = q.len();
        if n == 0 {
            return Err(MiqpError::Parameters("n must be at least 1"));
        }
        check_square(&p, n)?;
        if a.cols() != n {
            return Err(ProblemError::Dimension {
                axis: Axis::Primal,
                expected: n,
                found: a.cols(),
            }
            .into());
        }
        check_len(Axis::Multiplier, a.rows(), b.len())?;
        if m > a.rows() {
            return Err(MiqpError::Parameters("m exceeds the number of rows of A"));
        }
        if a.rows() == 0 {
            return Err(MiqpError::Parameters(
                "relaxed QP needs at least one constraint",
            ));
        }
        validate_binary(&binary, n)?;
        let chol = Cholesky::new(&p)?;
        let (eig_min, eig_max) = spd_eigen_extremes(&p, &chol);
        Ok(Self {
            p,
            q,
            a,
            b,
            m,
            binary,
            chol,
            eig_min,
            eig_max,
        })
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    /// Linear rows `m` of the original instance.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn r(&self) -> usize {
        self.binary.len()
    }

    /// Total constraint rows `m + 2r`.
    pub fn rows(&self) -> usize {
        self.b.len()
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn binary(&self) -> &[usize] {
        &self.binary
    }

    pub fn condition_number(&self) -> f64 {
        if self.eig_min > 0.0 {
            self.eig_max / self.eig_min
        } else {
            f64::INFINITY
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eig_min
    }

    /// `x*(λ) = −P⁻¹(q + Aᵀλ)` without checks.
    pub(crate) fn minimizer_raw(&self, lambda: &[f64]) -> Vec<f64> {
        let mut rhs = self.a.matvec_t(lambda);
        rhs.iter_mut()
            .zip(&self.q)
            .for_each(|(r, q)| *r = -(*r + q));
        self.chol.solve_in_place(&mut rhs);
        rhs
    }

    /// Dual function `g(λ) = L(x*(λ), λ)`.
    pub fn dual_function(&self, lambda: &[f64]) -> f64 {
        let x = self.minimizer_raw(lambda);
        self.lagrangian_raw(&x, lambda)
    }
}

impl ConstrainedProblem for RelaxedQp {
    fn n_vars(&self) -> usize {
        self.n()
    }

    fn n_cons(&self) -> usize {
        self.rows()
    }

    fn objective_raw(&self, x: &[f64]) -> f64 {
        let px = self.p.matvec(x);
        0.5 * dot(x, &px) + dot(&self.q, x)
    }

    fn constraints_raw(&self, x: &[f64]) -> Vec<f64> {
        let mut f = self.a.matvec(x);
        f.iter_mut().zip(&self.b).for_each(|(v, b)| *v -= b);
        f
    }

    fn objective_grad_raw(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.p.matvec(x);
        g.iter_mut().zip(&self.q).for_each(|(v, q)| *v += q);
        g
    }

    fn constraint_vjp_raw(&self, _x: &[f64], w: &[f64]) -> Vec<f64> {
        self.a.matvec_t(w)
    }

    fn constraint_jvp_raw(&self, _x: &[f64], v: &[f64]) -> Vec<f64> {
        self.a.matvec(v)
    }

    fn lagrangian_hvp_raw(&self, _x: &[f64], _lambda: &[f64], v: &[f64]) -> Vec<f64> {
        self.p.matvec(v)
    }
}

/// Box relaxation of the binary constraints.
pub fn relax(inst: &MiqpInstance) -> Result<RelaxedQp, MiqpError> {
    let n = inst.n();
    let r = inst.r();
    let mut sel = Matrix::zeros(r, n);
    for (row, &col) in inst.binary.iter().enumerate() {
        sel[(row, col)] = 1.0;
    }
    let neg = sel.scale(-1.0);
    let a = Matrix::vstack(&[&inst.a_bar, &sel, &neg]);
    let mut b = inst.b_bar.clone();
    b.extend(core::iter::repeat_n(1.0, 2 * r));
    RelaxedQp::new(
        inst.p.clone(),
        inst.q.clone(),
        a,
        b,
        inst.m(),
        inst.binary.clone(),
    )
}

/// Exact Lagrangian minimizer `x*(λ) = −P⁻¹(q + Aᵀλ)`.
pub fn analytic_minimizer(lambda: &Multipliers, qp: &RelaxedQp) -> Result<PrimalPoint, MiqpError> {
    check_len(Axis::Multiplier, qp.rows(), lambda.len())?;
    let cond = qp.condition_number();
    if !(cond <= MAX_CONDITION) {
        return Err(OracleError::IllConditioned(cond).into());
    }
    Ok(PrimalPoint::new(qp.minimizer_raw(lambda.as_slice()))?)
}

/// Graph shift operator `S = [[P, Aᵀ], [A, 0]]` with variable nodes first.
pub fn build_gso(qp: &RelaxedQp) -> Matrix {
    let n = qp.n();
    let rows = qp.rows();
    let mut s = Matrix::zeros(n + rows, n + rows);
    for i in 0..n {
        s.row_mut(i)[..n].copy_from_slice(qp.p.row(i));
    }
    for k in 0..rows {
        for j in 0..n {
            let v = qp.a[(k, j)];
            s[(n + k, j)] = v;
            s[(j, n + k)] = v;
        }
    }
    s
}

/// KKT residuals of a candidate primal-dual pair.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KktResiduals {
    /// `‖Px + q + Aᵀλ‖`.
    pub stationarity: f64,
    /// `max_i max{0, (Ax − b)_i}`.
    pub violation: f64,
    /// `λᵀ max{0, Ax − b}`.
    pub slackness: f64,
    /// `|λᵀ(Ax − b)|`, the duality gap at a stationary pair.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn evaluate(qp: &RelaxedQp, x: &[f64], lambda: &[f64]) -> Self {
        let g = qp.lagrangian_grad_raw(x, lambda);
        let f = qp.constraints_raw(x);
        let viol: Vec<f64> = f.iter().map(|v| v.max(0.0)).collect();
        Self {
            stationarity: norm2(&g),
            violation: viol.iter().fold(0.0, |m: f64, v| m.max(*v)),
            slackness: dot(lambda, &viol),
            complementarity: dot(lambda, &f).abs(),
        }
    }

    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.violation)
            .max(self.slackness)
            .max(self.complementarity)
    }
}

/// Optimal primal-dual pair of a relaxed QP.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub residuals: KktResiduals,
}

/// Algorithm behind [`reference_solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleBackend {
    /// Mehrotra predictor-corrector interior point.
    InteriorPoint { max_iter: usize },
    /// Accelerated projected gradient on the dual with the analytic minimizer.
    DualGradient { max_iter: usize },
}

impl Default for OracleBackend {
    fn default() -> Self {
        OracleBackend::InteriorPoint { max_iter: 200 }
    }
}

/// KKT tolerance every reference solution satisfies.
pub const ORACLE_TOL: f64 = 1e-6;

/// Solve the relaxed QP to KKT residuals below [`ORACLE_TOL`].
pub fn reference_solve(qp: &RelaxedQp) -> Result<QpSolution, OracleError> {
    reference_solve_with(qp, OracleBackend::default())
}

pub fn reference_solve_with(
    qp: &RelaxedQp,
    backend: OracleBackend,
) -> Result<QpSolution, OracleError> {
    let cond = qp.condition_number();
    if !(cond <= MAX_CONDITION) {
        return Err(OracleError::IllConditioned(cond));
    }
    let (x, lambda, iterations) = match backend {
        OracleBackend::InteriorPoint { max_iter } => interior_point(qp, max_iter),
        OracleBackend::DualGradient { max_iter } => dual_gradient(qp, max_iter),
    };
    let residuals = KktResiduals::evaluate(qp, &x, &lambda);
    if residuals.max() > ORACLE_TOL {
        return Err(OracleError::NotConverged {
            iterations,
            residuals,
        });
    }
    let value = qp.objective_raw(&x);
    Ok(QpSolution {
        x,
        lambda,
        value,
        iterations,
        residuals,
    })
}

fn interior_point(qp: &RelaxedQp, max_iter: usize) -> (Vec<f64>, Vec<f64>, usize) {
    let n = qp.n();
    let m = qp.rows();
    let a = &qp.a;
    let b = &qp.b;

    let mut x = qp.minimizer_raw(&vec![0.0; m]);
    let ax = a.matvec(&x);
    let mut s: Vec<f64> = ax.iter().zip(b).map(|(ax, b)| (b - ax).max(1.0)).collect();
    let mut lam = vec![1.0; m];
    let scale_d = 1.0 + norm2(&qp.q);
    let scale_p = 1.0 + norm2(b);

    let mut iter = 0;
    while iter < max_iter {
        iter += 1;
        // r_d = Px + q + Aᵀλ, r_p = Ax + s − b
        let r_d = qp.lagrangian_grad_raw(&x, &lam);
        let ax = a.matvec(&x);
        let r_p: Vec<f64> = (0..m).map(|i| ax[i] + s[i] - b[i]).collect();
        let mu = dot(&s, &lam) / m as f64;
        if norm2(&r_d) <= 1e-11 * scale_d && norm2(&r_p) <= 1e-11 * scale_p && mu <= 1e-13 {
            break;
        }
        let d: Vec<f64> = (0..m).map(|i| lam[i] / s[i]).collect();
        let mut h = qp.p.clone();
        for k in 0..m {
            let row = a.row(k);
            for i in 0..n {
                let w = d[k] * row[i];
                if w == 0.0 {
                    continue;
                }
                let hrow = h.row_mut(i);
                for j in 0..n {
                    hrow[j] += w * row[j];
                }
            }
        }
        let Ok(chol) = Cholesky::new(&h) else {
            break;
        };

        // Newton direction for a complementarity target `r_c`.
        let direction = |r_c: &[f64]| {
            // (P + AᵀDA) dx = −r_d − AᵀD(r_p − Λ⁻¹ r_c)
            let t: Vec<f64> = (0..m).map(|i| d[i] * (r_p[i] - r_c[i] / lam[i])).collect();
            let at = a.matvec_t(&t);
            let mut dx: Vec<f64> = (0..n).map(|i| -r_d[i] - at[i]).collect();
            chol.solve_in_place(&mut dx);
            let adx = a.matvec(&dx);
            let dlam: Vec<f64> = (0..m)
                .map(|i| d[i] * (adx[i] + r_p[i] - r_c[i] / lam[i]))
                .collect();
            let ds: Vec<f64> = (0..m)
                .map(|i| (-r_c[i] - s[i] * dlam[i]) / lam[i])
                .collect();
            (dx, dlam, ds)
        };
        let max_step = |v: &[f64], dv: &[f64]| {
            v.iter()
                .zip(dv)
                .filter(|(_, d)| **d < 0.0)
                .fold(1.0_f64, |a, (v, d)| a.min(-v / d))
        };

        let r_aff: Vec<f64> = (0..m).map(|i| s[i] * lam[i]).collect();
        let (dx_a, dl_a, ds_a) = direction(&r_aff);
        let alpha_p = max_step(&s, &ds_a);
        let alpha_d = max_step(&lam, &dl_a);
        let mu_aff = (0..m)
            .map(|i| (s[i] + alpha_p * ds_a[i]) * (lam[i] + alpha_d * dl_a[i]))
            .sum::<f64>()
            / m as f64;
        let ratio = mu_aff / mu;
        let sigma = (ratio * ratio * ratio).clamp(0.0, 1.0);
        let r_c: Vec<f64> = (0..m)
            .map(|i| s[i] * lam[i] + ds_a[i] * dl_a[i] - sigma * mu)
            .collect();
        let (dx, dl, ds) = direction(&r_c);
        let _ = dx_a;
        let alpha_p = (0.99 * max_step(&s, &ds)).min(1.0);
        let alpha_d = (0.99 * max_step(&lam, &dl)).min(1.0);
        for i in 0..n {
            x[i] += alpha_p * dx[i];
        }
        for i in 0..m {
            s[i] += alpha_p * ds[i];
            lam[i] += alpha_d * dl[i];
        }
    }
    lam.iter_mut().for_each(|l| *l = l.max(0.0));
    (x, lam, iter)
}

fn dual_gradient(qp: &RelaxedQp, max_iter: usize) -> (Vec<f64>, Vec<f64>, usize) {
    let m = qp.rows();
    // Lipschitz constant of ∇g: ‖A P⁻¹ Aᵀ‖ by power iteration.
    let mut v = vec![1.0 / libm::sqrt(m as f64); m];
    let mut lip = 0.0;
    for _ in 0..500 {
        let w = qp.a.matvec(&qp.chol.solve(&qp.a.matvec_t(&v)));
        let nw = norm2(&w);
        if nw == 0.0 {
            break;
        }
        let done = (nw - lip).abs() <= 1e-10 * nw;
        lip = nw;
        v = w.iter().map(|x| x / nw).collect();
        if done {
            break;
        }
    }
    let step = if lip > 0.0 { 1.0 / lip } else { 1.0 };
    let mut lam = vec![0.0; m];
    let mut y = lam.clone();
    let mut t = 1.0_f64;
    let mut prev_g = f64::NEG_INFINITY;
    for iter in 1..=max_iter {
        let x = qp.minimizer_raw(&y);
        let f = qp.constraints_raw(&x);
        let next: Vec<f64> = (0..m).map(|i| (y[i] + step * f[i]).max(0.0)).collect();
        let t_next = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * t * t));
        let g = qp.dual_function(&next);
        if g < prev_g {
            // adaptive restart
            t = 1.0;
            y = lam.clone();
            prev_g = f64::NEG_INFINITY;
            continue;
        }
        prev_g = g;
        let beta = (t - 1.0) / t_next;
        y = (0..m)
            .map(|i| next[i] + beta * (next[i] - lam[i]))
            .collect();
        lam = next;
        t = t_next;
        if iter % 10 == 0 {
            let x = qp.minimizer_raw(&lam);
            let r = KktResiduals::evaluate(qp, &x, &lam);
            if r.max() <= 0.1 * ORACLE_TOL {
                return (x, lam, iter);
            }
        }
    }
    (qp.minimizer_raw(&lam), lam, max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_qp(p: f64, q: f64, a: f64, b: f64) -> RelaxedQp {
        RelaxedQp::new(
            Matrix::from_vec(1, 1, vec![p]).unwrap(),
            vec![q],
            Matrix::from_vec(1, 1, vec![a]).unwrap(),
            vec![b],
            1,
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn generate_rejects_bad_parameters() {
        assert!(matches!(
            generate_instance(3, 2, 4, 0),
            Err(MiqpError::Parameters(_))
        ));
        assert!(matches!(
            generate_instance(0, 2, 0, 0),
            Err(MiqpError::Parameters(_))
        ));
    }

    #[test]
    fn generate_is_deterministic_and_strictly_feasible() {
        let a = generate_instance(12, 6, 3, 42).unwrap();
        let b = generate_instance(12, 6, 3, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_instance(12, 6, 3, 43).unwrap());
        assert_eq!(a.r(), 3);
        assert_abs_diff_eq!(spectral_norm(a.a_bar()), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn full_training_shape() {
        let inst = generate_instance(80, 45, 10, 1).unwrap();
        let qp = relax(&inst).unwrap();
        assert_eq!((qp.n(), qp.m(), qp.r(), qp.rows()), (80, 45, 10, 65));
    }

    #[test]
    fn empty_linear_constraints() {
        let inst = generate_instance(2, 0, 0, 3).unwrap();
        assert_eq!(inst.m(), 0);
        assert_eq!(inst.a_bar().rows(), 0);
        // no rows at all: nothing to relax into a constrained QP
        assert!(relax(&inst).is_err());
    }

    #[test]
    fn relax_without_binaries_is_identity() {
        let inst = generate_instance(5, 3, 0, 9).unwrap();
        let qp = relax(&inst).unwrap();
        assert_eq!(qp.a(), inst.a_bar());
        assert_eq!(qp.b(), inst.b_bar());
    }

    #[test]
    fn relax_selection_rows() {
        let inst = MiqpInstance::new(
            Matrix::identity(2),
            vec![0.0, 0.0],
            Matrix::from_vec(1, 2, vec![0.3, -0.7]).unwrap(),
            vec![0.5],
            vec![1],
        )
        .unwrap();
        let qp = relax(&inst).unwrap();
        assert_eq!(qp.a().as_slice(), &[0.3, -0.7, 0.0, 1.0, 0.0, -1.0]);
        assert_eq!(qp.b(), &[0.5, 1.0, 1.0]);
    }

    #[test]
    fn minimizer_examples() {
        let inst = generate_instance(4, 2, 1, 5).unwrap();
        let mut qp = relax(&inst).unwrap();
        qp.q = vec![0.0; 4];
        let x = analytic_minimizer(&Multipliers::zeros(qp.rows()), &qp).unwrap();
        assert!(x.as_slice().iter().all(|v| *v == 0.0));

        let qp = RelaxedQp::new(
            Matrix::identity(3).scale(2.0),
            vec![1.0; 3],
            Matrix::identity(3),
            vec![1.0; 3],
            3,
            vec![],
        )
        .unwrap();
        let x = analytic_minimizer(&Multipliers::zeros(3), &qp).unwrap();
        for v in x.as_slice() {
            assert_abs_diff_eq!(*v, -0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn minimizer_rejects_wrong_length() {
        let qp = scalar_qp(2.0, 0.0, 1.0, 1.0);
        assert!(matches!(
            analytic_minimizer(&Multipliers::zeros(2), &qp),
            Err(MiqpError::Problem(ProblemError::Dimension { .. }))
        ));
    }

    #[test]
    fn ill_conditioned_p_is_an_oracle_error() {
        let p = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1e-13]).unwrap();
        let qp = RelaxedQp::new(
            p,
            vec![0.0; 2],
            Matrix::identity(2),
            vec![1.0; 2],
            2,
            vec![],
        )
        .unwrap();
        assert!(qp.condition_number() > MAX_CONDITION);
        assert!(matches!(
            analytic_minimizer(&Multipliers::zeros(2), &qp),
            Err(MiqpError::Oracle(OracleError::IllConditioned(_)))
        ));
        assert!(matches!(
            reference_solve(&qp),
            Err(OracleError::IllConditioned(_))
        ));
    }

    #[test]
    fn reference_hand_examples() {
        // min x² + x s.t. x ≤ 1
        let sol = reference_solve(&scalar_qp(2.0, 1.0, 1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(sol.x[0], -0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.lambda[0], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.value, -0.25, epsilon = 1e-10);
        // min x² s.t. −x ≤ −1
        let sol = reference_solve(&scalar_qp(2.0, 0.0, -1.0, -1.0)).unwrap();
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.lambda[0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.value, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn backends_agree() {
        let qp = relax(&generate_instance(10, 5, 2, 11).unwrap()).unwrap();
        let ipm = reference_solve(&qp).unwrap();
        let dg =
            reference_solve_with(&qp, OracleBackend::DualGradient { max_iter: 200_000 }).unwrap();
        assert!((ipm.value - dg.value).abs() <= 1e-6 * (1.0 + ipm.value.abs()));
    }

    #[test]
    fn gso_structure() {
        let qp = scalar_qp(3.0, 0.0, 0.0, 1.0);
        let s = build_gso(&qp);
        assert_eq!(s.as_slice(), &[3.0, 0.0, 0.0, 0.0]);
        let qp = relax(&generate_instance(6, 3, 2, 4).unwrap()).unwrap();
        let s = build_gso(&qp);
        assert_eq!(s.asymmetry(), 0.0);
        for k in 0..qp.rows() {
            for j in 0..qp.n() {
                assert_eq!(s[(6 + k, j)], qp.a()[(k, j)]);
            }
        }
    }
}
