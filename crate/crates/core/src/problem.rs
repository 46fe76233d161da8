//! Family-agnostic view of a constrained problem
//! `min f0(x; z) s.t. f(x; z) <= 0` and its Lagrangian.
//!
//! Every family is exposed in minimization form with `f <= 0` constraints.
//! The wireless family stores its sum-rate objective negated so nothing
//! downstream needs to know which family it is looking at.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::linalg::{dot, norm2};
use crate::miqp::RelaxedQp;
use crate::power::NetworkInstance;

/// Which argument of an evaluation had the wrong length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Axis {
    /// The primal point, length `n_vars`.
    Primal,
    /// The multiplier vector, length `n_cons`.
    Multiplier,
    /// A direction or weight vector supplied to a derivative product.
    Direction,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Primal => "primal point",
            Axis::Multiplier => "multipliers",
            Axis::Direction => "direction",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("dimension mismatch on {axis}: expected {expected}, found {found}")]
    Dimension {
        axis: Axis,
        expected: usize,
        found: usize,
    },
    #[error("multiplier {index} is negative ({value})")]
    NegativeMultiplier { index: usize, value: f64 },
    #[error("entry {index} of the primal point is not finite")]
    NonFinite { index: usize },
    #[error("invalid instance: {0}")]
    Invalid(&'static str),
}

/// Problem family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Family {
    Miqp,
    Power,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Miqp => "miqp",
            Family::Power => "power",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Nonnegative dual vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers(Vec<f64>);

impl Multipliers {
    pub fn new(values: Vec<f64>) -> Result<Self, ProblemError> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(ProblemError::NegativeMultiplier { index, value });
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// Project onto the nonnegative orthant.
    pub fn projected(mut values: Vec<f64>) -> Self {
        values.iter_mut().for_each(|v| {
            if !(*v > 0.0) {
                *v = 0.0
            }
        });
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// A finite primal point.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalPoint(Vec<f64>);

impl PrimalPoint {
    pub fn new(values: Vec<f64>) -> Result<Self, ProblemError> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite { index });
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Elementwise constraint violation `max{0, f_i}` with its reductions.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub values: Vec<f64>,
    pub mean: f64,
    pub max: f64,
}

impl Violation {
    pub fn from_constraints(f: &[f64]) -> Self {
        let values: Vec<f64> = f.iter().map(|v| v.max(0.0)).collect();
        let max = values.iter().fold(0.0_f64, |m, v| m.max(*v));
        let mean = if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        Self { values, mean, max }
    }
}

/// Derivative oracle of a constrained problem. Slices are unchecked here;
/// [`ProblemInstance`] adds the dimension and sign checks.
pub trait ConstrainedProblem {
    fn n_vars(&self) -> usize;
    fn n_cons(&self) -> usize;
    fn objective_raw(&self, x: &[f64]) -> f64;
    fn constraints_raw(&self, x: &[f64]) -> Vec<f64>;
    /// `∇f0(x)`.
    fn objective_grad_raw(&self, x: &[f64]) -> Vec<f64>;
    /// `J_f(x)ᵀ w`, length `n_vars`.
    fn constraint_vjp_raw(&self, x: &[f64], w: &[f64]) -> Vec<f64>;
    /// `J_f(x) v`, length `n_cons`.
    fn constraint_jvp_raw(&self, x: &[f64], v: &[f64]) -> Vec<f64>;
    /// `∇²ₓL(x, λ) v`.
    fn lagrangian_hvp_raw(&self, x: &[f64], lambda: &[f64], v: &[f64]) -> Vec<f64>;

    fn lagrangian_raw(&self, x: &[f64], lambda: &[f64]) -> f64 {
        self.objective_raw(x) + dot(lambda, &self.constraints_raw(x))
    }

    /// `∇ₓL(x, λ) = ∇f0 + J_fᵀλ`.
    fn lagrangian_grad_raw(&self, x: &[f64], lambda: &[f64]) -> Vec<f64> {
        let mut g = self.objective_grad_raw(x);
        let jt = self.constraint_vjp_raw(x, lambda);
        g.iter_mut().zip(jt).for_each(|(a, b)| *a += b);
        g
    }
}

/// One realization `z` of a problem family.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemInstance {
    Qp(RelaxedQp),
    Power(NetworkInstance),
}

impl From<RelaxedQp> for ProblemInstance {
    fn from(qp: RelaxedQp) -> Self {
        ProblemInstance::Qp(qp)
    }
}

impl From<NetworkInstance> for ProblemInstance {
    fn from(net: NetworkInstance) -> Self {
        ProblemInstance::Power(net)
    }
}

impl ProblemInstance {
    pub fn family(&self) -> Family {
        match self {
            ProblemInstance::Qp(_) => Family::Miqp,
            ProblemInstance::Power(_) => Family::Power,
        }
    }

    pub fn oracle(&self) -> &dyn ConstrainedProblem {
        match self {
            ProblemInstance::Qp(qp) => qp,
            ProblemInstance::Power(net) => net,
        }
    }

    pub fn as_qp(&self) -> Option<&RelaxedQp> {
        match self {
            ProblemInstance::Qp(qp) => Some(qp),
            ProblemInstance::Power(_) => None,
        }
    }

    pub fn as_power(&self) -> Option<&NetworkInstance> {
        match self {
            ProblemInstance::Power(net) => Some(net),
            ProblemInstance::Qp(_) => None,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.oracle().n_vars()
    }

    pub fn n_cons(&self) -> usize {
        self.oracle().n_cons()
    }

    fn check_x(&self, x: &[f64]) -> Result<(), ProblemError> {
        check_len(Axis::Primal, self.n_vars(), x.len())
    }

    fn check_lambda(&self, lambda: &[f64]) -> Result<(), ProblemError> {
        check_len(Axis::Multiplier, self.n_cons(), lambda.len())?;
        if let Some((index, &value)) = lambda.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(ProblemError::NegativeMultiplier { index, value });
        }
        Ok(())
    }

    /// `f0(x; z)`.
    pub fn objective(&self, x: &[f64]) -> Result<f64, ProblemError> {
        self.check_x(x)?;
        Ok(self.oracle().objective_raw(x))
    }

    /// `f(x; z)`; feasible iff every entry is `<= 0`.
    pub fn constraints(&self, x: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.check_x(x)?;
        Ok(self.oracle().constraints_raw(x))
    }

    /// `L(x, λ; z) = f0 + λᵀf`.
    pub fn lagrangian(&self, x: &[f64], lambda: &[f64]) -> Result<f64, ProblemError> {
        self.check_x(x)?;
        self.check_lambda(lambda)?;
        Ok(self.oracle().lagrangian_raw(x, lambda))
    }

    /// `∇ₓL(x, λ; z)`.
    pub fn lagrangian_grad(&self, x: &[f64], lambda: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.check_x(x)?;
        self.check_lambda(lambda)?;
        Ok(self.oracle().lagrangian_grad_raw(x, lambda))
    }

    pub fn violation(&self, x: &[f64]) -> Result<Violation, ProblemError> {
        Ok(Violation::from_constraints(&self.constraints(x)?))
    }

    /// `λᵀ max{0, f(x)}`.
    pub fn complementary_slackness(&self, lambda: &[f64], x: &[f64]) -> Result<f64, ProblemError> {
        self.check_lambda(lambda)?;
        let v = self.violation(x)?;
        Ok(dot(lambda, &v.values))
    }

    /// `‖f(x)‖₂`.
    pub fn constraint_norm(&self, x: &[f64]) -> Result<f64, ProblemError> {
        Ok(norm2(&self.constraints(x)?))
    }
}

pub(crate) fn check_len(axis: Axis, expected: usize, found: usize) -> Result<(), ProblemError> {
    if expected != found {
        return Err(ProblemError::Dimension {
            axis,
            expected,
            found,
        });
    }
    Ok(())
}
