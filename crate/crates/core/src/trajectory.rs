//! Layer-by-layer iterates of primal and dual methods with diagnostics
//! recomputed from the raw iterates.

use alloc::vec::Vec;

use crate::linalg::{dot, norm2};
use crate::problem::{ConstrainedProblem, Violation};

/// Quantities of one iterate `(x, λ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerDiagnostics {
    pub lagrangian: f64,
    pub grad_norm: f64,
    pub constraint_norm: f64,
    pub violation_mean: f64,
    pub violation_max: f64,
}

impl LayerDiagnostics {
    pub fn compute(z: &dyn ConstrainedProblem, x: &[f64], lambda: &[f64]) -> Self {
        let f = z.constraints_raw(x);
        let v = Violation::from_constraints(&f);
        Self {
            lagrangian: z.objective_raw(x) + dot(lambda, &f),
            grad_norm: norm2(&z.lagrangian_grad_raw(x, lambda)),
            constraint_norm: norm2(&f),
            violation_mean: v.mean,
            violation_max: v.max,
        }
    }
}

/// `x̃₀ … x̃_K` for a fixed `λ`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrimalTrajectory {
    pub lambda: Vec<f64>,
    pub iterates: Vec<Vec<f64>>,
    pub diagnostics: Vec<LayerDiagnostics>,
}

impl PrimalTrajectory {
    pub fn new(z: &dyn ConstrainedProblem, lambda: Vec<f64>, iterates: Vec<Vec<f64>>) -> Self {
        let diagnostics = iterates
            .iter()
            .map(|x| LayerDiagnostics::compute(z, x, &lambda))
            .collect();
        Self {
            lambda,
            iterates,
            diagnostics,
        }
    }

    /// Number of layers `K`.
    pub fn layers(&self) -> usize {
        self.iterates.len() - 1
    }

    pub fn last(&self) -> &[f64] {
        self.iterates
            .last()
            .expect("trajectory has an initial iterate")
    }
}

/// `λ₀ … λ_L` with the paired primal answers `x_l = Φ(λ_l)`; `x_L` is the
/// recovered solution.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DualTrajectory {
    pub lambdas: Vec<Vec<f64>>,
    pub primals: Vec<Vec<f64>>,
    pub diagnostics: Vec<LayerDiagnostics>,
    /// `λ_Lᵀ max{0, f(x_l)}` for every `l`.
    pub slackness: Vec<f64>,
    /// Primal evaluations made inside the layer loop.
    pub primal_queries: usize,
}

impl DualTrajectory {
    pub fn new(
        z: &dyn ConstrainedProblem,
        lambdas: Vec<Vec<f64>>,
        primals: Vec<Vec<f64>>,
        primal_queries: usize,
    ) -> Self {
        assert_eq!(
            lambdas.len(),
            primals.len(),
            "one primal answer per multiplier"
        );
        let diagnostics = lambdas
            .iter()
            .zip(&primals)
            .map(|(l, x)| LayerDiagnostics::compute(z, x, l))
            .collect();
        let last = lambdas
            .last()
            .expect("trajectory has an initial multiplier");
        let slackness = primals
            .iter()
            .map(|x| {
                let v = Violation::from_constraints(&z.constraints_raw(x));
                dot(last, &v.values)
            })
            .collect();
        Self {
            lambdas,
            primals,
            diagnostics,
            slackness,
            primal_queries,
        }
    }

    /// Number of layers or iterations `L`.
    pub fn layers(&self) -> usize {
        self.lambdas.len() - 1
    }

    pub fn final_lambda(&self) -> &[f64] {
        self.lambdas
            .last()
            .expect("trajectory has an initial multiplier")
    }

    pub fn recovered(&self) -> &[f64] {
        self.primals
            .last()
            .expect("trajectory has an initial iterate")
    }
}
