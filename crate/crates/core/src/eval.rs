//! Metrics, layer diagnostics, out-of-distribution sweeps and plot-ready
//! tables shared by every method.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::baselines::{
    dual_ascent, full_power, state_augmented_da, BaselineError, DaConfig, InnerMinimizer, NaiveGnn,
};
use crate::linalg::{dot, norm2};
use crate::miqp::{generate_instance, reference_solve, relax, MiqpError, OracleError};
use crate::nets::{DualNet, GraphEncoding, Mode, NetError, PrimalNet};
use crate::power::{generate_network, rates, GeometryConfig, PowerError, PowerVector, RadioParams};
use crate::problem::{Family, Multipliers, ProblemError, ProblemInstance, Violation};
use crate::rng;
use crate::trajectory::{DualTrajectory, LayerDiagnostics, PrimalTrajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Miqp(#[from] MiqpError),
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error("invalid evaluation request: {0}")]
    Spec(String),
}

/// Method tag carried by every report and table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Method {
    /// Constrained primal and dual networks.
    Cdu,
    /// The same networks trained with `μ = ν = 0`.
    Unconstrained,
    /// Classical dual ascent.
    Da,
    /// Dual dynamics with a trained primal network.
    Sa,
    /// Supervised graph network.
    Naive,
    FullPower,
    /// The reference solution itself.
    Reference,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Cdu,
        Method::Unconstrained,
        Method::Da,
        Method::Sa,
        Method::Naive,
        Method::FullPower,
        Method::Reference,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cdu => "cdu",
            Method::Unconstrained => "unconstrained",
            Method::Da => "da",
            Method::Sa => "sa",
            Method::Naive => "naive",
            Method::FullPower => "fullpower",
            Method::Reference => "reference",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl core::fmt::Display for Method {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Optimality reference for one instance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Reference {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub objective: f64,
    /// Largest KKT residual of the convex oracle (QP only).
    pub kkt: Option<f64>,
}

/// Name of the reference method used for a family.
pub fn reference_method(family: Family) -> &'static str {
    match family {
        Family::Miqp => "interior-point",
        Family::Power => "state-augmented-600",
    }
}

/// Interior-point solution of a QP instance.
pub fn qp_reference(z: &ProblemInstance) -> Result<Reference, EvalError> {
    let qp = z
        .as_qp()
        .ok_or_else(|| EvalError::Spec("convex oracle needs a QP instance".into()))?;
    let s = reference_solve(qp)?;
    Ok(Reference {
        kkt: Some(s.residuals.max()),
        objective: s.value,
        x: s.x,
        lambda: s.lambda,
    })
}

/// 600 steps of state-augmented dual dynamics (`η = 0.05`).
pub fn sa_reference(
    z: &ProblemInstance,
    primal: &PrimalNet,
    seed: u64,
) -> Result<Reference, EvalError> {
    let t = state_augmented_da(z, primal, &DaConfig::state_augmented(seed), seed)?;
    let x = t.recovered().to_vec();
    Ok(Reference {
        objective: z.objective(&x)?,
        lambda: t.final_lambda().to_vec(),
        x,
        kkt: None,
    })
}

/// References for a whole dataset: the convex oracle for QPs, SA with
/// `primal` for power networks.
pub fn references(
    data: &[ProblemInstance],
    primal: Option<&PrimalNet>,
    seed: u64,
) -> Result<Vec<Reference>, EvalError> {
    data.iter()
        .map(|z| match z.family() {
            Family::Miqp => qp_reference(z),
            Family::Power => {
                let p = primal.ok_or_else(|| {
                    EvalError::Spec("power references need a primal network".into())
                })?;
                sa_reference(z, p, seed)
            }
        })
        .collect()
}

/// A method ready to be run on instances.
#[derive(Debug, Clone, Copy)]
pub enum Runner<'a> {
    Unrolled {
        primal: &'a PrimalNet,
        dual: &'a DualNet,
        seed: u64,
    },
    DualAscent(&'a DaConfig),
    StateAugmented {
        primal: &'a PrimalNet,
        cfg: &'a DaConfig,
        seed: u64,
    },
    Naive(&'a NaiveGnn),
    FullPower,
    Reference(&'a [Reference]),
}

/// What a method returns for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutput {
    pub x: Vec<f64>,
    pub lambda: Option<Vec<f64>>,
    pub dual: Option<DualTrajectory>,
    /// Primal layers re-run at the final multiplier.
    pub primal: Option<PrimalTrajectory>,
}

impl Runner<'_> {
    pub fn run(&self, z: &ProblemInstance, index: usize) -> Result<MethodOutput, EvalError> {
        match *self {
            Runner::Unrolled { primal, dual, seed } => {
                let enc = GraphEncoding::new(z);
                let mut r = rng::stream(seed, "unused", 0);
                let t = dual.forward_encoded(z, &enc, primal, Mode::Eval { seed }, &mut r)?;
                let lam = Multipliers::new(t.final_lambda().to_vec())?;
                let p = primal.forward_encoded(&lam, z, &enc, Mode::Eval { seed }, &mut r)?;
                Ok(MethodOutput {
                    x: t.recovered().to_vec(),
                    lambda: Some(lam.into_vec()),
                    dual: Some(t),
                    primal: Some(p),
                })
            }
            Runner::DualAscent(cfg) => {
                let inner = match z.family() {
                    Family::Miqp => InnerMinimizer::Analytic,
                    Family::Power => InnerMinimizer::Grid { points: 21 },
                };
                let t = dual_ascent(z, cfg, inner)?;
                Ok(MethodOutput {
                    x: t.recovered().to_vec(),
                    lambda: Some(t.final_lambda().to_vec()),
                    dual: Some(t),
                    primal: None,
                })
            }
            Runner::StateAugmented { primal, cfg, seed } => {
                let t = dual_ascent(z, cfg, InnerMinimizer::PrimalNet { net: primal, seed })?;
                Ok(MethodOutput {
                    x: t.recovered().to_vec(),
                    lambda: Some(t.final_lambda().to_vec()),
                    dual: Some(t),
                    primal: None,
                })
            }
            Runner::Naive(net) => Ok(MethodOutput {
                x: net.predict(z)?,
                lambda: None,
                dual: None,
                primal: None,
            }),
            Runner::FullPower => {
                let net = z
                    .as_power()
                    .ok_or_else(|| EvalError::Spec("full power needs a power network".into()))?;
                Ok(MethodOutput {
                    x: full_power(net).into_vec(),
                    lambda: None,
                    dual: None,
                    primal: None,
                })
            }
            Runner::Reference(refs) => {
                let r = refs
                    .get(index)
                    .ok_or_else(|| EvalError::Spec("missing reference for instance".into()))?;
                Ok(MethodOutput {
                    x: r.x.clone(),
                    lambda: Some(r.lambda.clone()),
                    dual: None,
                    primal: None,
                })
            }
        }
    }
}

/// Metrics of one method on one instance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InstanceMetrics {
    pub instance: usize,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Per-coordinate mean squared error.
    pub mse_x: Option<f64>,
    pub mse_lambda: Option<f64>,
    pub violation_mean: f64,
    pub violation_max: f64,
    /// `λ_Lᵀ max{0, f(x_l)}` per dual layer.
    pub slackness: Vec<f64>,
    /// `‖f(x_l)‖` per dual layer.
    pub constraint_norm: Vec<f64>,
    /// `L` and `‖∇ₓL‖` per primal layer at the final multiplier.
    pub primal_lagrangian: Vec<f64>,
    pub primal_grad_norm: Vec<f64>,
    pub reference_kkt: Option<f64>,
}

/// Aggregates over instances.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    pub instances: usize,
    pub objective: f64,
    pub mse_x: Option<f64>,
    pub mse_lambda: Option<f64>,
    pub violation_mean: f64,
    pub violation_max: f64,
    pub slackness: Vec<f64>,
    pub constraint_norm: Vec<f64>,
    pub primal_lagrangian: Vec<f64>,
    pub primal_grad_norm: Vec<f64>,
    /// Share of instances whose final-layer slackness is at most the first.
    pub slackness_decreasing: Option<f64>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn mean_opt(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = v.collect();
    v.filter(|v| !v.is_empty()).map(|v| mean(v.into_iter()))
}

fn layer_means(rows: &[InstanceMetrics], get: impl Fn(&InstanceMetrics) -> &Vec<f64>) -> Vec<f64> {
    let len = rows.first().map_or(0, |r| get(r).len());
    if rows.iter().any(|r| get(r).len() != len) {
        return Vec::new();
    }
    (0..len)
        .map(|l| mean(rows.iter().map(|r| get(r)[l])))
        .collect()
}

impl Summary {
    pub fn from_rows(rows: &[InstanceMetrics]) -> Self {
        let with_layers: Vec<&InstanceMetrics> =
            rows.iter().filter(|r| !r.slackness.is_empty()).collect();
        let slackness_decreasing = (!with_layers.is_empty() && with_layers.len() == rows.len())
            .then(|| {
                with_layers
                    .iter()
                    .filter(|r| r.slackness[r.slackness.len() - 1] <= r.slackness[0])
                    .count() as f64
                    / rows.len() as f64
            });
        Self {
            instances: rows.len(),
            objective: mean(rows.iter().map(|r| r.objective)),
            mse_x: mean_opt(rows.iter().map(|r| r.mse_x)),
            mse_lambda: mean_opt(rows.iter().map(|r| r.mse_lambda)),
            violation_mean: mean(rows.iter().map(|r| r.violation_mean)),
            violation_max: rows.iter().map(|r| r.violation_max).fold(0.0, f64::max),
            slackness: layer_means(rows, |r| &r.slackness),
            constraint_norm: layer_means(rows, |r| &r.constraint_norm),
            primal_lagrangian: layer_means(rows, |r| &r.primal_lagrangian),
            primal_grad_norm: layer_means(rows, |r| &r.primal_grad_norm),
            slackness_decreasing,
        }
    }
}

/// Per-instance rows and their aggregates for one method on one dataset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub method: Method,
    pub family: Family,
    pub dataset_hash: String,
    pub reference_method: String,
    pub rows: Vec<InstanceMetrics>,
    pub summary: Summary,
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / a.len().max(1) as f64
}

/// Run `runner` on every instance and score it against `refs` (pass an empty
/// slice to skip the optimality metrics).
pub fn evaluate(
    method: Method,
    runner: &Runner<'_>,
    data: &[ProblemInstance],
    refs: &[Reference],
    dataset_hash: &str,
) -> Result<EvalReport, EvalError> {
    if !refs.is_empty() && refs.len() != data.len() {
        return Err(EvalError::Spec(format!(
            "{} references for {} instances",
            refs.len(),
            data.len()
        )));
    }
    let family = match data.first() {
        Some(z) => z.family(),
        None => return Err(EvalError::Spec("empty dataset".into())),
    };
    if data.iter().any(|z| z.family() != family) {
        return Err(EvalError::Spec("mixed families in one dataset".into()));
    }
    let mut rows = Vec::with_capacity(data.len());
    for (i, z) in data.iter().enumerate() {
        let out = runner.run(z, i)?;
        let v = z.violation(&out.x)?;
        let reference = refs.get(i);
        let (slackness, constraint_norm) = match &out.dual {
            Some(t) => {
                let d = layer_diagnostics(t, z);
                (
                    d.iter().map(|r| r.slackness).collect(),
                    d.iter().map(|r| r.constraint_norm).collect(),
                )
            }
            None => (Vec::new(), Vec::new()),
        };
        let (primal_lagrangian, primal_grad_norm) = match &out.primal {
            Some(p) => {
                let d = primal_layer_diagnostics(p, z);
                (
                    d.iter().map(|r| r.lagrangian).collect(),
                    d.iter().map(|r| r.grad_norm).collect(),
                )
            }
            None => (Vec::new(), Vec::new()),
        };
        rows.push(InstanceMetrics {
            instance: i,
            objective: z.objective(&out.x)?,
            mse_x: reference.map(|r| mse(&out.x, &r.x)),
            mse_lambda: reference.and_then(|r| out.lambda.as_ref().map(|l| mse(l, &r.lambda))),
            violation_mean: v.mean,
            violation_max: v.max,
            slackness,
            constraint_norm,
            primal_lagrangian,
            primal_grad_norm,
            reference_kkt: reference.and_then(|r| r.kkt),
            x: out.x,
        });
    }
    let summary = Summary::from_rows(&rows);
    Ok(EvalReport {
        method,
        family,
        dataset_hash: dataset_hash.to_string(),
        reference_method: reference_method(family).to_string(),
        rows,
        summary,
    })
}

/// One layer of a trajectory, recomputed from the raw iterates.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerRow {
    pub layer: usize,
    pub lagrangian: f64,
    pub grad_norm: f64,
    pub constraint_norm: f64,
    pub violation_mean: f64,
    pub violation_max: f64,
    /// `λ_Lᵀ max{0, f(x_l)}`; zero for primal trajectories.
    pub slackness: f64,
}

fn row(layer: usize, d: LayerDiagnostics, slackness: f64) -> LayerRow {
    LayerRow {
        layer,
        lagrangian: d.lagrangian,
        grad_norm: d.grad_norm,
        constraint_norm: d.constraint_norm,
        violation_mean: d.violation_mean,
        violation_max: d.violation_max,
        slackness,
    }
}

/// Diagnostics of `(λ_l, x_l)` for `l = 0..L`.
pub fn layer_diagnostics(traj: &DualTrajectory, z: &ProblemInstance) -> Vec<LayerRow> {
    let oracle = z.oracle();
    let last = traj.final_lambda();
    traj.lambdas
        .iter()
        .zip(&traj.primals)
        .enumerate()
        .map(|(l, (lam, x))| {
            let d = LayerDiagnostics::compute(oracle, x, lam);
            let v = Violation::from_constraints(&oracle.constraints_raw(x));
            row(l, d, dot(last, &v.values))
        })
        .collect()
}

/// Diagnostics of `x̃_k` for `k = 0..K` at the trajectory's multiplier.
pub fn primal_layer_diagnostics(traj: &PrimalTrajectory, z: &ProblemInstance) -> Vec<LayerRow> {
    let oracle = z.oracle();
    traj.iterates
        .iter()
        .enumerate()
        .map(|(k, x)| row(k, LayerDiagnostics::compute(oracle, x, &traj.lambda), 0.0))
        .collect()
}

/// Generative parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OodAxis {
    /// QP variables.
    N,
    /// QP linear constraints.
    M,
    /// QP binary variables.
    R,
    /// Power rate floor.
    RMin,
    /// Power users.
    Users,
    /// Power constrained fraction.
    Fraction,
}

impl OodAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            OodAxis::N => "n",
            OodAxis::M => "m",
            OodAxis::R => "r",
            OodAxis::RMin => "r_min",
            OodAxis::Users => "users",
            OodAxis::Fraction => "fraction",
        }
    }

    pub fn family(self) -> Family {
        match self {
            OodAxis::N | OodAxis::M | OodAxis::R => Family::Miqp,
            OodAxis::RMin | OodAxis::Users | OodAxis::Fraction => Family::Power,
        }
    }
}

/// In-distribution generative parameters of a family.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "family", rename_all = "snake_case"))]
pub enum FamilyParams {
    Miqp { n: usize, m: usize, r: usize },
    Power { n: usize, fraction: f64, r_min: f64 },
}

impl FamilyParams {
    pub fn family(&self) -> Family {
        match self {
            FamilyParams::Miqp { .. } => Family::Miqp,
            FamilyParams::Power { .. } => Family::Power,
        }
    }

    pub fn get(&self, axis: OodAxis) -> Option<f64> {
        match (*self, axis) {
            (FamilyParams::Miqp { n, .. }, OodAxis::N) => Some(n as f64),
            (FamilyParams::Miqp { m, .. }, OodAxis::M) => Some(m as f64),
            (FamilyParams::Miqp { r, .. }, OodAxis::R) => Some(r as f64),
            (FamilyParams::Power { n, .. }, OodAxis::Users) => Some(n as f64),
            (FamilyParams::Power { fraction, .. }, OodAxis::Fraction) => Some(fraction),
            (FamilyParams::Power { r_min, .. }, OodAxis::RMin) => Some(r_min),
            _ => None,
        }
    }

    pub fn with(&self, axis: OodAxis, value: f64) -> Result<Self, EvalError> {
        let count = || {
            if value >= 0.0 && value <= usize::MAX as f64 && value == (value as usize) as f64 {
                Ok(value as usize)
            } else {
                Err(EvalError::Spec(format!(
                    "{} must be a nonnegative integer",
                    axis.as_str()
                )))
            }
        };
        Ok(match (*self, axis) {
            (FamilyParams::Miqp { m, r, .. }, OodAxis::N) => {
                FamilyParams::Miqp { n: count()?, m, r }
            }
            (FamilyParams::Miqp { n, r, .. }, OodAxis::M) => {
                FamilyParams::Miqp { n, m: count()?, r }
            }
            (FamilyParams::Miqp { n, m, .. }, OodAxis::R) => {
                FamilyParams::Miqp { n, m, r: count()? }
            }
            (
                FamilyParams::Power {
                    fraction, r_min, ..
                },
                OodAxis::Users,
            ) => FamilyParams::Power {
                n: count()?,
                fraction,
                r_min,
            },
            (FamilyParams::Power { n, r_min, .. }, OodAxis::Fraction) => FamilyParams::Power {
                n,
                fraction: value,
                r_min,
            },
            (FamilyParams::Power { n, fraction, .. }, OodAxis::RMin) => FamilyParams::Power {
                n,
                fraction,
                r_min: value,
            },
            _ => {
                return Err(EvalError::Spec(format!(
                    "axis {} does not apply to the {} family",
                    axis.as_str(),
                    self.family().as_str()
                )))
            }
        })
    }

    /// Instance `index` of the family drawn from `seed`.
    pub fn generate(&self, seed: u64, index: u64) -> Result<ProblemInstance, EvalError> {
        let s = rng::derive_seed(seed, "instance", index);
        Ok(match *self {
            FamilyParams::Miqp { n, m, r } => relax(&generate_instance(n, m, r, s)?)?.into(),
            FamilyParams::Power { n, fraction, r_min } => {
                let radio = RadioParams {
                    r_min,
                    ..RadioParams::default()
                };
                generate_network(n, fraction, s, &GeometryConfig::density_matched(n), &radio)?
                    .into()
            }
        })
    }
}

/// One-parameter out-of-distribution sweep.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OodSpec {
    pub axis: OodAxis,
    pub grid: Vec<f64>,
    pub base: FamilyParams,
    pub instances: usize,
    pub seeds: Vec<u64>,
}

impl OodSpec {
    pub fn in_distribution(&self) -> Option<f64> {
        self.base.get(self.axis)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let id = self.in_distribution().ok_or_else(|| {
            EvalError::Spec(format!(
                "axis {} does not match the base family",
                self.axis.as_str()
            ))
        })?;
        if self.grid.is_empty() {
            return Err(EvalError::Spec("empty sweep grid".into()));
        }
        if !self.grid.contains(&id) {
            return Err(EvalError::Spec(
                "grid must contain the in-distribution value".into(),
            ));
        }
        if self.instances == 0 || self.seeds.is_empty() {
            return Err(EvalError::Spec("sweep needs instances and seeds".into()));
        }
        for v in &self.grid {
            self.base.with(self.axis, *v)?;
        }
        Ok(())
    }
}

/// One `(method, grid point, seed)` result of a sweep.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    pub method: Method,
    pub axis: OodAxis,
    pub value: f64,
    pub in_distribution: bool,
    pub seed: u64,
    pub objective: f64,
    pub mse_x: Option<f64>,
    pub violation_mean: f64,
}

/// Evaluate every method at every grid point. Power MSEs are taken against
/// SA driven by `reference_primal` when it is given.
pub fn ood_sweep(
    spec: &OodSpec,
    methods: &[(Method, Runner<'_>)],
    reference_primal: Option<&PrimalNet>,
) -> Result<Vec<SweepRow>, EvalError> {
    spec.validate()?;
    if methods.is_empty() {
        return Err(EvalError::Spec("sweep needs at least one method".into()));
    }
    let id = spec.in_distribution().expect("validated");
    let mut out = Vec::new();
    for &value in &spec.grid {
        let params = spec.base.with(spec.axis, value)?;
        for &seed in &spec.seeds {
            let data: Vec<ProblemInstance> = (0..spec.instances as u64)
                .map(|i| params.generate(seed, i))
                .collect::<Result<_, _>>()?;
            let refs = match (params.family(), reference_primal) {
                (Family::Miqp, _) => references(&data, None, seed)?,
                (Family::Power, Some(p)) => references(&data, Some(p), seed)?,
                (Family::Power, None) => Vec::new(),
            };
            for (method, runner) in methods {
                let r = evaluate(*method, runner, &data, &refs, "")?;
                out.push(SweepRow {
                    method: *method,
                    axis: spec.axis,
                    value,
                    in_distribution: value == id,
                    seed,
                    objective: r.summary.objective,
                    mse_x: r.summary.mse_x,
                    violation_mean: r.summary.violation_mean,
                });
            }
        }
    }
    Ok(out)
}

/// A cell of a figure table.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(untagged))]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Num(_) => None,
            Cell::Text(s) => Some(s),
        }
    }
}

/// Plot-ready data with a fixed column schema per figure id.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FigureTable {
    pub figure: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

/// Figure ids and their columns.
pub const FIGURES: [(&str, &[&str]); 4] = [
    (
        "trajectories",
        &["method", "step", "lagrangian", "dual_value"],
    ),
    ("descent", &["method", "panel", "layer", "value"]),
    ("rate-histogram", &["method", "rate", "r_min"]),
    (
        "ood",
        &[
            "method",
            "axis",
            "value",
            "metric",
            "score",
            "in_distribution",
        ],
    ),
];

impl FigureTable {
    pub fn new(figure: &str) -> Result<Self, EvalError> {
        let (_, cols) = FIGURES
            .iter()
            .find(|(f, _)| *f == figure)
            .ok_or_else(|| EvalError::Spec(format!("unknown figure {figure}")))?;
        Ok(Self {
            figure: figure.to_string(),
            columns: cols.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// `L(x_l, λ_l)` and `g(λ_l)` against the step index. Unrolled trajectories
/// are spread evenly over `axis_len` steps when it is given.
pub fn trajectory_table(
    runs: &[(Method, &DualTrajectory)],
    z: &ProblemInstance,
    axis_len: Option<usize>,
) -> Result<FigureTable, EvalError> {
    let mut t = FigureTable::new("trajectories")?;
    for (method, traj) in runs {
        let l = traj.layers().max(1);
        let spread = matches!(method, Method::Cdu | Method::Unconstrained);
        for (i, (lam, x)) in traj.lambdas.iter().zip(&traj.primals).enumerate() {
            let step = match axis_len {
                Some(n) if spread => i as f64 * n as f64 / l as f64,
                _ => i as f64,
            };
            let g = match z.as_qp() {
                Some(qp) => qp.dual_function(lam),
                None => f64::NAN,
            };
            t.push(vec![
                Cell::Text(method.as_str().into()),
                Cell::Num(step),
                Cell::Num(z.lagrangian(x, lam)?),
                Cell::Num(g),
            ]);
        }
    }
    Ok(t)
}

/// Per-layer means of `‖∇L‖` (or `L`) over primal layers, violation and
/// slackness over dual layers.
pub fn descent_table(
    reports: &[&EvalReport],
    primal_metric: &str,
) -> Result<FigureTable, EvalError> {
    let mut t = FigureTable::new("descent")?;
    for r in reports {
        let primal = match primal_metric {
            "grad_norm" => &r.summary.primal_grad_norm,
            "lagrangian" => &r.summary.primal_lagrangian,
            other => return Err(EvalError::Spec(format!("unknown primal metric {other}"))),
        };
        let violation = layer_means(&r.rows, |m| &m.constraint_norm);
        let panels: [(&str, &Vec<f64>); 3] = [
            (primal_metric, primal),
            ("constraint_norm", &violation),
            ("slackness", &r.summary.slackness),
        ];
        for (panel, values) in panels {
            for (l, v) in values.iter().enumerate() {
                t.push(vec![
                    Cell::Text(r.method.as_str().into()),
                    Cell::Text(panel.into()),
                    Cell::Num(l as f64),
                    Cell::Num(*v),
                ]);
            }
        }
    }
    Ok(t)
}

/// Per-user rates of constrained users for each report.
pub fn rate_histogram_table(
    reports: &[&EvalReport],
    data: &[ProblemInstance],
) -> Result<FigureTable, EvalError> {
    let mut t = FigureTable::new("rate-histogram")?;
    for r in reports {
        for m in &r.rows {
            let net = data
                .get(m.instance)
                .and_then(|z| z.as_power())
                .ok_or_else(|| EvalError::Spec("rate histogram needs the power dataset".into()))?;
            let p = PowerVector::new(m.x.clone(), net.p_max())?;
            let rt = rates(&p, net)?;
            for (i, v) in rt.iter().enumerate() {
                if net.mask()[i] {
                    t.push(vec![
                        Cell::Text(r.method.as_str().into()),
                        Cell::Num(*v),
                        Cell::Num(net.r_min()),
                    ]);
                }
            }
        }
    }
    Ok(t)
}

/// Sweep rows averaged over seeds, one row per `(method, value, metric)`.
pub fn ood_table(rows: &[SweepRow]) -> Result<FigureTable, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::Spec("empty sweep".into()));
    }
    let mut t = FigureTable::new("ood")?;
    let mut keys: Vec<(Method, u64)> = rows.iter().map(|r| (r.method, r.value.to_bits())).collect();
    keys.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(f64::from_bits(a.1).total_cmp(&f64::from_bits(b.1)))
    });
    keys.dedup();
    for (method, bits) in keys {
        let sel: Vec<&SweepRow> = rows
            .iter()
            .filter(|r| r.method == method && r.value.to_bits() == bits)
            .collect();
        let first = sel[0];
        let mut metrics = vec![
            ("violation", mean(sel.iter().map(|r| r.violation_mean))),
            ("objective", mean(sel.iter().map(|r| r.objective))),
        ];
        if let Some(m) = mean_opt(sel.iter().map(|r| r.mse_x)) {
            metrics.push(("mse_x", m));
        }
        for (metric, score) in metrics {
            t.push(vec![
                Cell::Text(method.as_str().into()),
                Cell::Text(first.axis.as_str().into()),
                Cell::Num(first.value),
                Cell::Text(metric.into()),
                Cell::Num(score),
                Cell::Num(if first.in_distribution { 1.0 } else { 0.0 }),
            ]);
        }
    }
    Ok(t)
}

/// `‖x‖` of every row in a report; used to sanity-check outputs.
pub fn solution_norms(report: &EvalReport) -> Vec<f64> {
    report.rows.iter().map(|r| norm2(&r.x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::NetConfig;

    fn qps(k: usize) -> Vec<ProblemInstance> {
        (0..k)
            .map(|s| {
                relax(&generate_instance(6, 3, 2, 100 + s as u64).unwrap())
                    .unwrap()
                    .into()
            })
            .collect()
    }

    #[test]
    fn oracle_against_itself_is_exact() {
        let data = qps(4);
        let refs = references(&data, None, 0).unwrap();
        let r = evaluate(
            Method::Reference,
            &Runner::Reference(&refs),
            &data,
            &refs,
            "h",
        )
        .unwrap();
        assert_eq!(r.summary.mse_x, Some(0.0));
        assert_eq!(r.summary.mse_lambda, Some(0.0));
        assert!(r.summary.violation_mean <= 1e-6);
        assert!(r.rows.iter().all(|m| m.reference_kkt.unwrap() <= 1e-6));
        assert_eq!(r.reference_method, "interior-point");
    }

    #[test]
    fn aggregates_recompute_from_rows() {
        let data = qps(3);
        let refs = references(&data, None, 0).unwrap();
        let cfg = DaConfig::miqp(20);
        let r = evaluate(Method::Da, &Runner::DualAscent(&cfg), &data, &refs, "").unwrap();
        assert_eq!(Summary::from_rows(&r.rows), r.summary);
        assert_eq!(r.summary.slackness.len(), 21);
    }

    #[test]
    fn constant_trajectory_gives_flat_diagnostics() {
        let z = &qps(1)[0];
        let t = DualTrajectory::new(
            z.oracle(),
            vec![vec![0.2; z.n_cons()]; 4],
            vec![vec![0.5; 6]; 4],
            3,
        );
        let d = layer_diagnostics(&t, z);
        for w in d.windows(2) {
            assert_eq!(w[0].lagrangian, w[1].lagrangian);
            assert_eq!(w[0].slackness, w[1].slackness);
        }
    }

    #[test]
    fn layer_diagnostics_match_trajectory_fields() {
        let z = &qps(1)[0];
        let t = dual_ascent(z, &DaConfig::miqp(10), InnerMinimizer::Analytic).unwrap();
        let d = layer_diagnostics(&t, z);
        for (row, (diag, s)) in d.iter().zip(t.diagnostics.iter().zip(&t.slackness)) {
            assert_eq!(row.lagrangian, diag.lagrangian);
            assert_eq!(row.constraint_norm, diag.constraint_norm);
            assert_eq!(row.slackness, *s);
        }
    }

    #[test]
    fn unrolled_eval_is_reproducible() {
        let data = qps(2);
        let p = PrimalNet::new(NetConfig::miqp(2, 1, 4), 0).unwrap();
        let d = DualNet::new(NetConfig::miqp(2, 1, 4), 1).unwrap();
        let run = Runner::Unrolled {
            primal: &p,
            dual: &d,
            seed: 5,
        };
        let a = evaluate(Method::Cdu, &run, &data, &[], "").unwrap();
        let b = evaluate(Method::Cdu, &run, &data, &[], "").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.summary.primal_grad_norm.len(), 3);
        assert!(a.summary.mse_x.is_none());
    }

    #[test]
    fn sweep_spec_validation() {
        let base = FamilyParams::Miqp { n: 6, m: 3, r: 2 };
        let ok = OodSpec {
            axis: OodAxis::N,
            grid: vec![6.0],
            base,
            instances: 2,
            seeds: vec![0],
        };
        assert!(ok.validate().is_ok());
        assert!(OodSpec {
            grid: vec![],
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(OodSpec {
            grid: vec![8.0],
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(OodSpec {
            axis: OodAxis::RMin,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(ood_table(&[]).is_err());
    }

    #[test]
    fn single_point_sweep_reduces_to_evaluate() {
        let base = FamilyParams::Miqp { n: 6, m: 3, r: 2 };
        let spec = OodSpec {
            axis: OodAxis::M,
            grid: vec![3.0],
            base,
            instances: 3,
            seeds: vec![4],
        };
        let cfg = DaConfig::miqp(30);
        let rows = ood_sweep(&spec, &[(Method::Da, Runner::DualAscent(&cfg))], None).unwrap();
        let data: Vec<ProblemInstance> = (0..3).map(|i| base.generate(4, i).unwrap()).collect();
        let refs = references(&data, None, 4).unwrap();
        let r = evaluate(Method::Da, &Runner::DualAscent(&cfg), &data, &refs, "").unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].in_distribution);
        assert_eq!(rows[0].violation_mean, r.summary.violation_mean);
        assert_eq!(rows[0].mse_x, r.summary.mse_x);
        let t = ood_table(&rows).unwrap();
        assert_eq!(t.rows.len(), 3);
    }

    #[test]
    fn unrolled_layers_spread_over_baseline_axis() {
        let z = &qps(1)[0];
        let da = dual_ascent(z, &DaConfig::miqp(600), InnerMinimizer::Analytic).unwrap();
        let p = PrimalNet::new(NetConfig::miqp(2, 1, 4), 0).unwrap();
        let d = DualNet::new(NetConfig::miqp(3, 1, 4), 1).unwrap();
        let mut r = rng::stream(0, "t", 0);
        let u = d.forward(z, &p, Mode::Eval { seed: 0 }, &mut r).unwrap();
        let t = trajectory_table(&[(Method::Da, &da), (Method::Cdu, &u)], z, Some(600)).unwrap();
        let steps: Vec<f64> = t
            .rows
            .iter()
            .filter(|r| r[0].as_str() == Some("cdu"))
            .map(|r| r[1].as_f64().unwrap())
            .collect();
        assert_eq!(steps, vec![0.0, 200.0, 400.0, 600.0]);
        assert_eq!(t.rows.len(), 601 + 4);
    }
}
