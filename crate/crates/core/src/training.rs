//! Constrained alternating training of the primal and dual networks.
//!
//! The primal network minimizes the empirical Lagrangian subject to a
//! per-layer descent constraint; the dual network maximizes the Lagrangian
//! at its last layer subject to a per-layer ascent constraint on `‖f(x_l)‖`.
//! Both are solved by gradient descent on the parameters and projected
//! ascent on the meta-multipliers `μ`, `ν`.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use thiserror::Error;

use crate::baselines::{dual_ascent, shuffle, BaselineError, DaConfig, DaInit, InnerMinimizer};
use crate::linalg::{dot, Matrix};
use crate::nets::{dual_init, Draws, DualNet, GraphEncoding, Mode, NetError, PrimalNet, Role};
use crate::optim::{zeros_like, Adam};
use crate::problem::{check_len, Axis, Family, Multipliers, ProblemError, ProblemInstance};
use crate::rng::{self, Rng};
use crate::tape::{Tape, Var};
use crate::trajectory::{DualTrajectory, PrimalTrajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("non-finite {role} loss at epoch {epoch}")]
    NonFinite { role: &'static str, epoch: usize },
}

/// A [`TrainError`] raised inside [`joint_train`], with the state of the last
/// completed outer iteration (absent when the run never started).
#[derive(Debug, Error)]
#[error("training aborted: {source}")]
pub struct Aborted {
    #[source]
    pub source: TrainError,
    pub last_good: Option<Box<TrainerState>>,
}

/// Quantity constrained to decrease across primal layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DescentMetric {
    /// `L(x̃_k, λ)`.
    Value,
    /// `‖∇ₓL(x̃_k, λ)‖`.
    #[default]
    Gradient,
}

/// Mixture of multiplier sources for primal training. Weights are turned
/// into per-problem counts by largest remainder.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SamplerConfig {
    /// `M`, multipliers per problem.
    pub multipliers: usize,
    /// Layers of a fresh dual-network pass.
    pub dual_trajectory: f64,
    /// Independent `Unif[0, uniform_max]` entries, nonzero with probability
    /// `p_nonzero` (restricted to the constrained users for power).
    pub uniform: f64,
    /// Iterates of classical dual ascent from the family initialization.
    pub dual_ascent: f64,
    pub p_nonzero: f64,
    pub uniform_max: f64,
    pub da_step: f64,
    pub da_iterations: usize,
}

impl SamplerConfig {
    /// Half dual-network layers, half uniform-sparse, `M = 32`.
    pub fn miqp() -> Self {
        Self {
            multipliers: 32,
            dual_trajectory: 0.5,
            uniform: 0.5,
            dual_ascent: 0.0,
            p_nonzero: 0.7,
            uniform_max: 1.0,
            da_step: 0.01,
            da_iterations: 100,
        }
    }

    /// 32 dual-network, 64 `Unif[0,1]` and 32 state-augmented iterates.
    pub fn power() -> Self {
        Self {
            multipliers: 128,
            dual_trajectory: 0.25,
            uniform: 0.5,
            dual_ascent: 0.25,
            p_nonzero: 1.0,
            uniform_max: 1.0,
            da_step: 0.05,
            da_iterations: 600,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let w = [self.dual_trajectory, self.uniform, self.dual_ascent];
        if self.multipliers == 0 {
            return Err(TrainError::Config(
                "at least one multiplier per problem is required",
            ));
        }
        if w.iter().any(|v| !(*v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(TrainError::Config(
                "sampler weights must be nonnegative and sum to 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.p_nonzero) || !(self.uniform_max >= 0.0) {
            return Err(TrainError::Config("uniform source parameters out of range"));
        }
        if self.dual_ascent > 0.0 && (self.da_iterations == 0 || !(self.da_step > 0.0)) {
            return Err(TrainError::Config(
                "dual-ascent source needs a positive step and budget",
            ));
        }
        Ok(())
    }

    /// Samples per source, in the order dual network, uniform, dual ascent.
    pub fn counts(&self) -> [usize; 3] {
        let m = self.multipliers;
        let w = [self.dual_trajectory, self.uniform, self.dual_ascent];
        let mut c = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for i in 0..3 {
            let e = w[i] * m as f64;
            c[i] = libm::floor(e + 1e-9) as usize;
            frac[i] = e - c[i] as f64;
        }
        let mut left = m.saturating_sub(c.iter().sum());
        while left > 0 {
            let i = (0..3)
                .filter(|&i| w[i] > 0.0)
                .fold(None::<usize>, |b, i| match b {
                    Some(j) if frac[j] >= frac[i] => Some(j),
                    _ => Some(i),
                })
                .unwrap_or(0);
            c[i] += 1;
            frac[i] = -1.0;
            left -= 1;
        }
        c
    }
}

/// Every hyperparameter of the joint training loop.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    /// Descent rate `α` shared by all primal layers.
    pub alpha: f64,
    /// Ascent rate `β` shared by all dual layers.
    pub beta: f64,
    pub metric: DescentMetric,
    /// `ε_P`, `ε_D`.
    pub lr_primal: f64,
    pub lr_dual: f64,
    /// `η_P`, `η_D`.
    pub meta_lr_primal: f64,
    pub meta_lr_dual: f64,
    /// `N_B` for each network.
    pub batch_primal: usize,
    pub batch_dual: usize,
    pub sampler: SamplerConfig,
    /// Epochs of each network per outer iteration.
    pub primal_epochs: usize,
    pub dual_epochs: usize,
    pub iterations: usize,
    /// `false` freezes `μ = ν = 0` (unconstrained ablation).
    pub constrained: bool,
    /// Save when the validation violation is within this factor of the best.
    pub gate: f64,
    pub seed: u64,
    pub eval_seed: u64,
}

impl TrainConfig {
    /// Full-scale QP schedule.
    pub fn miqp_full() -> Self {
        Self {
            alpha: 0.98,
            beta: 0.95,
            metric: DescentMetric::Gradient,
            lr_primal: 1e-4,
            lr_dual: 7e-4,
            meta_lr_primal: 1e-4,
            meta_lr_dual: 1e-3,
            batch_primal: 8,
            batch_dual: 256,
            sampler: SamplerConfig::miqp(),
            primal_epochs: 1,
            dual_epochs: 15,
            iterations: 400,
            constrained: true,
            gate: 1.5,
            seed: 0,
            eval_seed: 1,
        }
    }

    /// Full-scale power schedule.
    pub fn power_full() -> Self {
        Self {
            alpha: 1.05,
            beta: 0.8,
            metric: DescentMetric::Value,
            lr_primal: 1e-4,
            lr_dual: 1e-5,
            meta_lr_primal: 1e-3,
            meta_lr_dual: 1e-3,
            batch_primal: 1,
            batch_dual: 256,
            sampler: SamplerConfig::power(),
            primal_epochs: 1,
            dual_epochs: 5,
            iterations: 2000,
            constrained: true,
            gate: 1.5,
            seed: 0,
            eval_seed: 1,
        }
    }

    /// Reduced QP schedule that trains in minutes on one core.
    pub fn miqp_desk() -> Self {
        Self {
            lr_primal: 2e-3,
            lr_dual: 2e-3,
            meta_lr_primal: 1e-2,
            meta_lr_dual: 1e-2,
            batch_primal: 8,
            batch_dual: 16,
            sampler: SamplerConfig {
                multipliers: 8,
                ..SamplerConfig::miqp()
            },
            primal_epochs: 1,
            dual_epochs: 1,
            iterations: 30,
            ..Self::miqp_full()
        }
    }

    /// Reduced power schedule.
    pub fn power_desk() -> Self {
        Self {
            lr_primal: 2e-3,
            lr_dual: 1e-3,
            meta_lr_primal: 1e-2,
            meta_lr_dual: 1e-2,
            batch_primal: 4,
            batch_dual: 16,
            sampler: SamplerConfig {
                multipliers: 16,
                da_iterations: 40,
                ..SamplerConfig::power()
            },
            primal_epochs: 1,
            dual_epochs: 1,
            iterations: 30,
            ..Self::power_full()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let rates = [
            self.lr_primal,
            self.lr_dual,
            self.meta_lr_primal,
            self.meta_lr_dual,
        ];
        if rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(TrainError::Config(
                "learning rates must be finite and nonnegative",
            ));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.alpha.is_finite() && self.beta.is_finite())
        {
            return Err(TrainError::Config(
                "descent and ascent rates must be positive",
            ));
        }
        if self.batch_primal == 0 || self.batch_dual == 0 {
            return Err(TrainError::Config("batch sizes must be at least 1"));
        }
        if !(self.gate >= 1.0) {
            return Err(TrainError::Config("checkpoint gate must be at least 1"));
        }
        self.sampler.validate()
    }
}

/// `μ ∈ R^K₊` and `ν ∈ R^L₊`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetaMultipliers {
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
}

impl MetaMultipliers {
    pub fn zeros(primal_layers: usize, dual_layers: usize) -> Self {
        Self {
            mu: vec![0.0; primal_layers],
            nu: vec![0.0; dual_layers],
        }
    }
}

/// `m ← [m + η·r]₊`.
pub fn project_ascent(m: &mut [f64], step: f64, residuals: &[f64]) {
    for (m, r) in m.iter_mut().zip(residuals) {
        *m = (*m + step * r).max(0.0);
    }
}

/// A problem instance with its cached graph encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub z: ProblemInstance,
    pub enc: GraphEncoding,
}

impl Encoded {
    pub fn new(z: ProblemInstance) -> Self {
        let enc = GraphEncoding::new(&z);
        Self { z, enc }
    }
}

impl From<ProblemInstance> for Encoded {
    fn from(z: ProblemInstance) -> Self {
        Self::new(z)
    }
}

/// Primal-training, dual-training and validation splits.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainData {
    pub primal: Vec<Encoded>,
    pub dual: Vec<Encoded>,
    pub val: Vec<Encoded>,
}

impl TrainData {
    pub fn new(
        primal: Vec<ProblemInstance>,
        dual: Vec<ProblemInstance>,
        val: Vec<ProblemInstance>,
    ) -> Self {
        Self {
            primal: primal.into_iter().map(Encoded::new).collect(),
            dual: dual.into_iter().map(Encoded::new).collect(),
            val: val.into_iter().map(Encoded::new).collect(),
        }
    }
}

/// `term_k − α·term_{k−1}` for `k = 1..K`.
pub fn descent_residual(traj: &PrimalTrajectory, metric: DescentMetric, alpha: f64) -> Vec<f64> {
    let t: Vec<f64> = traj
        .diagnostics
        .iter()
        .map(|d| match metric {
            DescentMetric::Value => d.lagrangian,
            DescentMetric::Gradient => d.grad_norm,
        })
        .collect();
    t.windows(2).map(|w| w[1] - alpha * w[0]).collect()
}

/// `‖f(x_l)‖ − β·‖f(x_{l−1})‖` for `l = 1..L`.
pub fn ascent_residual(traj: &DualTrajectory, beta: f64) -> Vec<f64> {
    traj.diagnostics
        .windows(2)
        .map(|w| w[1].constraint_norm - beta * w[0].constraint_norm)
        .collect()
}

/// One multiplier drawn for primal training, detached from any gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalSample<'d> {
    pub item: &'d Encoded,
    pub lambda: Multipliers,
}

/// Value and parameter gradient of a meta-Lagrangian on one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaEval {
    /// Objective plus multiplier-weighted residuals.
    pub value: f64,
    /// The minimized objective alone: `mean L_K` (primal) or `−mean L(x_L, λ_L)` (dual).
    pub objective: f64,
    /// Batch-mean constraint residual per layer.
    pub residuals: Vec<f64>,
    pub grads: Vec<Matrix>,
}

/// `(1/B) Σ [L(x̃_K, λ) + Σ_k μ_k (term_k − α term_{k−1})]`. Sample `j` draws
/// its initial point and noise from `stream(seed, "primal-batch", j)`.
pub fn meta_lagrangian_primal(
    primal: &PrimalNet,
    batch: &[PrimalSample<'_>],
    mu: &[f64],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<MetaEval, TrainError> {
    let k_layers = primal.config().layers;
    if mu.len() != k_layers {
        return Err(TrainError::Config(
            "one meta-multiplier per primal layer is required",
        ));
    }
    if batch.is_empty() {
        return Err(TrainError::Config("empty batch"));
    }
    let b = batch.len() as f64;
    let mut grads = zeros_like(primal.net.params());
    let mut objective = 0.0;
    let mut residuals = vec![0.0; k_layers];
    for (j, s) in batch.iter().enumerate() {
        let enc = &s.item.enc;
        if enc.family != primal.config().family {
            return Err(NetError::Family {
                expected: primal.config().family,
                found: enc.family,
            }
            .into());
        }
        check_len(Axis::Multiplier, enc.n_cons, s.lambda.len())?;
        let mut r = rng::stream(seed, "primal-batch", j as u64);
        let mut draws = Draws {
            rng: &mut r,
            eval_seed: None,
            primal_noise: true,
            dual_noise: false,
            fixed_primal_init: None,
        };
        let x0 = draws.primal_init(enc);
        let oracle = s.item.z.oracle();
        let mut tape = Tape::new();
        let lam = tape.constant_column(s.lambda.as_slice());
        let xs = primal.build(&mut tape, enc, lam, &x0, &mut draws, true);
        let last = tape.lagrangian(oracle, xs[k_layers], lam);
        let terms: Vec<Var> = xs
            .iter()
            .map(|&x| match cfg.metric {
                DescentMetric::Value => tape.lagrangian(oracle, x, lam),
                DescentMetric::Gradient => tape.grad_norm(oracle, x, lam),
            })
            .collect();
        objective += tape.scalar(last) / b;
        let mut seeds = vec![(last, 1.0 / b)];
        for k in 1..=k_layers {
            residuals[k - 1] += (tape.scalar(terms[k]) - cfg.alpha * tape.scalar(terms[k - 1])) / b;
            if mu[k - 1] != 0.0 {
                seeds.push((terms[k], mu[k - 1] / b));
                seeds.push((terms[k - 1], -cfg.alpha * mu[k - 1] / b));
            }
        }
        tape.backward(&seeds, &mut grads);
    }
    Ok(MetaEval {
        value: objective + dot(mu, &residuals),
        objective,
        residuals,
        grads,
    })
}

/// `(1/B) Σ [−L(x_L, λ_L) + Σ_l ν_l (‖f(x_l)‖ − β ‖f(x_{l−1})‖)]`. Sample `j`
/// draws `λ₀`, the primal initial points and the dual noise from
/// `stream(seed, "dual-batch", j)`; primal noise is off.
pub fn meta_lagrangian_dual(
    dual: &DualNet,
    primal: &PrimalNet,
    batch: &[&Encoded],
    nu: &[f64],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<MetaEval, TrainError> {
    let l_layers = dual.config().layers;
    if nu.len() != l_layers {
        return Err(TrainError::Config(
            "one meta-multiplier per dual layer is required",
        ));
    }
    if batch.is_empty() {
        return Err(TrainError::Config("empty batch"));
    }
    if dual.config().family != primal.config().family {
        return Err(TrainError::Config(
            "primal and dual networks belong to different families",
        ));
    }
    let b = batch.len() as f64;
    let mut grads = zeros_like(dual.net.params());
    let mut objective = 0.0;
    let mut residuals = vec![0.0; l_layers];
    for (j, item) in batch.iter().enumerate() {
        let enc = &item.enc;
        if enc.family != dual.config().family {
            return Err(NetError::Family {
                expected: dual.config().family,
                found: enc.family,
            }
            .into());
        }
        let mut r = rng::stream(seed, "dual-batch", j as u64);
        let mut draws = Draws {
            rng: &mut r,
            eval_seed: None,
            primal_noise: false,
            dual_noise: true,
            fixed_primal_init: None,
        };
        let lambda0 = draws.dual_init(enc);
        let oracle = item.z.oracle();
        let mut tape = Tape::new();
        let nodes = dual.build(&mut tape, enc, primal, &lambda0, &mut draws, true);
        let last = tape.lagrangian(oracle, nodes.primals[l_layers], nodes.lambdas[l_layers]);
        let cn: Vec<Var> = nodes
            .primals
            .iter()
            .map(|&x| tape.constraint_norm(oracle, x))
            .collect();
        objective -= tape.scalar(last) / b;
        let mut seeds = vec![(last, -1.0 / b)];
        for l in 1..=l_layers {
            residuals[l - 1] += (tape.scalar(cn[l]) - cfg.beta * tape.scalar(cn[l - 1])) / b;
            if nu[l - 1] != 0.0 {
                seeds.push((cn[l], nu[l - 1] / b));
                seeds.push((cn[l - 1], -cfg.beta * nu[l - 1] / b));
            }
        }
        tape.backward(&seeds, &mut grads);
    }
    Ok(MetaEval {
        value: objective + dot(nu, &residuals),
        objective,
        residuals,
        grads,
    })
}

/// `M` detached multipliers for one problem from the configured mixture.
pub fn sample_multipliers(
    dual: &DualNet,
    primal: &PrimalNet,
    sampler: &SamplerConfig,
    item: &Encoded,
    rng: &mut Rng,
) -> Result<Vec<Multipliers>, TrainError> {
    let [n_dual, n_uniform, n_da] = sampler.counts();
    let enc = &item.enc;
    let mut out = Vec::with_capacity(sampler.multipliers);
    if n_dual > 0 {
        let t = dual.forward_encoded(&item.z, enc, primal, Mode::Train, rng)?;
        for _ in 0..n_dual {
            let l = rng.random_range(0..t.lambdas.len());
            out.push(Multipliers::projected(t.lambdas[l].clone()));
        }
    }
    for _ in 0..n_uniform {
        let v = (0..enc.n_cons)
            .map(|i| {
                let keep = rng.random::<f64>() < sampler.p_nonzero;
                let u = rng.random::<f64>() * sampler.uniform_max;
                let on = enc.family == Family::Miqp || enc.mask[i] > 0.0;
                if keep && on {
                    u
                } else {
                    0.0
                }
            })
            .collect();
        out.push(Multipliers::projected(v));
    }
    if n_da > 0 {
        let init = dual_init(enc, rng);
        let cfg = DaConfig {
            step: sampler.da_step,
            iterations: sampler.da_iterations,
            init: DaInit::Given(init),
        };
        let inner = match enc.family {
            Family::Miqp => InnerMinimizer::Analytic,
            Family::Power => InnerMinimizer::PrimalNet {
                net: primal,
                seed: rng.random(),
            },
        };
        let t = dual_ascent(&item.z, &cfg, inner)?;
        for _ in 0..n_da {
            let l = rng.random_range(0..t.lambdas.len());
            out.push(Multipliers::projected(t.lambdas[l].clone()));
        }
    }
    Ok(out)
}

/// Batch means of one training epoch.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochStats {
    pub loss: f64,
    pub objective: f64,
    pub residuals: Vec<f64>,
    pub steps: usize,
}

impl EpochStats {
    fn new(layers: usize) -> Self {
        Self {
            loss: 0.0,
            objective: 0.0,
            residuals: vec![0.0; layers],
            steps: 0,
        }
    }

    fn add(&mut self, e: &MetaEval) {
        self.loss += e.value;
        self.objective += e.objective;
        for (a, r) in self.residuals.iter_mut().zip(&e.residuals) {
            *a += r;
        }
        self.steps += 1;
    }

    fn finish(mut self) -> Self {
        let s = self.steps.max(1) as f64;
        self.loss /= s;
        self.objective /= s;
        self.residuals.iter_mut().for_each(|r| *r /= s);
        self
    }
}

/// One epoch of primal training: Adam on `θ_P`, projected ascent on `μ`.
#[allow(clippy::too_many_arguments)]
pub fn train_primal(
    primal: &mut PrimalNet,
    adam: &mut Adam,
    dual: &DualNet,
    mu: &mut [f64],
    cfg: &TrainConfig,
    data: &[Encoded],
    epoch: usize,
    rng: &mut Rng,
) -> Result<EpochStats, TrainError> {
    let mut stats = EpochStats::new(primal.config().layers);
    let mut order: Vec<usize> = (0..data.len()).collect();
    shuffle(&mut order, rng);
    for chunk in order.chunks(cfg.batch_primal) {
        let mut batch = Vec::with_capacity(chunk.len() * cfg.sampler.multipliers);
        for &i in chunk {
            let item = &data[i];
            for lambda in sample_multipliers(dual, primal, &cfg.sampler, item, rng)? {
                batch.push(PrimalSample { item, lambda });
            }
        }
        let e = meta_lagrangian_primal(primal, &batch, mu, cfg, rng.random())?;
        if !e.value.is_finite() || e.grads.iter().any(|g| !g.max_abs().is_finite()) {
            return Err(TrainError::NonFinite {
                role: "primal",
                epoch,
            });
        }
        adam.lr = cfg.lr_primal;
        adam.step(primal.net.params_mut(), &e.grads);
        if cfg.constrained {
            project_ascent(mu, cfg.meta_lr_primal, &e.residuals);
        }
        stats.add(&e);
    }
    Ok(stats.finish())
}

/// One epoch of dual training: Adam on `θ_D`, projected ascent on `ν`.
#[allow(clippy::too_many_arguments)]
pub fn train_dual(
    primal: &PrimalNet,
    dual: &mut DualNet,
    adam: &mut Adam,
    nu: &mut [f64],
    cfg: &TrainConfig,
    data: &[Encoded],
    epoch: usize,
    rng: &mut Rng,
) -> Result<EpochStats, TrainError> {
    let mut stats = EpochStats::new(dual.config().layers);
    let mut order: Vec<usize> = (0..data.len()).collect();
    shuffle(&mut order, rng);
    for chunk in order.chunks(cfg.batch_dual) {
        let batch: Vec<&Encoded> = chunk.iter().map(|&i| &data[i]).collect();
        let e = meta_lagrangian_dual(dual, primal, &batch, nu, cfg, rng.random())?;
        if !e.value.is_finite() || e.grads.iter().any(|g| !g.max_abs().is_finite()) {
            return Err(TrainError::NonFinite {
                role: "dual",
                epoch,
            });
        }
        adam.lr = cfg.lr_dual;
        adam.step(dual.net.params_mut(), &e.grads);
        if cfg.constrained {
            project_ascent(nu, cfg.meta_lr_dual, &e.residuals);
        }
        stats.add(&e);
    }
    Ok(stats.finish())
}

/// Mean violation of the recovered solutions in evaluation mode.
pub fn validation_violation(
    primal: &PrimalNet,
    dual: &DualNet,
    data: &[Encoded],
    seed: u64,
) -> Result<f64, TrainError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut r = rng::stream(seed, "unused", 0);
    for item in data {
        let t = dual.forward_encoded(&item.z, &item.enc, primal, Mode::Eval { seed }, &mut r)?;
        total += t.diagnostics.last().map_or(0.0, |d| d.violation_mean);
    }
    Ok(total / data.len() as f64)
}

/// One line of the training history.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistoryRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub role: Role,
    pub loss: f64,
    pub objective: f64,
    pub residual_mean: f64,
    pub residuals: Vec<f64>,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    /// Set on the last record of an outer iteration.
    pub val_violation: Option<f64>,
    pub saved: Option<bool>,
}

/// The primal and dual networks of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub primal: PrimalNet,
    pub dual: DualNet,
}

/// Everything needed to continue a run at an outer-iteration boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub cfg: TrainConfig,
    pub models: Models,
    pub adam_primal: Adam,
    pub adam_dual: Adam,
    pub meta: MetaMultipliers,
    /// Completed outer iterations.
    pub iteration: usize,
    pub epochs: usize,
    pub best_violation: Option<f64>,
    /// Last model that passed the validation gate, with its iteration.
    pub gated: Option<(Models, usize)>,
    pub history: Vec<HistoryRecord>,
}

impl TrainerState {
    pub fn new(cfg: TrainConfig, models: Models) -> Result<Self, TrainError> {
        cfg.validate()?;
        if models.primal.config().family != models.dual.config().family {
            return Err(TrainError::Config(
                "primal and dual networks belong to different families",
            ));
        }
        let meta =
            MetaMultipliers::zeros(models.primal.config().layers, models.dual.config().layers);
        Ok(Self {
            adam_primal: Adam::new(cfg.lr_primal, models.primal.net.params()),
            adam_dual: Adam::new(cfg.lr_dual, models.dual.net.params()),
            cfg,
            models,
            meta,
            iteration: 0,
            epochs: 0,
            best_violation: None,
            gated: None,
            history: Vec::new(),
        })
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.cfg.iterations
    }

    /// Gated-best model if any iteration passed the gate, else the current one.
    pub fn best(&self) -> &Models {
        self.gated.as_ref().map_or(&self.models, |(m, _)| m)
    }

    /// Run one outer iteration. On failure `self` is left unchanged.
    pub fn step(&mut self, data: &TrainData) -> Result<(), TrainError> {
        let mut next = self.clone();
        next.advance(data)?;
        *self = next;
        Ok(())
    }

    fn advance(&mut self, data: &TrainData) -> Result<(), TrainError> {
        let cfg = self.cfg.clone();
        let it = self.iteration;
        let mut r = rng::stream(cfg.seed, "outer", it as u64);
        if !data.primal.is_empty() {
            for _ in 0..cfg.primal_epochs {
                let s = train_primal(
                    &mut self.models.primal,
                    &mut self.adam_primal,
                    &self.models.dual,
                    &mut self.meta.mu,
                    &cfg,
                    &data.primal,
                    self.epochs,
                    &mut r,
                )?;
                self.record(Role::Primal, s);
            }
        }
        if !data.dual.is_empty() {
            for _ in 0..cfg.dual_epochs {
                let s = train_dual(
                    &self.models.primal,
                    &mut self.models.dual,
                    &mut self.adam_dual,
                    &mut self.meta.nu,
                    &cfg,
                    &data.dual,
                    self.epochs,
                    &mut r,
                )?;
                self.record(Role::Dual, s);
            }
        }
        let v = validation_violation(
            &self.models.primal,
            &self.models.dual,
            &data.val,
            cfg.eval_seed,
        )?;
        if !v.is_finite() {
            return Err(TrainError::NonFinite {
                role: "validation",
                epoch: self.epochs,
            });
        }
        let saved = self.best_violation.is_none_or(|b| v <= cfg.gate * b);
        if saved {
            self.gated = Some((self.models.clone(), it));
        }
        self.best_violation = Some(self.best_violation.map_or(v, |b| b.min(v)));
        if let Some(last) = self.history.last_mut() {
            last.val_violation = Some(v);
            last.saved = Some(saved);
        }
        self.iteration += 1;
        Ok(())
    }

    fn record(&mut self, role: Role, s: EpochStats) {
        let residual_mean = s.residuals.iter().sum::<f64>() / s.residuals.len().max(1) as f64;
        self.history.push(HistoryRecord {
            iteration: self.iteration,
            epoch: self.epochs,
            role,
            loss: s.loss,
            objective: s.objective,
            residual_mean,
            residuals: s.residuals,
            mu: self.meta.mu.clone(),
            nu: self.meta.nu.clone(),
            val_violation: None,
            saved: None,
        });
        self.epochs += 1;
    }
}

/// Algorithm of alternating primal and dual epochs, run to `cfg.iterations`.
pub fn joint_train(
    cfg: TrainConfig,
    models: Models,
    data: &TrainData,
) -> Result<TrainerState, Aborted> {
    let state = TrainerState::new(cfg, models).map_err(|source| Aborted {
        source,
        last_good: None,
    })?;
    resume(state, data)
}

/// Continue a run until its iteration budget is spent.
pub fn resume(mut state: TrainerState, data: &TrainData) -> Result<TrainerState, Aborted> {
    while !state.is_done() {
        if let Err(source) = state.step(data) {
            return Err(Aborted {
                source,
                last_good: Some(Box::new(state)),
            });
        }
    }
    Ok(state)
}
