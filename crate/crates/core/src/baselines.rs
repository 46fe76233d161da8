//! Reference methods: dual ascent with a pluggable inner minimizer, its
//! state-augmented variant, a supervised graph network, and full power.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use thiserror::Error;

use crate::linalg::{spectral_norm, Matrix};
use crate::miqp::{analytic_minimizer, build_gso, MiqpError};
use crate::nets::{dual_init, GraphEncoding, Mode, NetError, PrimalNet};
use crate::optim::{zeros_like, Adam};
use crate::power::{NetworkInstance, PowerVector};
use crate::problem::{
    check_len, Axis, ConstrainedProblem, Family, Multipliers, ProblemError, ProblemInstance,
};
use crate::rng::{self, Rng};
use crate::tape::{Activation, Tape, Var};
use crate::trajectory::DualTrajectory;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InnerError {
    #[error(transparent)]
    Miqp(#[from] MiqpError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("{0}")]
    Unsupported(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("inner minimizer failed at iteration {iteration}: {source}")]
    Inner {
        iteration: usize,
        #[source]
        source: InnerError,
    },
    #[error("invalid baseline configuration: {0}")]
    Config(&'static str),
    #[error("training produced a non-finite loss at epoch {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Initial multiplier of a dual-ascent run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DaInit {
    Zero,
    /// The family's dual-network initialization drawn from `seed`.
    FamilyDefault {
        seed: u64,
    },
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DaConfig {
    pub step: f64,
    pub iterations: usize,
    pub init: DaInit,
}

impl DaConfig {
    /// `η = 0.01` from `λ₀ = 0`.
    pub fn miqp(iterations: usize) -> Self {
        Self {
            step: 0.01,
            iterations,
            init: DaInit::Zero,
        }
    }

    /// `η = 0.05` for 600 iterations from the power initialization.
    pub fn state_augmented(seed: u64) -> Self {
        Self {
            step: 0.05,
            iterations: 600,
            init: DaInit::FamilyDefault { seed },
        }
    }

    fn validate(&self) -> Result<(), BaselineError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(BaselineError::Config("step size must be positive"));
        }
        if self.iterations == 0 {
            return Err(BaselineError::Config("iteration budget must be at least 1"));
        }
        Ok(())
    }
}

/// Minimizer of `L(·, λ; z)` used inside dual ascent.
#[derive(Debug, Clone, Copy)]
pub enum InnerMinimizer<'a> {
    /// `x*(λ) = −P⁻¹(q + Aᵀλ)` (QP family).
    Analytic,
    /// A trained primal network evaluated with a fixed seed.
    PrimalNet { net: &'a PrimalNet, seed: u64 },
    /// Exhaustive search over `points` levels per user in `[0, P_max]`
    /// (power family, at most three users).
    Grid { points: usize },
}

/// `λ_{l+1} = [λ_l + η f(x_l)]₊` with `x_l` from the inner minimizer.
pub fn dual_ascent(
    z: &ProblemInstance,
    cfg: &DaConfig,
    inner: InnerMinimizer<'_>,
) -> Result<DualTrajectory, BaselineError> {
    match inner {
        InnerMinimizer::Analytic => {
            let qp = z
                .as_qp()
                .ok_or(InnerError::Unsupported(
                    "analytic minimizer needs a QP instance",
                ))
                .map_err(|source| BaselineError::Inner {
                    iteration: 0,
                    source,
                })?;
            dual_ascent_with(z, cfg, &mut |_, lam| {
                Ok(analytic_minimizer(&Multipliers::projected(lam.to_vec()), qp)?.into_vec())
            })
        }
        InnerMinimizer::PrimalNet { net, seed } => {
            let enc = GraphEncoding::new(z);
            let mut r = rng::stream(seed, "unused", 0);
            dual_ascent_with(z, cfg, &mut |_, lam| {
                let t = net.forward_encoded(
                    &Multipliers::projected(lam.to_vec()),
                    z,
                    &enc,
                    Mode::Eval { seed },
                    &mut r,
                )?;
                Ok(t.last().to_vec())
            })
        }
        InnerMinimizer::Grid { points } => {
            let net = z
                .as_power()
                .filter(|n| n.n() <= 3)
                .ok_or(InnerError::Unsupported(
                    "grid search needs a power network with at most 3 users",
                ))
                .map_err(|source| BaselineError::Inner {
                    iteration: 0,
                    source,
                })?;
            if points < 2 {
                return Err(BaselineError::Config(
                    "grid needs at least two points per axis",
                ));
            }
            dual_ascent_with(z, cfg, &mut |_, lam| Ok(grid_minimizer(net, lam, points)))
        }
    }
}

/// Minimizer of `L(·, λ)` over a uniform grid of the power box.
pub fn grid_minimizer(net: &NetworkInstance, lambda: &[f64], points: usize) -> Vec<f64> {
    let n = net.n();
    let levels: Vec<f64> = (0..points)
        .map(|k| net.p_max() * k as f64 / (points - 1) as f64)
        .collect();
    let mut idx = vec![0usize; n];
    let mut best = (f64::INFINITY, vec![0.0; n]);
    loop {
        let p: Vec<f64> = idx.iter().map(|&k| levels[k]).collect();
        let l = net.lagrangian_raw(&p, lambda);
        if l < best.0 {
            best = (l, p);
        }
        let mut d = 0;
        while d < n {
            idx[d] += 1;
            if idx[d] < points {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == n {
            break;
        }
    }
    best.1
}

/// Dual ascent with an arbitrary inner minimizer `(iteration, λ) ↦ x`.
pub fn dual_ascent_with(
    z: &ProblemInstance,
    cfg: &DaConfig,
    minimize: &mut dyn FnMut(usize, &[f64]) -> Result<Vec<f64>, InnerError>,
) -> Result<DualTrajectory, BaselineError> {
    cfg.validate()?;
    let m = z.n_cons();
    let mut lam = match &cfg.init {
        DaInit::Zero => vec![0.0; m],
        DaInit::FamilyDefault { seed } => {
            let enc = GraphEncoding::new(z);
            dual_init(&enc, &mut rng::stream(*seed, "dual-init", 0))
        }
        DaInit::Given(v) => {
            check_len(Axis::Multiplier, m, v.len())?;
            Multipliers::new(v.clone())?.into_vec()
        }
    };
    let oracle = z.oracle();
    let mut lambdas = Vec::with_capacity(cfg.iterations + 1);
    let mut primals = Vec::with_capacity(cfg.iterations + 1);
    for it in 0..=cfg.iterations {
        let x = minimize(it, &lam).map_err(|source| BaselineError::Inner {
            iteration: it,
            source,
        })?;
        check_len(Axis::Primal, z.n_vars(), x.len())?;
        let next = if it < cfg.iterations {
            let f = oracle.constraints_raw(&x);
            Some(
                lam.iter()
                    .zip(&f)
                    .map(|(l, f)| (l + cfg.step * f).max(0.0))
                    .collect(),
            )
        } else {
            None
        };
        lambdas.push(core::mem::take(&mut lam));
        primals.push(x);
        match next {
            Some(n) => lam = n,
            None => break,
        }
    }
    Ok(DualTrajectory::new(
        oracle,
        lambdas,
        primals,
        cfg.iterations,
    ))
}

/// Dual dynamics with a trained primal network as the inner minimizer.
pub fn state_augmented_da(
    z: &ProblemInstance,
    primal: &PrimalNet,
    cfg: &DaConfig,
    seed: u64,
) -> Result<DualTrajectory, BaselineError> {
    dual_ascent(z, cfg, InnerMinimizer::PrimalNet { net: primal, seed })
}

/// Every user transmits at `P_max`.
pub fn full_power(net: &NetworkInstance) -> PowerVector {
    PowerVector::full(net.n(), net.p_max())
}

/// Supervised graph network architecture and training schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NaiveConfig {
    pub family: Family,
    pub layers: usize,
    pub width: usize,
    pub taps: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl NaiveConfig {
    /// 42 relu graph layers with input `[q; b]`.
    pub fn miqp(width: usize) -> Self {
        Self {
            family: Family::Miqp,
            layers: 42,
            width,
            taps: 1,
            lr: 1e-3,
            epochs: 50,
            batch: 8,
            seed: 0,
        }
    }

    /// 12 relu graph layers predicting the power allocation.
    pub fn power(width: usize) -> Self {
        Self {
            family: Family::Power,
            layers: 12,
            width,
            taps: 2,
            lr: 1e-3,
            epochs: 50,
            batch: 8,
            seed: 0,
        }
    }

    fn input_width(&self) -> usize {
        match self.family {
            Family::Miqp => 1,
            Family::Power => 2,
        }
    }
}

/// Inputs of the supervised network for one instance.
#[derive(Debug, Clone)]
pub struct NaiveEncoding {
    gso: Matrix,
    features: Matrix,
    n: usize,
    scale: f64,
}

impl NaiveEncoding {
    pub fn new(z: &ProblemInstance) -> Self {
        match z {
            ProblemInstance::Qp(qp) => {
                let s = build_gso(qp);
                let nrm = spectral_norm(&s);
                let mut col = qp.q().to_vec();
                col.extend_from_slice(qp.b());
                Self {
                    gso: s.scale(1.0 / nrm),
                    features: Matrix::column(&col),
                    n: qp.n(),
                    scale: 1.0,
                }
            }
            ProblemInstance::Power(net) => {
                let s = net.gso();
                let floor = net.rate_floor();
                let features =
                    Matrix::from_fn(net.n(), 2, |i, j| if j == 0 { floor[i] } else { s[(i, i)] });
                Self {
                    gso: s,
                    features,
                    n: net.n(),
                    scale: net.p_max(),
                }
            }
        }
    }
}

/// Deep relu graph network regressing the solution directly.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveGnn {
    cfg: NaiveConfig,
    params: Vec<Matrix>,
}

impl NaiveGnn {
    pub fn new(cfg: NaiveConfig) -> Result<Self, BaselineError> {
        if cfg.layers == 0 || cfg.width == 0 {
            return Err(BaselineError::Config(
                "naive network needs layers and width",
            ));
        }
        let mut r = rng::stream(cfg.seed, "naive-init", 0);
        let mut params = Vec::new();
        for (_, (fi, fo)) in naive_layout(&cfg) {
            let bound = if fo == 1 && fi == cfg.width {
                libm::sqrt(3.0 / fi as f64)
            } else {
                libm::sqrt(6.0 / fi as f64 / (cfg.taps + 1) as f64)
            };
            params.push(if (fi, fo) == (1, 1) {
                Matrix::zeros(1, 1)
            } else {
                Matrix::from_fn(fi, fo, |_, _| r.random_range(-bound..=bound))
            });
        }
        Ok(Self { cfg, params })
    }

    pub fn from_params(cfg: NaiveConfig, params: Vec<Matrix>) -> Result<Self, BaselineError> {
        let lay = naive_layout(&cfg);
        if lay.len() != params.len() || lay.iter().zip(&params).any(|((_, s), p)| p.shape() != *s) {
            return Err(BaselineError::Config(
                "parameter tensors do not match the architecture",
            ));
        }
        Ok(Self { cfg, params })
    }

    pub fn config(&self) -> &NaiveConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn param_names(&self) -> Vec<String> {
        naive_layout(&self.cfg)
            .into_iter()
            .map(|(n, _)| n)
            .collect()
    }

    fn build<'a>(&self, tape: &mut Tape<'a>, enc: &'a NaiveEncoding, trainable: bool) -> Var {
        let var = |tape: &mut Tape<'a>, i: usize| {
            if trainable {
                tape.param(i, self.params[i].clone())
            } else {
                tape.constant(self.params[i].clone())
            }
        };
        let nt = self.cfg.taps + 1;
        let mut x = tape.constant(enc.features.clone());
        for k in 0..self.cfg.layers {
            let mut z = x;
            let mut acc: Option<Var> = None;
            for h in 0..nt {
                if h > 0 {
                    z = tape.shift(&enc.gso, z);
                }
                let th = var(tape, k * nt + h);
                let y = tape.matmul(z, th);
                acc = Some(match acc {
                    Some(a) => tape.add(a, y),
                    None => y,
                });
            }
            x = tape.activation(acc.expect("taps"), Activation::Relu);
        }
        let base = self.cfg.layers * nt;
        let w = var(tape, base);
        let c = var(tape, base + 1);
        let y = tape.matmul(x, w);
        let y = tape.add_scalar(y, c);
        let y = tape.slice_rows(y, 0, enc.n);
        match self.cfg.family {
            Family::Miqp => y,
            Family::Power => tape.activation(y, Activation::Sigmoid),
        }
    }

    /// Prediction in native units.
    pub fn predict(&self, z: &ProblemInstance) -> Result<Vec<f64>, BaselineError> {
        if z.family() != self.cfg.family {
            return Err(BaselineError::Config(
                "instance family does not match the network",
            ));
        }
        let enc = NaiveEncoding::new(z);
        let mut tape = Tape::new();
        let y = self.build(&mut tape, &enc, false);
        Ok(tape.column(y).iter().map(|v| v * enc.scale).collect())
    }

    /// Mean squared error in normalized units over a labeled set.
    pub fn loss(&self, encs: &[NaiveEncoding], labels: &[Vec<f64>]) -> f64 {
        let total: f64 = encs
            .iter()
            .zip(labels)
            .map(|(enc, t)| {
                let mut tape = Tape::new();
                let y = self.build(&mut tape, enc, false);
                tape.column(y)
                    .iter()
                    .zip(t)
                    .map(|(y, t)| {
                        let d = y - t / enc.scale;
                        d * d
                    })
                    .sum::<f64>()
                    / enc.n as f64
            })
            .sum();
        total / encs.len().max(1) as f64
    }
}

fn naive_layout(cfg: &NaiveConfig) -> Vec<(String, (usize, usize))> {
    let mut out = Vec::new();
    for k in 0..cfg.layers {
        let fi = if k == 0 { cfg.input_width() } else { cfg.width };
        for h in 0..=cfg.taps {
            out.push((format!("naive.layer{k}.tap{h}"), (fi, cfg.width)));
        }
    }
    out.push((String::from("naive.head.w"), (cfg.width, 1)));
    out.push((String::from("naive.head.c"), (1, 1)));
    out
}

/// Fit the supervised network to `labels` (native units) with Adam on the
/// per-coordinate squared error. Returns the model and the per-epoch loss.
pub fn naive_gnn_train(
    data: &[ProblemInstance],
    labels: &[Vec<f64>],
    cfg: NaiveConfig,
) -> Result<(NaiveGnn, Vec<f64>), BaselineError> {
    if data.len() != labels.len() {
        return Err(BaselineError::Config("one label per instance is required"));
    }
    if data.iter().any(|z| z.family() != cfg.family) {
        return Err(BaselineError::Config(
            "instance family does not match the network",
        ));
    }
    for (z, t) in data.iter().zip(labels) {
        check_len(Axis::Primal, z.n_vars(), t.len())?;
    }
    let mut model = NaiveGnn::new(cfg)?;
    let encs: Vec<NaiveEncoding> = data.iter().map(NaiveEncoding::new).collect();
    let targets: Vec<Matrix> = encs
        .iter()
        .zip(labels)
        .map(|(e, t)| Matrix::column(&t.iter().map(|v| -v / e.scale).collect::<Vec<_>>()))
        .collect();
    let mut adam = Adam::new(cfg.lr, &model.params);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let batch = cfg.batch.max(1);
    for epoch in 0..cfg.epochs {
        let mut r: Rng = rng::stream(cfg.seed, "naive-shuffle", epoch as u64);
        shuffle(&mut order, &mut r);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let mut grads = zeros_like(&model.params);
            for &i in chunk {
                let mut tape = Tape::new();
                let y = model.build(&mut tape, &encs[i], true);
                let e = tape.offset(y, &targets[i]);
                let l = tape.mean_square(e);
                epoch_loss += tape.scalar(l);
                tape.backward(&[(l, 1.0 / chunk.len() as f64)], &mut grads);
            }
            adam.step(&mut model.params, &grads);
        }
        let mean = epoch_loss / data.len().max(1) as f64;
        if !mean.is_finite() {
            return Err(BaselineError::NonFinite(epoch));
        }
        history.push(mean);
    }
    Ok((model, history))
}

/// Fisher-Yates shuffle.
pub(crate) fn shuffle(v: &mut [usize], r: &mut Rng) {
    for i in (1..v.len()).rev() {
        let j = r.random_range(0..=i);
        v.swap(i, j);
    }
}

/// Boxed error for callers that collect heterogeneous failures.
pub type DynError = Box<dyn core::error::Error + Send + Sync>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::miqp::{generate_instance, reference_solve, relax, RelaxedQp};
    use crate::nets::NetConfig;
    use crate::power::{generate_network, GeometryConfig, RadioParams};

    fn scalar_qp() -> ProblemInstance {
        // min x² s.t. 1 − x ≤ 0: x* = 1, λ* = 2
        RelaxedQp::new(
            Matrix::from_vec(1, 1, vec![2.0]).unwrap(),
            vec![0.0],
            Matrix::from_vec(1, 1, vec![-1.0]).unwrap(),
            vec![-1.0],
            1,
            vec![],
        )
        .unwrap()
        .into()
    }

    #[test]
    fn converges_on_scalar_kkt_example() {
        let z = scalar_qp();
        let t = dual_ascent(
            &z,
            &DaConfig {
                step: 0.5,
                iterations: 200,
                init: DaInit::Zero,
            },
            InnerMinimizer::Analytic,
        )
        .unwrap();
        assert!((t.recovered()[0] - 1.0).abs() < 1e-4);
        assert!((t.final_lambda()[0] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn zero_start_grows_only_on_violated_rows() {
        let z: ProblemInstance = RelaxedQp::new(
            Matrix::identity(2).scale(2.0),
            vec![2.0, -2.0],
            Matrix::identity(2),
            vec![0.5, 0.5],
            2,
            vec![],
        )
        .unwrap()
        .into();
        // x*(0) = (−1, 1): row 0 slack, row 1 violated
        let t = dual_ascent(
            &z,
            &DaConfig {
                step: 0.1,
                iterations: 1,
                init: DaInit::Zero,
            },
            InnerMinimizer::Analytic,
        )
        .unwrap();
        assert_eq!(t.lambdas[1][0], 0.0);
        assert!((t.lambdas[1][1] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn projection_keeps_iterates_nonnegative_and_dual_monotone() {
        let z: ProblemInstance = relax(&generate_instance(8, 4, 2, 5).unwrap())
            .unwrap()
            .into();
        let t = dual_ascent(
            &z,
            &DaConfig {
                step: 1e-4,
                iterations: 300,
                init: DaInit::Zero,
            },
            InnerMinimizer::Analytic,
        )
        .unwrap();
        assert!(t.lambdas.iter().flatten().all(|v| *v >= 0.0));
        for w in t.diagnostics.windows(2) {
            assert!(w[1].lagrangian >= w[0].lagrangian - 1e-9);
        }
    }

    #[test]
    fn inner_errors_carry_the_iteration() {
        let z: ProblemInstance = generate_network(
            2,
            1.0,
            0,
            &GeometryConfig::default(),
            &RadioParams::default(),
        )
        .unwrap()
        .into();
        let err = dual_ascent(&z, &DaConfig::miqp(5), InnerMinimizer::Analytic).unwrap_err();
        assert!(matches!(err, BaselineError::Inner { iteration: 0, .. }));
        let mut calls = 0;
        let err = dual_ascent_with(&z, &DaConfig::miqp(5), &mut |it, _| {
            calls += 1;
            if it == 3 {
                Err(InnerError::Unsupported("boom"))
            } else {
                Ok(vec![0.0; 2])
            }
        })
        .unwrap_err();
        assert!(matches!(err, BaselineError::Inner { iteration: 3, .. }));
        assert_eq!(calls, 4);
    }

    #[test]
    fn analytic_and_callback_paths_agree() {
        let z: ProblemInstance = relax(&generate_instance(6, 3, 1, 2).unwrap())
            .unwrap()
            .into();
        let cfg = DaConfig::miqp(50);
        let a = dual_ascent(&z, &cfg, InnerMinimizer::Analytic).unwrap();
        let qp = z.as_qp().unwrap();
        let b = dual_ascent_with(&z, &cfg, &mut |_, l| {
            Ok(analytic_minimizer(&Multipliers::new(l.to_vec()).unwrap(), qp)?.into_vec())
        })
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn untrained_zero_primal_gives_constant_power() {
        let z: ProblemInstance = generate_network(
            5,
            0.6,
            3,
            &GeometryConfig::density_matched(5),
            &RadioParams::default(),
        )
        .unwrap()
        .into();
        let mut p = PrimalNet::new(NetConfig::power(2, 1, 4), 0).unwrap();
        p.net
            .params_mut()
            .iter_mut()
            .for_each(|m| *m = Matrix::zeros(m.rows(), m.cols()));
        let t = state_augmented_da(
            &z,
            &p,
            &DaConfig {
                iterations: 20,
                ..DaConfig::state_augmented(1)
            },
            9,
        )
        .unwrap();
        let f0 = z.constraints(&t.primals[0]).unwrap();
        for l in 1..t.primals.len() {
            assert_eq!(t.primals[l], t.primals[0]);
            for i in 0..5 {
                let expected = (t.lambdas[l - 1][i] + 0.05 * f0[i]).max(0.0);
                assert_eq!(t.lambdas[l][i], expected);
            }
        }
    }

    #[test]
    fn grid_inner_on_two_users() {
        let z: ProblemInstance = generate_network(
            2,
            0.5,
            4,
            &GeometryConfig::default(),
            &RadioParams::default(),
        )
        .unwrap()
        .into();
        let t = dual_ascent(
            &z,
            &DaConfig::state_augmented(0),
            InnerMinimizer::Grid { points: 11 },
        )
        .unwrap();
        assert!(t.lambdas.iter().flatten().all(|v| *v >= 0.0));
        assert_eq!(t.layers(), 600);
    }

    #[test]
    fn full_power_is_p_max() {
        let net = generate_network(
            7,
            0.5,
            1,
            &GeometryConfig::default(),
            &RadioParams::default(),
        )
        .unwrap();
        let p = full_power(&net);
        assert!(p.as_slice().iter().all(|v| *v == net.p_max()));
        let z: ProblemInstance = net.into();
        assert!(z.objective(p.as_slice()).unwrap().is_finite());
    }

    #[test]
    fn architectures_match_full_depths() {
        assert_eq!(NaiveConfig::miqp(32).layers, 42);
        assert_eq!(NaiveConfig::power(32).layers, 12);
    }

    #[test]
    fn naive_overfits_five_instances() {
        let data: Vec<ProblemInstance> = (0..5)
            .map(|s| {
                relax(&generate_instance(6, 3, 2, s).unwrap())
                    .unwrap()
                    .into()
            })
            .collect();
        let labels: Vec<Vec<f64>> = data
            .iter()
            .map(|z| reference_solve(z.as_qp().unwrap()).unwrap().x)
            .collect();
        let cfg = NaiveConfig {
            layers: 3,
            width: 32,
            lr: 3e-3,
            epochs: 1500,
            batch: 5,
            ..NaiveConfig::miqp(32)
        };
        let (model, hist) = naive_gnn_train(&data, &labels, cfg).unwrap();
        let var: f64 = labels.iter().flatten().map(|v| v * v).sum::<f64>() / 30.0;
        assert!(
            hist[hist.len() - 1] < 1e-3 * var,
            "final loss {} vs label power {var}",
            hist[hist.len() - 1]
        );
        let encs: Vec<NaiveEncoding> = data.iter().map(NaiveEncoding::new).collect();
        assert!((model.loss(&encs, &labels) - hist[hist.len() - 1]).abs() < 1e-2 * var);
    }
}
