//! Primal and dual unrolled graph networks.
//!
//! An unrolled layer is a block of `T` graph sub-layers
//! `X_ℓ = φ(Σ_{h=0}^{K_h} S^h X_{ℓ−1} Θ_{ℓ,h})` followed by a per-node linear
//! head `X_T W + c`. Node features are rebuilt from the current estimates at
//! every layer:
//!
//! * QP family: variable rows `[x, q]`, constraint rows `[λ, b]`, with the
//!   primal head reading the variable rows and the dual head the constraint
//!   rows.
//! * Power family: one row per user, `[p/P_max, λ, r_min·1[i∈I]]`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::miqp::build_gso;
use crate::problem::{
    check_len, Axis, Family, Multipliers, PrimalPoint, ProblemError, ProblemInstance,
};
use crate::rng::{self, Rng};
use crate::tape::{Activation, Tape, Var};
use crate::trajectory::{DualTrajectory, PrimalTrajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("network is configured for the {expected} family but the instance is {found}")]
    Family { expected: Family, found: Family },
    #[error("invalid network configuration: {0}")]
    Config(&'static str),
    #[error("feature matrix has {found} rows, shift operator has {expected} nodes")]
    Nodes { expected: usize, found: usize },
    #[error("parameter tensor {name} has shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Role {
    Primal,
    Dual,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Primal => "primal",
            Role::Dual => "dual",
        }
    }
}

/// Standard deviation `σ₀·ρ^k` of the noise added at layer `k ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseSchedule {
    pub sigma0: f64,
    pub rho: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            sigma0: 0.05,
            rho: 0.7,
        }
    }
}

impl NoiseSchedule {
    pub fn std(&self, layer: usize) -> f64 {
        self.sigma0 * libm::pow(self.rho, layer as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetConfig {
    pub family: Family,
    /// Unrolled layers `K` (primal) or `L` (dual).
    pub layers: usize,
    /// Graph sub-layers `T` per unrolled layer.
    pub sub_layers: usize,
    /// Highest filter tap `K_h`; taps run over `h = 0..=K_h`.
    pub taps: usize,
    /// Hidden width `F`.
    pub width: usize,
    pub activation: Activation,
    pub noise: NoiseSchedule,
}

impl NetConfig {
    /// tanh blocks with one shift tap.
    pub fn miqp(layers: usize, sub_layers: usize, width: usize) -> Self {
        Self {
            family: Family::Miqp,
            layers,
            sub_layers,
            taps: 1,
            width,
            activation: Activation::Tanh,
            noise: NoiseSchedule::default(),
        }
    }

    /// Leaky-relu blocks with two shift taps.
    pub fn power(layers: usize, sub_layers: usize, width: usize) -> Self {
        Self {
            family: Family::Power,
            layers,
            sub_layers,
            taps: 2,
            width,
            activation: Activation::leaky(0.01),
            noise: NoiseSchedule::default(),
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.layers == 0 {
            return Err(NetError::Config("at least one unrolled layer is required"));
        }
        if self.sub_layers == 0 {
            return Err(NetError::Config("at least one graph sub-layer is required"));
        }
        if self.width == 0 {
            return Err(NetError::Config("feature width must be positive"));
        }
        if !(self.noise.sigma0 >= 0.0 && self.noise.rho >= 0.0) {
            return Err(NetError::Config("noise schedule must be nonnegative"));
        }
        Ok(())
    }

    /// Node-feature width `F₀` of the network input.
    pub fn input_width(&self) -> usize {
        match self.family {
            Family::Miqp => 2,
            Family::Power => 3,
        }
    }

    fn per_layer(&self) -> usize {
        self.sub_layers * (self.taps + 1) + 2
    }

    pub fn param_count(&self) -> usize {
        self.layers * self.per_layer()
    }
}

/// Filter taps of one graph block, `taps[ℓ][h] = Θ_{ℓ,h}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBlockParams {
    pub taps: Vec<Vec<Matrix>>,
    pub activation: Activation,
}

impl GraphBlockParams {
    fn validate(&self, input_width: usize) -> Result<(), NetError> {
        let mut width = input_width;
        for (l, sub) in self.taps.iter().enumerate() {
            if sub.is_empty() {
                return Err(NetError::Config("each sub-layer needs at least one tap"));
            }
            let out = sub[0].cols();
            for (h, th) in sub.iter().enumerate() {
                if th.shape() != (width, out) {
                    return Err(NetError::Shape {
                        name: format!("sub{l}.tap{h}"),
                        expected: (width, out),
                        found: th.shape(),
                    });
                }
            }
            width = out;
        }
        Ok(())
    }
}

fn block_on_tape<'a>(
    tape: &mut Tape<'a>,
    s: &'a Matrix,
    x0: Var,
    taps: impl Fn(&mut Tape<'a>, usize, usize) -> Var,
    sub_layers: usize,
    n_taps: usize,
    act: Activation,
) -> Var {
    let mut x = x0;
    for l in 0..sub_layers {
        let mut z = x;
        let mut acc: Option<Var> = None;
        for h in 0..n_taps {
            if h > 0 {
                z = tape.shift(s, z);
            }
            let th = taps(tape, l, h);
            let y = tape.matmul(z, th);
            acc = Some(match acc {
                Some(a) => tape.add(a, y),
                None => y,
            });
        }
        x = tape.activation(acc.expect("at least one tap"), act);
    }
    x
}

/// `X_T` of a graph block applied to `X₀` with shift operator `S`.
pub fn graph_block(x0: &Matrix, s: &Matrix, params: &GraphBlockParams) -> Result<Matrix, NetError> {
    if s.rows() != s.cols() || s.rows() != x0.rows() {
        return Err(NetError::Nodes {
            expected: s.rows(),
            found: x0.rows(),
        });
    }
    params.validate(x0.cols())?;
    if params.taps.is_empty() {
        return Ok(x0.clone());
    }
    let n_taps = params.taps[0].len();
    if params.taps.iter().any(|t| t.len() != n_taps) {
        return Err(NetError::Config("sub-layers must share the tap count"));
    }
    let mut tape = Tape::new();
    let x = tape.constant(x0.clone());
    let out = block_on_tape(
        &mut tape,
        s,
        x,
        |t, l, h| t.constant(params.taps[l][h].clone()),
        params.taps.len(),
        n_taps,
        params.activation,
    );
    Ok(tape.value(out).clone())
}

/// Per-instance graph data shared by every forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEncoding {
    pub family: Family,
    pub gso: Matrix,
    pub n_vars: usize,
    pub n_cons: usize,
    /// `q` (QP) or the rate floor `r_min·1[i∈I]` (power).
    pub var_features: Vec<f64>,
    /// `b` (QP); empty for power.
    pub con_features: Vec<f64>,
    /// `1[i∈I]` (power); empty for QP.
    pub mask: Vec<f64>,
    /// Unit of the primal variable: 1 (QP) or `P_max` (power).
    pub scale: f64,
}

impl GraphEncoding {
    pub fn new(z: &ProblemInstance) -> Self {
        match z {
            ProblemInstance::Qp(qp) => Self {
                family: Family::Miqp,
                gso: build_gso(qp),
                n_vars: qp.n(),
                n_cons: qp.rows(),
                var_features: qp.q().to_vec(),
                con_features: qp.b().to_vec(),
                mask: Vec::new(),
                scale: 1.0,
            },
            ProblemInstance::Power(net) => Self {
                family: Family::Power,
                gso: net.gso(),
                n_vars: net.n(),
                n_cons: net.n(),
                var_features: net.rate_floor(),
                con_features: Vec::new(),
                mask: net
                    .mask()
                    .iter()
                    .map(|&m| if m { 1.0 } else { 0.0 })
                    .collect(),
                scale: net.p_max(),
            },
        }
    }

    pub fn nodes(&self) -> usize {
        self.gso.rows()
    }
}

/// Forward-pass mode. Noise is drawn only in training; evaluation draws the
/// initial estimates from a stream fixed by `seed`, identically for every
/// query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval { seed: u64 },
}

/// Sources of randomness inside one forward pass.
pub(crate) struct Draws<'r> {
    pub rng: &'r mut Rng,
    pub eval_seed: Option<u64>,
    pub primal_noise: bool,
    pub dual_noise: bool,
    /// Overrides every primal initial draw.
    pub fixed_primal_init: Option<Vec<f64>>,
}

impl Draws<'_> {
    fn init_rng(&mut self, name: &str) -> Option<Rng> {
        self.eval_seed.map(|s| rng::stream(s, name, 0))
    }

    pub fn primal_init(&mut self, enc: &GraphEncoding) -> Vec<f64> {
        if let Some(x0) = &self.fixed_primal_init {
            return x0.clone();
        }
        match self.init_rng("primal-init") {
            Some(mut r) => primal_init(enc, &mut r),
            None => primal_init(enc, self.rng),
        }
    }

    pub fn dual_init(&mut self, enc: &GraphEncoding) -> Vec<f64> {
        match self.init_rng("dual-init") {
            Some(mut r) => dual_init(enc, &mut r),
            None => dual_init(enc, self.rng),
        }
    }

    fn noise(&mut self, len: usize, std: f64) -> Matrix {
        Matrix::from_fn(len, 1, |_, _| {
            let z: f64 = StandardNormal.sample(&mut *self.rng);
            std * z
        })
    }
}

/// `x̃₀`: `Unif[−1,1]ⁿ` (QP) or `Unif[0,P_max]ⁿ` (power).
pub fn primal_init(enc: &GraphEncoding, rng: &mut Rng) -> Vec<f64> {
    match enc.family {
        Family::Miqp => (0..enc.n_vars)
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect(),
        Family::Power => (0..enc.n_vars)
            .map(|_| rng.random::<f64>() * enc.scale)
            .collect(),
    }
}

/// `λ₀`: uniform-sparse (QP: `Unif[0,1]` with probability 0.7, else 0) or
/// `Unif[0,10]` on the constrained users and 0 elsewhere (power).
pub fn dual_init(enc: &GraphEncoding, rng: &mut Rng) -> Vec<f64> {
    match enc.family {
        Family::Miqp => uniform_sparse(enc.n_cons, 0.7, rng),
        Family::Power => enc
            .mask
            .iter()
            .map(|&m| {
                let v = rng.random::<f64>() * 10.0;
                if m > 0.0 {
                    v
                } else {
                    0.0
                }
            })
            .collect(),
    }
}

/// Entries `Unif[0,1]` with probability `p_nonzero`, else 0.
pub fn uniform_sparse(len: usize, p_nonzero: f64, rng: &mut Rng) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let keep = rng.random::<f64>() < p_nonzero;
            let v = rng.random::<f64>();
            if keep {
                v
            } else {
                0.0
            }
        })
        .collect()
}

/// Layered parameters of one unrolled network.
#[derive(Debug, Clone, PartialEq)]
pub struct UnrolledNet {
    role: Role,
    cfg: NetConfig,
    params: Vec<Matrix>,
}

impl UnrolledNet {
    /// Glorot-uniform filters and small heads drawn from `seed`.
    pub fn new(role: Role, cfg: NetConfig, seed: u64) -> Result<Self, NetError> {
        cfg.validate()?;
        let mut r = rng::stream(seed, "init", role as u64);
        let mut params = Vec::with_capacity(cfg.param_count());
        for (_, shape, kind) in layout(&cfg) {
            let (fi, fo) = shape;
            let m = match kind {
                Kind::Tap => {
                    let bound = libm::sqrt(6.0 / (fi + fo) as f64 / (cfg.taps + 1) as f64);
                    Matrix::from_fn(fi, fo, |_, _| r.random_range(-bound..=bound))
                }
                Kind::HeadW => {
                    let bound = 0.1 * libm::sqrt(6.0 / (fi + 1) as f64);
                    Matrix::from_fn(fi, fo, |_, _| r.random_range(-bound..=bound))
                }
                Kind::HeadC => Matrix::zeros(1, 1),
            };
            params.push(m);
        }
        Ok(Self { role, cfg, params })
    }

    /// Load from tensors in [`UnrolledNet::param_names`] order.
    pub fn from_params(role: Role, cfg: NetConfig, params: Vec<Matrix>) -> Result<Self, NetError> {
        cfg.validate()?;
        let lay = layout(&cfg);
        if params.len() != lay.len() {
            return Err(NetError::Config("wrong number of parameter tensors"));
        }
        for ((name, shape, _), p) in lay.iter().zip(&params) {
            if p.shape() != *shape {
                return Err(NetError::Shape {
                    name: format!("{}.{}", role.as_str(), name),
                    expected: *shape,
                    found: p.shape(),
                });
            }
        }
        Ok(Self { role, cfg, params })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    /// `network.layer{k}.sub{l}.tap{h}`, `network.layer{k}.head.w`, `…head.c`.
    pub fn param_names(&self) -> Vec<String> {
        layout(&self.cfg)
            .into_iter()
            .map(|(n, _, _)| format!("{}.{}", self.role.as_str(), n))
            .collect()
    }

    /// Zero every head so that each layer passes its input through.
    pub fn zero_heads(&mut self) {
        let per = self.cfg.per_layer();
        for k in 0..self.cfg.layers {
            self.params[k * per + per - 2] = Matrix::zeros(self.cfg.width, 1);
            self.params[k * per + per - 1] = Matrix::zeros(1, 1);
        }
    }

    pub fn block_params(&self, layer: usize) -> GraphBlockParams {
        let per = self.cfg.per_layer();
        let nt = self.cfg.taps + 1;
        GraphBlockParams {
            taps: (0..self.cfg.sub_layers)
                .map(|l| {
                    (0..nt)
                        .map(|h| self.params[layer * per + l * nt + h].clone())
                        .collect()
                })
                .collect(),
            activation: self.cfg.activation,
        }
    }

    fn check_family(&self, enc: &GraphEncoding) -> Result<(), NetError> {
        if enc.family != self.cfg.family {
            return Err(NetError::Family {
                expected: self.cfg.family,
                found: enc.family,
            });
        }
        Ok(())
    }

    fn var<'a>(&self, tape: &mut Tape<'a>, idx: usize, trainable: bool) -> Var {
        if trainable {
            tape.param(idx, self.params[idx].clone())
        } else {
            tape.constant(self.params[idx].clone())
        }
    }

    /// Graph block and head of layer `k` (0-based); returns the per-node
    /// head output `X_T W + c`.
    fn layer_on_tape<'a>(
        &self,
        tape: &mut Tape<'a>,
        s: &'a Matrix,
        x0: Var,
        k: usize,
        trainable: bool,
    ) -> Var {
        let per = self.cfg.per_layer();
        let nt = self.cfg.taps + 1;
        let base = k * per;
        let x = block_on_tape(
            tape,
            s,
            x0,
            |t, l, h| self.var(t, base + l * nt + h, trainable),
            self.cfg.sub_layers,
            nt,
            self.cfg.activation,
        );
        let w = self.var(tape, base + per - 2, trainable);
        let c = self.var(tape, base + per - 1, trainable);
        let y = tape.matmul(x, w);
        tape.add_scalar(y, c)
    }
}

enum Kind {
    Tap,
    HeadW,
    HeadC,
}

fn layout(cfg: &NetConfig) -> Vec<(String, (usize, usize), Kind)> {
    let mut out = Vec::with_capacity(cfg.param_count());
    for k in 0..cfg.layers {
        for l in 0..cfg.sub_layers {
            let fi = if l == 0 { cfg.input_width() } else { cfg.width };
            for h in 0..=cfg.taps {
                out.push((
                    format!("layer{k}.sub{l}.tap{h}"),
                    (fi, cfg.width),
                    Kind::Tap,
                ));
            }
        }
        out.push((format!("layer{k}.head.w"), (cfg.width, 1), Kind::HeadW));
        out.push((format!("layer{k}.head.c"), (1, 1), Kind::HeadC));
    }
    out
}

/// Node-feature matrix for the current estimates.
fn features<'a>(tape: &mut Tape<'a>, enc: &GraphEncoding, x_unit: Var, lambda: Var) -> Var {
    match enc.family {
        Family::Miqp => {
            let q = tape.constant_column(&enc.var_features);
            let b = tape.constant_column(&enc.con_features);
            let top = tape.hconcat(&[x_unit, q]);
            let bottom = tape.hconcat(&[lambda, b]);
            tape.vconcat(&[top, bottom])
        }
        Family::Power => {
            let s = tape.constant_column(&enc.var_features);
            tape.hconcat(&[x_unit, lambda, s])
        }
    }
}

/// Unrolled approximation of `argmin_x L(x, λ; z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalNet {
    pub net: UnrolledNet,
}

impl PrimalNet {
    pub fn new(cfg: NetConfig, seed: u64) -> Result<Self, NetError> {
        Ok(Self {
            net: UnrolledNet::new(Role::Primal, cfg, seed)?,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.net.cfg
    }

    /// Record the `K` layers for a given `λ` node, starting from `x̃₀`
    /// (native units). Returns `x̃₀ … x̃_K` in native units.
    pub(crate) fn build<'a>(
        &self,
        tape: &mut Tape<'a>,
        enc: &'a GraphEncoding,
        lambda: Var,
        x0: &[f64],
        draws: &mut Draws<'_>,
        trainable: bool,
    ) -> Vec<Var> {
        let cfg = &self.net.cfg;
        let n = enc.n_vars;
        let mut out = Vec::with_capacity(cfg.layers + 1);
        match enc.family {
            Family::Miqp => {
                let mut x = tape.constant_column(x0);
                out.push(x);
                for k in 0..cfg.layers {
                    let feat = features(tape, enc, x, lambda);
                    let head = self.net.layer_on_tape(tape, &enc.gso, feat, k, trainable);
                    let mut d = tape.slice_rows(head, 0, n);
                    if draws.primal_noise {
                        let xi = draws.noise(n, cfg.noise.std(k + 1));
                        d = tape.offset(d, &xi);
                    }
                    x = tape.add(x, d);
                    out.push(x);
                }
            }
            Family::Power => {
                let u0: Vec<f64> = x0.iter().map(|p| p / enc.scale).collect();
                let mut u = tape.constant_column(&u0);
                out.push(tape.constant_column(x0));
                for k in 0..cfg.layers {
                    let feat = features(tape, enc, u, lambda);
                    let mut d = self.net.layer_on_tape(tape, &enc.gso, feat, k, trainable);
                    if draws.primal_noise {
                        let xi = draws.noise(n, cfg.noise.std(k + 1));
                        d = tape.offset(d, &xi);
                    }
                    let pre = tape.add(u, d);
                    u = tape.activation(pre, Activation::Sigmoid);
                    out.push(tape.scale(u, enc.scale));
                }
            }
        }
        out
    }

    /// `x̃₀ … x̃_K` for the multiplier `λ`.
    pub fn forward(
        &self,
        lambda: &Multipliers,
        z: &ProblemInstance,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<PrimalTrajectory, NetError> {
        self.forward_encoded(lambda, z, &GraphEncoding::new(z), mode, rng)
    }

    pub fn forward_encoded(
        &self,
        lambda: &Multipliers,
        z: &ProblemInstance,
        enc: &GraphEncoding,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<PrimalTrajectory, NetError> {
        self.net.check_family(enc)?;
        check_len(Axis::Multiplier, enc.n_cons, lambda.len())?;
        let mut draws = Draws {
            rng,
            eval_seed: eval_seed(mode),
            primal_noise: mode == Mode::Train,
            dual_noise: false,
            fixed_primal_init: None,
        };
        let x0 = draws.primal_init(enc);
        let mut tape = Tape::new();
        let l = tape.constant_column(lambda.as_slice());
        let xs = self.build(&mut tape, enc, l, &x0, &mut draws, false);
        let iterates = xs.iter().map(|v| tape.column(*v).to_vec()).collect();
        Ok(PrimalTrajectory::new(
            z.oracle(),
            lambda.as_slice().to_vec(),
            iterates,
        ))
    }

    /// Noise-free pass from an explicit `x̃₀`.
    pub fn forward_from_init(
        &self,
        lambda: &Multipliers,
        z: &ProblemInstance,
        enc: &GraphEncoding,
        x0: &[f64],
    ) -> Result<PrimalTrajectory, NetError> {
        self.net.check_family(enc)?;
        check_len(Axis::Multiplier, enc.n_cons, lambda.len())?;
        check_len(Axis::Primal, enc.n_vars, x0.len())?;
        let mut r = rng::stream(0, "unused", 0);
        let mut draws = Draws {
            rng: &mut r,
            eval_seed: None,
            primal_noise: false,
            dual_noise: false,
            fixed_primal_init: None,
        };
        let mut tape = Tape::new();
        let l = tape.constant_column(lambda.as_slice());
        let xs = self.build(&mut tape, enc, l, x0, &mut draws, false);
        let iterates = xs.iter().map(|v| tape.column(*v).to_vec()).collect();
        Ok(PrimalTrajectory::new(
            z.oracle(),
            lambda.as_slice().to_vec(),
            iterates,
        ))
    }
}

fn eval_seed(mode: Mode) -> Option<u64> {
    match mode {
        Mode::Train => None,
        Mode::Eval { seed } => Some(seed),
    }
}

/// Unrolled dual ascent that queries a primal network at every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DualNet {
    pub net: UnrolledNet,
}

/// Tape nodes of one dual pass: `λ₀ … λ_L` and `x₀ … x_L`.
pub(crate) struct DualNodes {
    pub lambdas: Vec<Var>,
    pub primals: Vec<Var>,
}

impl DualNet {
    pub fn new(cfg: NetConfig, seed: u64) -> Result<Self, NetError> {
        Ok(Self {
            net: UnrolledNet::new(Role::Dual, cfg, seed)?,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.net.cfg
    }

    pub(crate) fn build<'a>(
        &self,
        tape: &mut Tape<'a>,
        enc: &'a GraphEncoding,
        primal: &PrimalNet,
        lambda0: &[f64],
        draws: &mut Draws<'_>,
        trainable: bool,
    ) -> DualNodes {
        let cfg = &self.net.cfg;
        let n = enc.n_vars;
        let m = enc.n_cons;
        let mut lam = tape.constant_column(lambda0);
        let mut lambdas = vec![lam];
        let mut primals = Vec::with_capacity(cfg.layers + 1);
        for k in 0..=cfg.layers {
            let x0 = draws.primal_init(enc);
            let xs = primal.build(tape, enc, lam, &x0, draws, false);
            let x = *xs.last().expect("primal has layers");
            primals.push(x);
            if k == cfg.layers {
                break;
            }
            let x_unit = if enc.scale == 1.0 {
                x
            } else {
                tape.scale(x, 1.0 / enc.scale)
            };
            let feat = features(tape, enc, x_unit, lam);
            let head = self.net.layer_on_tape(tape, &enc.gso, feat, k, trainable);
            let mut d = match enc.family {
                Family::Miqp => tape.slice_rows(head, n, m),
                Family::Power => head,
            };
            if draws.dual_noise {
                let xi = draws.noise(m, cfg.noise.std(k + 1));
                d = tape.offset(d, &xi);
            }
            if enc.family == Family::Power {
                d = tape.mask(d, enc.mask.clone());
            }
            let pre = tape.add(lam, d);
            lam = tape.activation(pre, Activation::Relu);
            lambdas.push(lam);
        }
        DualNodes { lambdas, primals }
    }

    /// `(λ_l, x_l)` for `l = 0..L`, where `x_L` is the recovered solution.
    pub fn forward(
        &self,
        z: &ProblemInstance,
        primal: &PrimalNet,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<DualTrajectory, NetError> {
        self.forward_encoded(z, &GraphEncoding::new(z), primal, mode, rng)
    }

    pub fn forward_encoded(
        &self,
        z: &ProblemInstance,
        enc: &GraphEncoding,
        primal: &PrimalNet,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<DualTrajectory, NetError> {
        self.net.check_family(enc)?;
        primal.net.check_family(enc)?;
        let mut draws = Draws {
            rng,
            eval_seed: eval_seed(mode),
            primal_noise: false,
            dual_noise: mode == Mode::Train,
            fixed_primal_init: None,
        };
        let lambda0 = draws.dual_init(enc);
        self.forward_from(z, enc, primal, &lambda0, &mut draws)
    }

    /// Dual pass from an explicit `λ₀`.
    pub fn forward_from_lambda(
        &self,
        z: &ProblemInstance,
        enc: &GraphEncoding,
        primal: &PrimalNet,
        lambda0: &Multipliers,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<DualTrajectory, NetError> {
        self.net.check_family(enc)?;
        primal.net.check_family(enc)?;
        check_len(Axis::Multiplier, enc.n_cons, lambda0.len())?;
        let mut draws = Draws {
            rng,
            eval_seed: eval_seed(mode),
            primal_noise: false,
            dual_noise: mode == Mode::Train,
            fixed_primal_init: None,
        };
        self.forward_from(z, enc, primal, lambda0.as_slice(), &mut draws)
    }

    /// Noise-free pass from `λ₀` with every primal query started at `x0`.
    pub fn forward_from_inits(
        &self,
        z: &ProblemInstance,
        enc: &GraphEncoding,
        primal: &PrimalNet,
        lambda0: &Multipliers,
        x0: &[f64],
    ) -> Result<DualTrajectory, NetError> {
        self.net.check_family(enc)?;
        primal.net.check_family(enc)?;
        check_len(Axis::Multiplier, enc.n_cons, lambda0.len())?;
        check_len(Axis::Primal, enc.n_vars, x0.len())?;
        let mut r = rng::stream(0, "unused", 0);
        let mut draws = Draws {
            rng: &mut r,
            eval_seed: None,
            primal_noise: false,
            dual_noise: false,
            fixed_primal_init: Some(x0.to_vec()),
        };
        self.forward_from(z, enc, primal, lambda0.as_slice(), &mut draws)
    }

    fn forward_from(
        &self,
        z: &ProblemInstance,
        enc: &GraphEncoding,
        primal: &PrimalNet,
        lambda0: &[f64],
        draws: &mut Draws<'_>,
    ) -> Result<DualTrajectory, NetError> {
        let mut tape = Tape::new();
        let nodes = self.build(&mut tape, enc, primal, lambda0, draws, false);
        let lambdas = nodes
            .lambdas
            .iter()
            .map(|v| tape.column(*v).to_vec())
            .collect();
        let primals = nodes
            .primals
            .iter()
            .map(|v| tape.column(*v).to_vec())
            .collect();
        Ok(DualTrajectory::new(
            z.oracle(),
            lambdas,
            primals,
            self.net.cfg.layers,
        ))
    }
}

/// `x_L = Φ_P(Φ_D(z), z)` in evaluation mode.
pub fn recover_solution(
    z: &ProblemInstance,
    dual: &DualNet,
    primal: &PrimalNet,
    seed: u64,
) -> Result<PrimalPoint, NetError> {
    let mut r = rng::stream(seed, "unused", 0);
    let traj = dual.forward(z, primal, Mode::Eval { seed }, &mut r)?;
    Ok(PrimalPoint::new(traj.recovered().to_vec())?)
}
