//! Wireless interference networks and the sum-rate problem with per-user
//! minimum-rate constraints.
//!
//! `h[(i, j)]` is the amplitude gain from transmitter `i` to receiver `j`.
//! User `i` achieves
//! `r_i = log(1 + |h_ii|² p_i / (W·N0 + Σ_{j≠i} |h_ji|² p_j))`
//! and the problem is stored as a minimization: `f₀ = −Σ r_i`,
//! `f_i = r_min·1[i∈I] − r_i`.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{spectral_norm, Matrix};
use crate::problem::{check_len, Axis, ConstrainedProblem, ProblemError};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerError {
    #[error("invalid network: {0}")]
    Network(&'static str),
    #[error("invalid geometry: {0}")]
    Geometry(&'static str),
    #[error("power {value} of user {index} is outside [0, P_max]")]
    PowerOutOfRange { index: usize, value: f64 },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum LogBase {
    /// Bits per second per hertz.
    #[default]
    Two,
    /// Nats.
    E,
}

impl LogBase {
    pub fn ln(self) -> f64 {
        match self {
            LogBase::Two => core::f64::consts::LN_2,
            LogBase::E => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LogBase::Two => "log2",
            LogBase::E => "ln",
        }
    }
}

/// `N0 = −174 dBm/Hz` in W/Hz.
pub const DEFAULT_NOISE_PSD: f64 = 3.981_071_705_534_969e-21;

/// Link-budget constants shared by every user of a network.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RadioParams {
    pub r_min: f64,
    /// Watts.
    pub p_max: f64,
    /// Hz.
    pub bandwidth: f64,
    /// W/Hz.
    pub noise_psd: f64,
    pub log_base: LogBase,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            r_min: 1.5,
            p_max: 1e-3,
            bandwidth: 20e6,
            noise_psd: DEFAULT_NOISE_PSD,
            log_base: LogBase::Two,
        }
    }
}

impl RadioParams {
    pub fn noise_power(&self) -> f64 {
        self.bandwidth * self.noise_psd
    }

    fn validate(&self) -> Result<(), PowerError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.r_min) {
            return Err(PowerError::Network("r_min must be positive"));
        }
        if !positive(self.p_max) {
            return Err(PowerError::Network("P_max must be positive"));
        }
        if !positive(self.bandwidth) || !positive(self.noise_psd) {
            return Err(PowerError::Network("W and N0 must be positive"));
        }
        Ok(())
    }
}

/// Transmitter and receiver coordinates in meters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Positions {
    pub tx: Vec<[f64; 2]>,
    pub rx: Vec<[f64; 2]>,
}

/// One channel realization with its constraint structure.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    h: Matrix,
    /// `|h_ij|² P_max / (W N0)`.
    snr: Matrix,
    mask: Vec<bool>,
    radio: RadioParams,
    positions: Option<Positions>,
}

impl NetworkInstance {
    pub fn new(h: Matrix, constrained: &[usize], radio: RadioParams) -> Result<Self, PowerError> {
        let n = h.rows();
        if n == 0 {
            return Err(PowerError::Network("network needs at least one user"));
        }
        if h.cols() != n {
            return Err(PowerError::Network("H must be square"));
        }
        radio.validate()?;
        if h.as_slice().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(PowerError::Network(
                "H entries must be finite and nonnegative",
            ));
        }
        if (0..n).any(|i| h[(i, i)] <= 0.0) {
            return Err(PowerError::Network("direct-link gains must be positive"));
        }
        let mut mask = vec![false; n];
        for &i in constrained {
            if i >= n {
                return Err(PowerError::Network("constrained index out of range"));
            }
            if mask[i] {
                return Err(PowerError::Network("duplicate constrained index"));
            }
            mask[i] = true;
        }
        let k = radio.p_max / radio.noise_power();
        let snr = Matrix::from_fn(n, n, |i, j| h[(i, j)] * h[(i, j)] * k);
        Ok(Self {
            h,
            snr,
            mask,
            radio,
            positions: None,
        })
    }

    pub fn with_positions(mut self, positions: Positions) -> Result<Self, PowerError> {
        if positions.tx.len() != self.n() || positions.rx.len() != self.n() {
            return Err(PowerError::Network(
                "positions do not match the number of users",
            ));
        }
        self.positions = Some(positions);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.h.rows()
    }

    pub fn h(&self) -> &Matrix {
        &self.h
    }

    /// Received SNR matrix at full power.
    pub fn snr(&self) -> &Matrix {
        &self.snr
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn constrained(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.mask[i]).collect()
    }

    pub fn radio(&self) -> &RadioParams {
        &self.radio
    }

    pub fn r_min(&self) -> f64 {
        self.radio.r_min
    }

    pub fn p_max(&self) -> f64 {
        self.radio.p_max
    }

    pub fn positions(&self) -> Option<&Positions> {
        self.positions.as_ref()
    }

    /// `s_i = r_min·1[i∈I]`.
    pub fn rate_floor(&self) -> Vec<f64> {
        self.mask
            .iter()
            .map(|&c| if c { self.radio.r_min } else { 0.0 })
            .collect()
    }

    /// Graph shift operator `H / ‖H‖₂`.
    pub fn gso(&self) -> Matrix {
        let s = spectral_norm(&self.h);
        self.h.scale(1.0 / s)
    }

    /// `(T_i, U_i)` in normalized units: `T_i = 1 + Σ_j snr_ji u_j`,
    /// `U_i = T_i − snr_ii u_i`. The interference sum is accumulated in
    /// sorted order so that relabeling users leaves it bit-identical.
    fn totals(&self, u: &[f64]) -> Vec<(f64, f64)> {
        let n = self.n();
        let mut terms = Vec::with_capacity(n);
        (0..n)
            .map(|i| {
                terms.clear();
                terms.extend((0..n).filter(|&j| j != i).map(|j| self.snr[(j, i)] * u[j]));
                terms.sort_unstable_by(f64::total_cmp);
                let interference: f64 = terms.iter().sum();
                let denom = 1.0 + interference;
                (denom + self.snr[(i, i)] * u[i], denom)
            })
            .collect()
    }

    fn rates_normalized(&self, u: &[f64]) -> Vec<f64> {
        let ln_b = self.radio.log_base.ln();
        self.totals(u)
            .iter()
            .enumerate()
            .map(|(i, &(_, den))| libm::log1p(self.snr[(i, i)] * u[i] / den) / ln_b)
            .collect()
    }

    fn normalize(&self, p: &[f64]) -> Vec<f64> {
        p.iter().map(|v| v / self.radio.p_max).collect()
    }

    /// `∇_p r_i · v` for every `i`, plus `Σ_i w_i ∇_p r_i`.
    fn rate_jacobian_products(
        &self,
        p: &[f64],
        v: Option<&[f64]>,
        w: Option<&[f64]>,
    ) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let u = self.normalize(p);
        let tot = self.totals(&u);
        let k = 1.0 / (self.radio.log_base.ln() * self.radio.p_max);
        let mut jv = vec![0.0; if v.is_some() { n } else { 0 }];
        let mut jtw = vec![0.0; if w.is_some() { n } else { 0 }];
        for i in 0..n {
            let (t, den) = tot[i];
            // ∂r_i/∂p_k = k·(snr_ki/T_i − [k≠i]·snr_ki/U_i)
            for kk in 0..n {
                let a = self.snr[(kk, i)];
                let d = if kk == i { a / t } else { a / t - a / den } * k;
                if let Some(v) = v {
                    jv[i] += d * v[kk];
                }
                if let Some(w) = w {
                    jtw[kk] += w[i] * d;
                }
            }
        }
        (jv, jtw)
    }
}

/// Transmit powers in watts, `0 ≤ p_i ≤ P_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerVector(Vec<f64>);

impl PowerVector {
    pub fn new(p: Vec<f64>, p_max: f64) -> Result<Self, PowerError> {
        if let Some((index, &value)) = p
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0 && **v <= p_max))
        {
            return Err(PowerError::PowerOutOfRange { index, value });
        }
        Ok(Self(p))
    }

    pub fn full(n: usize, p_max: f64) -> Self {
        Self(vec![p_max; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Achievable rates of every user.
pub fn rates(p: &PowerVector, net: &NetworkInstance) -> Result<Vec<f64>, PowerError> {
    check_len(Axis::Primal, net.n(), p.0.len())?;
    if let Some((index, &value)) = p.0.iter().enumerate().find(|(_, v)| **v > net.p_max()) {
        return Err(PowerError::PowerOutOfRange { index, value });
    }
    Ok(net.rates_normalized(&net.normalize(&p.0)))
}

/// `L(p, λ) = −Σ r_i + Σ_i λ_i (r_min·1[i∈I] − r_i)`.
pub fn power_lagrangian(
    p: &PowerVector,
    lambda: &[f64],
    net: &NetworkInstance,
) -> Result<f64, PowerError> {
    check_len(Axis::Multiplier, net.n(), lambda.len())?;
    if let Some((index, &value)) = lambda.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(ProblemError::NegativeMultiplier { index, value }.into());
    }
    let r = rates(p, net)?;
    let s = net.rate_floor();
    Ok(r.iter()
        .zip(lambda)
        .zip(&s)
        .map(|((r, l), s)| -r + l * (s - r))
        .sum())
}

impl ConstrainedProblem for NetworkInstance {
    fn n_vars(&self) -> usize {
        self.n()
    }

    fn n_cons(&self) -> usize {
        self.n()
    }

    fn objective_raw(&self, x: &[f64]) -> f64 {
        -self
            .rates_normalized(&self.normalize(x))
            .iter()
            .sum::<f64>()
    }

    fn constraints_raw(&self, x: &[f64]) -> Vec<f64> {
        let r = self.rates_normalized(&self.normalize(x));
        r.iter()
            .zip(&self.mask)
            .map(|(r, &c)| if c { self.radio.r_min - r } else { -r })
            .collect()
    }

    fn objective_grad_raw(&self, x: &[f64]) -> Vec<f64> {
        let ones = vec![-1.0; self.n()];
        self.rate_jacobian_products(x, None, Some(&ones)).1
    }

    fn constraint_vjp_raw(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let neg: Vec<f64> = w.iter().map(|v| -v).collect();
        self.rate_jacobian_products(x, None, Some(&neg)).1
    }

    fn constraint_jvp_raw(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut jv = self.rate_jacobian_products(x, Some(v), None).0;
        jv.iter_mut().for_each(|x| *x = -*x);
        jv
    }

    fn lagrangian_grad_raw(&self, x: &[f64], lambda: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = lambda.iter().map(|l| -(1.0 + l)).collect();
        self.rate_jacobian_products(x, None, Some(&c)).1
    }

    fn lagrangian_hvp_raw(&self, x: &[f64], lambda: &[f64], v: &[f64]) -> Vec<f64> {
        // ∇²r_i = (−a_i a_iᵀ/T_i² + b_i b_iᵀ/U_i²)/ln(base) in normalized
        // units, with a_i the i-th column of the SNR matrix and b_i = a_i
        // with entry i zeroed.
        let n = self.n();
        let u = self.normalize(x);
        let tot = self.totals(&u);
        let ln_b = self.radio.log_base.ln();
        let scale = 1.0 / (self.radio.p_max * self.radio.p_max);
        let mut out = vec![0.0; n];
        for i in 0..n {
            let (t, den) = tot[i];
            let c = -(1.0 + lambda[i]) / ln_b * scale;
            let mut av = 0.0;
            for k in 0..n {
                av += self.snr[(k, i)] * v[k];
            }
            let bv = av - self.snr[(i, i)] * v[i];
            let ca = -c * av / (t * t);
            let cb = c * bv / (den * den);
            for k in 0..n {
                let a = self.snr[(k, i)];
                out[k] += ca * a;
                if k != i {
                    out[k] += cb * a;
                }
            }
        }
        out
    }
}

/// Deployment and propagation model.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeometryConfig {
    /// Side of the square deployment area, meters.
    pub side: f64,
    pub min_link: f64,
    pub max_link: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub breakpoint: f64,
    /// SNR in dB of a direct link of length `reference_distance` at `P_max`,
    /// used to calibrate the path-loss constant `G₀`.
    pub reference_snr_db: f64,
    pub reference_distance: f64,
    pub shadowing_db: f64,
    /// Distances are floored at this value before path loss.
    pub min_distance: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            side: 1500.0,
            min_link: 20.0,
            max_link: 60.0,
            alpha1: 2.0,
            alpha2: 4.0,
            breakpoint: 100.0,
            reference_snr_db: 30.0,
            reference_distance: 40.0,
            shadowing_db: 7.0,
            min_distance: 1.0,
        }
    }
}

impl GeometryConfig {
    /// Defaults with the area scaled to keep the user density of 100 pairs
    /// on 1500 × 1500 m².
    pub fn density_matched(n: usize) -> Self {
        Self {
            side: 1500.0 * libm::sqrt(n as f64 / 100.0),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), PowerError> {
        let ok = self.side > 0.0
            && self.min_link > 0.0
            && self.max_link >= self.min_link
            && self.alpha1 > 0.0
            && self.alpha2 > 0.0
            && self.breakpoint > 0.0
            && self.reference_distance > 0.0
            && self.shadowing_db >= 0.0
            && self.min_distance > 0.0;
        if ok {
            Ok(())
        } else {
            Err(PowerError::Geometry("parameters out of range"))
        }
    }

    fn unit_path_gain(&self, d: f64) -> f64 {
        if d <= self.breakpoint {
            libm::pow(d, -self.alpha1)
        } else {
            libm::pow(self.breakpoint, self.alpha2 - self.alpha1) * libm::pow(d, -self.alpha2)
        }
    }

    /// `G₀` so that a reference link at `P_max` has the reference SNR.
    pub fn g0(&self, radio: &RadioParams) -> f64 {
        let snr = libm::pow(10.0, self.reference_snr_db / 10.0);
        snr * radio.noise_power() / (radio.p_max * self.unit_path_gain(self.reference_distance))
    }

    /// Power gain `|h|²` at distance `d`, before shadowing.
    pub fn path_gain(&self, d: f64, radio: &RadioParams) -> f64 {
        self.g0(radio) * self.unit_path_gain(d.max(self.min_distance))
    }
}

/// Amplitude matrix from explicit positions and a shadowing draw in dB.
pub fn channel_from_geometry(
    positions: &Positions,
    shadowing_db: &Matrix,
    geometry: &GeometryConfig,
    radio: &RadioParams,
) -> Matrix {
    let n = positions.tx.len();
    Matrix::from_fn(n, n, |i, j| {
        let [x0, y0] = positions.tx[i];
        let [x1, y1] = positions.rx[j];
        let d = libm::hypot(x1 - x0, y1 - y0);
        let g = geometry.path_gain(d, radio) * libm::pow(10.0, shadowing_db[(i, j)] / 10.0);
        libm::sqrt(g)
    })
}

/// Random deployment: transmitters uniform on the square, each receiver at
/// a uniform distance in `[min_link, max_link]` and uniform angle from its
/// transmitter, i.i.d. log-normal shadowing on every link, and
/// `round(constrained_fraction·n)` users drawn as constrained.
pub fn generate_network(
    n: usize,
    constrained_fraction: f64,
    seed: u64,
    geometry: &GeometryConfig,
    radio: &RadioParams,
) -> Result<NetworkInstance, PowerError> {
    if n == 0 {
        return Err(PowerError::Network("network needs at least one user"));
    }
    if !(0.0..=1.0).contains(&constrained_fraction) {
        return Err(PowerError::Network(
            "constrained fraction must lie in [0, 1]",
        ));
    }
    geometry.validate()?;
    radio.validate()?;
    let mut rng = rng::stream(seed, "power-network", 0);
    let mut tx = Vec::with_capacity(n);
    let mut rx = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.random::<f64>() * geometry.side;
        let y = rng.random::<f64>() * geometry.side;
        let d = geometry.min_link + rng.random::<f64>() * (geometry.max_link - geometry.min_link);
        let theta = rng.random::<f64>() * core::f64::consts::TAU;
        tx.push([x, y]);
        rx.push([x + d * libm::cos(theta), y + d * libm::sin(theta)]);
    }
    let shadow = Matrix::from_fn(n, n, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        geometry.shadowing_db * z
    });
    let k = libm::round(constrained_fraction * n as f64) as usize;
    let mut constrained = index::sample(&mut rng, n, k).into_vec();
    constrained.sort_unstable();
    let positions = Positions { tx, rx };
    let h = channel_from_geometry(&positions, &shadow, geometry, radio);
    NetworkInstance::new(h, &constrained, *radio)?.with_positions(positions)
}
