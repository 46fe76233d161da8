#![allow(dead_code)]

use cdu_core::linalg::Matrix;
use cdu_core::miqp::{generate_instance, relax, RelaxedQp};
use cdu_core::power::{generate_network, GeometryConfig, NetworkInstance, RadioParams};
use cdu_core::ProblemInstance;

pub fn qp(n: usize, m: usize, r: usize, seed: u64) -> RelaxedQp {
    relax(&generate_instance(n, m, r, seed).unwrap()).unwrap()
}

pub fn qp_instance(n: usize, m: usize, r: usize, seed: u64) -> ProblemInstance {
    qp(n, m, r, seed).into()
}

pub fn network(n: usize, seed: u64) -> NetworkInstance {
    generate_network(
        n,
        0.5,
        seed,
        &GeometryConfig::density_matched(n),
        &RadioParams::default(),
    )
    .unwrap()
}

pub fn network_instance(n: usize, seed: u64) -> ProblemInstance {
    network(n, seed).into()
}

/// Permutation of `0..n` drawn from a seed.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut cdu_core::rng::stream(seed, "perm", 0));
    p
}

/// `out[perm[i]] = v[i]`.
pub fn permute(v: &[f64], perm: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (i, &p) in perm.iter().enumerate() {
        out[p] = v[i];
    }
    out
}

/// The QP with variables relabeled by `pv` and constraint rows by `pc`.
pub fn permute_qp(qp: &RelaxedQp, pv: &[usize], pc: &[usize]) -> RelaxedQp {
    let a = qp.a();
    let mut a2 = Matrix::zeros(a.rows(), a.cols());
    for k in 0..a.rows() {
        for j in 0..a.cols() {
            a2[(pc[k], pv[j])] = a[(k, j)];
        }
    }
    let mut binary: Vec<usize> = qp.binary().iter().map(|&i| pv[i]).collect();
    binary.sort_unstable();
    RelaxedQp::new(
        qp.p().permute_symmetric(pv),
        permute(qp.q(), pv),
        a2,
        permute(qp.b(), pc),
        qp.m(),
        binary,
    )
    .unwrap()
}

/// The network with users relabeled by `perm`.
pub fn permute_network(net: &NetworkInstance, perm: &[usize]) -> NetworkInstance {
    let constrained: Vec<usize> = net.constrained().iter().map(|&i| perm[i]).collect();
    NetworkInstance::new(net.h().permute_symmetric(perm), &constrained, *net.radio()).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
