mod common;

use cdu_core::linalg::Matrix;
use cdu_core::nets::{DualNet, NetConfig, PrimalNet};
use cdu_core::training::{
    meta_lagrangian_dual, meta_lagrangian_primal, DescentMetric, Encoded, PrimalSample, TrainConfig,
};
use cdu_core::{Family, Multipliers};
use common::*;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn relative_error(analytic: &[Matrix], numeric: &[f64]) -> f64 {
    let a: Vec<f64> = analytic
        .iter()
        .flat_map(|m| m.as_slice().iter().copied())
        .collect();
    let diff: f64 = a
        .iter()
        .zip(numeric)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    diff / scale
}

/// Central differences of `f` over every entry of `params`.
fn numeric_gradient(params: &mut [Matrix], mut f: impl FnMut(&[Matrix]) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    for m in 0..params.len() {
        for i in 0..params[m].as_slice().len() {
            let v = params[m].as_slice()[i];
            params[m].as_mut_slice()[i] = v + STEP;
            let up = f(params);
            params[m].as_mut_slice()[i] = v - STEP;
            let down = f(params);
            params[m].as_mut_slice()[i] = v;
            out.push((up - down) / (2.0 * STEP));
        }
    }
    out
}

fn data(family: Family) -> Vec<Encoded> {
    (0..2)
        .map(|s| match family {
            Family::Miqp => Encoded::new(qp_instance(4, 2, 1, 40 + s)),
            Family::Power => Encoded::new(network_instance(4, 40 + s)),
        })
        .collect()
}

fn tiny(family: Family) -> NetConfig {
    match family {
        Family::Miqp => NetConfig::miqp(2, 1, 4),
        Family::Power => NetConfig::power(2, 1, 4),
    }
}

fn config(family: Family, metric: DescentMetric) -> TrainConfig {
    let base = match family {
        Family::Miqp => TrainConfig::miqp_desk(),
        Family::Power => TrainConfig::power_desk(),
    };
    TrainConfig { metric, ..base }
}

fn multipliers(family: Family, item: &Encoded, seed: u64) -> Multipliers {
    let n = item.z.n_cons();
    let v = (0..n)
        .map(|i| {
            let on = match family {
                Family::Miqp => true,
                Family::Power => item.z.as_power().unwrap().mask()[i],
            };
            if on {
                0.3 + ((i as u64 * 7 + seed) % 5) as f64 * 0.4
            } else {
                0.0
            }
        })
        .collect();
    Multipliers::new(v).unwrap()
}

fn check_primal(family: Family, metric: DescentMetric) {
    let items = data(family);
    let cfg = config(family, metric);
    let batch: Vec<PrimalSample<'_>> = items
        .iter()
        .enumerate()
        .map(|(j, item)| PrimalSample {
            item,
            lambda: multipliers(family, item, j as u64),
        })
        .collect();
    let mu = [0.7, 1.3];
    let mut net = PrimalNet::new(tiny(family), 3).unwrap();
    let eval = meta_lagrangian_primal(&net, &batch, &mu, &cfg, 5).unwrap();
    let mut params = net.net.params().to_vec();
    let numeric = numeric_gradient(&mut params, |p| {
        net.net.params_mut().clone_from_slice(p);
        meta_lagrangian_primal(&net, &batch, &mu, &cfg, 5)
            .unwrap()
            .value
    });
    let err = relative_error(&eval.grads, &numeric);
    assert!(
        err <= TOL,
        "{family:?} {metric:?} primal relative error {err:e}"
    );
}

fn check_dual(family: Family, metric: DescentMetric) {
    let items = data(family);
    let cfg = config(family, metric);
    let batch: Vec<&Encoded> = items.iter().collect();
    let nu = [0.9, 0.4];
    let primal = PrimalNet::new(tiny(family), 3).unwrap();
    let mut net = DualNet::new(tiny(family), 4).unwrap();
    let eval = meta_lagrangian_dual(&net, &primal, &batch, &nu, &cfg, 6).unwrap();
    let mut params = net.net.params().to_vec();
    let numeric = numeric_gradient(&mut params, |p| {
        net.net.params_mut().clone_from_slice(p);
        meta_lagrangian_dual(&net, &primal, &batch, &nu, &cfg, 6)
            .unwrap()
            .value
    });
    let err = relative_error(&eval.grads, &numeric);
    assert!(
        err <= TOL,
        "{family:?} {metric:?} dual relative error {err:e}"
    );
}

#[test]
fn primal_meta_gradient_qp_gradient_metric() {
    check_primal(Family::Miqp, DescentMetric::Gradient);
}

#[test]
fn primal_meta_gradient_qp_value_metric() {
    check_primal(Family::Miqp, DescentMetric::Value);
}

#[test]
fn primal_meta_gradient_power_gradient_metric() {
    check_primal(Family::Power, DescentMetric::Gradient);
}

#[test]
fn primal_meta_gradient_power_value_metric() {
    check_primal(Family::Power, DescentMetric::Value);
}

#[test]
fn dual_meta_gradient_qp() {
    check_dual(Family::Miqp, DescentMetric::Gradient);
}

#[test]
fn dual_meta_gradient_power() {
    check_dual(Family::Power, DescentMetric::Value);
}
