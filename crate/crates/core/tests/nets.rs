mod common;

use cdu_core::nets::{DualNet, GraphEncoding, Mode, NetConfig, PrimalNet};
use cdu_core::rng;
use cdu_core::{Multipliers, ProblemInstance};
use common::*;
use proptest::prelude::*;
use rand::Rng as _;

fn nets(cfg_p: NetConfig, cfg_d: NetConfig, seed: u64) -> (PrimalNet, DualNet) {
    (
        PrimalNet::new(cfg_p, seed).unwrap(),
        DualNet::new(cfg_d, seed + 1).unwrap(),
    )
}

fn uniform(len: usize, hi: f64, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, "test-input", 0);
    (0..len).map(|_| r.random::<f64>() * hi).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dual_layers_are_nonnegative(seed in 0u64..500, net_seed in 0u64..500, train in any::<bool>()) {
        let z = qp_instance(6, 3, 2, seed);
        let (p, d) = nets(NetConfig::miqp(2, 1, 4), NetConfig::miqp(3, 1, 4), net_seed);
        let mode = if train { Mode::Train } else { Mode::Eval { seed } };
        let t = d.forward(&z, &p, mode, &mut rng::stream(seed, "t", 0)).unwrap();
        for lam in &t.lambdas {
            prop_assert!(lam.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn power_layers_respect_box_and_mask(seed in 0u64..500, net_seed in 0u64..500, train in any::<bool>()) {
        let net = network(6, seed);
        let z: ProblemInstance = net.clone().into();
        let (p, d) = nets(NetConfig::power(2, 1, 4), NetConfig::power(3, 1, 4), net_seed);
        let mode = if train { Mode::Train } else { Mode::Eval { seed } };
        let t = d.forward(&z, &p, mode, &mut rng::stream(seed, "t", 0)).unwrap();
        for lam in &t.lambdas {
            for (v, &m) in lam.iter().zip(net.mask()) {
                prop_assert!(*v >= 0.0);
                if !m {
                    prop_assert_eq!(*v, 0.0);
                }
            }
        }
        for x in &t.primals {
            prop_assert!(x.iter().all(|&v| (0.0..=net.p_max()).contains(&v)));
        }
        let lam = Multipliers::new(uniform(6, 5.0, seed)).unwrap();
        let pt = p.forward(&lam, &z, mode, &mut rng::stream(seed, "p", 0)).unwrap();
        for x in &pt.iterates {
            prop_assert!(x.iter().all(|&v| (0.0..=net.p_max()).contains(&v)));
        }
    }

    #[test]
    fn eval_mode_is_deterministic(seed in 0u64..500, net_seed in 0u64..500, a in any::<u64>(), b in any::<u64>()) {
        let z = qp_instance(6, 3, 2, seed);
        let (p, d) = nets(NetConfig::miqp(2, 1, 4), NetConfig::miqp(2, 1, 4), net_seed);
        let t1 = d.forward(&z, &p, Mode::Eval { seed }, &mut rng::stream(a, "x", 0)).unwrap();
        let t2 = d.forward(&z, &p, Mode::Eval { seed }, &mut rng::stream(b, "x", 0)).unwrap();
        prop_assert_eq!(&t1, &t2);
        let w = network_instance(6, seed);
        let (p, d) = nets(NetConfig::power(2, 1, 4), NetConfig::power(2, 1, 4), net_seed);
        let t1 = d.forward(&w, &p, Mode::Eval { seed }, &mut rng::stream(a, "x", 0)).unwrap();
        let t2 = d.forward(&w, &p, Mode::Eval { seed }, &mut rng::stream(b, "x", 0)).unwrap();
        prop_assert_eq!(t1, t2);
    }

    #[test]
    fn qp_networks_are_permutation_equivariant(seed in 0u64..500, net_seed in 0u64..500, pseed in 0u64..500) {
        let q = qp(6, 3, 2, seed);
        let pv = permutation(6, pseed);
        let pc = permutation(q.rows(), pseed + 1);
        let q2 = permute_qp(&q, &pv, &pc);
        let (z, z2): (ProblemInstance, ProblemInstance) = (q.into(), q2.into());
        let (e, e2) = (GraphEncoding::new(&z), GraphEncoding::new(&z2));
        let (p, d) = nets(NetConfig::miqp(2, 2, 4), NetConfig::miqp(2, 2, 4), net_seed);
        let x0: Vec<f64> = uniform(6, 2.0, seed).iter().map(|v| v - 1.0).collect();
        let lam = uniform(7, 1.0, seed + 1);

        let a = p.forward_from_init(&Multipliers::new(lam.clone()).unwrap(), &z, &e, &x0).unwrap();
        let b = p
            .forward_from_init(&Multipliers::new(permute(&lam, &pc)).unwrap(), &z2, &e2, &permute(&x0, &pv))
            .unwrap();
        for (xa, xb) in a.iterates.iter().zip(&b.iterates) {
            prop_assert!(max_abs_diff(&permute(xa, &pv), xb) <= 1e-6);
        }

        let a = d.forward_from_inits(&z, &e, &p, &Multipliers::new(lam.clone()).unwrap(), &x0).unwrap();
        let b = d
            .forward_from_inits(&z2, &e2, &p, &Multipliers::new(permute(&lam, &pc)).unwrap(), &permute(&x0, &pv))
            .unwrap();
        for l in 0..a.lambdas.len() {
            prop_assert!(max_abs_diff(&permute(&a.lambdas[l], &pc), &b.lambdas[l]) <= 1e-6);
            prop_assert!(max_abs_diff(&permute(&a.primals[l], &pv), &b.primals[l]) <= 1e-6);
        }
    }

    #[test]
    fn power_networks_are_permutation_equivariant(seed in 0u64..500, net_seed in 0u64..500, pseed in 0u64..500) {
        let net = network(6, seed);
        let perm = permutation(6, pseed);
        let net2 = permute_network(&net, &perm);
        let lam: Vec<f64> = uniform(6, 5.0, seed).iter().zip(net.mask()).map(|(v, &m)| if m { *v } else { 0.0 }).collect();
        let (z, z2): (ProblemInstance, ProblemInstance) = (net.clone().into(), net2.into());
        let (e, e2) = (GraphEncoding::new(&z), GraphEncoding::new(&z2));
        let (p, d) = nets(NetConfig::power(2, 2, 4), NetConfig::power(2, 2, 4), net_seed);
        let x0 = uniform(6, net.p_max(), seed + 1);
        let scale = net.p_max();

        let a = p.forward_from_init(&Multipliers::new(lam.clone()).unwrap(), &z, &e, &x0).unwrap();
        let b = p
            .forward_from_init(&Multipliers::new(permute(&lam, &perm)).unwrap(), &z2, &e2, &permute(&x0, &perm))
            .unwrap();
        for (xa, xb) in a.iterates.iter().zip(&b.iterates) {
            prop_assert!(max_abs_diff(&permute(xa, &perm), xb) <= 1e-6 * scale);
        }

        let a = d.forward_from_inits(&z, &e, &p, &Multipliers::new(lam.clone()).unwrap(), &x0).unwrap();
        let b = d
            .forward_from_inits(&z2, &e2, &p, &Multipliers::new(permute(&lam, &perm)).unwrap(), &permute(&x0, &perm))
            .unwrap();
        for l in 0..a.lambdas.len() {
            prop_assert!(max_abs_diff(&permute(&a.lambdas[l], &perm), &b.lambdas[l]) <= 1e-6);
            prop_assert!(max_abs_diff(&permute(&a.primals[l], &perm), &b.primals[l]) <= 1e-6 * scale);
        }
    }
}

#[test]
fn explicit_init_matches_eval_pass() {
    let z = qp_instance(6, 3, 2, 3);
    let e = GraphEncoding::new(&z);
    let (p, d) = nets(NetConfig::miqp(2, 1, 4), NetConfig::miqp(2, 1, 4), 9);
    let seed = 11;
    let x0 = cdu_core::nets::primal_init(&e, &mut rng::stream(seed, "primal-init", 0));
    let lam0 = cdu_core::nets::dual_init(&e, &mut rng::stream(seed, "dual-init", 0));
    let a = d
        .forward(&z, &p, Mode::Eval { seed }, &mut rng::stream(0, "x", 0))
        .unwrap();
    let b = d
        .forward_from_inits(&z, &e, &p, &Multipliers::new(lam0).unwrap(), &x0)
        .unwrap();
    assert_eq!(a, b);
}
