mod common;

use cdu_core::nets::{DualNet, NetConfig, PrimalNet};
use cdu_core::training::{
    joint_train, project_ascent, resume, Models, SamplerConfig, TrainConfig, TrainData,
    TrainerState,
};
use cdu_core::Family;
use common::*;
use proptest::prelude::*;

fn tiny_cfg(family: Family, constrained: bool) -> TrainConfig {
    let base = match family {
        Family::Miqp => TrainConfig::miqp_desk(),
        Family::Power => TrainConfig {
            sampler: SamplerConfig {
                multipliers: 4,
                da_iterations: 3,
                ..TrainConfig::power_desk().sampler
            },
            ..TrainConfig::power_desk()
        },
    };
    TrainConfig {
        iterations: 3,
        batch_primal: 2,
        batch_dual: 2,
        constrained,
        seed: 17,
        sampler: SamplerConfig {
            multipliers: 4,
            ..base.sampler.clone()
        },
        ..base
    }
}

fn tiny_data(family: Family) -> TrainData {
    let make = |base: u64, k: u64| -> Vec<_> {
        (0..k)
            .map(|s| match family {
                Family::Miqp => qp_instance(4, 2, 1, base + s),
                Family::Power => network_instance(4, base + s),
            })
            .collect()
    };
    TrainData::new(make(0, 3), make(100, 4), make(200, 2))
}

fn tiny_models(family: Family) -> Models {
    let cfg = match family {
        Family::Miqp => NetConfig::miqp(2, 1, 4),
        Family::Power => NetConfig::power(2, 1, 4),
    };
    Models {
        primal: PrimalNet::new(cfg, 1).unwrap(),
        dual: DualNet::new(cfg, 2).unwrap(),
    }
}

#[test]
fn identical_runs_are_bit_identical() {
    for family in [Family::Miqp, Family::Power] {
        let data = tiny_data(family);
        let a = joint_train(tiny_cfg(family, true), tiny_models(family), &data).unwrap();
        let b = joint_train(tiny_cfg(family, true), tiny_models(family), &data).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iteration, 3);
        assert!(a.history.iter().all(|h| h.loss.is_finite()));
    }
}

#[test]
fn resumed_run_equals_uninterrupted_run() {
    let data = tiny_data(Family::Miqp);
    let full = joint_train(
        tiny_cfg(Family::Miqp, true),
        tiny_models(Family::Miqp),
        &data,
    )
    .unwrap();
    let mut part =
        TrainerState::new(tiny_cfg(Family::Miqp, true), tiny_models(Family::Miqp)).unwrap();
    part.step(&data).unwrap();
    let snapshot = part.clone();
    let resumed = resume(snapshot, &data).unwrap();
    assert_eq!(resumed, full);
}

#[test]
fn unconstrained_run_keeps_meta_multipliers_at_zero() {
    let data = tiny_data(Family::Miqp);
    let s = joint_train(
        tiny_cfg(Family::Miqp, false),
        tiny_models(Family::Miqp),
        &data,
    )
    .unwrap();
    assert!(s.meta.mu.iter().chain(&s.meta.nu).all(|&v| v == 0.0));
    assert!(s
        .history
        .iter()
        .all(|h| h.mu.iter().chain(&h.nu).all(|&v| v == 0.0)));
    let c = joint_train(
        tiny_cfg(Family::Miqp, true),
        tiny_models(Family::Miqp),
        &data,
    )
    .unwrap();
    assert_ne!(c.models, s.models);
}

#[test]
fn constrained_history_keeps_meta_multipliers_nonnegative() {
    let data = tiny_data(Family::Power);
    let s = joint_train(
        tiny_cfg(Family::Power, true),
        tiny_models(Family::Power),
        &data,
    )
    .unwrap();
    for h in &s.history {
        assert!(h.mu.iter().chain(&h.nu).all(|&v| v >= 0.0));
    }
    assert!(s.history.iter().any(|h| h.val_violation.is_some()));
}

#[test]
fn invalid_config_aborts_without_state() {
    let data = tiny_data(Family::Miqp);
    let cfg = TrainConfig {
        batch_dual: 0,
        ..tiny_cfg(Family::Miqp, true)
    };
    let err = joint_train(cfg, tiny_models(Family::Miqp), &data).unwrap_err();
    assert!(err.last_good.is_none());
}

proptest! {
    #[test]
    fn projected_ascent_stays_nonnegative(
        start in prop::collection::vec(0.0..3.0f64, 1..8),
        step in 0.0..1.0f64,
        res in prop::collection::vec(-10.0..10.0f64, 8),
    ) {
        let mut m = start.clone();
        project_ascent(&mut m, step, &res[..start.len()]);
        for (i, v) in m.iter().enumerate() {
            prop_assert!(*v >= 0.0);
            prop_assert_eq!(*v, (start[i] + step * res[i]).max(0.0));
        }
    }
}
