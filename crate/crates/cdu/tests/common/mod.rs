#![allow(dead_code)]

use cdu::config::{RunConfig, SweepConfig};
use cdu_core::baselines::NaiveConfig;
use cdu_core::eval::{FamilyParams, OodAxis};
use cdu_core::nets::NetConfig;

/// Seconds-scale MIQP run of one variant, named `tiny-{variant}`.
pub fn tiny(variant: &str) -> RunConfig {
    let mut c = RunConfig::preset(&format!("miqp-desk-{variant}")).unwrap();
    c.name = format!("tiny-{variant}");
    c.data.params = FamilyParams::Miqp { n: 6, m: 3, r: 2 };
    c.data.splits.primal = 8;
    c.data.splits.dual = 8;
    c.data.splits.val = 4;
    c.data.splits.test = 4;
    c.primal = NetConfig::miqp(2, 1, 4);
    c.dual = NetConfig::miqp(2, 1, 4);
    c.train.iterations = 2;
    c.eval.da_iterations = 50;
    c.eval.naive = NaiveConfig {
        layers: 2,
        epochs: 2,
        ..c.eval.naive
    };
    c.eval.peer = c.eval.peer.as_ref().map(|_| {
        let other = if variant == "constrained" {
            "unconstrained"
        } else {
            "constrained"
        };
        format!("tiny-{other}")
    });
    c.sweep = Some(SweepConfig {
        axis: OodAxis::N,
        grid: vec![5.0, 6.0],
        instances: 3,
        seeds: vec![0],
    });
    c.validate().unwrap();
    c
}

/// Write `cfg` as TOML into `dir` and return the path.
pub fn write_config(dir: &std::path::Path, cfg: &RunConfig) -> std::path::PathBuf {
    let p = dir.join(format!("{}.toml", cfg.name));
    cfg.save(&p).unwrap();
    p
}
