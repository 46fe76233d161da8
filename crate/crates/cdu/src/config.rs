//! Run configuration: one TOML file fully determines a run.

use std::path::Path;

use cdu_core::baselines::NaiveConfig;
use cdu_core::eval::{FamilyParams, Method, OodAxis, OodSpec};
use cdu_core::nets::NetConfig;
use cdu_core::rng::derive_seed;
use cdu_core::training::TrainConfig;
use cdu_core::Family;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Instance counts of the four dataset splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub primal: usize,
    pub dual: usize,
    pub val: usize,
    pub test: usize,
}

impl Splits {
    pub const NAMES: [&'static str; 4] = ["primal", "dual", "val", "test"];

    pub fn get(&self, split: &str) -> Option<usize> {
        match split {
            "primal" => Some(self.primal),
            "dual" => Some(self.dual),
            "val" => Some(self.val),
            "test" => Some(self.test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub params: FamilyParams,
    pub splits: Splits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub seed: u64,
    /// Dual-ascent budget of the `da` method.
    pub da_iterations: usize,
    pub methods: Vec<Method>,
    pub naive: NaiveConfig,
    /// Run whose learned model provides the other variant (constrained or
    /// unconstrained), looked up next to this run's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub axis: OodAxis,
    pub grid: Vec<f64>,
    pub instances: usize,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    /// Root seed; every other seed is derived from it.
    pub seed: u64,
    pub data: DataConfig,
    pub primal: NetConfig,
    pub dual: NetConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

pub const PRESETS: [&str; 8] = [
    "miqp-constrained",
    "miqp-unconstrained",
    "power-constrained",
    "power-unconstrained",
    "miqp-desk-constrained",
    "miqp-desk-unconstrained",
    "power-desk-constrained",
    "power-desk-unconstrained",
];

fn miqp_full() -> RunConfig {
    RunConfig {
        name: "miqp-constrained".into(),
        seed: 0,
        data: DataConfig {
            params: FamilyParams::Miqp {
                n: 80,
                m: 45,
                r: 10,
            },
            splits: Splits {
                primal: 400,
                dual: 800,
                val: 200,
                test: 400,
            },
        },
        primal: NetConfig::miqp(14, 3, 32),
        dual: NetConfig::miqp(14, 3, 32),
        train: TrainConfig::miqp_full(),
        eval: EvalConfig {
            seed: 0,
            da_iterations: 1400,
            methods: vec![Method::Cdu, Method::Da, Method::Naive],
            naive: NaiveConfig::miqp(32),
            peer: None,
        },
        sweep: Some(SweepConfig {
            axis: OodAxis::N,
            grid: vec![60.0, 70.0, 80.0, 90.0, 100.0],
            instances: 100,
            seeds: vec![0],
        }),
    }
}

fn miqp_desk() -> RunConfig {
    RunConfig {
        name: "miqp-desk-constrained".into(),
        data: DataConfig {
            params: FamilyParams::Miqp { n: 20, m: 10, r: 4 },
            splits: Splits {
                primal: 200,
                dual: 400,
                val: 100,
                test: 100,
            },
        },
        primal: NetConfig::miqp(6, 2, 16),
        dual: NetConfig::miqp(6, 2, 16),
        train: TrainConfig {
            iterations: 15,
            ..TrainConfig::miqp_desk()
        },
        eval: EvalConfig {
            naive: NaiveConfig {
                layers: 12,
                epochs: 60,
                ..NaiveConfig::miqp(16)
            },
            ..miqp_full().eval
        },
        sweep: Some(SweepConfig {
            axis: OodAxis::N,
            grid: vec![15.0, 20.0, 25.0, 30.0],
            instances: 50,
            seeds: vec![0],
        }),
        ..miqp_full()
    }
}

fn power_full() -> RunConfig {
    RunConfig {
        name: "power-constrained".into(),
        seed: 0,
        data: DataConfig {
            params: FamilyParams::Power {
                n: 100,
                fraction: 0.5,
                r_min: 1.5,
            },
            splits: Splits {
                primal: 512,
                dual: 2048,
                val: 128,
                test: 128,
            },
        },
        primal: NetConfig::power(4, 3, 64),
        dual: NetConfig::power(6, 3, 64),
        train: TrainConfig::power_full(),
        eval: EvalConfig {
            seed: 0,
            da_iterations: 600,
            methods: vec![Method::Cdu, Method::Sa, Method::Naive, Method::FullPower],
            naive: NaiveConfig::power(64),
            peer: None,
        },
        sweep: Some(SweepConfig {
            axis: OodAxis::RMin,
            grid: vec![0.5, 1.0, 1.5, 2.0, 2.5],
            instances: 32,
            seeds: vec![0],
        }),
    }
}

fn power_desk() -> RunConfig {
    RunConfig {
        name: "power-desk-constrained".into(),
        data: DataConfig {
            params: FamilyParams::Power {
                n: 20,
                fraction: 0.5,
                r_min: 1.5,
            },
            splits: Splits {
                primal: 128,
                dual: 256,
                val: 32,
                test: 64,
            },
        },
        primal: NetConfig::power(4, 2, 16),
        dual: NetConfig::power(6, 2, 16),
        train: TrainConfig {
            iterations: 20,
            ..TrainConfig::power_desk()
        },
        eval: EvalConfig {
            naive: NaiveConfig {
                epochs: 60,
                ..NaiveConfig::power(16)
            },
            ..power_full().eval
        },
        sweep: Some(SweepConfig {
            axis: OodAxis::RMin,
            grid: vec![1.0, 1.5, 2.0],
            instances: 16,
            seeds: vec![0],
        }),
        ..power_full()
    }
}

/// Named child seed, kept below `2^63` so it fits a TOML integer.
pub fn sub_seed(root: u64, name: &str) -> u64 {
    derive_seed(root, name, 0) >> 1
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let (base, constrained) = match name {
            "miqp-constrained" => (miqp_full(), true),
            "miqp-unconstrained" => (miqp_full(), false),
            "power-constrained" => (power_full(), true),
            "power-unconstrained" => (power_full(), false),
            "miqp-desk-constrained" => (miqp_desk(), true),
            "miqp-desk-unconstrained" => (miqp_desk(), false),
            "power-desk-constrained" => (power_desk(), true),
            "power-desk-unconstrained" => (power_desk(), false),
            other => {
                return Err(CliError::Config(format!(
                    "unknown preset {other}; expected one of {}",
                    PRESETS.join(", ")
                )))
            }
        };
        let mut cfg = RunConfig {
            name: name.into(),
            train: TrainConfig {
                constrained,
                ..base.train.clone()
            },
            ..base
        };
        let (this, other) = if constrained {
            ("-constrained", "-unconstrained")
        } else {
            ("-unconstrained", "-constrained")
        };
        cfg.eval.peer = name.strip_suffix(this).map(|stem| format!("{stem}{other}"));
        if constrained {
            cfg.eval.methods.insert(1, Method::Unconstrained);
        } else {
            cfg.eval.methods = vec![Method::Unconstrained];
        }
        cfg.reseed(cfg.seed);
        Ok(cfg)
    }

    pub fn family(&self) -> Family {
        self.data.params.family()
    }

    /// Method tag of the learned model this config trains.
    pub fn learned_method(&self) -> Method {
        if self.train.constrained {
            Method::Cdu
        } else {
            Method::Unconstrained
        }
    }

    /// Set the root seed and every seed derived from it.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = sub_seed(seed, "sampling");
        self.train.eval_seed = sub_seed(seed, "validation");
        self.eval.seed = sub_seed(seed, "eval");
        self.eval.naive.seed = sub_seed(seed, "naive");
    }

    pub fn split_seed(&self, split: &str) -> u64 {
        sub_seed(self.seed, &format!("data/{split}"))
    }

    pub fn init_seed(&self, role: &str) -> u64 {
        sub_seed(self.seed, &format!("init/{role}"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(CliError::Config("seed must be below 2^63".into()));
        }
        let family = self.family();
        for (role, net) in [("primal", &self.primal), ("dual", &self.dual)] {
            net.validate()
                .map_err(|e| CliError::Config(format!("{role} network: {e}")))?;
            if net.family != family {
                return Err(CliError::Config(format!(
                    "{role} network is configured for {} but the data is {}",
                    net.family.as_str(),
                    family.as_str()
                )));
            }
        }
        self.train
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.eval.naive.family != family {
            return Err(CliError::Config(
                "naive baseline family does not match the data".into(),
            ));
        }
        if self.eval.methods.is_empty() {
            return Err(CliError::Config(
                "eval.methods must name at least one method".into(),
            ));
        }
        for m in &self.eval.methods {
            let ok = match m {
                Method::Sa | Method::FullPower => family == Family::Power,
                Method::Reference => false,
                _ => true,
            };
            if !ok {
                return Err(CliError::Config(format!(
                    "method {m} does not apply to {}",
                    family.as_str()
                )));
            }
        }
        if self.eval.peer.as_deref() == Some(self.name.as_str()) {
            return Err(CliError::Config(
                "eval.peer must name a different run".into(),
            ));
        }
        if self.eval.da_iterations == 0 {
            return Err(CliError::Config("da_iterations must be at least 1".into()));
        }
        match self.data.params {
            FamilyParams::Miqp { n, r, .. } if n == 0 || r > n => {
                return Err(CliError::Config("need n ≥ 1 and r ≤ n".into()))
            }
            FamilyParams::Power { n, fraction, r_min }
                if n == 0 || !(0.0..=1.0).contains(&fraction) || r_min <= 0.0 =>
            {
                return Err(CliError::Config(
                    "need n ≥ 1, fraction in [0, 1] and r_min > 0".into(),
                ))
            }
            _ => {}
        }
        if let Some(s) = &self.sweep {
            self.ood_spec(s).validate()?;
        }
        Ok(())
    }

    pub fn ood_spec(&self, s: &SweepConfig) -> OodSpec {
        OodSpec {
            axis: s.axis,
            grid: s.grid.clone(),
            base: self.data.params,
            instances: s.instances,
            seeds: s.seeds.clone(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(CliError::io(path))
    }

    /// SHA-256 of the canonical JSON form; independent of key order.
    pub fn hash(&self) -> String {
        crate::manifest::canonical_hash(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_is_valid_and_round_trips() {
        for name in PRESETS {
            let cfg = RunConfig::preset(name).unwrap();
            cfg.validate().unwrap();
            assert_eq!(cfg.name, name);
            assert_eq!(RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
        }
    }

    #[test]
    fn preset_hyperparameters() {
        let m = RunConfig::preset("miqp-constrained").unwrap();
        assert_eq!((m.train.batch_primal, m.train.batch_dual), (8, 256));
        assert_eq!(
            (m.data.splits.primal, m.data.splits.dual, m.data.splits.val),
            (400, 800, 200)
        );
        assert_eq!(m.data.splits.test, 400);
        let p = RunConfig::preset("power-constrained").unwrap();
        assert_eq!((p.train.batch_primal, p.train.batch_dual), (1, 256));
        assert_eq!(
            (p.data.splits.primal, p.data.splits.dual, p.data.splits.test),
            (512, 2048, 128)
        );
        let u = RunConfig::preset("miqp-unconstrained").unwrap();
        assert!(!u.train.constrained);
        assert_eq!(u.eval.peer.as_deref(), Some("miqp-constrained"));
        assert_eq!(m.eval.peer.as_deref(), Some("miqp-unconstrained"));
    }

    #[test]
    fn unknown_preset_is_a_config_error() {
        assert_eq!(RunConfig::preset("nope").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn reseed_changes_every_derived_seed() {
        let a = RunConfig::preset("miqp-desk-constrained").unwrap();
        let mut b = a.clone();
        b.reseed(1);
        assert_ne!(a.train.seed, b.train.seed);
        assert_ne!(a.eval.seed, b.eval.seed);
        assert_ne!(a.split_seed("test"), b.split_seed("test"));
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn family_mismatch_is_rejected() {
        let mut cfg = RunConfig::preset("miqp-desk-constrained").unwrap();
        cfg.dual = NetConfig::power(2, 1, 4);
        assert!(cfg.validate().is_err());
    }
}
