//! Instance splits stored as one safetensors file each.

use std::path::{Path, PathBuf};

use cdu_core::eval::FamilyParams;
use cdu_core::miqp::RelaxedQp;
use cdu_core::power::{NetworkInstance, Positions, RadioParams};
use cdu_core::{Family, ProblemInstance};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{canonical_json, sha256_hex};
use crate::tensors::{Tensor, TensorFile};

pub const FORMAT: &str = "cdu-dataset/1";
pub const GENERATOR: &str = env!("CARGO_PKG_VERSION");

/// Header stored in the safetensors metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format: String,
    pub generator: String,
    pub family: Family,
    pub split: String,
    pub seed: u64,
    pub count: usize,
    pub params: FamilyParams,
    pub radio: Option<RadioParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: String,
    pub seed: u64,
    pub params: FamilyParams,
    pub instances: Vec<ProblemInstance>,
}

fn points(v: &[[f64; 2]]) -> Tensor {
    Tensor::F64 {
        shape: vec![v.len(), 2],
        data: v.iter().flatten().copied().collect(),
    }
}

fn unpoints(f: &TensorFile, name: &str) -> std::result::Result<Vec<[f64; 2]>, String> {
    let m = f.matrix(name)?;
    if m.cols() != 2 {
        return Err(format!("{name} must have two columns"));
    }
    Ok(m.as_slice().chunks_exact(2).map(|c| [c[0], c[1]]).collect())
}

impl Dataset {
    pub fn generate(params: &FamilyParams, split: &str, seed: u64, count: usize) -> Result<Self> {
        let instances = (0..count as u64)
            .map(|i| params.generate(seed, i))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self {
            split: split.to_string(),
            seed,
            params: *params,
            instances,
        })
    }

    /// The named split of a run configuration.
    pub fn for_split(cfg: &RunConfig, split: &str) -> Result<Self> {
        let count = cfg
            .data
            .splits
            .get(split)
            .ok_or_else(|| CliError::Config(format!("unknown split {split}")))?;
        Self::generate(&cfg.data.params, split, cfg.split_seed(split), count)
    }

    pub fn family(&self) -> Family {
        self.params.family()
    }

    pub fn meta(&self) -> Result<DatasetMeta> {
        let radio = match self.family() {
            Family::Miqp => None,
            Family::Power => {
                let mut it = self
                    .instances
                    .iter()
                    .filter_map(|z| z.as_power())
                    .map(|n| *n.radio());
                let first = it.next();
                if let Some(r) = first {
                    if it.any(|o| o != r) {
                        return Err(CliError::Config(
                            "instances of one split must share radio parameters".into(),
                        ));
                    }
                }
                first
            }
        };
        Ok(DatasetMeta {
            format: FORMAT.to_string(),
            generator: GENERATOR.to_string(),
            family: self.family(),
            split: self.split.clone(),
            seed: self.seed,
            count: self.instances.len(),
            params: self.params,
            radio,
        })
    }

    pub fn to_tensors(&self) -> Result<TensorFile> {
        let meta = serde_json::to_value(self.meta()?).expect("serializable metadata");
        let mut f = TensorFile::new(canonical_json(&meta));
        for (i, z) in self.instances.iter().enumerate() {
            if z.family() != self.family() {
                return Err(CliError::Config(format!(
                    "instance {i} does not belong to the split family"
                )));
            }
            let k = |s: &str| format!("{i:06}.{s}");
            match z {
                ProblemInstance::Qp(qp) => {
                    f.insert(k("p"), Tensor::matrix(qp.p()));
                    f.insert(k("q"), Tensor::vector(qp.q()));
                    f.insert(k("a"), Tensor::matrix(qp.a()));
                    f.insert(k("b"), Tensor::vector(qp.b()));
                    f.insert(k("binary"), Tensor::indices(qp.binary()));
                }
                ProblemInstance::Power(net) => {
                    f.insert(k("h"), Tensor::matrix(net.h()));
                    f.insert(k("constrained"), Tensor::indices(&net.constrained()));
                    if let Some(pos) = net.positions() {
                        f.insert(k("tx"), points(&pos.tx));
                        f.insert(k("rx"), points(&pos.rx));
                    }
                }
            }
        }
        Ok(f)
    }

    pub fn from_tensors(f: &TensorFile, path: &Path) -> Result<Self> {
        let meta: DatasetMeta =
            serde_json::from_str(&f.metadata).map_err(|e| CliError::format(path, e))?;
        if meta.format != FORMAT {
            return Err(CliError::format(
                path,
                format!("unsupported format {}", meta.format),
            ));
        }
        if meta.family != meta.params.family() {
            return Err(CliError::format(
                path,
                "family does not match the generator parameters",
            ));
        }
        let bad = |e: String| CliError::format(path, e);
        let mut instances = Vec::with_capacity(meta.count);
        for i in 0..meta.count {
            let k = |s: &str| format!("{i:06}.{s}");
            let z: ProblemInstance = match meta.family {
                Family::Miqp => {
                    let a = f.matrix(&k("a")).map_err(bad)?;
                    let binary = f.indices(&k("binary")).map_err(bad)?;
                    let m = a.rows().checked_sub(2 * binary.len()).ok_or_else(|| {
                        CliError::format(path, format!("instance {i}: too few rows"))
                    })?;
                    RelaxedQp::new(
                        f.matrix(&k("p")).map_err(bad)?,
                        f.vector(&k("q")).map_err(bad)?,
                        a,
                        f.vector(&k("b")).map_err(bad)?,
                        m,
                        binary,
                    )
                    .map_err(|e| CliError::format(path, format!("instance {i}: {e}")))?
                    .into()
                }
                Family::Power => {
                    let radio = meta
                        .radio
                        .ok_or_else(|| CliError::format(path, "missing radio parameters"))?;
                    let h = f.matrix(&k("h")).map_err(bad)?;
                    let c = f.indices(&k("constrained")).map_err(bad)?;
                    let mut net = NetworkInstance::new(h, &c, radio)
                        .map_err(|e| CliError::format(path, format!("instance {i}: {e}")))?;
                    if f.tensors.contains_key(&k("tx")) {
                        let pos = Positions {
                            tx: unpoints(f, &k("tx")).map_err(bad)?,
                            rx: unpoints(f, &k("rx")).map_err(bad)?,
                        };
                        net = net
                            .with_positions(pos)
                            .map_err(|e| CliError::format(path, format!("instance {i}: {e}")))?;
                    }
                    net.into()
                }
            };
            instances.push(z);
        }
        Ok(Self {
            split: meta.split,
            seed: meta.seed,
            params: meta.params,
            instances,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.to_tensors()?.to_bytes()
    }

    /// SHA-256 of the serialized split.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_bytes()?))
    }

    pub fn file_name(split: &str) -> String {
        format!("{split}.safetensors")
    }

    /// Write `dir/{split}.safetensors` and return its path and hash.
    pub fn save(&self, dir: &Path) -> Result<(PathBuf, String)> {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        let path = dir.join(Self::file_name(&self.split));
        let bytes = self.to_bytes()?;
        std::fs::write(&path, &bytes).map_err(CliError::io(&path))?;
        Ok((path, sha256_hex(&bytes)))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tensors(&TensorFile::load(path)?, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(params: FamilyParams) {
        let d = Dataset::generate(&params, "val", 11, 3).unwrap();
        let f = d.to_tensors().unwrap();
        let back = Dataset::from_tensors(&f, Path::new("mem")).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_bytes().unwrap(), d.to_bytes().unwrap());
    }

    #[test]
    fn qp_split_round_trips_exactly() {
        round_trip(FamilyParams::Miqp { n: 6, m: 3, r: 2 });
    }

    #[test]
    fn power_split_round_trips_exactly() {
        round_trip(FamilyParams::Power {
            n: 5,
            fraction: 0.4,
            r_min: 1.5,
        });
    }

    #[test]
    fn empty_split_is_valid() {
        let d = Dataset::generate(&FamilyParams::Miqp { n: 4, m: 2, r: 1 }, "test", 0, 0).unwrap();
        let back = Dataset::from_tensors(&d.to_tensors().unwrap(), Path::new("mem")).unwrap();
        assert!(back.instances.is_empty());
    }
}
