//! Model and trainer-state checkpoints as safetensors.

use std::path::Path;

use cdu_core::baselines::{NaiveConfig, NaiveGnn};
use cdu_core::linalg::Matrix;
use cdu_core::nets::{DualNet, NetConfig, PrimalNet, Role, UnrolledNet};
use cdu_core::optim::Adam;
use cdu_core::training::{HistoryRecord, MetaMultipliers, Models, TrainConfig, TrainerState};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::manifest::canonical_json;
use crate::tensors::{Tensor, TensorFile};

pub const MODELS_FORMAT: &str = "cdu-models/1";
pub const STATE_FORMAT: &str = "cdu-trainer-state/1";
pub const NAIVE_FORMAT: &str = "cdu-naive/1";

/// Where a model checkpoint came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Outer iteration the weights come from.
    pub iteration: Option<usize>,
    pub config_hash: Option<String>,
    /// Hash of the training splits and their hashes.
    pub data_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelsMeta {
    format: String,
    primal: NetConfig,
    dual: NetConfig,
    #[serde(flatten)]
    provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AdamMeta {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StateMeta {
    format: String,
    primal: NetConfig,
    dual: NetConfig,
    cfg: TrainConfig,
    meta: MetaMultipliers,
    iteration: usize,
    epochs: usize,
    best_violation: Option<f64>,
    gated_iteration: Option<usize>,
    adam_primal: AdamMeta,
    adam_dual: AdamMeta,
    history: Vec<HistoryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NaiveMeta {
    format: String,
    cfg: NaiveConfig,
}

fn metadata<T: Serialize>(meta: &T) -> String {
    canonical_json(&serde_json::to_value(meta).expect("serializable metadata"))
}

fn parse_meta<T: for<'de> Deserialize<'de>>(
    f: &TensorFile,
    path: &Path,
    format: &str,
) -> Result<T> {
    let v: serde_json::Value =
        serde_json::from_str(&f.metadata).map_err(|e| CliError::format(path, e))?;
    let found = v.get("format").and_then(|s| s.as_str()).unwrap_or("");
    if found != format {
        return Err(CliError::format(
            path,
            format!("expected {format}, found {found:?}"),
        ));
    }
    serde_json::from_value(v).map_err(|e| CliError::format(path, e))
}

fn insert_params(f: &mut TensorFile, prefix: &str, names: &[String], params: &[Matrix]) {
    for (n, p) in names.iter().zip(params) {
        f.insert(format!("{prefix}{n}"), Tensor::matrix(p));
    }
}

fn read_params(f: &TensorFile, path: &Path, prefix: &str, names: &[String]) -> Result<Vec<Matrix>> {
    names
        .iter()
        .map(|n| {
            f.matrix(&format!("{prefix}{n}"))
                .map_err(|e| CliError::format(path, e))
        })
        .collect()
}

fn read_net(
    f: &TensorFile,
    path: &Path,
    prefix: &str,
    role: Role,
    cfg: NetConfig,
) -> Result<UnrolledNet> {
    let names = UnrolledNet::new(role, cfg, 0)?.param_names();
    let params = read_params(f, path, prefix, &names)?;
    Ok(UnrolledNet::from_params(role, cfg, params)?)
}

fn insert_models(f: &mut TensorFile, prefix: &str, m: &Models) {
    insert_params(
        f,
        prefix,
        &m.primal.net.param_names(),
        m.primal.net.params(),
    );
    insert_params(f, prefix, &m.dual.net.param_names(), m.dual.net.params());
}

fn read_models(
    f: &TensorFile,
    path: &Path,
    prefix: &str,
    primal: NetConfig,
    dual: NetConfig,
) -> Result<Models> {
    Ok(Models {
        primal: PrimalNet {
            net: read_net(f, path, prefix, Role::Primal, primal)?,
        },
        dual: DualNet {
            net: read_net(f, path, prefix, Role::Dual, dual)?,
        },
    })
}

fn adam_meta(a: &Adam) -> AdamMeta {
    AdamMeta {
        lr: a.lr,
        beta1: a.beta1,
        beta2: a.beta2,
        eps: a.eps,
        t: a.t,
    }
}

fn insert_adam(f: &mut TensorFile, prefix: &str, names: &[String], a: &Adam) {
    insert_params(f, &format!("{prefix}m."), names, &a.m);
    insert_params(f, &format!("{prefix}v."), names, &a.v);
}

fn read_adam(
    f: &TensorFile,
    path: &Path,
    prefix: &str,
    names: &[String],
    meta: &AdamMeta,
) -> Result<Adam> {
    Ok(Adam {
        lr: meta.lr,
        beta1: meta.beta1,
        beta2: meta.beta2,
        eps: meta.eps,
        t: meta.t,
        m: read_params(f, path, &format!("{prefix}m."), names)?,
        v: read_params(f, path, &format!("{prefix}v."), names)?,
    })
}

pub fn models_to_tensors(m: &Models, provenance: &Provenance) -> TensorFile {
    let meta = ModelsMeta {
        format: MODELS_FORMAT.into(),
        primal: *m.primal.config(),
        dual: *m.dual.config(),
        provenance: provenance.clone(),
    };
    let mut f = TensorFile::new(metadata(&meta));
    insert_models(&mut f, "", m);
    f
}

pub fn save_models(path: &Path, m: &Models, provenance: &Provenance) -> Result<()> {
    models_to_tensors(m, provenance).save(path)
}

pub fn load_models(path: &Path) -> Result<(Models, Provenance)> {
    let f = TensorFile::load(path)?;
    let meta: ModelsMeta = parse_meta(&f, path, MODELS_FORMAT)?;
    Ok((
        read_models(&f, path, "", meta.primal, meta.dual)?,
        meta.provenance,
    ))
}

pub fn state_to_tensors(s: &TrainerState) -> TensorFile {
    let meta = StateMeta {
        format: STATE_FORMAT.into(),
        primal: *s.models.primal.config(),
        dual: *s.models.dual.config(),
        cfg: s.cfg.clone(),
        meta: s.meta.clone(),
        iteration: s.iteration,
        epochs: s.epochs,
        best_violation: s.best_violation,
        gated_iteration: s.gated.as_ref().map(|(_, i)| *i),
        adam_primal: adam_meta(&s.adam_primal),
        adam_dual: adam_meta(&s.adam_dual),
        history: s.history.clone(),
    };
    let mut f = TensorFile::new(metadata(&meta));
    insert_models(&mut f, "model.", &s.models);
    if let Some((g, _)) = &s.gated {
        insert_models(&mut f, "gated.", g);
    }
    insert_adam(
        &mut f,
        "adam.",
        &s.models.primal.net.param_names(),
        &s.adam_primal,
    );
    insert_adam(
        &mut f,
        "adam.",
        &s.models.dual.net.param_names(),
        &s.adam_dual,
    );
    f
}

pub fn state_from_tensors(f: &TensorFile, path: &Path) -> Result<TrainerState> {
    let meta: StateMeta = parse_meta(f, path, STATE_FORMAT)?;
    let models = read_models(f, path, "model.", meta.primal, meta.dual)?;
    let gated = match meta.gated_iteration {
        Some(i) => Some((read_models(f, path, "gated.", meta.primal, meta.dual)?, i)),
        None => None,
    };
    let adam_primal = read_adam(
        f,
        path,
        "adam.",
        &models.primal.net.param_names(),
        &meta.adam_primal,
    )?;
    let adam_dual = read_adam(
        f,
        path,
        "adam.",
        &models.dual.net.param_names(),
        &meta.adam_dual,
    )?;
    Ok(TrainerState {
        cfg: meta.cfg,
        models,
        adam_primal,
        adam_dual,
        meta: meta.meta,
        iteration: meta.iteration,
        epochs: meta.epochs,
        best_violation: meta.best_violation,
        gated,
        history: meta.history,
    })
}

pub fn save_state(path: &Path, s: &TrainerState) -> Result<()> {
    state_to_tensors(s).save(path)
}

pub fn load_state(path: &Path) -> Result<TrainerState> {
    state_from_tensors(&TensorFile::load(path)?, path)
}

pub fn save_naive(path: &Path, g: &NaiveGnn) -> Result<()> {
    let meta = NaiveMeta {
        format: NAIVE_FORMAT.into(),
        cfg: *g.config(),
    };
    let mut f = TensorFile::new(metadata(&meta));
    insert_params(&mut f, "", &g.param_names(), g.params());
    f.save(path)
}

pub fn load_naive(path: &Path) -> Result<NaiveGnn> {
    let f = TensorFile::load(path)?;
    let meta: NaiveMeta = parse_meta(&f, path, NAIVE_FORMAT)?;
    let names = NaiveGnn::new(meta.cfg)?.param_names();
    let params = read_params(&f, path, "", &names)?;
    Ok(NaiveGnn::from_params(meta.cfg, params)?)
}
