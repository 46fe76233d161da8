mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cdu::checkpoint::{load_models, load_state, save_state};
use cdu::manifest::{file_hash, ManifestKind, RunManifest};
use cdu::pipeline::{self, initial_models, Log, RunDir};
use cdu_core::eval::Method;
use cdu_core::training::{TrainData, TrainerState};
use common::tiny;

const QUIET: Log = Log { verbose: false };

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_file() {
            out.insert(
                p.strip_prefix(dir).unwrap().to_path_buf(),
                std::fs::read(&p).unwrap(),
            );
        }
    }
    out
}

#[test]
fn generation_is_byte_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = tiny("constrained");
    pipeline::generate(&cfg, a.path(), QUIET).unwrap();
    pipeline::generate(&cfg, b.path(), QUIET).unwrap();
    let (fa, fb) = (
        files(&RunDir::new(a.path(), &cfg.name).data()),
        files(&RunDir::new(b.path(), &cfg.name).data()),
    );
    for split in ["primal", "dual", "val", "test"] {
        let k = PathBuf::from(format!("{split}.safetensors"));
        assert_eq!(fa[&k], fb[&k], "{split}");
    }
}

#[test]
fn constrained_and_unconstrained_runs_share_data() {
    let dir = tempfile::tempdir().unwrap();
    let (c, u) = (tiny("constrained"), tiny("unconstrained"));
    let mc = pipeline::generate(&c, dir.path(), QUIET).unwrap();
    let mu = pipeline::generate(&u, dir.path(), QUIET).unwrap();
    assert_eq!(mc.datasets, mu.datasets);
}

#[test]
fn empty_split_yields_valid_file_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny("constrained");
    cfg.data.splits.test = 0;
    let m = pipeline::generate(&cfg, dir.path(), QUIET).unwrap();
    let d = RunDir::new(dir.path(), &cfg.name).data();
    assert!(d.join("test.safetensors").exists());
    assert!(m
        .artifacts
        .iter()
        .any(|a| a.path.ends_with("test.safetensors")));
    let (sets, _) = pipeline::load_data(&cfg, dir.path(), QUIET).unwrap();
    assert!(sets["test"].instances.is_empty());
}

#[test]
fn tampered_dataset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny("constrained");
    pipeline::generate(&cfg, dir.path(), QUIET).unwrap();
    let p = RunDir::new(dir.path(), &cfg.name)
        .data()
        .join("val.safetensors");
    let mut bytes = std::fs::read(&p).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&p, bytes).unwrap();
    assert!(pipeline::load_data(&cfg, dir.path(), QUIET).is_err());
}

fn collect(path: &Path, seen: &mut BTreeMap<PathBuf, RunManifest>) {
    let path = path.to_path_buf();
    if seen.contains_key(&path) {
        return;
    }
    let m = RunManifest::read(&path).unwrap();
    let parents = m.parents.clone();
    seen.insert(path, m);
    for p in parents {
        collect(&p, seen);
    }
}

#[test]
fn manifests_chain_and_account_for_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let (c, u) = (tiny("constrained"), tiny("unconstrained"));
    pipeline::train(&u, out, None, QUIET).unwrap();
    pipeline::train(&c, out, None, QUIET).unwrap();
    pipeline::eval(&c, out, &[], QUIET).unwrap();
    pipeline::sweep(&c, out, &[], QUIET).unwrap();
    pipeline::plot_run(&c, out, QUIET).unwrap();

    let d = RunDir::new(out, &c.name);
    let mut seen = BTreeMap::new();
    collect(&RunDir::manifest(&d.figures()), &mut seen);
    collect(&RunDir::manifest(&d.sweep()), &mut seen);
    let kinds: Vec<ManifestKind> = seen.values().map(|m| m.kind.clone()).collect();
    for k in [
        ManifestKind::Dataset,
        ManifestKind::Train,
        ManifestKind::Eval,
        ManifestKind::Sweep,
        ManifestKind::Plot,
    ] {
        assert!(kinds.contains(&k), "{k:?} missing from the chain");
    }
    // Both variants' train manifests feed the evaluation.
    assert_eq!(
        kinds.iter().filter(|k| **k == ManifestKind::Train).count(),
        2
    );

    let mut owners: BTreeMap<PathBuf, usize> = BTreeMap::new();
    for m in seen.values() {
        for a in &m.artifacts {
            assert_eq!(
                file_hash(&a.path).unwrap(),
                a.sha256,
                "{}",
                a.path.display()
            );
            *owners.entry(a.path.clone()).or_default() += 1;
        }
    }
    assert!(owners.values().all(|&n| n == 1));
    let own = |dir: PathBuf| {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_file() && p != RunDir::manifest(&dir) {
                assert!(owners.contains_key(&p), "{} is in no manifest", p.display());
            }
        }
    };
    for sub in [d.eval(), d.sweep(), d.figures(), d.train(), d.data()] {
        own(sub);
    }
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = tiny("constrained");
    pipeline::train(&cfg, a.path(), None, QUIET).unwrap();

    let (sets, _) = pipeline::load_data(&cfg, b.path(), QUIET).unwrap();
    let get = |s: &str| sets[s].instances.clone();
    let data = TrainData::new(get("primal"), get("dual"), get("val"));
    let mut s = TrainerState::new(cfg.train.clone(), initial_models(&cfg).unwrap()).unwrap();
    s.step(&data).unwrap();
    let snapshot = b.path().join("interrupted.safetensors");
    save_state(&snapshot, &s).unwrap();
    pipeline::train(&cfg, b.path(), Some(&snapshot), QUIET).unwrap();

    let (da, db) = (
        RunDir::new(a.path(), &cfg.name),
        RunDir::new(b.path(), &cfg.name),
    );
    assert_eq!(
        load_state(&da.state()).unwrap(),
        load_state(&db.state()).unwrap()
    );
    assert_eq!(
        load_models(&da.best()).unwrap(),
        load_models(&db.best()).unwrap()
    );
    assert_eq!(
        std::fs::read(da.best()).unwrap(),
        std::fs::read(db.best()).unwrap()
    );
}

#[test]
fn resume_rejects_other_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny("constrained");
    pipeline::train(&cfg, dir.path(), None, QUIET).unwrap();
    let mut other = cfg.clone();
    other.train.lr_primal *= 2.0;
    let state = RunDir::new(dir.path(), &cfg.name).state();
    let e = pipeline::train(&other, dir.path(), Some(&state), QUIET).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn evaluation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let (c, u) = (tiny("constrained"), tiny("unconstrained"));
    pipeline::train(&u, out, None, QUIET).unwrap();
    pipeline::train(&c, out, None, QUIET).unwrap();
    let methods = [Method::Cdu, Method::Unconstrained, Method::Da];
    pipeline::eval(&c, out, &methods, QUIET).unwrap();
    let first: Vec<_> = methods
        .iter()
        .map(|&m| pipeline::read_report(&c, out, m).unwrap())
        .collect();
    pipeline::eval(&c, out, &methods, QUIET).unwrap();
    let second: Vec<_> = methods
        .iter()
        .map(|&m| pipeline::read_report(&c, out, m).unwrap())
        .collect();
    assert_eq!(first, second);
}

#[test]
fn eval_without_training_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let e = pipeline::eval(&tiny("constrained"), dir.path(), &[], QUIET).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}
