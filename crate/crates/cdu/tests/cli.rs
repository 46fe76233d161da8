mod common;

use std::path::Path;
use std::process::{Command, Output};

use cdu::figures::{render, write_table};
use cdu_core::eval::{Cell, FigureTable};
use common::{tiny, write_config};

fn cdu(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdu"))
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn entries(dir: &Path) -> usize {
    std::fs::read_dir(dir).map_or(0, |d| d.count())
}

#[test]
fn dry_runs_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    for cmd in ["generate", "train", "eval", "sweep"] {
        let o = cdu(&out, &[cmd, "--family", "miqp", "--dry-run"]);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("would write"));
    }
    let o = cdu(&out, &["reproduce", "--family", "power", "--dry-run"]);
    assert_eq!(code(&o), 0);
    assert!(!out.exists());
}

#[test]
fn unknown_preset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = cdu(dir.path(), &["generate", "--preset", "no-such-run"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no-such-run"));
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny("constrained");
    cfg.train.alpha = -1.0;
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, toml::to_string(&cfg).unwrap()).unwrap();
    let o = cdu(
        dir.path(),
        &["train", "--config", p.to_str().unwrap(), "--dry-run"],
    );
    assert_eq!(code(&o), 2);

    std::fs::write(&p, "name = \"x\"\nseed = \"zero\"\n").unwrap();
    let o = cdu(dir.path(), &["generate", "--config", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn family_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = cdu(
        dir.path(),
        &[
            "config",
            "--preset",
            "miqp-desk-constrained",
            "--family",
            "power",
        ],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn config_command_prints_loadable_toml() {
    let dir = tempfile::tempdir().unwrap();
    let o = cdu(dir.path(), &["config", "--family", "power", "--seed", "9"]);
    assert_eq!(code(&o), 0);
    let cfg = cdu::config::RunConfig::from_toml(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.name, "power-desk-constrained");
}

#[test]
fn diverging_training_exits_3_and_keeps_state() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny("constrained");
    cfg.train.lr_primal = 1e300;
    cfg.train.lr_dual = 1e300;
    cfg.train.meta_lr_primal = 1e300;
    cfg.train.meta_lr_dual = 1e300;
    cfg.train.iterations = 4;
    let p = write_config(dir.path(), &cfg);
    let o = cdu(dir.path(), &["train", "--config", p.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir
        .path()
        .join(&cfg.name)
        .join("train")
        .join("state.safetensors")
        .exists());
}

#[test]
fn empty_ood_table_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("ood.csv");
    write_table(&t, &FigureTable::new("ood").unwrap()).unwrap();
    let o = cdu(
        &dir.path().join("figs"),
        &["plot", "--table", t.to_str().unwrap()],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn full_cli_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let (c, u) = (tiny("constrained"), tiny("unconstrained"));
    let (pc, pu) = (write_config(dir.path(), &c), write_config(dir.path(), &u));
    let (pc, pu) = (pc.to_str().unwrap(), pu.to_str().unwrap());
    for args in [
        vec!["generate", "--config", pc],
        vec!["train", "--config", pu],
        vec!["train", "--config", pc],
        vec!["eval", "--config", pc],
        vec!["sweep", "--config", pc],
        vec!["plot", "--config", pc],
    ] {
        let o = cdu(&out, &args);
        assert_eq!(
            code(&o),
            0,
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let figs = out.join(&c.name).join("figures");
    for f in ["trajectories.svg", "descent.svg", "ood.svg"] {
        assert!(figs.join(f).exists(), "{f}");
    }
    assert!(entries(&out.join(&c.name).join("eval")) > 0);
}

#[test]
fn figure_rendering_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = FigureTable::new("trajectories").unwrap();
    for i in 0..6 {
        let k = i as f64;
        t.rows.push(vec![
            Cell::Text("cdu".into()),
            Cell::Num(k),
            Cell::Num(1.0 / (1.0 + k)),
            Cell::Num(0.5 - 0.8f64.powi(i)),
        ]);
    }
    let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
    render(&a, &t).unwrap();
    render(&b, &t).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}
