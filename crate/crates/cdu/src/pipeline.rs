//! The experiment stages behind each subcommand.
//!
//! A run lives in `out/<name>/`:
//!
//! ```text
//! config.toml
//! data/{primal,dual,val,test}.safetensors  data/manifest.json
//! train/state.safetensors  train/best.safetensors  train/history.jsonl  train/manifest.json
//! eval/<method>.{csv,json}  eval/summary.json  eval/figures/*.csv  eval/manifest.json
//! sweep/sweep.csv  sweep/figures/ood.csv  sweep/manifest.json
//! figures/*.svg  figures/manifest.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cdu_core::baselines::{naive_gnn_train, DaConfig, NaiveGnn};
use cdu_core::eval::{
    descent_table, evaluate, ood_sweep, ood_table, rate_histogram_table, reference_method,
    references, trajectory_table, EvalReport, Method, Reference, Runner, Summary,
};
use cdu_core::nets::{DualNet, PrimalNet};
use cdu_core::training::{Models, TrainData, TrainerState};
use cdu_core::trajectory::DualTrajectory;
use cdu_core::{Family, ProblemInstance};

use crate::checkpoint::{
    load_models, load_naive, load_state, save_models, save_naive, save_state, Provenance,
};
use crate::config::{RunConfig, Splits};
use crate::dataset::Dataset;
use crate::error::{CliError, Result};
use crate::figures;
use crate::history;
use crate::manifest::{canonical_hash, file_hash, ManifestKind, RunManifest};
use crate::results;

/// File layout of one run.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(out: &Path, name: &str) -> Self {
        Self {
            root: out.join(name),
        }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn train(&self) -> PathBuf {
        self.root.join("train")
    }

    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn sweep(&self) -> PathBuf {
        self.root.join("sweep")
    }

    pub fn figures(&self) -> PathBuf {
        self.root.join("figures")
    }

    pub fn state(&self) -> PathBuf {
        self.train().join("state.safetensors")
    }

    pub fn best(&self) -> PathBuf {
        self.train().join("best.safetensors")
    }

    pub fn history(&self) -> PathBuf {
        self.train().join("history.jsonl")
    }

    pub fn naive(&self) -> PathBuf {
        self.eval().join("naive.safetensors")
    }

    pub fn manifest(dir: &Path) -> PathBuf {
        dir.join("manifest.json")
    }
}

/// Progress sink; silent unless `verbose`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Log {
    pub verbose: bool,
}

impl Log {
    pub fn note(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))
}

/// The outputs a subcommand would write, without computing anything.
pub fn plan(cfg: &RunConfig, out: &Path, command: &str) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let d = RunDir::new(out, &cfg.name);
    let mut p = Vec::new();
    match command {
        "generate" => {
            p.push(d.config());
            p.extend(
                Splits::NAMES
                    .iter()
                    .map(|s| d.data().join(Dataset::file_name(s))),
            );
            p.push(RunDir::manifest(&d.data()));
        }
        "train" => {
            p.extend([
                d.state(),
                d.best(),
                d.history(),
                RunDir::manifest(&d.train()),
            ]);
        }
        "eval" => {
            for m in &cfg.eval.methods {
                p.push(d.eval().join(format!("{m}.csv")));
                p.push(d.eval().join(format!("{m}.json")));
            }
            p.push(d.eval().join("summary.json"));
            p.push(RunDir::manifest(&d.eval()));
        }
        "sweep" => {
            if cfg.sweep.is_none() {
                return Err(CliError::Config(format!(
                    "{} has no sweep section",
                    cfg.name
                )));
            }
            p.extend([
                d.sweep().join("sweep.csv"),
                d.sweep().join("figures/ood.csv"),
            ]);
            p.push(RunDir::manifest(&d.sweep()));
        }
        "plot" => p.push(RunDir::manifest(&d.figures())),
        other => return Err(CliError::Config(format!("unknown command {other}"))),
    }
    Ok(p)
}

/// Write every split of `cfg` with a dataset manifest.
pub fn generate(cfg: &RunConfig, out: &Path, log: Log) -> Result<RunManifest> {
    cfg.validate()?;
    let d = RunDir::new(out, &cfg.name);
    mkdir(&d.data())?;
    cfg.save(&d.config())?;
    let mut m = RunManifest::new(ManifestKind::Dataset, cfg);
    m.seeds.push(("root".into(), cfg.seed));
    m.add_artifact(&d.config())?;
    for split in Splits::NAMES {
        let ds = Dataset::for_split(cfg, split)?;
        let (path, hash) = ds.save(&d.data())?;
        log.note(format!(
            "{split}: {} instances -> {}",
            ds.instances.len(),
            path.display()
        ));
        m.seeds.push((format!("data/{split}"), ds.seed));
        m.datasets.push((split.to_string(), hash));
        m.add_artifact(&path)?;
    }
    m.write(&RunDir::manifest(&d.data()))
}

/// Splits of a run keyed by name, generating them when absent. Existing
/// files must match the configuration and the dataset manifest.
pub fn load_data(
    cfg: &RunConfig,
    out: &Path,
    log: Log,
) -> Result<(BTreeMap<String, Dataset>, PathBuf)> {
    let d = RunDir::new(out, &cfg.name);
    let mp = RunDir::manifest(&d.data());
    if !mp.exists() {
        log.note("no dataset manifest; generating");
        generate(cfg, out, log)?;
    }
    let manifest = RunManifest::read(&mp)?;
    let mut out_sets = BTreeMap::new();
    for split in Splits::NAMES {
        let path = d.data().join(Dataset::file_name(split));
        let recorded = manifest
            .datasets
            .iter()
            .find(|(s, _)| s == split)
            .map(|(_, h)| h.clone())
            .ok_or_else(|| CliError::format(&mp, format!("no hash for split {split}")))?;
        if file_hash(&path)? != recorded {
            return Err(CliError::format(
                &path,
                "contents differ from the dataset manifest",
            ));
        }
        let ds = Dataset::load(&path)?;
        let expect = (
            cfg.data.params,
            cfg.split_seed(split),
            cfg.data.splits.get(split),
        );
        if (ds.params, ds.seed, Some(ds.instances.len())) != expect {
            return Err(CliError::Config(format!(
                "{} was generated for a different configuration; rerun generate",
                path.display()
            )));
        }
        out_sets.insert(split.to_string(), ds);
    }
    Ok((out_sets, mp))
}

fn split(sets: &BTreeMap<String, Dataset>, name: &str) -> Vec<ProblemInstance> {
    sets.get(name)
        .map(|d| d.instances.clone())
        .unwrap_or_default()
}

pub fn initial_models(cfg: &RunConfig) -> Result<Models> {
    Ok(Models {
        primal: PrimalNet::new(cfg.primal, cfg.init_seed("primal"))?,
        dual: DualNet::new(cfg.dual, cfg.init_seed("dual"))?,
    })
}

/// Train to the iteration budget, checkpointing after every outer
/// iteration. `resume` continues from a saved trainer state.
pub fn train(cfg: &RunConfig, out: &Path, resume: Option<&Path>, log: Log) -> Result<RunManifest> {
    cfg.validate()?;
    let d = RunDir::new(out, &cfg.name);
    let (sets, data_manifest) = load_data(cfg, out, log)?;
    let data = TrainData::new(
        split(&sets, "primal"),
        split(&sets, "dual"),
        split(&sets, "val"),
    );
    mkdir(&d.train())?;
    let mut state = match resume {
        Some(path) => {
            let s = load_state(path)?;
            if s.cfg != cfg.train
                || *s.models.primal.config() != cfg.primal
                || *s.models.dual.config() != cfg.dual
            {
                return Err(CliError::Config(format!(
                    "{} was saved by a different configuration",
                    path.display()
                )));
            }
            log.note(format!("resuming at iteration {}", s.iteration));
            s
        }
        None => TrainerState::new(cfg.train.clone(), initial_models(cfg)?)?,
    };
    while !state.is_done() {
        if let Err(e) = state.step(&data) {
            save_state(&d.state(), &state)?;
            history::write(&d.history(), &state.history)?;
            return Err(CliError::Numerical(format!(
                "{e}; last good state saved at {}",
                d.state().display()
            )));
        }
        save_state(&d.state(), &state)?;
        history::write(&d.history(), &state.history)?;
        let last = state.history.last();
        log.note(format!(
            "iteration {}/{}: val violation {:.4}, saved {}",
            state.iteration,
            state.cfg.iterations,
            last.and_then(|h| h.val_violation).unwrap_or(f64::NAN),
            last.and_then(|h| h.saved).unwrap_or(false)
        ));
    }
    let datasets = RunManifest::read(&data_manifest)?.datasets;
    let data_hash = canonical_hash(&datasets);
    let prov = Provenance {
        iteration: state.gated.as_ref().map(|(_, i)| *i),
        config_hash: Some(cfg.hash()),
        data_hash: Some(data_hash.clone()),
    };
    save_models(&d.best(), state.best(), &prov)?;
    let mut m = RunManifest::new(ManifestKind::Train, cfg);
    m.seeds = vec![
        ("root".into(), cfg.seed),
        ("sampling".into(), cfg.train.seed),
        ("validation".into(), cfg.train.eval_seed),
        ("init/primal".into(), cfg.init_seed("primal")),
        ("init/dual".into(), cfg.init_seed("dual")),
    ];
    m.datasets = datasets;
    m.parents.push(data_manifest);
    if let Some(path) = resume {
        m.note("resumed_from", path.display());
    }
    m.note(
        "gated_iteration",
        prov.iteration.map_or("none".into(), |i| i.to_string()),
    );
    for p in [d.state(), d.best(), d.history()] {
        m.add_artifact(&p)?;
    }
    m.write(&RunDir::manifest(&d.train()))
}

/// Gated-best models of `run`, with the path of its training manifest.
fn trained(out: &Path, run: &str) -> Result<(Models, PathBuf)> {
    let d = RunDir::new(out, run);
    let best = d.best();
    if !best.exists() {
        return Err(CliError::Config(format!(
            "{} has no trained model; run train first",
            run
        )));
    }
    Ok((load_models(&best)?.0, RunDir::manifest(&d.train())))
}

/// Learned models by method tag: this run's and, if configured, its peer's.
struct Learned {
    by_method: BTreeMap<Method, Models>,
    manifests: Vec<PathBuf>,
}

impl Learned {
    fn load(cfg: &RunConfig, out: &Path, wanted: &[Method]) -> Result<Self> {
        let mut by_method = BTreeMap::new();
        let mut manifests = Vec::new();
        let (own, mp) = trained(out, &cfg.name)?;
        by_method.insert(cfg.learned_method(), own);
        manifests.push(mp);
        let other = match cfg.learned_method() {
            Method::Cdu => Method::Unconstrained,
            _ => Method::Cdu,
        };
        let needs_peer = wanted.contains(&other)
            || (cfg.family() == Family::Power && cfg.learned_method() != Method::Cdu);
        if let (true, Some(peer)) = (needs_peer, &cfg.eval.peer) {
            match trained(out, peer) {
                Ok((m, mp)) => {
                    by_method.insert(other, m);
                    manifests.push(mp);
                }
                Err(e) if wanted.contains(&other) => return Err(e),
                Err(_) => {}
            }
        }
        if wanted.contains(&other) && !by_method.contains_key(&other) {
            return Err(CliError::Config(format!(
                "method {other} needs eval.peer to name a trained run"
            )));
        }
        Ok(Self {
            by_method,
            manifests,
        })
    }

    /// Primal net of the constrained model, used by SA and power references.
    fn reference_primal(&self) -> Option<&PrimalNet> {
        self.by_method
            .get(&Method::Cdu)
            .or_else(|| self.by_method.values().next())
            .map(|m| &m.primal)
    }
}

fn da_config(cfg: &RunConfig) -> DaConfig {
    match cfg.family() {
        Family::Miqp => DaConfig::miqp(cfg.eval.da_iterations),
        Family::Power => DaConfig {
            iterations: cfg.eval.da_iterations,
            ..DaConfig::state_augmented(cfg.eval.seed)
        },
    }
}

fn runner<'a>(
    method: Method,
    learned: &'a Learned,
    da: &'a DaConfig,
    naive: Option<&'a NaiveGnn>,
    seed: u64,
) -> Result<Runner<'a>> {
    Ok(match method {
        Method::Cdu | Method::Unconstrained => {
            let m = learned
                .by_method
                .get(&method)
                .ok_or_else(|| CliError::Config(format!("no trained model for {method}")))?;
            Runner::Unrolled {
                primal: &m.primal,
                dual: &m.dual,
                seed,
            }
        }
        Method::Da => Runner::DualAscent(da),
        Method::Sa => Runner::StateAugmented {
            primal: learned
                .reference_primal()
                .ok_or_else(|| CliError::Config("sa needs a trained primal network".into()))?,
            cfg: da,
            seed,
        },
        Method::Naive => Runner::Naive(
            naive.ok_or_else(|| CliError::Config("naive model is not available".into()))?,
        ),
        Method::FullPower => Runner::FullPower,
        Method::Reference => {
            return Err(CliError::Config(
                "reference is not a runnable method".into(),
            ))
        }
    })
}

/// Fit the supervised baseline to oracle labels on the primal split.
fn fit_naive(
    cfg: &RunConfig,
    data: &[ProblemInstance],
    reference_primal: Option<&PrimalNet>,
) -> Result<NaiveGnn> {
    let labels: Vec<Vec<f64>> = references(data, reference_primal, cfg.eval.seed)?
        .into_iter()
        .map(|r| r.x)
        .collect();
    let (g, _) = naive_gnn_train(data, &labels, cfg.eval.naive)?;
    Ok(g)
}

/// Evaluate every configured method on the test split and write reports
/// and figure tables.
pub fn eval(cfg: &RunConfig, out: &Path, methods: &[Method], log: Log) -> Result<RunManifest> {
    cfg.validate()?;
    let methods: Vec<Method> = if methods.is_empty() {
        cfg.eval.methods.clone()
    } else {
        methods.to_vec()
    };
    let d = RunDir::new(out, &cfg.name);
    let (sets, data_manifest) = load_data(cfg, out, log)?;
    let test = split(&sets, "test");
    let test_hash = sets["test"].hash()?;
    let learned = Learned::load(cfg, out, &methods)?;
    mkdir(&d.eval().join("figures"))?;
    let mut m = RunManifest::new(ManifestKind::Eval, cfg);
    m.seeds = vec![("root".into(), cfg.seed), ("eval".into(), cfg.eval.seed)];
    m.datasets = vec![("test".into(), test_hash.clone())];
    m.parents.push(data_manifest);
    m.parents.extend(learned.manifests.iter().cloned());
    m.note("reference", reference_method(cfg.family()));

    log.note(format!(
        "computing {} references",
        reference_method(cfg.family())
    ));
    let refs: Vec<Reference> = references(&test, learned.reference_primal(), cfg.eval.seed)?;
    let naive = if methods.contains(&Method::Naive) {
        log.note("fitting the naive baseline");
        let g = fit_naive(cfg, &split(&sets, "primal"), learned.reference_primal())?;
        save_naive(&d.naive(), &g)?;
        m.add_artifact(&d.naive())?;
        m.note("naive_labels", reference_method(cfg.family()));
        Some(g)
    } else {
        None
    };
    let da = da_config(cfg);
    let mut reports: Vec<EvalReport> = Vec::new();
    let mut summary: BTreeMap<String, Summary> = BTreeMap::new();
    for &method in &methods {
        let r = runner(method, &learned, &da, naive.as_ref(), cfg.eval.seed)?;
        log.note(format!("evaluating {method}"));
        let rep = evaluate(method, &r, &test, &refs, &test_hash)?;
        let csv = d.eval().join(format!("{method}.csv"));
        let json = d.eval().join(format!("{method}.json"));
        results::write_long_csv(&csv, &results::long_rows(&rep, cfg.seed))?;
        results::write_json(&json, &rep)?;
        m.add_artifact(&csv)?;
        m.add_artifact(&json)?;
        summary.insert(method.to_string(), rep.summary.clone());
        reports.push(rep);
    }
    let sp = d.eval().join("summary.json");
    results::write_json(&sp, &summary)?;
    m.add_artifact(&sp)?;

    let fig = d.eval().join("figures");
    let learned_reports: Vec<&EvalReport> = reports
        .iter()
        .filter(|r| matches!(r.method, Method::Cdu | Method::Unconstrained))
        .collect();
    if !learned_reports.is_empty() {
        let metric = match cfg.family() {
            Family::Miqp => "grad_norm",
            Family::Power => "lagrangian",
        };
        let t = descent_table(&learned_reports, metric)?;
        let p = fig.join("descent.csv");
        figures::write_table(&p, &t)?;
        m.add_artifact(&p)?;
    }
    if let Some(z) = test.first() {
        let mut runs: Vec<(Method, DualTrajectory)> = Vec::new();
        for &method in &methods {
            let r = runner(method, &learned, &da, naive.as_ref(), cfg.eval.seed)?;
            if let Some(t) = r.run(z, 0)?.dual {
                runs.push((method, t));
            }
        }
        if !runs.is_empty() {
            let refs: Vec<(Method, &DualTrajectory)> = runs.iter().map(|(m, t)| (*m, t)).collect();
            let t = trajectory_table(&refs, z, Some(cfg.eval.da_iterations))?;
            let p = fig.join("trajectories.csv");
            figures::write_table(&p, &t)?;
            m.add_artifact(&p)?;
        }
    }
    if cfg.family() == Family::Power && !reports.is_empty() {
        let all: Vec<&EvalReport> = reports.iter().collect();
        let t = rate_histogram_table(&all, &test)?;
        let p = fig.join("rate-histogram.csv");
        figures::write_table(&p, &t)?;
        m.add_artifact(&p)?;
    }
    m.write(&RunDir::manifest(&d.eval()))
}

/// Out-of-distribution sweep over the configured axis.
pub fn sweep(cfg: &RunConfig, out: &Path, methods: &[Method], log: Log) -> Result<RunManifest> {
    cfg.validate()?;
    let s = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("{} has no sweep section", cfg.name)))?;
    let spec = cfg.ood_spec(s);
    let explicit = !methods.is_empty();
    let methods: Vec<Method> = if explicit {
        methods.to_vec()
    } else {
        cfg.eval.methods.clone()
    };
    let d = RunDir::new(out, &cfg.name);
    let learned = Learned::load(cfg, out, &methods)?;
    let mut m = RunManifest::new(ManifestKind::Sweep, cfg);
    m.seeds = s.seeds.iter().map(|&v| ("sweep".to_string(), v)).collect();
    m.parents.extend(learned.manifests.iter().cloned());
    let naive = if methods.contains(&Method::Naive) && d.naive().exists() {
        m.parents.push(RunDir::manifest(&d.eval()));
        Some(load_naive(&d.naive())?)
    } else {
        None
    };
    let da = da_config(cfg);
    let mut runners = Vec::new();
    for &method in &methods {
        match runner(method, &learned, &da, naive.as_ref(), cfg.eval.seed) {
            Ok(r) => runners.push((method, r)),
            Err(e) if explicit => return Err(e),
            Err(e) => {
                log.note(format!("skipping {method}: {e}"));
                m.note("skipped", method);
            }
        }
    }
    log.note(format!("sweeping {} over {:?}", s.axis.as_str(), s.grid));
    let rows = ood_sweep(&spec, &runners, learned.reference_primal())?;
    mkdir(&d.sweep().join("figures"))?;
    let sp = d.sweep().join("sweep.csv");
    results::write_sweep_csv(&sp, &rows)?;
    m.add_artifact(&sp)?;
    let t = ood_table(&rows)?;
    let tp = d.sweep().join("figures").join("ood.csv");
    figures::write_table(&tp, &t)?;
    m.add_artifact(&tp)?;
    m.write(&RunDir::manifest(&d.sweep()))
}

/// Render every figure table of a run (eval and sweep) to SVG.
pub fn plot_run(cfg: &RunConfig, out: &Path, log: Log) -> Result<RunManifest> {
    let d = RunDir::new(out, &cfg.name);
    let mut tables = Vec::new();
    let mut parents = Vec::new();
    for dir in [d.eval(), d.sweep()] {
        let fig = dir.join("figures");
        if !fig.is_dir() {
            continue;
        }
        parents.push(RunDir::manifest(&dir));
        let mut found: Vec<PathBuf> = std::fs::read_dir(&fig)
            .map_err(CliError::io(&fig))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        found.sort();
        tables.extend(found);
    }
    if tables.is_empty() {
        return Err(CliError::Config(format!(
            "{} has no figure tables; run eval or sweep first",
            cfg.name
        )));
    }
    let mut m = plot_tables(&tables, &d.figures(), log)?;
    m.parents = parents;
    m.write(&RunDir::manifest(&d.figures()))
}

/// Render tables to `dir/<figure>.svg`. The manifest is returned unwritten.
pub fn plot_tables(tables: &[PathBuf], dir: &Path, log: Log) -> Result<RunManifest> {
    mkdir(dir)?;
    let mut m = RunManifest::new(ManifestKind::Plot, &tables);
    for path in tables {
        let t = figures::read_table(path)?;
        let svg = dir.join(format!("{}.svg", t.figure));
        figures::render(&svg, &t)?;
        log.note(format!("{} -> {}", path.display(), svg.display()));
        m.add_artifact(&svg)?;
    }
    Ok(m)
}

/// Desk-scale pipeline for one family: both variants trained, the
/// constrained run evaluated against every baseline, swept and plotted.
pub fn reproduce(
    family: Family,
    seed: Option<u64>,
    out: &Path,
    log: Log,
) -> Result<Vec<RunManifest>> {
    let names = [
        format!("{}-desk-constrained", family.as_str()),
        format!("{}-desk-unconstrained", family.as_str()),
    ];
    let mut cfgs = Vec::new();
    for name in &names {
        let mut c = RunConfig::preset(name)?;
        if let Some(s) = seed {
            c.reseed(s);
        }
        c.validate()?;
        cfgs.push(c);
    }
    let mut manifests = Vec::new();
    for c in &cfgs {
        log.note(format!("== {}", c.name));
        manifests.push(generate(c, out, log)?);
        manifests.push(train(c, out, None, log)?);
    }
    let main = &cfgs[0];
    manifests.push(eval(main, out, &[], log)?);
    manifests.push(sweep(main, out, &[], log)?);
    manifests.push(plot_run(main, out, log)?);
    Ok(manifests)
}

/// Report written by [`eval`] for `method`.
pub fn read_report(cfg: &RunConfig, out: &Path, method: Method) -> Result<EvalReport> {
    results::read_json(
        &RunDir::new(out, &cfg.name)
            .eval()
            .join(format!("{method}.json")),
    )
}
