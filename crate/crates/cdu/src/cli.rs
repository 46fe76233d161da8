//! Command-line interface.

use std::path::{Path, PathBuf};

use cdu_core::eval::Method;
use cdu_core::Family;
use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, PRESETS};
use crate::error::{CliError, Result};
use crate::manifest::RunManifest;
use crate::pipeline::{self, Log, RunDir};

#[derive(Debug, Parser)]
#[command(
    name = "cdu",
    version,
    about = "Constrained unrolled primal-dual networks"
)]
pub struct Cli {
    /// Output root; each run writes to `<out>/<name>/`.
    #[arg(long, env = "CDU_OUT", default_value = "runs", global = true)]
    pub out: PathBuf,
    /// Suppress progress messages.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

/// Where the run configuration comes from.
#[derive(Debug, Clone, Default, Args)]
pub struct Source {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Built-in configuration (see `cdu config --list`).
    #[arg(long, value_name = "NAME", conflicts_with = "config")]
    pub preset: Option<String>,
    /// Problem family; alone it selects the desk-scale constrained preset.
    #[arg(long, value_parser = parse_family)]
    pub family: Option<Family>,
    /// Root seed; replaces the configured seed and every seed derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate every dataset split.
    Generate {
        #[command(flatten)]
        source: Source,
        /// Validate the configuration and list the outputs only.
        #[arg(long)]
        dry_run: bool,
    },
    /// Train the primal and dual networks.
    Train {
        #[command(flatten)]
        source: Source,
        /// Continue from a saved trainer state.
        #[arg(long, value_name = "PATH")]
        resume: Option<PathBuf>,
        #[arg(long)]
        dry_run: bool,
    },
    /// Evaluate the trained model and baselines on the test split.
    Eval {
        #[command(flatten)]
        source: Source,
        /// Methods to evaluate; defaults to the configured list.
        #[arg(long, value_parser = parse_method)]
        method: Vec<Method>,
        #[arg(long)]
        dry_run: bool,
    },
    /// Out-of-distribution sweep.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_parser = parse_method)]
        method: Vec<Method>,
        #[arg(long)]
        dry_run: bool,
    },
    /// Render figure tables to SVG.
    Plot {
        #[command(flatten)]
        source: Source,
        /// Render these tables into `--out` instead of a run's tables.
        #[arg(long, value_name = "PATH")]
        table: Vec<PathBuf>,
    },
    /// Desk-scale pipeline: generate, train both variants, eval, sweep, plot.
    Reproduce {
        /// Family to run; both when omitted.
        #[arg(long, value_parser = parse_family)]
        family: Option<Family>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dry_run: bool,
    },
    /// Print a resolved configuration as TOML.
    Config {
        #[command(flatten)]
        source: Source,
        /// List the built-in presets.
        #[arg(long)]
        list: bool,
    },
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    match s {
        "miqp" => Ok(Family::Miqp),
        "power" => Ok(Family::Power),
        _ => Err(format!("expected miqp or power, found {s}")),
    }
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    Method::parse(s)
        .filter(|m| *m != Method::Reference)
        .ok_or_else(|| {
            format!("expected one of cdu, unconstrained, da, sa, naive, fullpower; found {s}")
        })
}

impl Source {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.preset, self.family) {
            (Some(path), _, _) => RunConfig::load(path)?,
            (None, Some(name), _) => RunConfig::preset(name)?,
            (None, None, Some(f)) => {
                RunConfig::preset(&format!("{}-desk-constrained", f.as_str()))?
            }
            (None, None, None) => {
                return Err(CliError::Config(
                    "one of --config, --preset or --family is required".into(),
                ))
            }
        };
        if let Some(f) = self.family {
            if f != cfg.family() {
                return Err(CliError::Config(format!(
                    "--family {f} does not match the {} configuration",
                    cfg.family()
                )));
            }
        }
        if let Some(s) = self.seed {
            cfg.reseed(s);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_plan(cfg: &RunConfig, out: &Path, command: &str) -> Result<()> {
    println!(
        "config {} ({}) is valid; hash {}",
        cfg.name,
        cfg.family(),
        cfg.hash()
    );
    for p in pipeline::plan(cfg, out, command)? {
        println!("would write {}", p.display());
    }
    Ok(())
}

fn print_manifest(m: &RunManifest, dir: &Path) {
    println!("{:?} manifest: {}", m.kind, RunDir::manifest(dir).display());
    for a in &m.artifacts {
        println!("  {}  {}", &a.sha256[..12], a.path.display());
    }
}

/// Run a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let log = Log {
        verbose: !cli.quiet,
    };
    let out = cli.out.as_path();
    match cli.command {
        Command::Generate { source, dry_run } => {
            let cfg = source.resolve()?;
            if dry_run {
                return print_plan(&cfg, out, "generate");
            }
            let m = pipeline::generate(&cfg, out, log)?;
            print_manifest(&m, &RunDir::new(out, &cfg.name).data());
        }
        Command::Train {
            source,
            resume,
            dry_run,
        } => {
            let cfg = source.resolve()?;
            if dry_run {
                return print_plan(&cfg, out, "train");
            }
            let m = pipeline::train(&cfg, out, resume.as_deref(), log)?;
            print_manifest(&m, &RunDir::new(out, &cfg.name).train());
        }
        Command::Eval {
            source,
            method,
            dry_run,
        } => {
            let cfg = source.resolve()?;
            if dry_run {
                return print_plan(&cfg, out, "eval");
            }
            let m = pipeline::eval(&cfg, out, &method, log)?;
            print_manifest(&m, &RunDir::new(out, &cfg.name).eval());
            let methods = if method.is_empty() {
                cfg.eval.methods.clone()
            } else {
                method
            };
            println!(
                "{:<14} {:>12} {:>12} {:>12} {:>12}",
                "method", "objective", "mse_x", "violation", "max_viol"
            );
            for mt in methods {
                let s = pipeline::read_report(&cfg, out, mt)?.summary;
                println!(
                    "{:<14} {:>12.5} {:>12} {:>12.5} {:>12.5}",
                    mt.as_str(),
                    s.objective,
                    s.mse_x.map_or("-".into(), |v| format!("{v:.5}")),
                    s.violation_mean,
                    s.violation_max
                );
            }
        }
        Command::Sweep {
            source,
            method,
            dry_run,
        } => {
            let cfg = source.resolve()?;
            if dry_run {
                return print_plan(&cfg, out, "sweep");
            }
            let m = pipeline::sweep(&cfg, out, &method, log)?;
            print_manifest(&m, &RunDir::new(out, &cfg.name).sweep());
        }
        Command::Plot { source, table } => {
            if table.is_empty() {
                let cfg = source.resolve()?;
                let m = pipeline::plot_run(&cfg, out, log)?;
                print_manifest(&m, &RunDir::new(out, &cfg.name).figures());
            } else {
                let m = pipeline::plot_tables(&table, out, log)?.write(&RunDir::manifest(out))?;
                print_manifest(&m, out);
            }
        }
        Command::Reproduce {
            family,
            seed,
            dry_run,
        } => {
            let families = family.map_or(vec![Family::Miqp, Family::Power], |f| vec![f]);
            for f in families {
                if dry_run {
                    for variant in ["constrained", "unconstrained"] {
                        let mut cfg = RunConfig::preset(&format!("{}-desk-{variant}", f.as_str()))?;
                        if let Some(s) = seed {
                            cfg.reseed(s);
                        }
                        print_plan(&cfg, out, "generate")?;
                        print_plan(&cfg, out, "train")?;
                    }
                    continue;
                }
                for m in pipeline::reproduce(f, seed, out, log)? {
                    println!("{:?}: {} artifacts", m.kind, m.artifacts.len());
                }
                let cfg = RunConfig::preset(&format!("{}-desk-constrained", f.as_str()))?;
                println!(
                    "figures in {}",
                    RunDir::new(out, &cfg.name).figures().display()
                );
            }
        }
        Command::Config { source, list } => {
            if list {
                PRESETS.iter().for_each(|p| println!("{p}"));
            } else {
                print!("{}", source.resolve()?.to_toml()?);
            }
        }
    }
    Ok(())
}
