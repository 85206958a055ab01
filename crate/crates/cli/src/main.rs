use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use symla_core::envs::{EnvSpec, ENV_NAMES};
use symla_core::harness::{
    default_test_dir, export_results, meta_test, meta_train, run_dir, sha256_hex, Checkpoint, ExperimentConfig,
    MetaTestOptions,
};
use symla_core::symmetry::{run_suite, SuiteOptions};
use symla_core::Execution;

#[derive(Parser)]
#[command(name = "symla", version, about = "Meta-train and meta-test symmetric learning agents")]
struct Cli {
    /// Evaluate population members and meta-test runs on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ES outer loop for every meta-training run of a config.
    MetaTrain {
        #[arg(long)]
        config: PathBuf,
        /// Continue the run recorded in this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint against a random-policy baseline.
    MetaTest {
        #[arg(long)]
        ckpt: PathBuf,
        /// Registered environment name (default: the config's or checkpoint's).
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        permute_seed: Option<u64>,
        #[arg(long)]
        swap_rewards: bool,
        #[arg(long)]
        arms: Option<usize>,
        /// Project observations to this width with a fresh matrix per lifetime.
        #[arg(long)]
        project_dim: Option<usize>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        lifetime: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for the result tables.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Experiment config; its architecture must match the checkpoint's.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check the SymLA symmetry properties on random parameters.
    Invariants {
        #[arg(long)]
        quick: bool,
    },
    /// List the registered environments.
    Envs,
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn cmd_meta_train(config: &Path, resume: Option<&Path>, exec: Execution) -> Result<()> {
    let cfg = ExperimentConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    let runs: Vec<(usize, Option<Checkpoint>)> = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let Some(run) = ck.header.seed.checked_sub(cfg.experiment.seed).map(|r| r as usize) else {
                bail!("checkpoint seed {} is not a run of master seed {}", ck.header.seed, cfg.experiment.seed);
            };
            if run >= cfg.experiment.meta_train_runs {
                bail!("checkpoint seed {} is not a run of master seed {}", ck.header.seed, cfg.experiment.seed);
            }
            vec![(run, Some(ck))]
        }
        None => (0..cfg.experiment.meta_train_runs).map(|r| (r, None)).collect(),
    };
    let total = cfg.es.outer_steps;
    for (run, ck) in runs {
        eprintln!("{}: run {run} -> {}", cfg.experiment.name, run_dir(&cfg, run).display());
        let out = meta_train(&cfg, run, ck, exec, |rec| {
            if rec.outer_step % 10 == 0 || rec.outer_step == total {
                eprintln!(
                    "  step {:>6}/{total}  mean {:>9.3}  max {:>9.3}  |theta| {:>8.3}  {} ms",
                    rec.outer_step, rec.mean_fitness, rec.max_fitness, rec.theta_norm, rec.wall_ms
                );
            }
        })?;
        let sha = sha256_hex(&std::fs::read(&out.checkpoint_path)?);
        println!("run {run}: checkpoint {} sha256 {sha}", out.checkpoint_path.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_meta_test(
    ckpt: &Path,
    env: Option<String>,
    permute_seed: Option<u64>,
    swap_rewards: bool,
    arms: Option<usize>,
    project_dim: Option<usize>,
    runs: Option<usize>,
    lifetime: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    config: Option<PathBuf>,
    exec: Execution,
) -> Result<()> {
    let bytes = std::fs::read(ckpt).with_context(|| format!("reading {}", ckpt.display()))?;
    let ck = Checkpoint::from_bytes(&bytes).with_context(|| format!("loading {}", ckpt.display()))?;
    let cfg = match &config {
        Some(p) => Some(ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };

    let mut spec = match (env, &cfg) {
        (Some(name), _) => EnvSpec::new(name),
        (None, Some(c)) => c.meta_test_env(),
        (None, None) => ck.header.train_env.first().cloned().context("checkpoint records no training environment")?,
    };
    if let Some(a) = arms {
        spec.arms = Some(a);
    }
    if let Some(s) = permute_seed {
        spec.permute_seed = Some(s);
    }
    if swap_rewards {
        spec.swap_rewards = true;
    }
    if let Some(d) = project_dim {
        spec.project_dim = Some(d);
    }
    spec.validate()?;

    let opts = MetaTestOptions {
        env: Some(spec.clone()),
        runs: runs.or(cfg.as_ref().map(|c| c.meta_test.runs)).unwrap_or(100),
        lifetime: lifetime.or(cfg.as_ref().and_then(|c| c.meta_test.lifetime)),
        seed: seed.or(cfg.as_ref().map(|c| c.meta_test.seed)).unwrap_or(1000),
        config: cfg,
    };
    let report = meta_test(&ck, &opts, exec)?;
    let dir = out.unwrap_or_else(|| default_test_dir(ckpt.parent().unwrap_or(Path::new(".")), &spec));
    let (files, summary) = export_results(&report, ck.header.kind, &ck.header.config_hash, &sha256_hex(&bytes), &dir)?;

    println!("env {spec}  agent {}  runs {}  lifetime {}", summary.agent, summary.runs, summary.lifetime);
    println!("fitness           {:.3} +- {:.3}", summary.fitness_mean, summary.fitness_std);
    println!("random fitness    {:.3} +- {:.3}", summary.baseline_fitness_mean, summary.baseline_fitness_std);
    if let (Some(m), Some(s)) = (summary.cum_regret_mean, summary.cum_regret_std) {
        println!("cum regret        {m:.3} +- {s:.3}");
    }
    if let (Some(m), Some(s)) = (summary.baseline_cum_regret_mean, summary.baseline_cum_regret_std) {
        println!("random cum regret {m:.3} +- {s:.3}");
    }
    println!("wrote {}", files.table.display());
    println!("wrote {}", files.runs.display());
    println!("wrote {}", files.curves.display());
    println!("wrote {}", files.summary.display());
    Ok(())
}

fn cmd_invariants(quick: bool) -> Result<bool> {
    let opts = if quick { SuiteOptions::quick() } else { SuiteOptions::full() };
    let start = std::time::Instant::now();
    let reports = run_suite(&opts)?;
    let mut all = true;
    for r in &reports {
        println!("{} {:<36} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        all &= r.passed;
    }
    println!("{} properties in {:.2?}", reports.len(), start.elapsed());
    Ok(all)
}

fn cmd_envs() -> Result<()> {
    println!("{:<22} {:>5} {:>7} {:>7} {:>8}", "name", "obs", "actions", "episode", "lifetime");
    for name in ENV_NAMES {
        let s = EnvSpec::new(*name).shape()?;
        println!("{:<22} {:>5} {:>7} {:>7} {:>8}", name, s.obs_dim, s.actions, s.episode_len, s.lifetime_len);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let exec = execution(cli.sequential);
    match cli.command {
        Command::MetaTrain { config, resume } => cmd_meta_train(&config, resume.as_deref(), exec)?,
        Command::MetaTest { ckpt, env, permute_seed, swap_rewards, arms, project_dim, runs, lifetime, seed, out, config } => {
            cmd_meta_test(&ckpt, env, permute_seed, swap_rewards, arms, project_dim, runs, lifetime, seed, out, config, exec)?
        }
        Command::Invariants { quick } => return cmd_invariants(quick),
        Command::Envs => cmd_envs()?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
