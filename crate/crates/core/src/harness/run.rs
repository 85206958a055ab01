use std::io::Write;
use std::path::{Path, PathBuf};

use super::checkpoint::{Checkpoint, CheckpointHeader, CHECKPOINT_VERSION};
use super::{architecture_hash, ExperimentConfig};
use crate::agents::{Agent, AgentConfig, AgentKind};
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::es::{self, LifetimeFitness, TrainLogRecord, TrainState};
use crate::exec::Execution;
use crate::lifetime::{run_meta_test, MetaTestReport};
use crate::math::SplitRng;

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
}

/// Directory of meta-training run `run`.
pub fn run_dir(cfg: &ExperimentConfig, run: usize) -> PathBuf {
    cfg.experiment.out_dir.join(format!("run-{run}"))
}

fn checkpoint_for(
    cfg: &ExperimentConfig,
    fit: &LifetimeFitness,
    seed: u64,
    state: &TrainState,
) -> Checkpoint {
    let agent = cfg.agent.agent_config();
    Checkpoint {
        header: CheckpointHeader {
            format_version: CHECKPOINT_VERSION,
            kind: cfg.agent.kind,
            obs_dim: fit.obs_dim,
            actions: fit.actions,
            agent,
            config_hash: cfg.config_hash(),
            seed,
            outer_step: state.outer_step,
            adam_t: state.adam.t,
            n_params: state.theta.len(),
            has_adam: true,
            train_env: cfg.env.train.clone(),
        },
        theta: state.theta.clone(),
        adam: Some(state.adam.clone()),
    }
}

/// Meta-trains run `run` of `cfg`, writing `checkpoint.bin` and
/// `train_log.jsonl` under the run directory.
///
/// With `resume`, training continues from the checkpoint's optimiser state
/// and appends to the log; the final parameters equal those of an
/// uninterrupted run. A failure leaves the last written checkpoint in place.
pub fn meta_train(
    cfg: &ExperimentConfig,
    run: usize,
    resume: Option<Checkpoint>,
    exec: Execution,
    mut progress: impl FnMut(&TrainLogRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let seed = cfg.experiment.seed + run as u64;
    let lifetime = cfg.train_lifetime()?;
    let agent = cfg.agent.agent_config();
    let fit = LifetimeFitness::new(cfg.agent.kind, agent, cfg.env.train.clone(), lifetime, cfg.es.evals_per_sample, seed)?;

    let state = match resume {
        Some(ck) => resume_state(cfg, &fit, seed, ck)?,
        None => {
            let mut rng = SplitRng::new(seed).split_named("init");
            TrainState::new(agent.init_params(cfg.agent.kind, fit.obs_dim, fit.actions, &mut rng))
        }
    };

    let dir = run_dir(cfg, run);
    std::fs::create_dir_all(&dir)?;
    let checkpoint_path = dir.join("checkpoint.bin");
    let log_path = dir.join("train_log.jsonl");
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(state.outer_step > 0)
        .truncate(state.outer_step == 0)
        .open(&log_path)?;

    let every = cfg.es.checkpoint_every;
    let final_state = es::meta_train(
        state,
        |phi, step, _member| fit.evaluate(phi, step),
        &cfg.es,
        seed,
        exec,
        |st, rec| {
            writeln!(log, "{}", serde_json::to_string(rec).expect("record serialises"))?;
            progress(rec);
            if every > 0 && st.outer_step % every == 0 {
                checkpoint_for(cfg, &fit, seed, st).save(&checkpoint_path)?;
            }
            Ok(())
        },
    )?;
    let checkpoint = checkpoint_for(cfg, &fit, seed, &final_state);
    checkpoint.save(&checkpoint_path)?;
    log.flush()?;
    Ok(TrainOutcome { checkpoint, checkpoint_path, log_path })
}

fn resume_state(cfg: &ExperimentConfig, fit: &LifetimeFitness, seed: u64, ck: Checkpoint) -> Result<TrainState> {
    let h = &ck.header;
    if h.config_hash != cfg.config_hash() || h.kind != cfg.agent.kind {
        return Err(Error::Incompatible(format!(
            "checkpoint architecture hash {} does not match the config's {}",
            h.config_hash,
            cfg.config_hash()
        )));
    }
    if h.seed != seed {
        return Err(Error::Incompatible(format!("checkpoint was trained with seed {}, this run uses {seed}", h.seed)));
    }
    if ck.theta.len() != fit.param_count() {
        return Err(Error::Incompatible(format!(
            "checkpoint has {} parameters, the config needs {}",
            ck.theta.len(),
            fit.param_count()
        )));
    }
    let adam = ck.adam.ok_or_else(|| Error::Incompatible("checkpoint has no optimiser state to resume from".into()))?;
    Ok(TrainState { theta: ck.theta, adam, outer_step: h.outer_step })
}

/// Meta-test settings; unset fields fall back to the checkpoint's training setup.
#[derive(Clone, Debug, Default)]
pub struct MetaTestOptions {
    pub env: Option<EnvSpec>,
    pub runs: usize,
    pub lifetime: Option<usize>,
    pub seed: u64,
    /// When given, its architecture must match the checkpoint's.
    pub config: Option<ExperimentConfig>,
}

/// Meta-tests a checkpoint on `opts.env` (default: its first training env).
///
/// SymLA parameters are bound to whatever interface the test environment
/// has. MetaRNN parameters only fit the interface they were trained on.
pub fn meta_test(ck: &Checkpoint, opts: &MetaTestOptions, exec: Execution) -> Result<MetaTestReport> {
    let h = &ck.header;
    let stored = architecture_hash(h.kind, &h.agent);
    if stored != h.config_hash {
        return Err(Error::Checkpoint("header hash does not match its own agent config".into()));
    }
    if let Some(cfg) = &opts.config {
        if cfg.config_hash() != h.config_hash {
            return Err(Error::Incompatible(format!(
                "config architecture hash {} differs from the checkpoint's {}; the parameters would be misread",
                cfg.config_hash(),
                h.config_hash
            )));
        }
    }
    let env = match &opts.env {
        Some(e) => e.clone(),
        None => h.train_env.first().cloned().ok_or_else(|| Error::Checkpoint("no training environment recorded".into()))?,
    };
    let shape = env.shape()?;
    let agent = bind_agent(h.kind, &h.agent, (h.obs_dim, h.actions), &env, &ck.theta)?;
    let lifetime = opts.lifetime.unwrap_or(shape.lifetime_len);
    run_meta_test(&agent, &env, opts.runs, lifetime, opts.seed, exec)
}

fn bind_agent(kind: AgentKind, cfg: &AgentConfig, trained: (usize, usize), env: &EnvSpec, theta: &[f32]) -> Result<Agent> {
    let shape = env.shape()?;
    let target = (shape.obs_dim, shape.actions);
    if kind == AgentKind::MetaRnn && target != trained {
        return Err(Error::Incompatible(format!(
            "metarnn checkpoint was trained with {} observations and {} actions but {env} has {} and {}; \
             its input and output weights are sized to the training interface and cannot be resized \
             (a symla checkpoint can)",
            trained.0, trained.1, target.0, target.1
        )));
    }
    Ok(Agent::from_flat(kind, target.0, target.1, cfg, theta)?)
}

/// Result directory for a meta-test of `env`.
pub fn default_test_dir(base: &Path, env: &EnvSpec) -> PathBuf {
    let slug: String =
        env.to_string().chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' }).collect();
    base.join(format!("meta-test-{slug}"))
}
