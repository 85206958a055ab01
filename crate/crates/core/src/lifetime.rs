//! The inner loop: one agent, one environment, `L` steps, episodes
//! concatenated with the agent state carried across resets.

use crate::agents::{Agent, AgentIo, AgentState};
use crate::envs::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::math::SplitRng;

#[derive(Clone, Debug, PartialEq)]
pub struct LifetimeResult {
    pub rewards: Vec<f32>,
    /// Per-step expected regret; present only when the environment knows its payouts.
    pub expected_regrets: Option<Vec<f32>>,
    /// Returns of the episodes in order; the last entry is the truncated
    /// episode, if the lifetime ended mid-episode.
    pub episode_returns: Vec<f64>,
    pub actions: Vec<usize>,
    /// Undiscounted lifetime reward, summed in step order.
    pub fitness: f64,
}

impl LifetimeResult {
    pub fn cumulative_regret(&self) -> Option<f64> {
        self.expected_regrets.as_ref().map(|r| r.iter().map(|&v| f64::from(v)).sum())
    }
}

/// What an observer sees after each agent step.
pub struct StepTrace<'a> {
    pub t: usize,
    pub action: usize,
    pub reward: f32,
    pub done: bool,
    /// Agent state after the step.
    pub state: &'a AgentState,
}

/// Sum of rewards in step order, the definition of lifetime fitness.
pub fn fitness_of(rewards: &[f32]) -> f64 {
    rewards.iter().map(|&r| f64::from(r)).sum()
}

pub fn run_lifetime(agent: &Agent, env: &mut dyn Environment, lifetime: usize, rng: &SplitRng) -> Result<LifetimeResult> {
    run_lifetime_observed(agent, env, lifetime, rng, |_| {})
}

/// Runs exactly `lifetime` agent steps.
///
/// The first step sees reward 0 and no previous action. When an episode ends
/// the environment is reset; the agent is not, and the terminal reward and
/// action are fed in alongside the first observation of the next episode.
pub fn run_lifetime_observed(
    agent: &Agent,
    env: &mut dyn Environment,
    lifetime: usize,
    rng: &SplitRng,
    mut observer: impl FnMut(&StepTrace<'_>),
) -> Result<LifetimeResult> {
    let shape = env.shape();
    if agent.shape() != (shape.obs_dim, shape.actions) {
        return Err(Error::ShapeMismatch { agent: agent.shape(), env: (shape.obs_dim, shape.actions) });
    }
    let mut state = agent.init_state(&mut rng.split_named("agent-init"));
    let mut action_rng = rng.split_named("actions");

    let mut rewards = Vec::with_capacity(lifetime);
    let mut regrets = Vec::with_capacity(lifetime);
    let mut has_regret = true;
    let mut actions = Vec::with_capacity(lifetime);
    let mut episode_returns = Vec::new();
    let mut episode_return = 0.0f64;
    let mut episode_steps = 0usize;

    let mut obs = env.reset().obs;
    let mut reward = 0.0f32;
    let mut prev_action = None;

    for t in 0..lifetime {
        let io = AgentIo { obs: &obs, reward, prev_action };
        let action = agent.step(&mut state, &io, &mut action_rng)?;
        match env.expected_regret(action) {
            Some(r) if has_regret => regrets.push(r),
            _ => has_regret = false,
        }
        let step = env.step(action)?;
        rewards.push(step.reward);
        actions.push(action);
        episode_return += f64::from(step.reward);
        episode_steps += 1;
        observer(&StepTrace { t, action, reward: step.reward, done: step.done, state: &state });

        reward = step.reward;
        prev_action = Some(action);
        if step.done {
            episode_returns.push(episode_return);
            episode_return = 0.0;
            episode_steps = 0;
            obs = env.reset().obs;
        } else {
            obs = step.obs;
        }
    }
    if episode_steps > 0 {
        episode_returns.push(episode_return);
    }

    Ok(LifetimeResult {
        fitness: fitness_of(&rewards),
        rewards,
        expected_regrets: has_regret.then_some(regrets),
        episode_returns,
        actions,
    })
}

/// One meta-test lifetime together with a uniform-random baseline lifetime on
/// the same environment instance.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    /// Key of the run's RNG stream.
    pub seed_key: u64,
    pub agent: LifetimeResult,
    pub baseline: LifetimeResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaTestReport {
    pub env: EnvSpec,
    pub lifetime: usize,
    pub seed: u64,
    pub runs: Vec<RunRecord>,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    if n == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.clone().sum::<f64>() / n;
    let var = if n > 1.0 { xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

impl MetaTestReport {
    /// Mean and sample std of lifetime fitness.
    pub fn fitness_stats(&self) -> (f64, f64) {
        mean_std(self.runs.iter().map(|r| r.agent.fitness))
    }

    pub fn baseline_fitness_stats(&self) -> (f64, f64) {
        mean_std(self.runs.iter().map(|r| r.baseline.fitness))
    }

    /// Mean and sample std of cumulative expected regret (bandits only).
    pub fn regret_stats(&self) -> Option<(f64, f64)> {
        let regrets: Option<Vec<f64>> = self.runs.iter().map(|r| r.agent.cumulative_regret()).collect();
        regrets.map(|v| mean_std(v.into_iter()))
    }

    pub fn baseline_regret_stats(&self) -> Option<(f64, f64)> {
        let regrets: Option<Vec<f64>> = self.runs.iter().map(|r| r.baseline.cumulative_regret()).collect();
        regrets.map(|v| mean_std(v.into_iter()))
    }

    /// Mean cumulative expected regret after each step.
    pub fn regret_curve(&self) -> Option<Vec<f64>> {
        let mut curve = vec![0.0; self.lifetime];
        for r in &self.runs {
            let mut acc = 0.0;
            for (c, &g) in curve.iter_mut().zip(r.agent.expected_regrets.as_ref()?) {
                acc += f64::from(g);
                *c += acc;
            }
        }
        let n = self.runs.len() as f64;
        Some(curve.into_iter().map(|c| c / n).collect())
    }

    /// Mean per-step reward minus the random baseline's mean per-step reward.
    pub fn relative_reward_curve(&self) -> Vec<f64> {
        let n = self.runs.len() as f64;
        let mut curve = vec![0.0; self.lifetime];
        for r in &self.runs {
            for (t, c) in curve.iter_mut().enumerate() {
                *c += f64::from(r.agent.rewards[t]) - f64::from(r.baseline.rewards[t]);
            }
        }
        curve.into_iter().map(|c| c / n).collect()
    }
}

/// Runs `runs` independent lifetimes of `agent` on fresh instances of `env`,
/// each paired with a random-policy lifetime on an identically seeded instance.
pub fn run_meta_test(
    agent: &Agent,
    env: &EnvSpec,
    runs: usize,
    lifetime: usize,
    seed: u64,
    exec: Execution,
) -> Result<MetaTestReport> {
    let shape = env.shape()?;
    let (obs_dim, actions) = (shape.obs_dim, shape.actions);
    if agent.shape() != (obs_dim, actions) {
        return Err(Error::ShapeMismatch { agent: agent.shape(), env: (obs_dim, actions) });
    }
    let random = Agent::random(obs_dim, actions)?;
    let root = SplitRng::new(seed);
    let records = exec.try_map(runs, |run| -> Result<RunRecord> {
        let rng = root.split(run as u64);
        let env_rng = rng.split_named("env");
        let agent_result = run_lifetime(agent, env.build(&env_rng)?.as_mut(), lifetime, &rng.split_named("agent"))?;
        let baseline = run_lifetime(&random, env.build(&env_rng)?.as_mut(), lifetime, &rng.split_named("baseline"))?;
        Ok(RunRecord { run, seed_key: rng.key(), agent: agent_result, baseline })
    })?;
    Ok(MetaTestReport { env: env.clone(), lifetime, seed, runs: records })
}
