//! Evaluation environments and the registry that names them.
//!
//! | name                  | obs | actions | episode | lifetime |
//! |-----------------------|-----|---------|---------|----------|
//! | `bandit.uniform_indep`| 1   | 2       | -       | 100      |
//! | `bandit.uniform_dep`  | 1   | 2       | -       | 100      |
//! | `bandit.easy_dep`     | 1   | 2       | -       | 100      |
//! | `bandit.medium_dep`   | 1   | 2       | -       | 100      |
//! | `bandit.hard_dep`     | 1   | 2       | -       | 100      |
//! | `bandit.indep_k`      | 1   | `arms`  | -       | 100      |
//! | `bandit.biased`       | 1   | 2       | -       | 100      |
//! | `cartpole`            | 4   | 2       | 200     | 500      |
//! | `cartpole.dense`      | 4   | 2       | 200     | 500      |
//! | `acrobot`             | 6   | 3       | 200     | 500      |
//! | `mountaincar`         | 2   | 3       | 200     | 500      |
//! | `grid.heart_trap`     | 75  | 4       | 20      | 500      |
//! | `grid.dense`          | 75  | 4       | 20      | 500      |

pub mod bandit;
pub mod classic;
pub mod grid;
pub mod wrappers;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bandit::{expected_regret, Bandit, BanditKind, BanditSpec};
pub use classic::{Acrobot, CartPole, MountainCar};
pub use grid::{DenseGrid, HeartTrapGrid};
pub use wrappers::{inverse_permutation, PermuteWrapper, ProjectionWrapper};

use crate::math::SplitRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("action {action} out of range for {actions} actions")]
    InvalidAction { action: usize, actions: usize },
    #[error("step called on a finished episode without reset")]
    StepAfterDone,
    #[error("step called before reset")]
    NotReset,
    #[error("unknown environment `{0}`; known: {known}", known = ENV_NAMES.join(", "))]
    UnknownEnv(String),
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
}

pub(crate) fn check_action(action: usize, actions: usize) -> Result<(), EnvError> {
    if action < actions {
        Ok(())
    } else {
        Err(EnvError::InvalidAction { action, actions })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvShape {
    pub obs_dim: usize,
    pub actions: usize,
    /// Episode cap `T`.
    pub episode_len: usize,
    /// Default lifetime `L >= T`.
    pub lifetime_len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<f32>,
    pub reward: f32,
    pub done: bool,
}

pub trait Environment: Send {
    fn shape(&self) -> EnvShape;
    /// Starts a new episode and returns its first observation (reward 0, not done).
    fn reset(&mut self) -> EnvStep;
    fn step(&mut self, action: usize) -> Result<EnvStep, EnvError>;
    /// Expected regret of `action`, where the harness knows the payouts (bandits only).
    fn expected_regret(&self, _action: usize) -> Option<f32> {
        None
    }
}

pub const ENV_NAMES: &[&str] = &[
    "bandit.uniform_indep",
    "bandit.uniform_dep",
    "bandit.easy_dep",
    "bandit.medium_dep",
    "bandit.hard_dep",
    "bandit.indep_k",
    "bandit.biased",
    "cartpole",
    "cartpole.dense",
    "acrobot",
    "mountaincar",
    "grid.heart_trap",
    "grid.dense",
];

/// A registered environment plus the wrappers applied around it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub name: String,
    /// Arm count for `bandit.indep_k` (the two-armed kinds accept only 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arms: Option<usize>,
    /// Heart/trap only: the trap pays +1 and the heart -1.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub swap_rewards: bool,
    /// Fixed observation/action permutation derived from this seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permute_seed: Option<u64>,
    /// Random Glorot-normal projection of observations to this width, resampled per lifetime.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project_dim: Option<usize>,
}

impl EnvSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), arms: None, swap_rewards: false, permute_seed: None, project_dim: None }
    }

    pub fn with_arms(mut self, arms: usize) -> Self {
        self.arms = Some(arms);
        self
    }

    pub fn with_permutation(mut self, seed: u64) -> Self {
        self.permute_seed = Some(seed);
        self
    }

    pub fn with_projection(mut self, dim: usize) -> Self {
        self.project_dim = Some(dim);
        self
    }

    pub fn swapped(mut self) -> Self {
        self.swap_rewards = true;
        self
    }

    pub fn is_bandit(&self) -> bool {
        self.name.starts_with("bandit.")
    }

    fn bandit_spec(&self) -> Result<Option<BanditSpec>, EnvError> {
        let kind = match self.name.as_str() {
            "bandit.uniform_indep" => BanditKind::UniformIndependent,
            "bandit.uniform_dep" => BanditKind::UniformDependent,
            "bandit.easy_dep" => BanditKind::EasyDependent,
            "bandit.medium_dep" => BanditKind::MediumDependent,
            "bandit.hard_dep" => BanditKind::HardDependent,
            "bandit.indep_k" => BanditKind::IndependentK,
            "bandit.biased" => BanditKind::Biased,
            _ => return Ok(None),
        };
        BanditSpec::new(kind, self.arms.unwrap_or(2)).map(Some)
    }

    /// Checks the name and wrapper options without building anything.
    pub fn validate(&self) -> Result<(), EnvError> {
        self.build(&SplitRng::new(0)).map(|_| ())
    }

    /// Interface of the fully wrapped environment.
    pub fn shape(&self) -> Result<EnvShape, EnvError> {
        Ok(self.build(&SplitRng::new(0))?.shape())
    }

    /// Builds a fresh environment whose randomness (dynamics and the per-lifetime
    /// projection) comes from `rng`.
    pub fn build(&self, rng: &SplitRng) -> Result<Box<dyn Environment>, EnvError> {
        let dynamics = rng.split_named("dynamics");
        let bandit = self.bandit_spec()?;
        if self.arms.is_some() && bandit.is_none() {
            return Err(EnvError::InvalidSpec(format!("`{}` has no arm count option", self.name)));
        }
        if self.swap_rewards && self.name != "grid.heart_trap" {
            return Err(EnvError::InvalidSpec("swap_rewards applies only to grid.heart_trap".into()));
        }
        let mut env: Box<dyn Environment> = match (self.name.as_str(), bandit) {
            (_, Some(spec)) => Box::new(Bandit::new(spec, dynamics)),
            ("cartpole", _) => Box::new(CartPole::new(false, dynamics)),
            ("cartpole.dense", _) => Box::new(CartPole::new(true, dynamics)),
            ("acrobot", _) => Box::new(Acrobot::new(dynamics)),
            ("mountaincar", _) => Box::new(MountainCar::new(dynamics)),
            ("grid.heart_trap", _) => Box::new(HeartTrapGrid::new(self.swap_rewards, dynamics)),
            ("grid.dense", _) => Box::new(DenseGrid::new(dynamics)),
            (other, None) => return Err(EnvError::UnknownEnv(other.to_string())),
        };
        if let Some(seed) = self.permute_seed {
            let mut prng = SplitRng::new(seed).split_named("permutation");
            env = Box::new(PermuteWrapper::random(env, &mut prng)?);
        }
        if let Some(dim) = self.project_dim {
            let mut prng = rng.split_named("projection");
            env = Box::new(ProjectionWrapper::new(env, dim, &mut prng)?);
        }
        Ok(env)
    }
}

impl std::fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name)?;
        if let Some(a) = self.arms {
            write!(f, "[arms={a}]")?;
        }
        if self.swap_rewards {
            write!(f, "[swapped]")?;
        }
        if let Some(s) = self.permute_seed {
            write!(f, "[permute={s}]")?;
        }
        if let Some(d) = self.project_dim {
            write!(f, "[project={d}]")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_registered_name_builds() {
        for name in ENV_NAMES {
            let spec = EnvSpec::new(*name);
            let mut env = spec.build(&SplitRng::new(1)).unwrap();
            let shape = env.shape();
            assert!(shape.lifetime_len >= shape.episode_len, "{name}");
            let s = env.reset();
            assert_eq!(s.obs.len(), shape.obs_dim, "{name}");
            let s = env.step(shape.actions - 1).unwrap();
            assert_eq!(s.obs.len(), shape.obs_dim, "{name}");
            assert!(s.reward.is_finite());
            assert!(env.step(shape.actions).is_err() || s.done);
        }
    }

    #[test]
    fn unknown_and_bad_options() {
        assert!(matches!(EnvSpec::new("pong").build(&SplitRng::new(0)), Err(EnvError::UnknownEnv(_))));
        assert!(EnvSpec::new("cartpole").with_arms(3).validate().is_err());
        assert!(EnvSpec::new("bandit.easy_dep").with_arms(5).validate().is_err());
        assert!(EnvSpec::new("cartpole").swapped().validate().is_err());
        assert_eq!(EnvSpec::new("bandit.indep_k").with_arms(7).shape().unwrap().actions, 7);
    }

    #[test]
    fn wrapped_shapes() {
        let s = EnvSpec::new("grid.dense").with_projection(16).shape().unwrap();
        assert_eq!((s.obs_dim, s.actions), (16, 4));
        let s = EnvSpec::new("acrobot").with_permutation(3).shape().unwrap();
        assert_eq!((s.obs_dim, s.actions), (6, 3));
    }

    #[test]
    fn spec_toml_roundtrip() {
        let spec = EnvSpec::new("cartpole.dense").with_projection(16).with_permutation(2);
        let text = toml::to_string(&spec).unwrap();
        assert_eq!(toml::from_str::<EnvSpec>(&text).unwrap(), spec);
        assert!(toml::from_str::<EnvSpec>("name = \"cartpole\"\nbogus = 1").is_err());
    }

    #[test]
    fn envs_deterministic_under_seed() {
        for name in ENV_NAMES {
            let roll = |seed| {
                let mut env = EnvSpec::new(*name).build(&SplitRng::new(seed)).unwrap();
                let actions = env.shape().actions;
                let mut trace = env.reset().obs;
                for t in 0..60 {
                    let s = env.step(t % actions).unwrap();
                    trace.extend(&s.obs);
                    trace.push(s.reward);
                    if s.done {
                        trace.extend(env.reset().obs);
                    }
                }
                trace
            };
            assert_eq!(roll(11), roll(11), "{name}");
        }
    }
}
