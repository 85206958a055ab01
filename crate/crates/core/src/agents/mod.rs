//! Learning agents behind a common interface.
//!
//! Both meta-learners keep all of their learning in recurrent state; the
//! meta-parameters stay fixed for a whole lifetime.

mod metarnn;
mod symla;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metarnn::{MetaRnnAgent, MetaRnnConfig, MetaRnnParams, MetaRnnState};
pub use symla::{SymlaAgent, SymlaConfig, SymlaParams, SymlaState};

use crate::math::{check_finite, softmax_sample, MathError, SplitRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("unknown agent kind `{0}` (expected `symla` or `metarnn`)")]
    UnknownKind(String),
    #[error("invalid agent shape: obs_dim {obs_dim} (needs >= 1), actions {actions} (needs >= 2)")]
    InvalidShape { obs_dim: usize, actions: usize },
    #[error("observation has {got} entries, agent expects {expected}")]
    ObsDim { expected: usize, got: usize },
    #[error("previous action {action} out of range for {actions} actions")]
    ActionRange { action: usize, actions: usize },
    #[error("parameter vector has {got} entries, expected {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("agent state does not belong to this agent")]
    StateShape,
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
}

fn check_shape(obs_dim: usize, actions: usize) -> Result<(), AgentError> {
    if obs_dim >= 1 && actions >= 2 {
        Ok(())
    } else {
        Err(AgentError::InvalidShape { obs_dim, actions })
    }
}

/// What the agent sees at step `t`: `o_t`, `r_{t-1}` and `a_{t-1}`.
#[derive(Clone, Copy, Debug)]
pub struct AgentIo<'a> {
    pub obs: &'a [f32],
    pub reward: f32,
    /// `None` before the first action of a lifetime (encoded as all zeros).
    pub prev_action: Option<usize>,
}

impl AgentIo<'_> {
    fn check(&self, obs_dim: usize, actions: usize) -> Result<(), AgentError> {
        if self.obs.len() != obs_dim {
            return Err(AgentError::ObsDim { expected: obs_dim, got: self.obs.len() });
        }
        if let Some(a) = self.prev_action {
            if a >= actions {
                return Err(AgentError::ActionRange { action: a, actions });
            }
        }
        check_finite("agent observation", self.obs)?;
        check_finite("agent reward", &[self.reward])?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Symla,
    #[serde(rename = "metarnn")]
    MetaRnn,
}

impl AgentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgentKind::Symla => "symla",
            AgentKind::MetaRnn => "metarnn",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "symla" => Ok(AgentKind::Symla),
            "metarnn" => Ok(AgentKind::MetaRnn),
            other => Err(AgentError::UnknownKind(other.to_string())),
        }
    }
}

/// Architecture settings for both agent kinds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub symla: SymlaConfig,
    pub metarnn: MetaRnnConfig,
}

impl AgentConfig {
    /// Meta-parameter count for `kind` on an environment with the given interface.
    pub fn param_count(&self, kind: AgentKind, obs_dim: usize, actions: usize) -> usize {
        match kind {
            AgentKind::Symla => self.symla.param_count(),
            AgentKind::MetaRnn => self.metarnn.param_count(obs_dim, actions),
        }
    }

    /// Fresh meta-parameters for the start of meta-training.
    pub fn init_params(&self, kind: AgentKind, obs_dim: usize, actions: usize, rng: &mut SplitRng) -> Vec<f32> {
        match kind {
            AgentKind::Symla => SymlaParams::init(self.symla, rng).to_flat(),
            AgentKind::MetaRnn => MetaRnnParams::init(self.metarnn, obs_dim, actions, rng).to_flat(),
        }
    }
}

/// A policy with its meta-parameters bound to one environment interface.
#[derive(Clone, Debug)]
pub enum Agent {
    Symla(SymlaAgent),
    MetaRnn(MetaRnnAgent),
    /// Uniform random policy, used as the reference baseline.
    Random { obs_dim: usize, actions: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum AgentState {
    Symla(SymlaState),
    MetaRnn(MetaRnnState),
    Random,
}

impl AgentState {
    /// Hash of the exact bit pattern of the state.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xCBF2_9CE4_8422_2325u64;
        let mut eat = |xs: &[f32]| {
            for v in xs {
                h = (h ^ u64::from(v.to_bits())).wrapping_mul(0x100_0000_01B3);
            }
        };
        match self {
            AgentState::Symla(s) => {
                eat(&s.h);
                eat(&s.c);
                eat(&s.fwd_msgs);
                eat(&s.bwd_msgs);
            }
            AgentState::MetaRnn(s) => {
                eat(&s.h);
                eat(&s.c);
            }
            AgentState::Random => {}
        }
        h
    }
}

impl Agent {
    /// Builds an agent of `kind` from a flat meta-parameter vector.
    pub fn from_flat(
        kind: AgentKind,
        obs_dim: usize,
        actions: usize,
        cfg: &AgentConfig,
        params: &[f32],
    ) -> Result<Self, AgentError> {
        check_shape(obs_dim, actions)?;
        let expected = cfg.param_count(kind, obs_dim, actions);
        if params.len() != expected {
            return Err(AgentError::ParamCount { expected, got: params.len() });
        }
        Ok(match kind {
            AgentKind::Symla => {
                Agent::Symla(SymlaAgent::new(SymlaParams::from_flat(cfg.symla, params)?, obs_dim, actions)?)
            }
            AgentKind::MetaRnn => Agent::MetaRnn(MetaRnnAgent::new(MetaRnnParams::from_flat(
                cfg.metarnn,
                obs_dim,
                actions,
                params,
            )?)?),
        })
    }

    pub fn random(obs_dim: usize, actions: usize) -> Result<Self, AgentError> {
        check_shape(obs_dim, actions)?;
        Ok(Agent::Random { obs_dim, actions })
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Agent::Symla(a) => a.shape(),
            Agent::MetaRnn(a) => a.shape(),
            Agent::Random { obs_dim, actions } => (*obs_dim, *actions),
        }
    }

    pub fn init_state(&self, rng: &mut SplitRng) -> AgentState {
        match self {
            Agent::Symla(a) => AgentState::Symla(a.init_state(rng)),
            Agent::MetaRnn(a) => AgentState::MetaRnn(a.init_state()),
            Agent::Random { .. } => AgentState::Random,
        }
    }

    /// Updates the state for one environment step and returns the action logits.
    pub fn forward(&self, state: &mut AgentState, io: &AgentIo<'_>) -> Result<Vec<f32>, AgentError> {
        match (self, state) {
            (Agent::Symla(a), AgentState::Symla(s)) => a.forward(s, io),
            (Agent::MetaRnn(a), AgentState::MetaRnn(s)) => a.forward(s, io),
            (Agent::Random { obs_dim, actions }, AgentState::Random) => {
                io.check(*obs_dim, *actions)?;
                Ok(vec![0.0; *actions])
            }
            _ => Err(AgentError::StateShape),
        }
    }

    /// `forward` followed by a softmax draw.
    pub fn step(&self, state: &mut AgentState, io: &AgentIo<'_>, rng: &mut SplitRng) -> Result<usize, AgentError> {
        let logits = self.forward(state, io)?;
        Ok(softmax_sample(&logits, rng)?.0)
    }
}
