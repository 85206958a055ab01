use thiserror::Error;

use crate::agents::AgentError;
use crate::envs::EnvError;
use crate::math::MathError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("agent interface {agent:?} does not match environment interface {env:?} (obs_dim, actions)")]
    ShapeMismatch { agent: (usize, usize), env: (usize, usize) },
    #[error("non-finite fitness for population member {member}")]
    NonFiniteFitness { member: usize },
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Incompatible(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
