//! Symmetric learning agents meta-trained with evolution strategies.
//!
//! The crate holds the two agents (`SymlaAgent`, a grid of parameter-shared
//! LSTM cells, and the `MetaRnnAgent` baseline), the environments they are
//! evaluated on, the lifetime runner, the ES outer loop and the experiment
//! harness used by the `symla` binary.

pub mod agents;
pub mod envs;
pub mod error;
pub mod es;
pub mod exec;
pub mod harness;
pub mod lifetime;
pub mod math;
pub mod symmetry;

pub use agents::{Agent, AgentConfig, AgentKind, AgentState};
pub use envs::{EnvSpec, Environment};
pub use error::{Error, Result};
pub use es::EsConfig;
pub use exec::Execution;
pub use math::SplitRng;
