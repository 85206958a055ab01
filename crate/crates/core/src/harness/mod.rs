//! Experiment configs, checkpoints, result files and the meta-train /
//! meta-test drivers behind the `symla` binary.

mod checkpoint;
mod export;
mod run;

pub use checkpoint::{sha256_hex, Checkpoint, CheckpointHeader, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use export::{export_results, ExportedFiles, Summary};
pub use run::{default_test_dir, meta_test, meta_train, run_dir, MetaTestOptions, TrainOutcome};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{AgentConfig, AgentKind, MetaRnnConfig, SymlaConfig};
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::es::EsConfig;

/// A complete experiment: what to train, on what, with which optimiser,
/// and how to meta-test the result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: ExperimentSection,
    pub agent: AgentSection,
    pub env: EnvSection,
    #[serde(default)]
    pub es: EsConfig,
    #[serde(default)]
    pub meta_test: MetaTestSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub name: String,
    /// Master seed; meta-training run `r` uses `seed + r`.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Independent meta-training runs.
    pub meta_train_runs: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self { name: "experiment".into(), seed: 0, out_dir: PathBuf::from("runs"), meta_train_runs: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub kind: AgentKind,
    #[serde(default)]
    pub symla: SymlaConfig,
    #[serde(default)]
    pub metarnn: MetaRnnConfig,
}

impl AgentSection {
    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig { symla: self.symla, metarnn: self.metarnn }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    /// Training distribution; each lifetime draws one of these uniformly.
    pub train: Vec<EnvSpec>,
    /// Lifetime length `L`; defaults to the first environment's.
    #[serde(default)]
    pub lifetime: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaTestSection {
    /// Defaults to the first training environment.
    pub env: Option<EnvSpec>,
    pub runs: usize,
    pub lifetime: Option<usize>,
    pub seed: u64,
}

impl Default for MetaTestSection {
    fn default() -> Self {
        Self { env: None, runs: 100, lifetime: None, seed: 1000 }
    }
}

/// Dotted key of the assignment covering byte `offset`, e.g. `es.sigma`.
fn locate_key(text: &str, offset: usize) -> Option<String> {
    let line_start = text[..offset.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next()?;
    let key = line.split_once('=').map(|(k, _)| k.trim())?;
    let table = text[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    Some(match table {
        Some(t) if !t.is_empty() => format!("{t}.{key}"),
        _ => key.to_string(),
    })
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), message: message.into() }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let field = e.span().and_then(|s| locate_key(text, s.start)).unwrap_or_else(|| "<document>".into());
            config_err(&field, e.message().trim())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment.meta_train_runs == 0 {
            return Err(config_err("experiment.meta_train_runs", "must be >= 1"));
        }
        if self.env.train.is_empty() {
            return Err(config_err("env.train", "at least one environment is required"));
        }
        for (i, spec) in self.env.train.iter().enumerate() {
            spec.validate().map_err(|e| config_err(&format!("env.train[{i}]"), e.to_string()))?;
        }
        let lifetime = self.train_lifetime()?;
        if lifetime == 0 {
            return Err(config_err("env.lifetime", "must be >= 1"));
        }
        self.es.validate()?;
        let agent = self.agent.agent_config();
        if agent.symla.hidden == 0 || agent.symla.fwd_msg == 0 || agent.symla.bwd_msg == 0 || agent.symla.micro_ticks == 0 {
            return Err(config_err("agent.symla", "hidden, fwd_msg, bwd_msg and micro_ticks must be >= 1"));
        }
        if agent.metarnn.hidden == 0 {
            return Err(config_err("agent.metarnn.hidden", "must be >= 1"));
        }
        if let Some(spec) = &self.meta_test.env {
            spec.validate().map_err(|e| config_err("meta_test.env", e.to_string()))?;
        }
        if self.meta_test.runs == 0 {
            return Err(config_err("meta_test.runs", "must be >= 1"));
        }
        if self.meta_test.lifetime == Some(0) {
            return Err(config_err("meta_test.lifetime", "must be >= 1"));
        }
        if self.agent.kind == AgentKind::MetaRnn {
            let first = self.env.train[0].shape()?;
            for (i, spec) in self.env.train.iter().enumerate() {
                let s = spec.shape()?;
                if (s.obs_dim, s.actions) != (first.obs_dim, first.actions) {
                    return Err(config_err(
                        &format!("env.train[{i}]"),
                        "metarnn needs the same observation and action sizes in every training environment",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn train_lifetime(&self) -> Result<usize> {
        match self.env.lifetime {
            Some(l) => Ok(l),
            None => Ok(self.env.train[0].shape()?.lifetime_len),
        }
    }

    pub fn meta_test_env(&self) -> EnvSpec {
        self.meta_test.env.clone().unwrap_or_else(|| self.env.train[0].clone())
    }

    /// Hash of everything that fixes the meaning of the meta-parameters.
    pub fn config_hash(&self) -> String {
        architecture_hash(self.agent.kind, &self.agent.agent_config())
    }
}

/// SHA-256 over the agent kind and its architecture settings.
///
/// The grid shape is not included: one SymLA vector serves every shape.
pub fn architecture_hash(kind: AgentKind, agent: &AgentConfig) -> String {
    let arch = match kind {
        AgentKind::Symla => serde_json::to_string(&agent.symla),
        AgentKind::MetaRnn => serde_json::to_string(&agent.metarnn),
    }
    .expect("agent config serialises");
    let mut h = Sha256::new();
    h.update(kind.as_str().as_bytes());
    h.update([0u8]);
    h.update(arch.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[agent]
kind = "symla"

[env]
train = [{ name = "bandit.easy_dep" }]
"#;

    #[test]
    fn minimal_config_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.es, EsConfig::full());
        assert_eq!(cfg.train_lifetime().unwrap(), 100);
        assert_eq!(cfg.meta_test.runs, 100);
        assert_eq!(cfg.meta_test_env().name, "bandit.easy_dep");
    }

    #[test]
    fn round_trip_through_toml() {
        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        cfg.es = EsConfig::desk();
        cfg.env.train.push(EnvSpec::new("bandit.hard_dep"));
        cfg.meta_test.env = Some(EnvSpec::new("bandit.medium_dep").with_permutation(3));
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn errors_name_the_field() {
        let bad_key = format!("{MINIMAL}\n[es]\nsigmaa = 0.1\n");
        let msg = ExperimentConfig::from_toml_str(&bad_key).unwrap_err().to_string();
        assert!(msg.contains("es.sigmaa"), "{msg}");

        let bad_value = format!("{MINIMAL}\n[es]\nsigma = -1.0\n");
        let msg = ExperimentConfig::from_toml_str(&bad_value).unwrap_err().to_string();
        assert!(msg.contains("es.sigma"), "{msg}");

        let bad_env = MINIMAL.replace("bandit.easy_dep", "bandit.nope");
        let msg = ExperimentConfig::from_toml_str(&bad_env).unwrap_err().to_string();
        assert!(msg.contains("env.train[0]"), "{msg}");

        let bad_type = format!("{MINIMAL}\n[meta_test]\nruns = \"many\"\n");
        let msg = ExperimentConfig::from_toml_str(&bad_type).unwrap_err().to_string();
        assert!(msg.contains("meta_test.runs"), "{msg}");

        let odd = format!("{MINIMAL}\n[es]\npopulation = 5\n");
        let msg = ExperimentConfig::from_toml_str(&odd).unwrap_err().to_string();
        assert!(msg.contains("es.population"), "{msg}");
    }

    #[test]
    fn metarnn_rejects_mixed_interfaces() {
        let text = r#"
[agent]
kind = "metarnn"
[env]
train = [{ name = "cartpole" }, { name = "acrobot" }]
"#;
        let msg = ExperimentConfig::from_toml_str(text).unwrap_err().to_string();
        assert!(msg.contains("env.train[1]"), "{msg}");
        assert!(ExperimentConfig::from_toml_str(&text.replace("metarnn", "symla")).is_ok());
    }

    #[test]
    fn hash_tracks_architecture_only() {
        let a = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let mut b = a.clone();
        b.es.sigma = 0.5;
        b.experiment.seed = 9;
        assert_eq!(a.config_hash(), b.config_hash());
        b.agent.symla.hidden = 8;
        assert_ne!(a.config_hash(), b.config_hash());
        let mut c = a.clone();
        c.agent.kind = AgentKind::MetaRnn;
        assert_ne!(a.config_hash(), c.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }
}
