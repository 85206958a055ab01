//! Checkpoint file layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "SYMLACK\0"
//! version    u32
//! header_len u32
//! header     header_len bytes of JSON
//! payload    n_params f32 (theta), then n_params f32 (Adam m) and
//!            n_params f32 (Adam v) when the header says `has_adam`
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{AgentConfig, AgentKind};
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::es::AdamState;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SYMLACK\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub kind: AgentKind,
    /// Interface the parameters were trained on.
    pub obs_dim: usize,
    pub actions: usize,
    pub agent: AgentConfig,
    pub config_hash: String,
    /// Seed of the meta-training run.
    pub seed: u64,
    pub outer_step: usize,
    pub adam_t: u64,
    pub n_params: usize,
    pub has_adam: bool,
    pub train_env: Vec<EnvSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub theta: Vec<f32>,
    pub adam: Option<AdamState>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(corrupt(format!("truncated {what}: need {n} bytes, {} left", bytes.len())));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn read_u32(bytes: &mut &[u8], what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, 4, what)?.try_into().expect("4 bytes")))
}

fn read_f32s(bytes: &mut &[u8], n: usize, what: &str) -> Result<Vec<f32>> {
    let raw = take(bytes, n * 4, what)?;
    Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serialises");
        let floats = self.theta.len() * if self.adam.is_some() { 3 } else { 1 };
        let mut out = Vec::with_capacity(16 + header.len() + 4 * floats);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        let mut put = |xs: &[f32]| xs.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        put(&self.theta);
        if let Some(adam) = &self.adam {
            put(&adam.m);
            put(&adam.v);
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let b = &mut bytes;
        if take(b, 8, "magic")? != CHECKPOINT_MAGIC {
            return Err(corrupt("not a checkpoint file (bad magic)"));
        }
        let version = read_u32(b, "version")?;
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported format version {version} (expected {CHECKPOINT_VERSION})")));
        }
        let header_len = read_u32(b, "header length")? as usize;
        let header: CheckpointHeader = serde_json::from_slice(take(b, header_len, "header")?)
            .map_err(|e| corrupt(format!("bad header: {e}")))?;
        if header.format_version != version {
            return Err(corrupt("header and file disagree on the format version"));
        }
        let expected = header.agent.param_count(header.kind, header.obs_dim, header.actions);
        if header.n_params != expected {
            return Err(corrupt(format!(
                "header declares {} parameters but a {} agent of this shape has {expected}",
                header.n_params, header.kind
            )));
        }
        let n = header.n_params;
        let payload = n * if header.has_adam { 3 } else { 1 } * 4;
        if b.len() != payload {
            return Err(corrupt(format!("payload is {} bytes, header implies {payload}", b.len())));
        }
        let theta = read_f32s(b, n, "parameters")?;
        let adam = if header.has_adam {
            let m = read_f32s(b, n, "adam m")?;
            let v = read_f32s(b, n, "adam v")?;
            Some(AdamState { m, v, t: header.adam_t })
        } else {
            None
        };
        Ok(Self { header, theta, adam })
    }

    /// Writes to a sibling temporary file and renames it over `path`, so an
    /// existing checkpoint is never left half-written.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
