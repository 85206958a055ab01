//! MetaRNN (RL^2) baseline: a single LSTM fed `[obs; one-hot prev action; reward]`
//! with a linear logit head. Its parameter count depends on the observation
//! and action sizes, so a trained vector is tied to one interface.

use serde::{Deserialize, Serialize};

use super::{AgentError, AgentIo};
use crate::math::{check_dim, check_finite, GatedCellParams, Mat, SplitRng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaRnnConfig {
    pub hidden: usize,
    pub init_std: f32,
}

impl Default for MetaRnnConfig {
    fn default() -> Self {
        Self { hidden: 64, init_std: 0.05 }
    }
}

impl MetaRnnConfig {
    pub fn param_count(&self, obs_dim: usize, actions: usize) -> usize {
        GatedCellParams::param_count(self.hidden, obs_dim + actions + 1)
            + self.hidden * actions
            + actions
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaRnnParams {
    cfg: MetaRnnConfig,
    obs_dim: usize,
    actions: usize,
    cell: GatedCellParams,
    head_w: Mat,
    head_b: Vec<f32>,
}

impl MetaRnnParams {
    pub fn zeros(cfg: MetaRnnConfig, obs_dim: usize, actions: usize) -> Self {
        Self {
            cfg,
            obs_dim,
            actions,
            cell: GatedCellParams::zeros(cfg.hidden, obs_dim + actions + 1),
            head_w: Mat::zeros(actions, cfg.hidden),
            head_b: vec![0.0; actions],
        }
    }

    pub fn init(cfg: MetaRnnConfig, obs_dim: usize, actions: usize, rng: &mut SplitRng) -> Self {
        let mut p = Self::zeros(cfg, obs_dim, actions);
        p.cell = GatedCellParams::init(cfg.hidden, obs_dim + actions + 1, cfg.init_std, rng);
        rng.fill_normal(p.head_w.as_mut_slice(), cfg.init_std);
        p
    }

    /// Layout: cell weights, cell biases, head weights, head biases.
    pub fn from_flat(
        cfg: MetaRnnConfig,
        obs_dim: usize,
        actions: usize,
        flat: &[f32],
    ) -> Result<Self, AgentError> {
        if cfg.hidden == 0 {
            return Err(AgentError::InvalidConfig("metarnn hidden must be >= 1".into()));
        }
        let expected = cfg.param_count(obs_dim, actions);
        if flat.len() != expected {
            return Err(AgentError::ParamCount { expected, got: flat.len() });
        }
        let input = obs_dim + actions + 1;
        let (cell, rest) = flat.split_at(GatedCellParams::param_count(cfg.hidden, input));
        let (hw, hb) = rest.split_at(actions * cfg.hidden);
        Ok(Self {
            cfg,
            obs_dim,
            actions,
            cell: GatedCellParams::from_flat(cfg.hidden, input, cell)?,
            head_w: Mat::from_vec(actions, cfg.hidden, hw.to_vec())?,
            head_b: hb.to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.cfg.param_count(self.obs_dim, self.actions));
        self.cell.write_flat(&mut out);
        out.extend_from_slice(self.head_w.as_slice());
        out.extend_from_slice(&self.head_b);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaRnnState {
    pub h: Vec<f32>,
    pub c: Vec<f32>,
}

#[derive(Clone, Debug)]
pub struct MetaRnnAgent {
    params: MetaRnnParams,
}

impl MetaRnnAgent {
    pub fn new(params: MetaRnnParams) -> Result<Self, AgentError> {
        super::check_shape(params.obs_dim, params.actions)?;
        Ok(Self { params })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.params.obs_dim, self.params.actions)
    }

    /// Initial hidden and cell state are zero.
    pub fn init_state(&self) -> MetaRnnState {
        MetaRnnState { h: vec![0.0; self.params.cfg.hidden], c: vec![0.0; self.params.cfg.hidden] }
    }

    pub fn forward(&self, state: &mut MetaRnnState, io: &AgentIo<'_>) -> Result<Vec<f32>, AgentError> {
        let p = &self.params;
        io.check(p.obs_dim, p.actions)?;
        check_dim("metarnn state", p.cfg.hidden, state.h.len())?;
        let mut x = Vec::with_capacity(p.obs_dim + p.actions + 1);
        x.extend_from_slice(io.obs);
        x.extend((0..p.actions).map(|b| if io.prev_action == Some(b) { 1.0 } else { 0.0 }));
        x.push(io.reward);
        let (h, c) = p.cell.step(&state.h, &state.c, &x)?;
        state.h = h;
        state.c = c;
        let mut logits = vec![0.0; p.actions];
        p.head_w.affine_into(&p.head_b, &state.h, &mut logits);
        check_finite("metarnn logits", &logits)?;
        Ok(logits)
    }
}
