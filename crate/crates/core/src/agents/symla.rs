//! Symmetric learning agent: an `A x B` grid of parameter-shared LSTM cells
//! standing in for the weights of one dense layer.
//!
//! Each cell `(a, b)` sees the environment inputs for its row and column
//! (observation `o_a` on the first forward-message channel, one-hot previous
//! action on the first backward-message channel), the previous reward, and
//! the layer's own pooled messages from the previous micro tick. After each
//! cell update the forward messages are summed over `a` and the backward
//! messages over `b`. Logits are the first channel of the forward messages.

use serde::{Deserialize, Serialize};

use super::{AgentError, AgentIo};
use crate::math::{check_dim, check_finite, GatedCellParams, Mat, SplitRng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SymlaConfig {
    /// Hidden size `N` of every cell.
    pub hidden: usize,
    /// Forward message width.
    pub fwd_msg: usize,
    /// Backward message width.
    pub bwd_msg: usize,
    /// Cell updates per environment step.
    pub micro_ticks: usize,
    /// Std of the normal used for meta-parameter initialisation.
    pub init_std: f32,
}

impl Default for SymlaConfig {
    fn default() -> Self {
        Self { hidden: 16, fwd_msg: 8, bwd_msg: 8, micro_ticks: 2, init_std: 0.05 }
    }
}

impl SymlaConfig {
    /// Cell input width: environment forward/backward messages, reward, and
    /// the fed-back forward/backward messages.
    pub fn cell_input(&self) -> usize {
        2 * self.fwd_msg + 2 * self.bwd_msg + 1
    }

    /// Number of meta-parameters. Independent of the grid shape.
    pub fn param_count(&self) -> usize {
        GatedCellParams::param_count(self.hidden, self.cell_input())
            + (self.hidden * self.fwd_msg + self.fwd_msg)
            + (self.hidden * self.bwd_msg + self.bwd_msg)
    }

    pub(crate) fn validate(&self) -> Result<(), AgentError> {
        if self.hidden == 0 || self.fwd_msg == 0 || self.bwd_msg == 0 || self.micro_ticks == 0 {
            return Err(AgentError::InvalidConfig(
                "symla hidden, fwd_msg, bwd_msg and micro_ticks must all be >= 1".into(),
            ));
        }
        Ok(())
    }

    // column offsets inside the cell input
    fn col_env_bwd(&self) -> usize {
        self.fwd_msg
    }
    fn col_reward(&self) -> usize {
        self.fwd_msg + self.bwd_msg
    }
    fn col_fwd_feedback(&self) -> usize {
        self.col_reward() + 1
    }
    fn col_bwd_feedback(&self) -> usize {
        self.col_fwd_feedback() + self.fwd_msg
    }
}

/// Meta-parameters: the shared cell plus the two message projections.
#[derive(Clone, Debug, PartialEq)]
pub struct SymlaParams {
    cfg: SymlaConfig,
    pub(crate) cell: GatedCellParams,
    fwd_w: Mat,
    fwd_b: Vec<f32>,
    bwd_w: Mat,
    bwd_b: Vec<f32>,
}

impl SymlaParams {
    pub fn zeros(cfg: SymlaConfig) -> Self {
        Self {
            cfg,
            cell: GatedCellParams::zeros(cfg.hidden, cfg.cell_input()),
            fwd_w: Mat::zeros(cfg.fwd_msg, cfg.hidden),
            fwd_b: vec![0.0; cfg.fwd_msg],
            bwd_w: Mat::zeros(cfg.bwd_msg, cfg.hidden),
            bwd_b: vec![0.0; cfg.bwd_msg],
        }
    }

    pub fn init(cfg: SymlaConfig, rng: &mut SplitRng) -> Self {
        let mut p = Self::zeros(cfg);
        p.cell = GatedCellParams::init(cfg.hidden, cfg.cell_input(), cfg.init_std, rng);
        rng.fill_normal(p.fwd_w.as_mut_slice(), cfg.init_std);
        rng.fill_normal(p.bwd_w.as_mut_slice(), cfg.init_std);
        p
    }

    /// Layout: cell weights, cell biases, forward projection (W, b), backward projection (W, b).
    pub fn from_flat(cfg: SymlaConfig, flat: &[f32]) -> Result<Self, AgentError> {
        cfg.validate()?;
        check_dim("symla params", cfg.param_count(), flat.len())?;
        let n_cell = GatedCellParams::param_count(cfg.hidden, cfg.cell_input());
        let (cell, rest) = flat.split_at(n_cell);
        let (fw, rest) = rest.split_at(cfg.fwd_msg * cfg.hidden);
        let (fb, rest) = rest.split_at(cfg.fwd_msg);
        let (bw, bb) = rest.split_at(cfg.bwd_msg * cfg.hidden);
        Ok(Self {
            cfg,
            cell: GatedCellParams::from_flat(cfg.hidden, cfg.cell_input(), cell)?,
            fwd_w: Mat::from_vec(cfg.fwd_msg, cfg.hidden, fw.to_vec())?,
            fwd_b: fb.to_vec(),
            bwd_w: Mat::from_vec(cfg.bwd_msg, cfg.hidden, bw.to_vec())?,
            bwd_b: bb.to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.cfg.param_count());
        self.cell.write_flat(&mut out);
        out.extend_from_slice(self.fwd_w.as_slice());
        out.extend_from_slice(&self.fwd_b);
        out.extend_from_slice(self.bwd_w.as_slice());
        out.extend_from_slice(&self.bwd_b);
        out
    }

    pub fn config(&self) -> &SymlaConfig {
        &self.cfg
    }

    pub fn cell(&self) -> &GatedCellParams {
        &self.cell
    }

    /// Forward message projection `(W, b)`, `M_f x N`.
    pub fn fwd_projection(&self) -> (&Mat, &[f32]) {
        (&self.fwd_w, &self.fwd_b)
    }

    /// Backward message projection `(W, b)`, `M_b x N`.
    pub fn bwd_projection(&self) -> (&Mat, &[f32]) {
        (&self.bwd_w, &self.bwd_b)
    }
}

/// Per-lifetime learned state of the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SymlaState {
    obs_dim: usize,
    actions: usize,
    hidden: usize,
    /// Cell hidden states, `(a * B + b) * N` indexed.
    pub h: Vec<f32>,
    /// Cell memory, same layout as `h`.
    pub c: Vec<f32>,
    /// Forward messages from the previous micro tick, `B x M_f`.
    pub fwd_msgs: Vec<f32>,
    /// Backward messages from the previous micro tick, `A x M_b`.
    pub bwd_msgs: Vec<f32>,
}

impl SymlaState {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.obs_dim, self.actions, self.hidden)
    }

    pub fn cell_h(&self, a: usize, b: usize) -> &[f32] {
        let i = (a * self.actions + b) * self.hidden;
        &self.h[i..i + self.hidden]
    }

    pub fn cell_c(&self, a: usize, b: usize) -> &[f32] {
        let i = (a * self.actions + b) * self.hidden;
        &self.c[i..i + self.hidden]
    }

    /// State of the grid after relabelling rows by `row_perm` and columns by
    /// `col_perm`: cell `(a, b)` moves to `(row_perm[a], col_perm[b])`.
    pub fn permuted(&self, row_perm: &[usize], col_perm: &[usize]) -> Self {
        let (na, nb, n) = (self.obs_dim, self.actions, self.hidden);
        let mut out = self.clone();
        for a in 0..na {
            for b in 0..nb {
                let src = (a * nb + b) * n;
                let dst = (row_perm[a] * nb + col_perm[b]) * n;
                out.h[dst..dst + n].copy_from_slice(&self.h[src..src + n]);
                out.c[dst..dst + n].copy_from_slice(&self.c[src..src + n]);
            }
        }
        let mf = self.fwd_msgs.len() / nb;
        for b in 0..nb {
            let dst = col_perm[b] * mf;
            out.fwd_msgs[dst..dst + mf].copy_from_slice(&self.fwd_msgs[b * mf..(b + 1) * mf]);
        }
        let mb = self.bwd_msgs.len() / na;
        for a in 0..na {
            let dst = row_perm[a] * mb;
            out.bwd_msgs[dst..dst + mb].copy_from_slice(&self.bwd_msgs[a * mb..(a + 1) * mb]);
        }
        out
    }
}

/// A parameter vector bound to a grid shape.
#[derive(Clone, Debug)]
pub struct SymlaAgent {
    params: SymlaParams,
    obs_dim: usize,
    actions: usize,
}

impl SymlaAgent {
    pub fn new(params: SymlaParams, obs_dim: usize, actions: usize) -> Result<Self, AgentError> {
        super::check_shape(obs_dim, actions)?;
        Ok(Self { params, obs_dim, actions })
    }

    pub fn params(&self) -> &SymlaParams {
        &self.params
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.obs_dim, self.actions)
    }

    /// Fresh state: cell `h` and `c` i.i.d. N(0, 1), messages zero.
    pub fn init_state(&self, rng: &mut SplitRng) -> SymlaState {
        let cfg = self.params.cfg;
        let cells = self.obs_dim * self.actions * cfg.hidden;
        let mut h = vec![0.0; cells];
        let mut c = vec![0.0; cells];
        rng.fill_normal(&mut h, 1.0);
        rng.fill_normal(&mut c, 1.0);
        SymlaState {
            obs_dim: self.obs_dim,
            actions: self.actions,
            hidden: cfg.hidden,
            h,
            c,
            fwd_msgs: vec![0.0; self.actions * cfg.fwd_msg],
            bwd_msgs: vec![0.0; self.obs_dim * cfg.bwd_msg],
        }
    }

    /// Runs all micro ticks for one environment step and returns the logits.
    pub fn forward(&self, state: &mut SymlaState, io: &AgentIo<'_>) -> Result<Vec<f32>, AgentError> {
        let cfg = &self.params.cfg;
        let cell = &self.params.cell;
        let (na, nb, n) = (self.obs_dim, self.actions, cfg.hidden);
        if state.shape() != (na, nb, n) {
            return Err(AgentError::StateShape);
        }
        io.check(na, nb)?;
        let g = 4 * n;

        // Environment inputs are the same for every micro tick.
        let mut env_fwd = vec![0.0; cfg.fwd_msg];
        let mut env_bwd = vec![0.0; cfg.bwd_msg];

        // Reward and bias are shared by every cell.
        let mut shared = cell.bias().to_vec();
        cell.accumulate_columns(cfg.col_reward(), &[io.reward], &mut shared);

        let mut row_pre = vec![0.0; na * g];
        let mut col_pre = vec![0.0; nb * g];
        let mut pre = vec![0.0; g];

        for _ in 0..cfg.micro_ticks {
            for a in 0..na {
                let rp = &mut row_pre[a * g..(a + 1) * g];
                rp.fill(0.0);
                env_fwd[0] = io.obs[a];
                cell.accumulate_columns(0, &env_fwd, rp);
                let msg = &state.bwd_msgs[a * cfg.bwd_msg..(a + 1) * cfg.bwd_msg];
                cell.accumulate_columns(cfg.col_bwd_feedback(), msg, rp);
            }
            for b in 0..nb {
                let cp = &mut col_pre[b * g..(b + 1) * g];
                cp.fill(0.0);
                env_bwd[0] = if io.prev_action == Some(b) { 1.0 } else { 0.0 };
                cell.accumulate_columns(cfg.col_env_bwd(), &env_bwd, cp);
                let msg = &state.fwd_msgs[b * cfg.fwd_msg..(b + 1) * cfg.fwd_msg];
                cell.accumulate_columns(cfg.col_fwd_feedback(), msg, cp);
            }

            for a in 0..na {
                for b in 0..nb {
                    let i = (a * nb + b) * n;
                    for k in 0..g {
                        pre[k] = shared[k] + row_pre[a * g + k] + col_pre[b * g + k];
                    }
                    cell.accumulate_columns(cell.hidden_offset(), &state.h[i..i + n], &mut pre);
                    cell.apply_gates(&pre, &mut state.h[i..i + n], &mut state.c[i..i + n]);
                }
            }

            self.pool_messages(state);
        }

        check_finite("symla cell state", &state.h)?;
        check_finite("symla cell state", &state.c)?;
        let logits: Vec<f32> = (0..nb).map(|b| state.fwd_msgs[b * cfg.fwd_msg]).collect();
        check_finite("symla logits", &logits)?;
        Ok(logits)
    }

    /// fwd_msgs_b = sum_a f_fwd(h_ab), bwd_msgs_a = sum_b f_bwd(h_ab).
    ///
    /// Sums are accumulated in f64 so the rounded result does not depend on
    /// the order of the cells.
    fn pool_messages(&self, state: &mut SymlaState) {
        let p = &self.params;
        let (na, nb, n) = (self.obs_dim, self.actions, p.cfg.hidden);
        let (mf, mb) = (p.cfg.fwd_msg, p.cfg.bwd_msg);
        let mut fwd_acc = vec![0.0f64; nb * mf];
        let mut bwd_acc = vec![0.0f64; na * mb];
        let mut fwd = vec![0.0; mf];
        let mut bwd = vec![0.0; mb];
        for a in 0..na {
            for b in 0..nb {
                let i = (a * nb + b) * n;
                let h = &state.h[i..i + n];
                p.fwd_w.affine_into(&p.fwd_b, h, &mut fwd);
                p.bwd_w.affine_into(&p.bwd_b, h, &mut bwd);
                for (dst, v) in fwd_acc[b * mf..(b + 1) * mf].iter_mut().zip(&fwd) {
                    *dst += f64::from(*v);
                }
                for (dst, v) in bwd_acc[a * mb..(a + 1) * mb].iter_mut().zip(&bwd) {
                    *dst += f64::from(*v);
                }
            }
        }
        for (dst, v) in state.fwd_msgs.iter_mut().zip(&fwd_acc) {
            *dst = *v as f32;
        }
        for (dst, v) in state.bwd_msgs.iter_mut().zip(&bwd_acc) {
            *dst = *v as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::GatedCellParams;

    #[test]
    fn default_param_count() {
        let cfg = SymlaConfig::default();
        assert_eq!(cfg.cell_input(), 33);
        assert_eq!(cfg.param_count(), 3472);
        assert_eq!(SymlaParams::zeros(cfg).to_flat().len(), 3472);
    }

    #[test]
    fn flat_roundtrip() {
        let cfg = SymlaConfig::default();
        let p = SymlaParams::init(cfg, &mut SplitRng::new(3));
        let flat = p.to_flat();
        assert_eq!(SymlaParams::from_flat(cfg, &flat).unwrap(), p);
        assert!(SymlaParams::from_flat(cfg, &flat[..10]).is_err());
    }

    #[test]
    fn init_state_shapes_and_determinism() {
        let cfg = SymlaConfig::default();
        let agent = SymlaAgent::new(SymlaParams::zeros(cfg), 5, 3).unwrap();
        let s = agent.init_state(&mut SplitRng::new(1));
        assert_eq!(s.shape(), (5, 3, 16));
        assert_eq!(s.h.len(), 5 * 3 * 16);
        assert_eq!(s.fwd_msgs.len(), 3 * 8);
        assert_eq!(s.bwd_msgs.len(), 5 * 8);
        assert!(s.fwd_msgs.iter().chain(&s.bwd_msgs).all(|&v| v == 0.0));

        let agent = SymlaAgent::new(SymlaParams::zeros(cfg), 2, 2).unwrap();
        assert_eq!(agent.init_state(&mut SplitRng::new(9)), agent.init_state(&mut SplitRng::new(9)));
    }

    #[test]
    fn init_state_moments() {
        let agent = SymlaAgent::new(SymlaParams::zeros(SymlaConfig::default()), 4, 4).unwrap();
        let s = agent.init_state(&mut SplitRng::new(5));
        let xs: Vec<f64> = s.h.iter().chain(&s.c).map(|&v| f64::from(v)).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.1);
        assert!((0.8..1.2).contains(&var));
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let agent = SymlaAgent::new(SymlaParams::zeros(SymlaConfig::default()), 1, 2).unwrap();
        let mut s = agent.init_state(&mut SplitRng::new(0));
        let logits = agent
            .forward(&mut s, &AgentIo { obs: &[1.0], reward: 0.0, prev_action: None })
            .unwrap();
        assert_eq!(logits, vec![0.0, 0.0]);
    }

    /// Runs the grid with the plain cell step on explicitly assembled input
    /// vectors, as an independent check of the decomposed pre-activation.
    fn naive_forward(p: &SymlaParams, s: &mut SymlaState, io: &AgentIo<'_>) -> Vec<f32> {
        let cfg = p.cfg;
        let (na, nb, _) = s.shape();
        for _ in 0..cfg.micro_ticks {
            for a in 0..na {
                for b in 0..nb {
                    let mut x = vec![0.0; cfg.cell_input()];
                    x[0] = io.obs[a];
                    x[cfg.fwd_msg] = if io.prev_action == Some(b) { 1.0 } else { 0.0 };
                    x[cfg.fwd_msg + cfg.bwd_msg] = io.reward;
                    let off = cfg.fwd_msg + cfg.bwd_msg + 1;
                    x[off..off + cfg.fwd_msg]
                        .copy_from_slice(&s.fwd_msgs[b * cfg.fwd_msg..(b + 1) * cfg.fwd_msg]);
                    x[off + cfg.fwd_msg..]
                        .copy_from_slice(&s.bwd_msgs[a * cfg.bwd_msg..(a + 1) * cfg.bwd_msg]);
                    let (h, c) = p.cell.step(s.cell_h(a, b), s.cell_c(a, b), &x).unwrap();
                    let i = (a * nb + b) * cfg.hidden;
                    s.h[i..i + cfg.hidden].copy_from_slice(&h);
                    s.c[i..i + cfg.hidden].copy_from_slice(&c);
                }
            }
            let mut fwd = vec![0.0; nb * cfg.fwd_msg];
            let mut bwd = vec![0.0; na * cfg.bwd_msg];
            for a in 0..na {
                for b in 0..nb {
                    let f = crate::math::linear(&p.fwd_w, &p.fwd_b, s.cell_h(a, b)).unwrap();
                    let g = crate::math::linear(&p.bwd_w, &p.bwd_b, s.cell_h(a, b)).unwrap();
                    for k in 0..cfg.fwd_msg {
                        fwd[b * cfg.fwd_msg + k] += f[k];
                    }
                    for k in 0..cfg.bwd_msg {
                        bwd[a * cfg.bwd_msg + k] += g[k];
                    }
                }
            }
            s.fwd_msgs = fwd;
            s.bwd_msgs = bwd;
        }
        (0..nb).map(|b| s.fwd_msgs[b * cfg.fwd_msg]).collect()
    }

    #[test]
    fn fast_path_matches_naive_grid() {
        let cfg = SymlaConfig { init_std: 0.3, ..SymlaConfig::default() };
        let mut rng = SplitRng::new(31);
        let p = SymlaParams::init(cfg, &mut rng);
        let agent = SymlaAgent::new(p.clone(), 3, 4).unwrap();
        let mut fast = agent.init_state(&mut rng);
        let mut slow = fast.clone();
        let mut prev = None;
        for t in 0..5 {
            let obs = [rng.normal(), rng.normal(), rng.normal()];
            let io = AgentIo { obs: &obs, reward: t as f32 * 0.5 - 1.0, prev_action: prev };
            let l1 = agent.forward(&mut fast, &io).unwrap();
            let l2 = naive_forward(&p, &mut slow, &io);
            for (x, y) in l1.iter().zip(&l2) {
                assert!((x - y).abs() < 1e-4, "step {t}: {x} vs {y}");
            }
            prev = Some(t % 4);
        }
    }

    #[test]
    fn identical_cells_identical_updates() {
        // shared rule: two cells with the same h, c and inputs end up identical
        let cfg = SymlaConfig { init_std: 0.3, ..SymlaConfig::default() };
        let mut rng = SplitRng::new(8);
        let agent = SymlaAgent::new(SymlaParams::init(cfg, &mut rng), 1, 2).unwrap();
        let mut s = agent.init_state(&mut rng);
        let n = cfg.hidden;
        let (first, second) = s.h.split_at_mut(n);
        second[..n].copy_from_slice(first);
        let (first, second) = s.c.split_at_mut(n);
        second[..n].copy_from_slice(first);
        // with no previous action both columns see identical inputs
        agent.forward(&mut s, &AgentIo { obs: &[0.7], reward: 1.0, prev_action: None }).unwrap();
        assert_eq!(s.cell_h(0, 0), s.cell_h(0, 1));
        assert_eq!(s.cell_c(0, 0), s.cell_c(0, 1));
    }

    #[test]
    fn rejects_mismatched_io() {
        let agent = SymlaAgent::new(SymlaParams::zeros(SymlaConfig::default()), 2, 3).unwrap();
        let mut s = agent.init_state(&mut SplitRng::new(0));
        let bad_obs = AgentIo { obs: &[1.0], reward: 0.0, prev_action: None };
        assert!(agent.forward(&mut s, &bad_obs).is_err());
        let bad_action = AgentIo { obs: &[1.0, 0.0], reward: 0.0, prev_action: Some(3) };
        assert!(agent.forward(&mut s, &bad_action).is_err());
        assert!(SymlaAgent::new(SymlaParams::zeros(SymlaConfig::default()), 0, 3).is_err());
        assert!(SymlaAgent::new(SymlaParams::zeros(SymlaConfig::default()), 1, 1).is_err());
    }

    #[test]
    fn non_finite_reward_is_an_error() {
        let cfg = SymlaConfig::default();
        let agent = SymlaAgent::new(SymlaParams::init(cfg, &mut SplitRng::new(1)), 1, 2).unwrap();
        let mut s = agent.init_state(&mut SplitRng::new(0));
        let io = AgentIo { obs: &[1.0], reward: f32::NAN, prev_action: None };
        assert!(matches!(agent.forward(&mut s, &io), Err(AgentError::Math(_))));
    }

    #[test]
    fn cell_param_block_size() {
        let cfg = SymlaConfig::default();
        assert_eq!(GatedCellParams::param_count(cfg.hidden, cfg.cell_input()), 4 * 16 * 49 + 64);
    }
}
