//! Executable checks of the symmetries SymLA has by construction.
//!
//! Each check returns a [`PropertyReport`]; the `symla invariants` command
//! prints them and the test suites assert on them.

use serde::Serialize;

use crate::agents::{MetaRnnAgent, MetaRnnConfig, MetaRnnParams};
use crate::agents::{SymlaAgent, SymlaConfig, SymlaParams, SymlaState};
use crate::agents::AgentIo;
use crate::envs::inverse_permutation;
use crate::error::Result;
use crate::math::{categorical_from_uniform, softmax, SplitRng};

/// Logit tolerance for properties that hold up to float reassociation.
pub const EQUIVARIANCE_TOL: f32 = 1e-5;
/// Minimum deviation that counts as a MetaRNN symmetry violation.
pub const NEGATIVE_CONTROL_DEV: f32 = 1e-3;
/// Fraction of instances on which the MetaRNN must violate the symmetry.
pub const NEGATIVE_CONTROL_RATE: f64 = 0.9;

/// Grid shapes every parameter vector must run on.
pub const SIZE_SHAPES: &[(usize, usize)] = &[(1, 2), (2, 2), (16, 3), (75, 4), (5, 10)];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyReport {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Instance counts and rollout lengths for the suite.
#[derive(Clone, Copy, Debug)]
pub struct SuiteOptions {
    pub instances: usize,
    pub steps: usize,
    pub max_obs: usize,
    pub max_actions: usize,
    /// Std of the random meta-parameters. Larger than the training init so
    /// the cells operate away from their linear regime.
    pub param_std: f32,
    pub seed: u64,
}

impl SuiteOptions {
    pub fn full() -> Self {
        Self { instances: 100, steps: 10, max_obs: 6, max_actions: 6, param_std: 0.3, seed: 0 }
    }

    pub fn quick() -> Self {
        Self { instances: 20, ..Self::full() }
    }
}

fn symla_params(std: f32, rng: &mut SplitRng) -> SymlaParams {
    SymlaParams::init(SymlaConfig { init_std: std, ..SymlaConfig::default() }, rng)
}

/// `(A, B, rho, rho')` with at least one non-identity permutation.
fn random_instance(opts: &SuiteOptions, rng: &mut SplitRng) -> (usize, usize, Vec<usize>, Vec<usize>) {
    let a = 1 + rng.below(opts.max_obs);
    let b = 2 + rng.below(opts.max_actions - 1);
    loop {
        let rho = rng.permutation(a);
        let rho_act = rng.permutation(b);
        let id = |p: &[usize]| p.iter().enumerate().all(|(i, &j)| i == j);
        if !(id(&rho) && id(&rho_act)) {
            return (a, b, rho, rho_act);
        }
    }
}

/// Permuted copy with `out[perm[i]] = x[i]`.
fn scatter(x: &[f32], perm: &[usize]) -> Vec<f32> {
    let mut out = vec![0.0; x.len()];
    for (i, &j) in perm.iter().enumerate() {
        out[j] = x[i];
    }
    out
}

/// Inputs for one coupled rollout: observations, rewards and action draws.
struct Episode {
    obs: Vec<Vec<f32>>,
    rewards: Vec<f32>,
    uniforms: Vec<f32>,
}

fn random_episode(a: usize, steps: usize, rng: &mut SplitRng) -> Episode {
    let obs = (0..steps)
        .map(|_| {
            let mut o = vec![0.0; a];
            rng.fill_normal(&mut o, 1.0);
            o
        })
        .collect();
    let rewards = (0..steps).map(|_| rng.uniform() * 2.0 - 1.0).collect();
    let uniforms = (0..steps).map(|_| rng.uniform()).collect();
    Episode { obs, rewards, uniforms }
}

/// Drives an original and a permuted agent through the same episode.
///
/// The permuted agent sees `obs'[rho[a]] = obs[a]` and the relabelled
/// previous action `rho'[b]`; the original agent samples actions with the
/// shared uniform draws. Returns the largest `|y'[rho'[b]] - y[b]|`.
fn coupled_rollout<F, G>(ep: &Episode, rho: &[usize], rho_act: &[usize], mut orig: F, mut perm: G) -> Result<f32>
where
    F: FnMut(&AgentIo<'_>) -> Result<Vec<f32>>,
    G: FnMut(&AgentIo<'_>) -> Result<Vec<f32>>,
{
    let mut worst = 0.0f32;
    let mut prev: Option<usize> = None;
    let mut reward = 0.0;
    for t in 0..ep.obs.len() {
        let o = &ep.obs[t];
        let o_perm = scatter(o, rho);
        let y = orig(&AgentIo { obs: o, reward, prev_action: prev })?;
        let y_perm = perm(&AgentIo { obs: &o_perm, reward, prev_action: prev.map(|b| rho_act[b]) })?;
        for (b, &yb) in y.iter().enumerate() {
            worst = worst.max((y_perm[rho_act[b]] - yb).abs());
        }
        prev = Some(categorical_from_uniform(&softmax(&y)?, ep.uniforms[t]));
        reward = ep.rewards[t];
    }
    Ok(worst)
}

/// SymLA logits are equivariant under coupled input/output permutations
/// when the initial cell states are permuted with them.
pub fn check_symla_equivariance(opts: &SuiteOptions) -> Result<PropertyReport> {
    let root = SplitRng::new(opts.seed).split_named("symla-equivariance");
    let mut worst = 0.0f32;
    for i in 0..opts.instances {
        let mut rng = root.split(i as u64);
        let (a, b, rho, rho_act) = random_instance(opts, &mut rng);
        let params = symla_params(opts.param_std, &mut rng);
        let agent = SymlaAgent::new(params, a, b)?;
        let mut s = agent.init_state(&mut rng);
        let mut s_perm = s.permuted(&rho, &rho_act);
        let ep = random_episode(a, opts.steps, &mut rng);
        let dev = coupled_rollout(
            &ep,
            &rho,
            &rho_act,
            |io| Ok(agent.forward(&mut s, io)?),
            |io| Ok(agent.forward(&mut s_perm, io)?),
        )?;
        worst = worst.max(dev);
    }
    Ok(PropertyReport {
        name: "symla permutation equivariance".into(),
        passed: worst <= EQUIVARIANCE_TOL,
        detail: format!("{} instances, {} steps, max logit deviation {worst:.2e}", opts.instances, opts.steps),
    })
}

/// The same coupled rollouts break the MetaRNN, whose weights are tied to
/// input and output positions.
pub fn check_metarnn_negative_control(opts: &SuiteOptions) -> Result<PropertyReport> {
    let root = SplitRng::new(opts.seed).split_named("metarnn-control");
    let mut violated = 0;
    let mut least = f32::INFINITY;
    for i in 0..opts.instances {
        let mut rng = root.split(i as u64);
        let (a, b, rho, rho_act) = random_instance(opts, &mut rng);
        let cfg = MetaRnnConfig { init_std: opts.param_std, ..MetaRnnConfig::default() };
        let agent = MetaRnnAgent::new(MetaRnnParams::init(cfg, a, b, &mut rng))?;
        let (mut s, mut s_perm) = (agent.init_state(), agent.init_state());
        let ep = random_episode(a, opts.steps, &mut rng);
        let dev = coupled_rollout(
            &ep,
            &rho,
            &rho_act,
            |io| Ok(agent.forward(&mut s, io)?),
            |io| Ok(agent.forward(&mut s_perm, io)?),
        )?;
        least = least.min(dev);
        if dev > NEGATIVE_CONTROL_DEV {
            violated += 1;
        }
    }
    let rate = violated as f64 / opts.instances as f64;
    Ok(PropertyReport {
        name: "metarnn negative control".into(),
        passed: rate >= NEGATIVE_CONTROL_RATE,
        detail: format!(
            "deviation > {NEGATIVE_CONTROL_DEV:.0e} on {violated}/{} instances (expected violation), smallest {least:.2e}",
            opts.instances
        ),
    })
}

/// One parameter vector runs on every shape and its size never changes.
pub fn check_size_flexibility(opts: &SuiteOptions) -> Result<PropertyReport> {
    let mut rng = SplitRng::new(opts.seed).split_named("size-flexibility");
    let cfg = SymlaConfig::default();
    let flat = SymlaParams::init(cfg, &mut rng).to_flat();
    let mut shapes: Vec<(usize, usize)> = SIZE_SHAPES.to_vec();
    for a in [1, 2, 16, 75] {
        for b in [2, 3, 5, 10] {
            if !shapes.contains(&(a, b)) {
                shapes.push((a, b));
            }
        }
    }
    let mut failures = Vec::new();
    for &(a, b) in &shapes {
        let agent = SymlaAgent::new(SymlaParams::from_flat(cfg, &flat)?, a, b)?;
        let mut s = agent.init_state(&mut rng);
        let mut prev = None;
        for t in 0..opts.steps {
            let obs: Vec<f32> = (0..a).map(|k| ((k + t) as f32 * 0.37).sin()).collect();
            let y = agent.forward(&mut s, &AgentIo { obs: &obs, reward: 0.5, prev_action: prev })?;
            if y.len() != b || y.iter().any(|v| !v.is_finite()) {
                failures.push(format!("({a},{b})"));
                break;
            }
            prev = Some(t % b);
        }
        if agent.params().to_flat().len() != flat.len() {
            failures.push(format!("({a},{b}) count"));
        }
    }
    Ok(PropertyReport {
        name: "symla size flexibility".into(),
        passed: failures.is_empty() && flat.len() == cfg.param_count(),
        detail: if failures.is_empty() {
            format!("{} shapes, {} parameters each", shapes.len(), flat.len())
        } else {
            format!("failed on {}", failures.join(", "))
        },
    })
}

/// Every cell applies the same update rule: cells whose state and inputs
/// coincide stay identical.
pub fn check_shared_rule(opts: &SuiteOptions) -> Result<PropertyReport> {
    let root = SplitRng::new(opts.seed).split_named("shared-rule");
    let mut worst = 0.0f32;
    for i in 0..opts.instances {
        let mut rng = root.split(i as u64);
        let b = 2 + rng.below(opts.max_actions - 1);
        let agent = SymlaAgent::new(symla_params(opts.param_std, &mut rng), 3, b)?;
        // Row 1 starts as a copy of row 0 and always sees the same observation.
        let mut s = agent.init_state(&mut rng);
        let n = s.shape().2;
        for col in 0..b {
            let (src, dst) = (col * n, (b + col) * n);
            s.h.copy_within(src..src + n, dst);
            s.c.copy_within(src..src + n, dst);
        }
        let ep = random_episode(2, opts.steps, &mut rng);
        let mut prev = None;
        let mut reward = 0.0;
        for t in 0..opts.steps {
            let o = [ep.obs[t][0], ep.obs[t][0], ep.obs[t][1]];
            let y = agent.forward(&mut s, &AgentIo { obs: &o, reward, prev_action: prev })?;
            for col in 0..b {
                for (x, z) in s.cell_h(0, col).iter().zip(s.cell_h(1, col)) {
                    worst = worst.max((x - z).abs());
                }
            }
            prev = Some(categorical_from_uniform(&softmax(&y)?, ep.uniforms[t]));
            reward = ep.rewards[t];
        }
    }
    Ok(PropertyReport {
        name: "symla shared update rule".into(),
        passed: worst == 0.0,
        detail: format!("max divergence between twin cells {worst:.2e}"),
    })
}

/// Logits are sum-pooled over rows: they equal the summed forward
/// projections of the final cell states and ignore row order.
pub fn check_sum_pool(opts: &SuiteOptions) -> Result<PropertyReport> {
    let root = SplitRng::new(opts.seed).split_named("sum-pool");
    let mut pool_dev = 0.0f32;
    let mut order_dev = 0.0f32;
    for i in 0..opts.instances {
        let mut rng = root.split(i as u64);
        let a = 1 + rng.below(opts.max_obs);
        let b = 2 + rng.below(opts.max_actions - 1);
        let agent = SymlaAgent::new(symla_params(opts.param_std, &mut rng), a, b)?;
        let rho = rng.permutation(a);
        let identity: Vec<usize> = (0..b).collect();
        let mut s = agent.init_state(&mut rng);
        let mut s_perm = s.permuted(&rho, &identity);
        let ep = random_episode(a, opts.steps, &mut rng);
        let mut prev = None;
        let mut reward = 0.0;
        for t in 0..opts.steps {
            let y = agent.forward(&mut s, &AgentIo { obs: &ep.obs[t], reward, prev_action: prev })?;
            let o_perm = scatter(&ep.obs[t], &rho);
            let y_perm = agent.forward(&mut s_perm, &AgentIo { obs: &o_perm, reward, prev_action: prev })?;
            for col in 0..b {
                order_dev = order_dev.max((y[col] - y_perm[col]).abs());
                pool_dev = pool_dev.max((y[col] - pooled_logit(agent.params(), &s, col)).abs());
            }
            prev = Some(categorical_from_uniform(&softmax(&y)?, ep.uniforms[t]));
            reward = ep.rewards[t];
        }
    }
    Ok(PropertyReport {
        name: "symla sum pooling".into(),
        passed: pool_dev <= EQUIVARIANCE_TOL && order_dev <= EQUIVARIANCE_TOL,
        detail: format!("pooled-sum deviation {pool_dev:.2e}, row-order deviation {order_dev:.2e}"),
    })
}

/// `sum_a (W_f h_ab + b_f)[0]` recomputed from the state.
fn pooled_logit(params: &SymlaParams, s: &SymlaState, col: usize) -> f32 {
    let (w, bias) = params.fwd_projection();
    let (a, _, _) = s.shape();
    (0..a)
        .map(|row| bias[0] + w.row(0).iter().zip(s.cell_h(row, col)).map(|(x, y)| x * y).sum::<f32>())
        .sum()
}

/// Undoing a permutation of the state restores it exactly.
pub fn check_state_permutation_roundtrip(opts: &SuiteOptions) -> Result<PropertyReport> {
    let root = SplitRng::new(opts.seed).split_named("state-roundtrip");
    let mut ok = true;
    for i in 0..opts.instances {
        let mut rng = root.split(i as u64);
        let (a, b, rho, rho_act) = random_instance(opts, &mut rng);
        let agent = SymlaAgent::new(symla_params(opts.param_std, &mut rng), a, b)?;
        let s = agent.init_state(&mut rng);
        let back = s.permuted(&rho, &rho_act).permuted(&inverse_permutation(&rho), &inverse_permutation(&rho_act));
        ok &= back == s;
    }
    Ok(PropertyReport {
        name: "symla state permutation round trip".into(),
        passed: ok,
        detail: format!("{} instances", opts.instances),
    })
}

/// Runs every check in a fixed order.
pub fn run_suite(opts: &SuiteOptions) -> Result<Vec<PropertyReport>> {
    Ok(vec![
        check_symla_equivariance(opts)?,
        check_size_flexibility(opts)?,
        check_shared_rule(opts)?,
        check_sum_pool(opts)?,
        check_state_permutation_roundtrip(opts)?,
        check_metarnn_negative_control(opts)?,
    ])
}
