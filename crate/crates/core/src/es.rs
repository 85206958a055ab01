//! Evolution-strategy meta-optimisation.
//!
//! The gradient of the Gaussian-smoothed objective `E_{phi ~ N(theta, sigma^2 I)}[F(phi)]`
//! is estimated as `1 / (P sigma) * sum_i w_i eps_i` with `phi_i = theta + sigma eps_i`,
//! where `w_i` is either the raw fitness of member `i` or its centred rank.
//! Noise `eps_i` is never stored: it is regenerated from `(noise stream, pair index)`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, AgentConfig, AgentKind};
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lifetime::run_lifetime;
use crate::math::SplitRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EsConfig {
    /// Perturbation standard deviation.
    pub sigma: f32,
    /// Population size `P`; must be even with antithetic sampling.
    pub population: usize,
    /// Lifetimes averaged into one member's fitness.
    pub evals_per_sample: usize,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub outer_steps: usize,
    /// Evaluate mirrored pairs `theta +- sigma eps`.
    pub antithetic: bool,
    /// Replace fitnesses by centred ranks.
    pub rank_shaping: bool,
    /// Write a checkpoint every this many outer steps (0 = only at the end).
    pub checkpoint_every: usize,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl EsConfig {
    /// Outer-loop settings used for the classic-control and grid-world experiments.
    pub fn full() -> Self {
        Self {
            sigma: 0.035,
            population: 512,
            evals_per_sample: 10,
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            outer_steps: 20_000,
            antithetic: true,
            rank_shaping: true,
            checkpoint_every: 100,
        }
    }

    /// Outer-loop settings used for the bandit experiments.
    pub fn full_bandit() -> Self {
        Self { sigma: 0.2, lr: 0.2, evals_per_sample: 100, outer_steps: 4_000, ..Self::full() }
    }

    /// Desk-scale budget: population 64, 300 outer steps, 4 evaluations.
    pub fn desk() -> Self {
        Self { population: 64, outer_steps: 300, evals_per_sample: 4, checkpoint_every: 50, ..Self::full() }
    }

    /// Desk-scale bandit budget. The full-scale bandit step sizes
    /// (sigma = lr = 0.2) do not learn with a population of 64, so both are
    /// reduced.
    pub fn desk_bandit() -> Self {
        Self { sigma: 0.1, lr: 0.05, ..Self::desk() }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, m: &str| Err(Error::Config { field: format!("es.{field}"), message: m.to_string() });
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return fail("sigma", "must be positive and finite");
        }
        if self.population < 2 {
            return fail("population", "must be >= 2");
        }
        if self.antithetic && self.population % 2 != 0 {
            return fail("population", "must be even with antithetic sampling");
        }
        if self.evals_per_sample == 0 {
            return fail("evals_per_sample", "must be >= 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr", "must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return fail("beta1", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return fail("beta2", "must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return fail("eps", "must be positive");
        }
        Ok(())
    }
}

/// Adam moments for gradient ascent on `theta`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    /// Number of updates applied so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }
}

/// One Adam ascent step: `theta += lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step(theta: &mut [f32], grad: &[f32], state: &mut AdamState, cfg: &EsConfig) -> Result<()> {
    if grad.len() != theta.len() || state.m.len() != theta.len() {
        return Err(Error::Math(crate::math::MathError::DimensionMismatch {
            context: "adam_step",
            expected: theta.len(),
            got: grad.len(),
        }));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - f64::from(cfg.beta1).powi(t);
    let c2 = 1.0 - f64::from(cfg.beta2).powi(t);
    for k in 0..theta.len() {
        let g = grad[k];
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
        let m_hat = f64::from(state.m[k]) / c1;
        let v_hat = f64::from(state.v[k]) / c2;
        theta[k] += (f64::from(cfg.lr) * m_hat / (v_hat.sqrt() + f64::from(cfg.eps))) as f32;
    }
    Ok(())
}

/// Noise direction and sign of population member `member`.
///
/// With antithetic sampling members `2j` and `2j + 1` share direction `j`
/// with signs `+1` and `-1`.
pub fn member_noise(noise: &SplitRng, member: usize, dim: usize, antithetic: bool) -> (Vec<f32>, f32) {
    let (pair, sign) = if antithetic { (member / 2, if member % 2 == 0 { 1.0 } else { -1.0 }) } else { (member, 1.0) };
    let mut eps = vec![0.0; dim];
    noise.split(pair as u64).fill_normal(&mut eps, 1.0);
    (eps, sign)
}

/// Centred ranks in `[-0.5, 0.5]`; tied fitnesses share their average rank.
pub fn centered_ranks(fitness: &[f64]) -> Vec<f64> {
    let n = fitness.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && fitness[order[j + 1]] == fitness[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks.into_iter().map(|r| r / (n - 1) as f64 - 0.5).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EsEstimate {
    pub grad: Vec<f32>,
    /// Raw fitness of each member, in member order.
    pub fitness: Vec<f64>,
}

/// Perturbed parameters `theta + sigma * sign * eps` of one member.
pub fn perturbed(theta: &[f32], noise: &SplitRng, member: usize, cfg: &EsConfig) -> Vec<f32> {
    let (eps, sign) = member_noise(noise, member, theta.len(), cfg.antithetic);
    theta.iter().zip(&eps).map(|(t, e)| t + cfg.sigma * sign * e).collect()
}

/// ES gradient estimate of `E[fitness_fn(phi)]` at `theta`.
///
/// `fitness_fn(phi, member)` is evaluated once per member, in parallel under
/// `exec`; the estimate does not depend on the execution strategy.
pub fn es_gradient<F>(theta: &[f32], fitness_fn: F, cfg: &EsConfig, noise: &SplitRng, exec: Execution) -> Result<EsEstimate>
where
    F: Fn(&[f32], usize) -> Result<f64> + Sync + Send,
{
    cfg.validate()?;
    let p = cfg.population;
    let fitness = exec.try_map(p, |member| {
        let phi = perturbed(theta, noise, member, cfg);
        let f = fitness_fn(&phi, member)?;
        if f.is_finite() {
            Ok(f)
        } else {
            Err(Error::NonFiniteFitness { member })
        }
    })?;
    let weights = if cfg.rank_shaping { centered_ranks(&fitness) } else { fitness.clone() };

    let mut grad = vec![0.0f64; theta.len()];
    for (member, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let (eps, sign) = member_noise(noise, member, theta.len(), cfg.antithetic);
        let scale = w * f64::from(sign);
        for (g, e) in grad.iter_mut().zip(&eps) {
            *g += scale * f64::from(*e);
        }
    }
    let norm = 1.0 / (p as f64 * f64::from(cfg.sigma));
    Ok(EsEstimate { grad: grad.into_iter().map(|g| (g * norm) as f32).collect(), fitness })
}

/// Optimiser state that fully determines the continuation of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub theta: Vec<f32>,
    pub adam: AdamState,
    /// Outer steps completed.
    pub outer_step: usize,
}

impl TrainState {
    pub fn new(theta: Vec<f32>) -> Self {
        let dim = theta.len();
        Self { theta, adam: AdamState::new(dim), outer_step: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub outer_step: usize,
    pub mean_fitness: f64,
    pub max_fitness: f64,
    pub theta_norm: f64,
    pub wall_ms: u64,
}

/// Runs outer steps until `cfg.outer_steps` are complete.
///
/// `fitness_fn(phi, outer_step, member)` must be deterministic in its
/// arguments; all noise is keyed by `(seed, outer_step, member)`, so a run
/// resumed from any saved `TrainState` continues exactly as an
/// uninterrupted one. `on_step` sees the state after every update; an error
/// from it or from a fitness evaluation stops training.
pub fn meta_train<F, C>(
    mut state: TrainState,
    fitness_fn: F,
    cfg: &EsConfig,
    seed: u64,
    exec: Execution,
    mut on_step: C,
) -> Result<TrainState>
where
    F: Fn(&[f32], usize, usize) -> Result<f64> + Sync + Send,
    C: FnMut(&TrainState, &TrainLogRecord) -> Result<()>,
{
    cfg.validate()?;
    let noise_root = SplitRng::new(seed).split_named("es-noise");
    while state.outer_step < cfg.outer_steps {
        let start = Instant::now();
        let step = state.outer_step;
        let noise = noise_root.split(step as u64);
        let est = es_gradient(&state.theta, |phi, member| fitness_fn(phi, step, member), cfg, &noise, exec)?;
        adam_step(&mut state.theta, &est.grad, &mut state.adam, cfg)?;
        state.outer_step += 1;
        let record = TrainLogRecord {
            outer_step: state.outer_step,
            mean_fitness: est.fitness.iter().sum::<f64>() / est.fitness.len() as f64,
            max_fitness: est.fitness.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            theta_norm: state.theta.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt(),
            wall_ms: start.elapsed().as_millis() as u64,
        };
        on_step(&state, &record)?;
    }
    Ok(state)
}

/// Mean lifetime reward of an agent over a distribution of environments.
///
/// Environment instances and agent randomness are keyed by
/// `(seed, outer_step, eval)` only, so every member of one population is
/// scored on the same lifetimes.
#[derive(Clone, Debug)]
pub struct LifetimeFitness {
    pub kind: AgentKind,
    pub agent_cfg: AgentConfig,
    pub envs: Vec<EnvSpec>,
    pub lifetime: usize,
    pub evals: usize,
    pub obs_dim: usize,
    pub actions: usize,
    root: SplitRng,
}

impl LifetimeFitness {
    pub fn new(
        kind: AgentKind,
        agent_cfg: AgentConfig,
        envs: Vec<EnvSpec>,
        lifetime: usize,
        evals: usize,
        seed: u64,
    ) -> Result<Self> {
        let first = envs.first().ok_or_else(|| Error::Config {
            field: "env.train".into(),
            message: "at least one training environment is required".into(),
        })?;
        let shape = first.shape()?;
        for e in &envs[1..] {
            let s = e.shape()?;
            if kind == AgentKind::MetaRnn && (s.obs_dim, s.actions) != (shape.obs_dim, shape.actions) {
                return Err(Error::Incompatible(format!(
                    "metarnn needs one interface across training envs; {} differs from {}",
                    e, first
                )));
            }
        }
        Ok(Self {
            kind,
            agent_cfg,
            envs,
            lifetime,
            evals,
            obs_dim: shape.obs_dim,
            actions: shape.actions,
            root: SplitRng::new(seed).split_named("fitness"),
        })
    }

    pub fn param_count(&self) -> usize {
        self.agent_cfg.param_count(self.kind, self.obs_dim, self.actions)
    }

    pub fn evaluate(&self, params: &[f32], outer_step: usize) -> Result<f64> {
        let step_rng = self.root.split(outer_step as u64);
        let mut total = 0.0;
        for e in 0..self.evals {
            let rng = step_rng.split(e as u64);
            let spec = &self.envs[rng.split_named("env-choice").below(self.envs.len())];
            let mut env = spec.build(&rng.split_named("env"))?;
            let shape = env.shape();
            let agent = Agent::from_flat(self.kind, shape.obs_dim, shape.actions, &self.agent_cfg, params)?;
            total += run_lifetime(&agent, env.as_mut(), self.lifetime, &rng.split_named("lifetime"))?.fitness;
        }
        Ok(total / self.evals as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neg_sq(phi: &[f32]) -> f64 {
        -phi.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>()
    }

    fn cfg(population: usize, sigma: f32, antithetic: bool, rank_shaping: bool) -> EsConfig {
        EsConfig { population, sigma, antithetic, rank_shaping, ..EsConfig::full() }
    }

    #[test]
    fn quadratic_gradient_oracle() {
        // grad of E[-|theta + sigma eps|^2] is -2 theta
        let c = cfg(10_000, 0.1, true, false);
        let est = es_gradient(&[1.0, 0.0], |p, _| Ok(neg_sq(p)), &c, &SplitRng::new(1), Execution::default()).unwrap();
        assert!((est.grad[0] + 2.0).abs() < 0.1, "{:?}", est.grad);
        assert!(est.grad[1].abs() < 0.1, "{:?}", est.grad);
    }

    #[test]
    fn constant_fitness_zero_gradient() {
        let noise = SplitRng::new(2);
        let anti = es_gradient(&[0.3, -1.0, 2.0], |_, _| Ok(5.0), &cfg(64, 0.1, true, false), &noise, Execution::Sequential)
            .unwrap();
        assert!(anti.grad.iter().all(|&g| g == 0.0), "{:?}", anti.grad);
        let shaped = es_gradient(&[0.3, -1.0, 2.0], |_, _| Ok(5.0), &cfg(63, 0.1, false, true), &noise, Execution::Sequential)
            .unwrap();
        assert!(shaped.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_fitness_pairs_are_exact_directional_derivatives() {
        let c_vec = [0.5f64, -1.5, 2.0];
        let lin = |p: &[f32]| p.iter().zip(&c_vec).map(|(x, c)| f64::from(*x) * c).sum::<f64>();
        let theta = [0.1f32, 0.2, -0.3];
        for sigma in [0.01f32, 0.1, 1.0] {
            let c = cfg(20, sigma, true, false);
            let noise = SplitRng::new(3);
            let est = es_gradient(&theta, |p, _| Ok(lin(p)), &c, &noise, Execution::Sequential).unwrap();
            for pair in 0..10 {
                let (eps, _) = member_noise(&noise, 2 * pair, 3, true);
                let fd = (est.fitness[2 * pair] - est.fitness[2 * pair + 1]) / (2.0 * f64::from(sigma));
                let exact: f64 = eps.iter().zip(&c_vec).map(|(e, c)| f64::from(*e) * c).sum();
                assert!((fd - exact).abs() < 1e-4, "sigma {sigma}: {fd} vs {exact}");
            }
        }
    }

    #[test]
    fn rank_shaping_monotone_invariant() {
        let c = cfg(32, 0.1, true, true);
        let noise = SplitRng::new(4);
        let theta = [0.5f32, -0.5, 1.0, 0.0];
        let a = es_gradient(&theta, |p, _| Ok(neg_sq(p)), &c, &noise, Execution::Sequential).unwrap();
        let b = es_gradient(&theta, |p, _| Ok((neg_sq(p) * 3.0 + 7.0).exp()), &c, &noise, Execution::Sequential).unwrap();
        assert_eq!(a.grad, b.grad);
    }

    #[test]
    fn centered_ranks_properties() {
        assert_eq!(centered_ranks(&[3.0, 1.0, 2.0]), vec![0.5, -0.5, 0.0]);
        assert_eq!(centered_ranks(&[1.0, 1.0, 1.0, 1.0]), vec![0.0; 4]);
        let r = centered_ranks(&[2.0, 1.0, 2.0, 0.0]);
        assert_eq!(r[0], r[2]);
        assert!(r.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn noise_reconstruction_bit_exact() {
        let root = SplitRng::new(5).split(17);
        let (a, sa) = member_noise(&root, 9, 100, true);
        let (b, sb) = member_noise(&SplitRng::new(5).split(17), 9, 100, true);
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        let (c, sc) = member_noise(&root, 8, 100, true);
        assert_eq!(a, c);
        assert_eq!(sa, -sc);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let c = EsConfig { lr: 0.01, ..EsConfig::full() };
        let mut theta = vec![1.0f32, 2.0, 3.0, 4.0];
        let mut st = AdamState::new(4);
        adam_step(&mut theta, &[0.5, -3.0, 0.0, 1e-3], &mut st, &c).unwrap();
        assert!((theta[0] - 1.01).abs() < 1e-6);
        assert!((theta[1] - 1.99).abs() < 1e-6);
        assert_eq!(theta[2], 3.0);
        assert!((theta[3] - 4.01).abs() < 1e-5);
    }

    #[test]
    fn adam_zero_gradient_noop() {
        let c = EsConfig::full();
        let mut theta = vec![0.25f32; 5];
        let mut st = AdamState::new(5);
        for _ in 0..10 {
            adam_step(&mut theta, &[0.0; 5], &mut st, &c).unwrap();
        }
        assert_eq!(theta, vec![0.25; 5]);
    }

    #[test]
    fn quadratic_descent_converges() {
        let c = EsConfig { population: 64, sigma: 0.1, lr: 0.05, outer_steps: 200, ..EsConfig::full() };
        let end = meta_train(TrainState::new(vec![3.0, 3.0]), |p, _, _| Ok(neg_sq(p)), &c, 1, Execution::default(), |_, _| Ok(()))
            .unwrap();
        let norm = neg_sq(&end.theta).abs().sqrt();
        assert!(norm < 0.5, "{norm}");
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let c = EsConfig { population: 16, sigma: 0.1, lr: 0.05, outer_steps: 30, ..EsConfig::full() };
        let f = |p: &[f32], step: usize, m: usize| Ok(neg_sq(p) + (step * 31 + m) as f64 * 1e-3);
        let full = meta_train(TrainState::new(vec![1.0; 6]), f, &c, 9, Execution::Sequential, |_, _| Ok(())).unwrap();
        let half_cfg = EsConfig { outer_steps: 13, ..c.clone() };
        let half = meta_train(TrainState::new(vec![1.0; 6]), f, &half_cfg, 9, Execution::Sequential, |_, _| Ok(())).unwrap();
        let resumed = meta_train(half, f, &c, 9, Execution::Parallel, |_, _| Ok(())).unwrap();
        assert_eq!(full, resumed);
    }

    #[test]
    fn nan_fitness_aborts() {
        let c = cfg(8, 0.1, true, true);
        let r = es_gradient(&[0.0], |_, m| Ok(if m == 3 { f64::NAN } else { 1.0 }), &c, &SplitRng::new(0), Execution::Sequential);
        assert!(matches!(r, Err(Error::NonFiniteFitness { member: 3 })));
    }

    #[test]
    fn config_validation() {
        assert!(EsConfig { sigma: 0.0, ..EsConfig::desk() }.validate().is_err());
        assert!(EsConfig { population: 7, ..EsConfig::desk() }.validate().is_err());
        assert!(EsConfig { population: 7, antithetic: false, ..EsConfig::desk() }.validate().is_ok());
        let b = EsConfig::full_bandit();
        assert_eq!((b.sigma, b.lr, b.evals_per_sample, b.population, b.outer_steps), (0.2, 0.2, 100, 512, 4000));
    }

    #[test]
    fn lifetime_fitness_common_environments() {
        let cfg = AgentConfig::default();
        let fit = LifetimeFitness::new(AgentKind::Symla, cfg, vec![EnvSpec::new("bandit.easy_dep")], 100, 3, 0).unwrap();
        let p = cfg.init_params(AgentKind::Symla, 1, 2, &mut SplitRng::new(0));
        assert_eq!(fit.evaluate(&p, 4).unwrap(), fit.evaluate(&p, 4).unwrap());
        let f = fit.evaluate(&p, 4).unwrap();
        assert!((0.0..=100.0).contains(&f));
    }
}
