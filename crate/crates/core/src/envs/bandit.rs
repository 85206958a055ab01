//! Bernoulli multi-armed bandits. Contextless: the observation is the constant `[1.0]`.

use super::{EnvError, EnvShape, EnvStep, Environment};
use crate::math::SplitRng;

pub const BANDIT_LIFETIME: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BanditKind {
    /// `p1, p2 ~ U[0, 1]` independently.
    UniformIndependent,
    /// `p1 ~ U[0, 1]`, `p2 = 1 - p1`.
    UniformDependent,
    /// `p1 ~ U{0.1, 0.9}`, `p2 = 1 - p1`.
    EasyDependent,
    /// `p1 ~ U{0.25, 0.75}`, `p2 = 1 - p1`.
    MediumDependent,
    /// `p1 ~ U{0.4, 0.6}`, `p2 = 1 - p1`.
    HardDependent,
    /// `k` arms, each `p_i ~ U[0, 1]`.
    IndependentK,
    /// Fixed `p = [0.9, 0.1]`: the first arm always pays more.
    Biased,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BanditSpec {
    pub kind: BanditKind,
    pub arms: usize,
}

impl BanditSpec {
    pub fn new(kind: BanditKind, arms: usize) -> Result<Self, EnvError> {
        let ok = match kind {
            BanditKind::IndependentK => arms >= 2,
            _ => arms == 2,
        };
        if !ok {
            return Err(EnvError::InvalidSpec(format!("{kind:?} bandit cannot have {arms} arms")));
        }
        Ok(Self { kind, arms })
    }

    pub fn is_dependent(&self) -> bool {
        matches!(
            self.kind,
            BanditKind::UniformDependent
                | BanditKind::EasyDependent
                | BanditKind::MediumDependent
                | BanditKind::HardDependent
        )
    }

    /// Draws the hidden payout probabilities of one bandit instance.
    pub fn sample_probs(&self, rng: &mut SplitRng) -> Vec<f32> {
        let two_point = |rng: &mut SplitRng, lo: f32, hi: f32| if rng.coin() { lo } else { hi };
        let dependent = |p1: f32| vec![p1, 1.0 - p1];
        match self.kind {
            BanditKind::UniformIndependent | BanditKind::IndependentK => {
                (0..self.arms).map(|_| rng.uniform()).collect()
            }
            BanditKind::UniformDependent => dependent(rng.uniform()),
            BanditKind::EasyDependent => dependent(two_point(rng, 0.1, 0.9)),
            BanditKind::MediumDependent => dependent(two_point(rng, 0.25, 0.75)),
            BanditKind::HardDependent => dependent(two_point(rng, 0.4, 0.6)),
            BanditKind::Biased => vec![0.9, 0.1],
        }
    }
}

/// Expected regret of pulling `action`: best expected payout minus the chosen one.
pub fn expected_regret(probs: &[f32], action: usize) -> f32 {
    let best = probs.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    best - probs[action]
}

#[derive(Clone, Debug)]
pub struct Bandit {
    spec: BanditSpec,
    probs: Vec<f32>,
    rng: SplitRng,
}

impl Bandit {
    pub fn new(spec: BanditSpec, rng: SplitRng) -> Self {
        Self { spec, probs: Vec::new(), rng }
    }

    pub fn spec(&self) -> BanditSpec {
        self.spec
    }

    /// Payout probabilities of the current instance (empty before the first reset).
    pub fn probs(&self) -> &[f32] {
        &self.probs
    }

    /// Overrides the payout probabilities, e.g. for tests with deterministic arms.
    pub fn set_probs(&mut self, probs: Vec<f32>) {
        assert_eq!(probs.len(), self.spec.arms);
        self.probs = probs;
    }
}

impl Environment for Bandit {
    fn shape(&self) -> EnvShape {
        EnvShape {
            obs_dim: 1,
            actions: self.spec.arms,
            episode_len: BANDIT_LIFETIME,
            lifetime_len: BANDIT_LIFETIME,
        }
    }

    fn reset(&mut self) -> EnvStep {
        self.probs = self.spec.sample_probs(&mut self.rng);
        EnvStep { obs: vec![1.0], reward: 0.0, done: false }
    }

    fn step(&mut self, action: usize) -> Result<EnvStep, EnvError> {
        super::check_action(action, self.spec.arms)?;
        if self.probs.is_empty() {
            return Err(EnvError::NotReset);
        }
        let reward = if self.rng.bernoulli(self.probs[action]) { 1.0 } else { 0.0 };
        Ok(EnvStep { obs: vec![1.0], reward, done: false })
    }

    fn expected_regret(&self, action: usize) -> Option<f32> {
        (!self.probs.is_empty()).then(|| expected_regret(&self.probs, action))
    }
}
