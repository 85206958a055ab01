use super::{EnvError, EnvShape, EnvStep, Environment};
use crate::math::{glorot_normal, Mat, SplitRng};

/// Reorders observations and remaps actions.
///
/// The wrapped observation is `obs'[i] = obs[obs_perm[i]]` and agent action
/// `a` is forwarded to the inner environment as `act_perm[a]`.
pub struct PermuteWrapper {
    inner: Box<dyn Environment>,
    obs_perm: Vec<usize>,
    act_perm: Vec<usize>,
}

fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    p.iter().all(|&i| i < p.len() && !std::mem::replace(&mut seen[i], true))
}

pub fn inverse_permutation(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &j) in p.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

impl PermuteWrapper {
    pub fn new(inner: Box<dyn Environment>, obs_perm: Vec<usize>, act_perm: Vec<usize>) -> Result<Self, EnvError> {
        let shape = inner.shape();
        if obs_perm.len() != shape.obs_dim || !is_permutation(&obs_perm) {
            return Err(EnvError::InvalidSpec(format!(
                "observation permutation must be a bijection on {} entries",
                shape.obs_dim
            )));
        }
        if act_perm.len() != shape.actions || !is_permutation(&act_perm) {
            return Err(EnvError::InvalidSpec(format!(
                "action permutation must be a bijection on {} actions",
                shape.actions
            )));
        }
        Ok(Self { inner, obs_perm, act_perm })
    }

    /// Permutations drawn from `rng`, redrawn until at least one of them
    /// moves something.
    pub fn random(inner: Box<dyn Environment>, rng: &mut SplitRng) -> Result<Self, EnvError> {
        let shape = inner.shape();
        let is_identity = |p: &[usize]| p.iter().enumerate().all(|(i, &j)| i == j);
        loop {
            let obs = rng.permutation(shape.obs_dim);
            let act = rng.permutation(shape.actions);
            if !(is_identity(&obs) && is_identity(&act)) {
                return Self::new(inner, obs, act);
            }
        }
    }

    pub fn obs_perm(&self) -> &[usize] {
        &self.obs_perm
    }

    pub fn act_perm(&self) -> &[usize] {
        &self.act_perm
    }

    fn map(&self, mut s: EnvStep) -> EnvStep {
        s.obs = self.obs_perm.iter().map(|&i| s.obs[i]).collect();
        s
    }
}

impl Environment for PermuteWrapper {
    fn shape(&self) -> EnvShape {
        self.inner.shape()
    }

    fn reset(&mut self) -> EnvStep {
        let s = self.inner.reset();
        self.map(s)
    }

    fn step(&mut self, action: usize) -> Result<EnvStep, EnvError> {
        super::check_action(action, self.act_perm.len())?;
        let s = self.inner.step(self.act_perm[action])?;
        Ok(self.map(s))
    }

    fn expected_regret(&self, action: usize) -> Option<f32> {
        self.act_perm.get(action).and_then(|&a| self.inner.expected_regret(a))
    }
}

/// Projects observations through a fixed Glorot-normal matrix.
pub struct ProjectionWrapper {
    inner: Box<dyn Environment>,
    proj: Mat,
}

impl ProjectionWrapper {
    /// Samples the projection once; build a new wrapper per lifetime to resample.
    pub fn new(inner: Box<dyn Environment>, out_dim: usize, rng: &mut SplitRng) -> Result<Self, EnvError> {
        if out_dim == 0 {
            return Err(EnvError::InvalidSpec("projection dimension must be >= 1".into()));
        }
        let proj = glorot_normal(out_dim, inner.shape().obs_dim, rng);
        Ok(Self { inner, proj })
    }

    pub fn projection(&self) -> &Mat {
        &self.proj
    }

    fn map(&self, mut s: EnvStep) -> EnvStep {
        let mut out = vec![0.0; self.proj.rows()];
        let zero = vec![0.0; self.proj.rows()];
        self.proj.affine_into(&zero, &s.obs, &mut out);
        s.obs = out;
        s
    }
}

impl Environment for ProjectionWrapper {
    fn shape(&self) -> EnvShape {
        EnvShape { obs_dim: self.proj.rows(), ..self.inner.shape() }
    }

    fn reset(&mut self) -> EnvStep {
        let s = self.inner.reset();
        self.map(s)
    }

    fn step(&mut self, action: usize) -> Result<EnvStep, EnvError> {
        let s = self.inner.step(action)?;
        Ok(self.map(s))
    }

    fn expected_regret(&self, action: usize) -> Option<f32> {
        self.inner.expected_regret(action)
    }
}
