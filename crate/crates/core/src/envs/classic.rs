//! Classic control tasks with the canonical Gym dynamics.
//!
//! Episodes are capped at 200 steps. Physics constants:
//! - CartPole: g = 9.8, cart mass 1.0, pole mass 0.1, pole half-length 0.5,
//!   force 10 N, tau 0.02 s (Euler), failure at |x| > 2.4 or |theta| > 12 deg.
//! - Acrobot: unit link lengths and masses, centres of mass at 0.5, unit
//!   moments of inertia, dt 0.2 with one RK4 step, torques {-1, 0, +1}.
//! - MountainCar: force 0.001, gravity 0.0025, speed limit 0.07, goal at 0.5.

use std::f64::consts::PI;

use super::{check_action, EnvError, EnvShape, EnvStep, Environment};
use crate::math::SplitRng;

pub const CONTROL_EPISODE: usize = 200;
pub const CONTROL_LIFETIME: usize = 500;

fn control_shape(obs_dim: usize, actions: usize) -> EnvShape {
    EnvShape { obs_dim, actions, episode_len: CONTROL_EPISODE, lifetime_len: CONTROL_LIFETIME }
}

fn uniform(rng: &mut SplitRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform_f64()
}

#[derive(Clone, Debug)]
pub struct CartPole {
    /// `[x, x_dot, theta, theta_dot]`
    state: [f64; 4],
    dense: bool,
    steps: usize,
    done: bool,
    rng: SplitRng,
}

impl CartPole {
    const GRAVITY: f64 = 9.8;
    const MASS_CART: f64 = 1.0;
    const MASS_POLE: f64 = 0.1;
    const HALF_LENGTH: f64 = 0.5;
    const FORCE: f64 = 10.0;
    const TAU: f64 = 0.02;
    pub const X_LIMIT: f64 = 2.4;
    pub const THETA_LIMIT: f64 = 12.0 * 2.0 * PI / 360.0;

    /// `dense` selects the smooth upright-and-centred reward with no early termination.
    pub fn new(dense: bool, rng: SplitRng) -> Self {
        Self { state: [0.0; 4], dense, steps: 0, done: true, rng }
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    /// Starts an episode from an explicit state.
    pub fn reset_to(&mut self, state: [f64; 4]) -> EnvStep {
        self.state = state;
        self.steps = 0;
        self.done = false;
        EnvStep { obs: self.obs(), reward: 0.0, done: false }
    }

    fn obs(&self) -> Vec<f32> {
        self.state.iter().map(|&v| v as f32).collect()
    }

    /// `0.5 (cos theta + 1) (1 - |x| / x_limit)`, clamped to `[0, 1]`.
    pub fn dense_reward(x: f64, theta: f64) -> f64 {
        let upright = 0.5 * (theta.cos() + 1.0);
        let centred = (1.0 - x.abs() / Self::X_LIMIT).clamp(0.0, 1.0);
        upright * centred
    }
}

impl Environment for CartPole {
    fn shape(&self) -> EnvShape {
        control_shape(4, 2)
    }

    fn reset(&mut self) -> EnvStep {
        let s = [(); 4].map(|_| uniform(&mut self.rng, -0.05, 0.05));
        self.reset_to(s)
    }

    fn step(&mut self, action: usize) -> Result<EnvStep, EnvError> {
        check_action(action, 2)?;
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        let [x, x_dot, theta, theta_dot] = self.state;
        let force = if action == 1 { Self::FORCE } else { -Self::FORCE };
        let total_mass = Self::MASS_CART + Self::MASS_POLE;
        let pml = Self::MASS_POLE * Self::HALF_LENGTH;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + pml * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (Self::GRAVITY * sin - cos * temp)
            / (Self::HALF_LENGTH * (4.0 / 3.0 - Self::MASS_POLE * cos * cos / total_mass));
        let x_acc = temp - pml * theta_acc * cos / total_mass;
        self.state = [
            x + Self::TAU * x_dot,
            x_dot + Self::TAU * x_acc,
            theta + Self::TAU * theta_dot,
            theta_dot + Self::TAU * theta_acc,
        ];
        self.steps += 1;

        let [x, _, theta, _] = self.state;
        let (reward, failed) = if self.dense {
            (Self::dense_reward(x, theta), false)
        } else {
            (1.0, x.abs() > Self::X_LIMIT || theta.abs() > Self::THETA_LIMIT)
        };
        self.done = failed || self.steps >= CONTROL_EPISODE;
        Ok(EnvStep { obs: self.obs(), reward: reward as f32, done: self.done })
    }
}

#[derive(Clone, Debug)]
pub struct Acrobot {
    /// `[theta1, theta2, dtheta1, dtheta2]`
    state: [f64; 4],
    steps: usize,
    done: bool,
    rng: SplitRng,
}

impl Acrobot {
    const DT: f64 = 0.2;
    const L1: f64 = 1.0;
    const M1: f64 = 1.0;
    const M2: f64 = 1.0;
    const LC1: f64 = 0.5;
    const LC2: f64 = 0.5;
    const MOI: f64 = 1.0;
    const G: f64 = 9.8;
    const MAX_VEL_1: f64 = 4.0 * PI;
    const MAX_VEL_2: f64 = 9.0 * PI;

    pub fn new(rng: SplitRng) -> Self {
        Self { state: [0.0; 4], steps: 0, done: true, rng }
    }

    fn obs(&self) -> Vec<f32> {
        let [t1, t2, d1, d2] = self.state;
        [t1.cos(), t1.sin(), t2.cos(), t2.sin(), d1, d2].iter().map(|&v| v as f32).collect()
    }

    fn terminal(&self) -> bool {
        let [t1, t2, ..] = self.state;
        -t1.cos() - (t2 + t1).cos() > 1.0
    }

    fn derivs(s: [f64; 4], torque: f64) -> [f64; 4] {
        let [theta1, theta2, dtheta1, dtheta2] = s;
        let (m1, m2, l1, lc1, lc2, i1, i2, g) =
            (Self::M1, Self::M2, Self::L1, Self::LC1, Self::LC2, Self::MOI, Self::MOI, Self::G);
        let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
        let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
        let phi2 = m2 * lc2 * g * (theta1 + theta2 - PI / 2.0).cos();
        let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
            - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
            + (m1 * lc1 + m2 * l1) * g * (theta1 - PI / 2.0).cos()
            + phi2;
        let ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin() - phi2)
            / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
        let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
        [dtheta1, dtheta2, ddtheta1, ddtheta2]
    }

    fn rk4(s: [f64; 4], torque: f64, dt: f64) -> [f64; 4] {
        let add = |a: [f64; 4], k: [f64; 4], h: f64| [0, 1, 2, 3].map(|i| a[i] + h * k[i]);
        let k1 = Self::derivs(s, torque);
        let k2 = Self::derivs(add(s, k1, dt / 2.0), torque);
        let k3 = Self::derivs(add(s, k2, dt / 2.0), torque);
        let k4 = Self::derivs(add(s, k3, dt), torque);
        [0, 1, 2, 3].map(|i| s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
    }
}

fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl Environment for Acrobot {
    fn shape(&self) -> EnvShape {
        control_shape(6, 3)
    }

    fn reset(&mut self) -> EnvStep {
        self.state = [(); 4].map(|_| uniform(&mut self.rng, -0.1, 0.1));
        self.steps = 0;
        self.done = false;
        EnvStep { obs: self.obs(), reward: 0.0, done: false }
    }

    fn step(&mut self, action: usize) -> Result<EnvStep, EnvError> {
        check_action(action, 3)?;
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        let torque = action as f64 - 1.0;
        let s = Self::rk4(self.state, torque, Self::DT);
        self.state = [
            wrap_angle(s[0]),
            wrap_angle(s[1]),
            s[2].clamp(-Self::MAX_VEL_1, Self::MAX_VEL_1),
            s[3].clamp(-Self::MAX_VEL_2, Self::MAX_VEL_2),
        ];
        self.steps += 1;
        let terminal = self.terminal();
        self.done = terminal || self.steps >= CONTROL_EPISODE;
        let reward = if terminal { 0.0 } else { -1.0 };
        Ok(EnvStep { obs: self.obs(), reward, done: self.done })
    }
}

#[derive(Clone, Debug)]
pub struct MountainCar {
    position: f64,
    velocity: f64,
    steps: usize,
    done: bool,
    rng: SplitRng,
}

impl MountainCar {
    const MIN_POS: f64 = -1.2;
    const MAX_POS: f64 = 0.6;
    const MAX_SPEED: f64 = 0.07;
    pub const GOAL: f64 = 0.5;
    const FORCE: f64 = 0.001;
    const GRAVITY: f64 = 0.0025;

    pub fn new(rng: SplitRng) -> Self {
        Self { position: 0.0, velocity: 0.0, steps: 0, done: true, rng }
    }

    pub fn reset_to(&mut self, position: f64, velocity: f64) -> EnvStep {
        self.position = position;
        self.velocity = velocity;
        self.steps = 0;
        self.done = false;
        EnvStep { obs: self.obs(), reward: 0.0, done: false }
    }

    pub fn position(&self) -> f64 {
        self.position
    }

    fn obs(&self) -> Vec<f32> {
        vec![self.position as f32, self.velocity as f32]
    }
}

impl Environment for MountainCar {
    fn shape(&self) -> EnvShape {
        control_shape(2, 3)
    }

    fn reset(&mut self) -> EnvStep {
        let p = uniform(&mut self.rng, -0.6, -0.4);
        self.reset_to(p, 0.0)
    }

    fn step(&mut self, action: usize) -> Result<EnvStep, EnvError> {
        check_action(action, 3)?;
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        self.velocity += (action as f64 - 1.0) * Self::FORCE - (3.0 * self.position).cos() * Self::GRAVITY;
        self.velocity = self.velocity.clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        self.position = (self.position + self.velocity).clamp(Self::MIN_POS, Self::MAX_POS);
        if self.position == Self::MIN_POS && self.velocity < 0.0 {
            self.velocity = 0.0;
        }
        self.steps += 1;
        let reached = self.position >= Self::GOAL && self.velocity >= 0.0;
        self.done = reached || self.steps >= CONTROL_EPISODE;
        Ok(EnvStep { obs: self.obs(), reward: -1.0, done: self.done })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartpole_alternating_forces_survive() {
        let mut env = CartPole::new(false, SplitRng::new(0));
        env.reset_to([0.0; 4]);
        let mut steps = 0;
        for t in 0..200 {
            let s = env.step(t % 2).unwrap();
            steps += 1;
            if s.done {
                break;
            }
        }
        assert!(steps >= 20, "fell after {steps}");
    }

    #[test]
    fn cartpole_constant_push_fails() {
        let mut env = CartPole::new(false, SplitRng::new(0));
        env.reset();
        let mut done_at = None;
        for t in 0..200 {
            if env.step(1).unwrap().done {
                done_at = Some(t);
                break;
            }
        }
        assert!(done_at.unwrap() < 100);
        assert!(matches!(env.step(0), Err(EnvError::StepAfterDone)));
    }

    #[test]
    fn dense_cartpole_reward_closed_form() {
        assert_eq!(CartPole::dense_reward(0.0, 0.0), 1.0);
        assert!((CartPole::dense_reward(0.0, PI / 2.0) - 0.5).abs() < 1e-12);
        assert_eq!(CartPole::dense_reward(3.0, 0.0), 0.0);
    }

    #[test]
    fn dense_cartpole_runs_full_episode() {
        let mut env = CartPole::new(true, SplitRng::new(1));
        env.reset();
        for t in 0..CONTROL_EPISODE {
            let s = env.step(1).unwrap();
            assert!((0.0..=1.0).contains(&s.reward));
            assert_eq!(s.done, t + 1 == CONTROL_EPISODE);
        }
    }

    #[test]
    fn mountaincar_idle_never_escapes() {
        let mut env = MountainCar::new(SplitRng::new(0));
        env.reset_to(-PI / 6.0, 0.0);
        for t in 0..CONTROL_EPISODE {
            let s = env.step(1).unwrap();
            assert!(env.position() < MountainCar::GOAL);
            assert_eq!(s.reward, -1.0);
            assert_eq!(s.done, t + 1 == CONTROL_EPISODE);
        }
    }

    #[test]
    fn mountaincar_energy_pumping_escapes() {
        let mut env = MountainCar::new(SplitRng::new(0));
        env.reset_to(-0.5, 0.0);
        let mut reached = false;
        for _ in 0..CONTROL_EPISODE {
            let v = env.velocity;
            let s = env.step(if v >= 0.0 { 2 } else { 0 }).unwrap();
            if s.done {
                reached = env.position() >= MountainCar::GOAL;
                break;
            }
        }
        assert!(reached);
    }

    #[test]
    fn acrobot_shapes_and_rewards() {
        let mut env = Acrobot::new(SplitRng::new(3));
        let s = env.reset();
        assert_eq!(s.obs.len(), 6);
        for _ in 0..CONTROL_EPISODE {
            let s = env.step(0).unwrap();
            assert!(s.reward == -1.0 || (s.reward == 0.0 && s.done));
            assert!(s.obs.iter().all(|v| v.is_finite()));
            if s.done {
                break;
            }
        }
        assert!(env.step(3).is_err());
    }

    #[test]
    fn acrobot_hanging_at_rest_stays() {
        let mut env = Acrobot::new(SplitRng::new(0));
        env.reset();
        env.state = [0.0; 4];
        let s = env.step(1).unwrap();
        assert!(s.obs[1].abs() < 1e-9 && s.obs[4].abs() < 1e-9);
    }

    #[test]
    fn deterministic_under_seed() {
        let roll = |seed| {
            let mut env = Acrobot::new(SplitRng::new(seed));
            let mut out = env.reset().obs;
            for t in 0..50 {
                out.extend(env.step(t % 3).unwrap().obs);
            }
            out
        };
        assert_eq!(roll(5), roll(5));
        assert_ne!(roll(5), roll(6));
    }
}
