//! 5x5 grid worlds observed as flattened three-channel binary images
//! (channel-major: `channel * 25 + row * 5 + col`).

use super::{check_action, EnvError, EnvShape, EnvStep, Environment};
use crate::math::SplitRng;

pub const GRID_SIZE: usize = 5;
pub const GRID_EPISODE: usize = 20;
pub const GRID_LIFETIME: usize = 500;
const CELLS: usize = GRID_SIZE * GRID_SIZE;
pub const GRID_OBS_DIM: usize = 3 * CELLS;

/// Actions: 0 up, 1 down, 2 left, 3 right. Moves into a wall leave the agent in place.
fn move_agent(pos: usize, action: usize) -> usize {
    let (r, c) = (pos / GRID_SIZE, pos % GRID_SIZE);
    let (r, c) = match action {
        0 => (r.saturating_sub(1), c),
        1 => ((r + 1).min(GRID_SIZE - 1), c),
        2 => (r, c.saturating_sub(1)),
        _ => (r, (c + 1).min(GRID_SIZE - 1)),
    };
    r * GRID_SIZE + c
}

/// Three distinct cells, uniformly.
fn distinct_cells(rng: &mut SplitRng, k: usize) -> Vec<usize> {
    rng.permutation(CELLS)[..k].to_vec()
}

fn image(channels: [Option<usize>; 3]) -> Vec<f32> {
    let mut obs = vec![0.0; GRID_OBS_DIM];
    for (ch, cell) in channels.iter().enumerate() {
        if let Some(c) = cell {
            obs[ch * CELLS + c] = 1.0;
        }
    }
    obs
}

fn manhattan(a: usize, b: usize) -> i32 {
    let (ar, ac) = ((a / GRID_SIZE) as i32, (a % GRID_SIZE) as i32);
    let (br, bc) = ((b / GRID_SIZE) as i32, (b % GRID_SIZE) as i32);
    (ar - br).abs() + (ac - bc).abs()
}

/// One heart (+1) and one trap (-1); touching either ends the episode.
///
/// Positions are drawn as (agent, rewarding object, punishing object). With
/// `swap_rewards` the trap sits on the rewarding cell and the heart on the
/// punishing one, so under a shared seed the swapped task equals the
/// original task with the heart and trap channels exchanged.
#[derive(Clone, Debug)]
pub struct HeartTrapGrid {
    swap_rewards: bool,
    agent: usize,
    good: usize,
    bad: usize,
    steps: usize,
    done: bool,
    rng: SplitRng,
}

impl HeartTrapGrid {
    pub const AGENT_CHANNEL: usize = 0;
    pub const HEART_CHANNEL: usize = 1;
    pub const TRAP_CHANNEL: usize = 2;

    pub fn new(swap_rewards: bool, rng: SplitRng) -> Self {
        Self { swap_rewards, agent: 0, good: 1, bad: 2, steps: 0, done: true, rng }
    }

    fn heart_trap(&self) -> (usize, usize) {
        if self.swap_rewards {
            (self.bad, self.good)
        } else {
            (self.good, self.bad)
        }
    }

    fn obs(&self) -> Vec<f32> {
        let (heart, trap) = self.heart_trap();
        image([Some(self.agent), Some(heart), Some(trap)])
    }
}

impl Environment for HeartTrapGrid {
    fn shape(&self) -> EnvShape {
        EnvShape { obs_dim: GRID_OBS_DIM, actions: 4, episode_len: GRID_EPISODE, lifetime_len: GRID_LIFETIME }
    }

    fn reset(&mut self) -> EnvStep {
        let cells = distinct_cells(&mut self.rng, 3);
        (self.agent, self.good, self.bad) = (cells[0], cells[1], cells[2]);
        self.steps = 0;
        self.done = false;
        EnvStep { obs: self.obs(), reward: 0.0, done: false }
    }

    fn step(&mut self, action: usize) -> Result<EnvStep, EnvError> {
        check_action(action, 4)?;
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        self.agent = move_agent(self.agent, action);
        self.steps += 1;
        let reward = if self.agent == self.good {
            1.0
        } else if self.agent == self.bad {
            -1.0
        } else {
            0.0
        };
        self.done = reward != 0.0 || self.steps >= GRID_EPISODE;
        Ok(EnvStep { obs: self.obs(), reward, done: self.done })
    }
}

/// Dense-reward navigation: reward is the decrease in Manhattan distance to the target.
#[derive(Clone, Debug)]
pub struct DenseGrid {
    agent: usize,
    target: usize,
    steps: usize,
    done: bool,
    rng: SplitRng,
}

impl DenseGrid {
    pub const AGENT_CHANNEL: usize = 0;
    /// Always empty in the default obstacle-free layout.
    pub const OBSTACLE_CHANNEL: usize = 1;
    pub const TARGET_CHANNEL: usize = 2;

    pub fn new(rng: SplitRng) -> Self {
        Self { agent: 0, target: 1, steps: 0, done: true, rng }
    }

    pub fn distance(&self) -> i32 {
        manhattan(self.agent, self.target)
    }

    /// Starts an episode from explicit cells.
    pub fn reset_to(&mut self, agent: usize, target: usize) -> EnvStep {
        assert!(agent != target && agent < CELLS && target < CELLS);
        (self.agent, self.target) = (agent, target);
        self.steps = 0;
        self.done = false;
        EnvStep { obs: self.obs(), reward: 0.0, done: false }
    }

    fn obs(&self) -> Vec<f32> {
        image([Some(self.agent), None, Some(self.target)])
    }
}

impl Environment for DenseGrid {
    fn shape(&self) -> EnvShape {
        EnvShape { obs_dim: GRID_OBS_DIM, actions: 4, episode_len: GRID_EPISODE, lifetime_len: GRID_LIFETIME }
    }

    fn reset(&mut self) -> EnvStep {
        let cells = distinct_cells(&mut self.rng, 2);
        self.reset_to(cells[0], cells[1])
    }

    fn step(&mut self, action: usize) -> Result<EnvStep, EnvError> {
        check_action(action, 4)?;
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        let before = self.distance();
        self.agent = move_agent(self.agent, action);
        self.steps += 1;
        let after = self.distance();
        self.done = after == 0 || self.steps >= GRID_EPISODE;
        Ok(EnvStep { obs: self.obs(), reward: (before - after) as f32, done: self.done })
    }
}
