//! RiskWorld: a 10-step episodic task on the square [−3,3]². The agent
//! starts in the diagonal band |x+y| ≤ 0.25 and is paid the signed distance
//! of its next state from the line y = −x, so the upper-right corner is the
//! high-reward region and the lower-left corner its mirror-image trap.

use super::{Environment, Transition};
use crate::numkit::Rng;
use crate::{CoreError, Result};

pub const SQUARE_HALF_WIDTH: f64 = 3.0;
pub const START_BAND_HALF_WIDTH: f64 = 0.25;
pub const EPISODE_LEN: usize = 10;
const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Signed reward at a state: (x+y)/√2, positive above the line y = −x.
pub fn riskworld_reward(state: &[f64]) -> f64 {
    (state[0] + state[1]) / SQRT2
}

fn clip_to_square(v: f64) -> f64 {
    v.clamp(-SQUARE_HALF_WIDTH, SQUARE_HALF_WIDTH)
}

/// Pure transition rule: next = clip(s + clip(a, ±1), ±3), reward evaluated
/// at the next state.
pub fn riskworld_dynamics(state: &[f64], action: &[f64]) -> (Vec<f64>, f64) {
    let ax = action[0].clamp(-1.0, 1.0);
    let ay = action[1].clamp(-1.0, 1.0);
    let next = vec![clip_to_square(state[0] + ax), clip_to_square(state[1] + ay)];
    let r = riskworld_reward(&next);
    (next, r)
}

#[derive(Debug, Clone)]
pub struct RiskWorld {
    state: [f64; 2],
    step_idx: usize,
}

impl RiskWorld {
    pub fn new() -> Self {
        RiskWorld { state: [0.0, 0.0], step_idx: 0 }
    }

    /// Uniform start in the band |x+y| ≤ 0.25 inside the square, by
    /// rejection from the square.
    pub fn sample_band_state(rng: &mut Rng) -> [f64; 2] {
        loop {
            let x = rng.uniform(-SQUARE_HALF_WIDTH, SQUARE_HALF_WIDTH);
            let y = rng.uniform(-SQUARE_HALF_WIDTH, SQUARE_HALF_WIDTH);
            if (x + y).abs() <= START_BAND_HALF_WIDTH {
                return [x, y];
            }
        }
    }

    pub fn state(&self) -> [f64; 2] {
        self.state
    }
}

impl Default for RiskWorld {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for RiskWorld {
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.state = Self::sample_band_state(rng);
        self.step_idx = 0;
        self.state.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> (Vec<f64>, f64, bool) {
        let (next, r) = riskworld_dynamics(&self.state, action);
        self.state = [next[0], next[1]];
        self.step_idx += 1;
        (next, r, self.step_idx >= EPISODE_LEN)
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-1.0, -1.0], vec![1.0, 1.0])
    }
}

/// Offline collection protocol: start in the band, take one uniform random
/// action, record the transition, reset. Every recorded state therefore lies
/// in the band.
pub fn collect_riskworld_dataset(n: usize, rng: &mut Rng) -> Result<Vec<Transition>> {
    if n == 0 {
        return Err(CoreError::Validation("dataset size must be positive".into()));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let s = RiskWorld::sample_band_state(rng);
        let a = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
        let (next, r) = riskworld_dynamics(&s, &a);
        out.push(Transition::new(s.to_vec(), a.to_vec(), r, next, false));
    }
    Ok(out)
}
