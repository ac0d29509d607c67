//! Policies: the stochastic maximum-entropy rollout policy, the
//! deterministic output policy with an adaptive behavior-cloning term, and a
//! uniform-random baseline.

pub mod sac;
pub mod td3bc;

pub use sac::{SacConfig, SacLosses, SacPolicy};
pub use td3bc::{Td3BcConfig, Td3BcLosses, Td3BcPolicy};

use crate::numkit::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Stochastic,
    Deterministic,
}

/// Box action bounds.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ActionSpace {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionSpace {
    pub fn symmetric_unit(dim: usize) -> Self {
        ActionSpace { low: vec![-1.0; dim], high: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn center(&self, d: usize) -> f64 {
        0.5 * (self.low[d] + self.high[d])
    }

    pub fn halfwidth(&self, d: usize) -> f64 {
        0.5 * (self.high[d] - self.low[d])
    }

    pub fn clamp(&self, action: &mut [f64]) {
        for (d, a) in action.iter_mut().enumerate() {
            *a = a.clamp(self.low[d], self.high[d]);
        }
    }
}

pub trait Policy {
    fn act(&self, state: &[f64], mode: ActMode, rng: &mut Rng) -> Vec<f64>;
    fn action_dim(&self) -> usize;
}

/// Uniform over the action box; the rollout-policy baseline.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    pub space: ActionSpace,
}

impl RandomPolicy {
    pub fn new(space: ActionSpace) -> Self {
        RandomPolicy { space }
    }
}

impl Policy for RandomPolicy {
    fn act(&self, _state: &[f64], mode: ActMode, rng: &mut Rng) -> Vec<f64> {
        match mode {
            ActMode::Stochastic => (0..self.space.dim())
                .map(|d| rng.uniform(self.space.low[d], self.space.high[d]))
                .collect(),
            ActMode::Deterministic => (0..self.space.dim()).map(|d| self.space.center(d)).collect(),
        }
    }

    fn action_dim(&self) -> usize {
        self.space.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_policy_respects_bounds() {
        let mut rng = Rng::new(1);
        let p = RandomPolicy::new(ActionSpace { low: vec![-1.0, 0.0], high: vec![1.0, 2.0] });
        for _ in 0..100 {
            let a = p.act(&[0.0], ActMode::Stochastic, &mut rng);
            assert!(a[0] >= -1.0 && a[0] <= 1.0);
            assert!(a[1] >= 0.0 && a[1] <= 2.0);
        }
    }
}
