//! Synthetic finite-horizon linear MDPs with one-hot tabular features:
//! φ(s,a) = e_{s·A+a}, transition rows P(·|s,a) and rewards r(s,a) stored
//! directly as the linear weights, so ‖φ‖ = 1 and every row is a proper
//! distribution by construction.

use crate::numkit::{Matrix, Rng};
use crate::{CoreError, Result};

#[derive(Debug, Clone)]
pub struct LinearMdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    /// Feature dimension d = S·A.
    pub feature_dim: usize,
    /// d×S matrix; row for (s,a) is the next-state distribution.
    pub transitions: Matrix,
    /// Reward per (s,a) feature index, in [0,1].
    pub rewards: Vec<f64>,
    pub start_state: usize,
}

/// Generator presets.
#[derive(Debug, Clone)]
pub enum MdpKind {
    /// Single-state, H=1 bandit with the given deterministic arm rewards.
    Bandit { rewards: Vec<f64> },
    /// Dirichlet(1) transition rows, uniform rewards in [0,1].
    RandomTabular { n_states: usize, n_actions: usize, horizon: usize },
    /// S=6, A=2, H=5 instance with a high-reward absorbing state reachable
    /// only by a chain of zero-reward "advance" actions. A greedy learner
    /// settles for the 0.2 safe reward and never finds it.
    Needle { slip: f64 },
}

impl LinearMdpSpec {
    pub fn feature_index(&self, s: usize, a: usize) -> usize {
        debug_assert!(s < self.n_states && a < self.n_actions);
        s * self.n_actions + a
    }

    /// Dense one-hot feature vector for (s,a).
    pub fn phi(&self, s: usize, a: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.feature_dim];
        v[self.feature_index(s, a)] = 1.0;
        v
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        self.transitions.row(self.feature_index(s, a))
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[self.feature_index(s, a)]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 || self.horizon == 0 {
            return Err(CoreError::Validation("MDP sizes must be positive".into()));
        }
        if self.feature_dim != self.n_states * self.n_actions {
            return Err(CoreError::Validation("one-hot feature dim must be S*A".into()));
        }
        if self.transitions.rows() != self.feature_dim || self.transitions.cols() != self.n_states {
            return Err(CoreError::Validation("transition matrix has wrong shape".into()));
        }
        for i in 0..self.feature_dim {
            let row = self.transitions.row(i);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 || row.iter().any(|&p| p < 0.0) {
                return Err(CoreError::Validation(format!("transition row {i} is not a distribution")));
            }
        }
        if self.rewards.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
            return Err(CoreError::Validation("rewards must lie in [0,1]".into()));
        }
        if self.start_state >= self.n_states {
            return Err(CoreError::Validation("start state out of range".into()));
        }
        Ok(())
    }
}

pub fn make_linear_mdp(kind: &MdpKind, rng: &mut Rng) -> Result<LinearMdpSpec> {
    let spec = match kind {
        MdpKind::Bandit { rewards } => {
            if rewards.is_empty() {
                return Err(CoreError::Validation("bandit needs at least one arm".into()));
            }
            let a = rewards.len();
            let mut transitions = Matrix::zeros(a, 1);
            for i in 0..a {
                transitions[(i, 0)] = 1.0;
            }
            LinearMdpSpec {
                n_states: 1,
                n_actions: a,
                horizon: 1,
                feature_dim: a,
                transitions,
                rewards: rewards.clone(),
                start_state: 0,
            }
        }
        MdpKind::RandomTabular { n_states, n_actions, horizon } => {
            let (s, a, h) = (*n_states, *n_actions, *horizon);
            if s == 0 || a == 0 || h == 0 {
                return Err(CoreError::Validation("invalid tabular sizes".into()));
            }
            let d = s * a;
            let mut transitions = Matrix::zeros(d, s);
            for i in 0..d {
                let row = rng.dirichlet(1.0, s);
                transitions.row_mut(i).copy_from_slice(&row);
            }
            let rewards = (0..d).map(|_| rng.next_f64()).collect();
            LinearMdpSpec {
                n_states: s,
                n_actions: a,
                horizon: h,
                feature_dim: d,
                transitions,
                rewards,
                start_state: 0,
            }
        }
        MdpKind::Needle { slip } => {
            if !(0.0..1.0).contains(slip) {
                return Err(CoreError::Validation("slip must be in [0,1)".into()));
            }
            // States 0..5; 5 is the absorbing needle. Action 0 ("safe")
            // scatters back toward the start states and pays 0.2. Action 1
            // ("advance") walks the chain 0→1→2→5 (3,4 rejoin at 1) for no
            // immediate reward, slipping in place with probability `slip`.
            let (s, a, h) = (6usize, 2usize, 5usize);
            let d = s * a;
            let mut transitions = Matrix::zeros(d, s);
            let mut rewards = vec![0.0; d];
            let chain_next = |st: usize| -> usize {
                match st {
                    0 => 1,
                    1 => 2,
                    2 => 5,
                    3 | 4 => 1,
                    _ => 5,
                }
            };
            for st in 0..s {
                let safe = st * a;
                let advance = st * a + 1;
                if st == 5 {
                    transitions[(safe, 5)] = 1.0;
                    transitions[(advance, 5)] = 1.0;
                    rewards[safe] = 1.0;
                    rewards[advance] = 1.0;
                } else {
                    transitions[(safe, 0)] = 0.8;
                    transitions[(safe, 3)] = 0.1;
                    transitions[(safe, 4)] = 0.1;
                    rewards[safe] = 0.2;
                    let nxt = chain_next(st);
                    transitions[(advance, nxt)] = 1.0 - slip;
                    transitions[(advance, st)] += *slip;
                    rewards[advance] = 0.0;
                }
            }
            LinearMdpSpec {
                n_states: s,
                n_actions: a,
                horizon: h,
                feature_dim: d,
                transitions,
                rewards,
                start_state: 0,
            }
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// Step-through simulator over a spec.
#[derive(Debug, Clone)]
pub struct TabularSim<'a> {
    spec: &'a LinearMdpSpec,
    state: usize,
    step: usize,
}

impl<'a> TabularSim<'a> {
    pub fn new(spec: &'a LinearMdpSpec) -> Self {
        TabularSim { spec, state: spec.start_state, step: 0 }
    }

    pub fn reset(&mut self) -> usize {
        self.state = self.spec.start_state;
        self.step = 0;
        self.state
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Returns (next_state, reward, done).
    pub fn step(&mut self, action: usize, rng: &mut Rng) -> (usize, f64, bool) {
        let r = self.spec.reward(self.state, action);
        let row = self.spec.transition_row(self.state, action);
        let next = rng.categorical(row);
        self.state = next;
        self.step += 1;
        (next, r, self.step >= self.spec.horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandit_spec_is_valid() {
        let mut rng = Rng::new(1);
        let mdp = make_linear_mdp(&MdpKind::Bandit { rewards: vec![0.2, 0.8] }, &mut rng).unwrap();
        assert_eq!(mdp.n_actions, 2);
        assert_eq!(mdp.horizon, 1);
        assert_eq!(mdp.phi(0, 1), vec![0.0, 1.0]);
    }

    #[test]
    fn random_tabular_rows_normalize() {
        let mut rng = Rng::new(2);
        let mdp = make_linear_mdp(
            &MdpKind::RandomTabular { n_states: 5, n_actions: 3, horizon: 5 },
            &mut rng,
        )
        .unwrap();
        for i in 0..mdp.feature_dim {
            let sum: f64 = mdp.transitions.row(i).iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn invalid_sizes_rejected() {
        let mut rng = Rng::new(3);
        assert!(make_linear_mdp(
            &MdpKind::RandomTabular { n_states: 0, n_actions: 2, horizon: 3 },
            &mut rng
        )
        .is_err());
        assert!(make_linear_mdp(&MdpKind::Bandit { rewards: vec![] }, &mut rng).is_err());
    }

    #[test]
    fn needle_spec_is_valid_and_absorbing() {
        let mut rng = Rng::new(4);
        let mdp = make_linear_mdp(&MdpKind::Needle { slip: 0.15 }, &mut rng).unwrap();
        assert_eq!((mdp.n_states, mdp.n_actions, mdp.horizon), (6, 2, 5));
        assert_eq!(mdp.reward(5, 0), 1.0);
        assert_eq!(mdp.transition_row(5, 1)[5], 1.0);
    }

    #[test]
    fn simulator_respects_horizon() {
        let mut rng = Rng::new(5);
        let mdp = make_linear_mdp(
            &MdpKind::RandomTabular { n_states: 4, n_actions: 2, horizon: 7 },
            &mut rng,
        )
        .unwrap();
        let mut sim = TabularSim::new(&mdp);
        sim.reset();
        let mut steps = 0;
        loop {
            let (_, _, done) = sim.step(0, &mut rng);
            steps += 1;
            if done {
                break;
            }
        }
        assert_eq!(steps, 7);
    }
}
