//! Environments: the 2-D RiskWorld toy task, its offline dataset collector,
//! and synthetic linear/tabular MDP generators.

pub mod linear_mdp;
pub mod riskworld;

pub use linear_mdp::{make_linear_mdp, LinearMdpSpec, MdpKind, TabularSim};
pub use riskworld::{collect_riskworld_dataset, riskworld_reward, RiskWorld};

use crate::numkit::Rng;

/// A resettable episodic environment over flat float states and actions.
pub trait Environment {
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> (Vec<f64>, f64, bool);
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Per-dimension (low, high) action bounds.
    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>);
}

/// One (s, a, r, s', terminal) record; the atom of every buffer. Model
/// rollouts additionally carry the unshaped reward and the uncertainty
/// used to shape it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reward_raw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub uncertainty: Option<f64>,
}

impl Transition {
    pub fn new(state: Vec<f64>, action: Vec<f64>, reward: f64, next_state: Vec<f64>, terminal: bool) -> Self {
        Transition { state, action, reward, next_state, terminal, reward_raw: None, uncertainty: None }
    }
}
