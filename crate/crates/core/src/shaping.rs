//! Reward shaping into pessimistic/optimistic model MDPs and the branched
//! rollout generator: optimistic rollouts are appended to the optimistic
//! buffer and, relabeled with penalized rewards, to a pessimistic copy;
//! pessimistic rollouts feed the output policy's own buffer.

use crate::datasets::ReplayBuffer;
use crate::dynamics::{EnsembleDynamics, StepMode, UncertaintyHeuristic};
use crate::envs::Transition;
use crate::numkit::{Matrix, Rng};
use crate::policies::{ActMode, Policy};
use crate::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeMode {
    Pessimistic,
    Optimistic,
}

/// The (λ^p, λ^o) pair turning model rewards into P-MDP/O-MDP rewards.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RewardShaper {
    pub lambda_p: f64,
    pub lambda_o: f64,
    pub heuristic: UncertaintyHeuristic,
}

impl RewardShaper {
    pub fn new(lambda_p: f64, lambda_o: f64, heuristic: UncertaintyHeuristic) -> Result<Self> {
        if lambda_p < 0.0 || !lambda_p.is_finite() || !lambda_o.is_finite() {
            return Err(CoreError::Validation(format!(
                "invalid shaping coefficients λ^p={lambda_p}, λ^o={lambda_o}"
            )));
        }
        Ok(RewardShaper { lambda_p, lambda_o, heuristic })
    }

    pub fn pessimistic(&self, r: f64, u: f64) -> f64 {
        r - self.lambda_p * u
    }

    pub fn optimistic(&self, r: f64, u: f64) -> f64 {
        r + self.lambda_o * u
    }

    pub fn shape(&self, r: f64, u: f64, mode: ShapeMode) -> f64 {
        match mode {
            ShapeMode::Pessimistic => self.pessimistic(r, u),
            ShapeMode::Optimistic => self.optimistic(r, u),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RolloutConfig {
    /// Steps per rollout.
    pub horizon: usize,
    /// Number of rollouts launched per call.
    pub batch: usize,
    pub step_mode: StepMode,
    /// Rollouts end once any normalized state coordinate leaves ±this.
    pub sanity_box: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig { horizon: 5, batch: 400, step_mode: StepMode::MemberUniform, sanity_box: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RolloutOutcome {
    pub appended_primary: usize,
    pub appended_relabeled: usize,
    pub truncated_rollouts: usize,
}

/// Known-reward override: (s, a, s') → r replaces the model's reward head.
pub type RewardFn<'a> = &'a dyn Fn(&[f64], &[f64], &[f64]) -> f64;

/// Run `cfg.batch` model rollouts of `cfg.horizon` steps from start states
/// drawn uniformly from the offline dataset. Every record stores the raw
/// reward and the uncertainty used to shape it; `primary` receives rewards
/// shaped by `mode`, and `relabeled` (when present) the pessimistic version
/// of the same tuples.
#[allow(clippy::too_many_arguments)]
pub fn generate_rollouts(
    policy: &dyn Policy,
    dynamics: &EnsembleDynamics,
    shaper: &RewardShaper,
    cfg: &RolloutConfig,
    mode: ShapeMode,
    env_buffer: &ReplayBuffer,
    primary: &mut ReplayBuffer,
    mut relabeled: Option<&mut ReplayBuffer>,
    known_reward: Option<RewardFn<'_>>,
    rng: &mut Rng,
) -> Result<RolloutOutcome> {
    if env_buffer.is_empty() {
        return Err(CoreError::Validation("offline dataset is empty".into()));
    }
    if cfg.horizon == 0 || cfg.batch == 0 {
        return Err(CoreError::Validation("rollout horizon and batch must be positive".into()));
    }
    let sd = dynamics.state_dim();
    let ad = dynamics.action_dim();
    let mut outcome = RolloutOutcome::default();

    let mut states: Vec<Vec<f64>> = (0..cfg.batch)
        .map(|_| env_buffer.sample(rng).state.clone())
        .collect();

    for _step in 0..cfg.horizon {
        if states.is_empty() {
            break;
        }
        let n = states.len();
        let mut smat = Matrix::zeros(n, sd);
        let mut amat = Matrix::zeros(n, ad);
        for (i, s) in states.iter().enumerate() {
            smat.row_mut(i).copy_from_slice(s);
            let a = policy.act(s, ActMode::Stochastic, rng);
            amat.row_mut(i).copy_from_slice(&a);
        }
        let rows = dynamics.predict_rows(&smat, &amat);

        let mut survivors = Vec::with_capacity(n);
        for i in 0..n {
            let u = dynamics.uncertainty_at(&rows, i, shaper.heuristic);
            let target = dynamics.sample_target(&rows, i, cfg.step_mode, rng);
            let (delta, r_model) = dynamics.decode_target(target);
            let state = &states[i];
            let action = amat.row(i);
            let next: Vec<f64> = state.iter().zip(delta.iter()).map(|(s, d)| s + d).collect();
            let r_raw = match known_reward {
                Some(f) => f(state, action, &next),
                None => r_model,
            };
            let mut rec = Transition::new(state.clone(), action.to_vec(), shaper.shape(r_raw, u, mode), next.clone(), false);
            rec.reward_raw = Some(r_raw);
            rec.uncertainty = Some(u);
            if let Some(rel) = relabeled.as_deref_mut() {
                let mut pess = rec.clone();
                pess.reward = shaper.pessimistic(r_raw, u);
                rel.push(pess);
                outcome.appended_relabeled += 1;
            }
            primary.push(rec);
            outcome.appended_primary += 1;

            let normed = dynamics.normalized_state(&next);
            if normed.iter().all(|v| v.abs() <= cfg.sanity_box) {
                survivors.push(next);
            } else {
                outcome.truncated_rollouts += 1;
            }
        }
        states = survivors;
    }
    Ok(outcome)
}
