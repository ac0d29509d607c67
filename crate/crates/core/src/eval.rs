//! Policy evaluation in real environments, score normalization against
//! reference returns, the rollout action-distance diagnostic, discounted
//! average model uncertainty, and a Monte Carlo model-error estimator.

use crate::datasets::ReplayBuffer;
use crate::dynamics::{EnsembleDynamics, StepMode, UncertaintyHeuristic};
use crate::envs::Environment;
use crate::numkit::{Matrix, Rng};
use crate::policies::{ActMode, Policy};
use crate::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Discounting {
    UndiscountedSum,
    Gamma(f64),
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub mean_return: f64,
    pub std_return: f64,
    pub episodes: usize,
    /// Discount used, 1.0 for plain sums.
    pub gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub normalized_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps_u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub action_distance: Option<f64>,
}

/// Roll the policy (deterministic mode) for full episodes and report return
/// statistics.
pub fn evaluate_policy(
    policy: &dyn Policy,
    env: &mut dyn Environment,
    episodes: usize,
    discounting: Discounting,
    rng: &mut Rng,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(CoreError::Validation("need at least one evaluation episode".into()));
    }
    let gamma = match discounting {
        Discounting::UndiscountedSum => 1.0,
        Discounting::Gamma(g) => g,
    };
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = env.reset(rng);
        let mut ret = 0.0;
        let mut discount = 1.0;
        loop {
            let a = policy.act(&s, ActMode::Deterministic, rng);
            let (next, r, done) = env.step(&a);
            ret += discount * r;
            discount *= gamma;
            s = next;
            if done {
                break;
            }
        }
        returns.push(ret);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(EvalReport {
        mean_return: mean,
        std_return: var.sqrt(),
        episodes,
        gamma,
        normalized_score: None,
        eps_u: None,
        action_distance: None,
    })
}

/// Reference (random, expert) returns per environment name.
pub const SCORE_REFERENCES: &[(&str, f64, f64)] = &[
    ("halfcheetah", -280.18, 12135.0),
    ("hopper", -20.27, 3234.3),
    ("walker2d", 1.63, 4592.3),
];

/// 100·(C − C_r)/(C_e − C_r) against the reference table.
pub fn normalized_score(raw_return: f64, env_name: &str) -> Result<f64> {
    for &(name, c_r, c_e) in SCORE_REFERENCES {
        if name == env_name {
            return Ok(100.0 * (raw_return - c_r) / (c_e - c_r));
        }
    }
    Err(CoreError::Validation(format!("no score reference for environment '{env_name}'")))
}

/// Mean ℓ2 distance between the policy's action at dataset states and the
/// dataset actions.
pub fn action_distance(
    policy: &dyn Policy,
    dataset: &ReplayBuffer,
    mode: ActMode,
    rng: &mut Rng,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(CoreError::Validation("action distance needs a nonempty dataset".into()));
    }
    let mut total = 0.0;
    for t in dataset.iter() {
        let a = policy.act(&t.state, mode, rng);
        let d2: f64 = a.iter().zip(t.action.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
        total += d2.sqrt();
    }
    Ok(total / dataset.len() as f64)
}

/// γ-weighted average of a per-step signal over model rollouts:
/// Σ γ^t·u_t / Σ γ^t, truncated at `horizon`. The step function returns the
/// next state and the step's signal value.
pub fn discounted_signal_average(
    policy: &dyn Policy,
    starts: &[Vec<f64>],
    step: &mut dyn FnMut(&[f64], &[f64], &mut Rng) -> (Vec<f64>, f64),
    gamma: f64,
    horizon: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if starts.is_empty() || horizon == 0 {
        return Err(CoreError::Validation("signal average needs starts and a positive horizon".into()));
    }
    let mut weighted = 0.0;
    let mut weight_total = 0.0;
    for start in starts {
        let mut s = start.clone();
        let mut w = 1.0;
        for _ in 0..horizon {
            let a = policy.act(&s, ActMode::Stochastic, rng);
            let (next, u) = step(&s, &a, rng);
            weighted += w * u;
            weight_total += w;
            w *= gamma;
            s = next;
        }
    }
    Ok(weighted / weight_total)
}

/// Monte Carlo estimate of the discounted average model uncertainty ε_u
/// under the policy's own model rollouts, with start states from the
/// offline dataset.
#[allow(clippy::too_many_arguments)]
pub fn avg_model_uncertainty(
    policy: &dyn Policy,
    dynamics: &EnsembleDynamics,
    heuristic: UncertaintyHeuristic,
    step_mode: StepMode,
    env_buffer: &ReplayBuffer,
    gamma: f64,
    horizon: usize,
    n_rollouts: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if env_buffer.is_empty() {
        return Err(CoreError::Validation("offline dataset is empty".into()));
    }
    let starts: Vec<Vec<f64>> =
        (0..n_rollouts).map(|_| env_buffer.sample(rng).state.clone()).collect();
    let mut step = |s: &[f64], a: &[f64], rng: &mut Rng| -> (Vec<f64>, f64) {
        let smat = Matrix::from_rows(&[s.to_vec()]);
        let amat = Matrix::from_rows(&[a.to_vec()]);
        let rows = dynamics.predict_rows(&smat, &amat);
        let u = dynamics.uncertainty_at(&rows, 0, heuristic);
        let target = dynamics.sample_target(&rows, 0, step_mode, rng);
        let (delta, _r) = dynamics.decode_target(target);
        let next: Vec<f64> = s.iter().zip(delta.iter()).map(|(x, d)| x + d).collect();
        (next, u)
    };
    discounted_signal_average(policy, &starts, &mut step, gamma, horizon, rng)
}

/// Anything that can sample s' from (s, a): true environments, learned
/// models, or test stubs.
pub trait TransitionSampler {
    fn sample_next(&self, state: &[f64], action: &[f64], rng: &mut Rng) -> Vec<f64>;
}

impl TransitionSampler for EnsembleDynamics {
    fn sample_next(&self, state: &[f64], action: &[f64], rng: &mut Rng) -> Vec<f64> {
        let smat = Matrix::from_rows(&[state.to_vec()]);
        let amat = Matrix::from_rows(&[action.to_vec()]);
        let rows = self.predict_rows(&smat, &amat);
        let target = self.sample_target(&rows, 0, StepMode::MemberUniform, rng);
        let (delta, _) = self.decode_target(target);
        state.iter().zip(delta.iter()).map(|(s, d)| s + d).collect()
    }
}

/// Wrap a closure as a sampler.
pub struct FnSampler<F: Fn(&[f64], &[f64], &mut Rng) -> Vec<f64>>(pub F);

impl<F: Fn(&[f64], &[f64], &mut Rng) -> Vec<f64>> TransitionSampler for FnSampler<F> {
    fn sample_next(&self, state: &[f64], action: &[f64], rng: &mut Rng) -> Vec<f64> {
        (self.0)(state, action, rng)
    }
}

/// Per-pair model-error estimate: E_{s'~model}[V(s')] − E_{s'~truth}[V(s')]
/// by Monte Carlo, with the combined standard error per pair.
pub fn model_error_estimate(
    model: &dyn TransitionSampler,
    truth: &dyn TransitionSampler,
    value_fn: &dyn Fn(&[f64]) -> f64,
    pairs: &[(Vec<f64>, Vec<f64>)],
    samples: usize,
    rng: &mut Rng,
) -> Result<Vec<(f64, f64)>> {
    if samples < 2 {
        return Err(CoreError::Validation("model error estimate needs at least 2 samples".into()));
    }
    let mut out = Vec::with_capacity(pairs.len());
    for (s, a) in pairs {
        let stats = |sampler: &dyn TransitionSampler, rng: &mut Rng| -> (f64, f64) {
            let mut total = 0.0;
            let mut total_sq = 0.0;
            for _ in 0..samples {
                let v = value_fn(&sampler.sample_next(s, a, rng));
                total += v;
                total_sq += v * v;
            }
            let n = samples as f64;
            let mean = total / n;
            let var = (total_sq / n - mean * mean).max(0.0);
            (mean, (var / n).sqrt())
        };
        let (m_model, se_model) = stats(model, rng);
        let (m_true, se_true) = stats(truth, rng);
        out.push((m_model - m_true, (se_model * se_model + se_true * se_true).sqrt()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::BufferTag;
    use crate::envs::{RiskWorld, Transition};
    use crate::policies::{ActionSpace, RandomPolicy};

    struct ScriptedPolicy(Vec<f64>);

    impl Policy for ScriptedPolicy {
        fn act(&self, _s: &[f64], _m: ActMode, _r: &mut Rng) -> Vec<f64> {
            self.0.clone()
        }
        fn action_dim(&self) -> usize {
            self.0.len()
        }
    }

    #[test]
    fn normalized_score_endpoints() {
        assert_eq!(normalized_score(12135.0, "halfcheetah").unwrap(), 100.0);
        assert_eq!(normalized_score(-280.18, "halfcheetah").unwrap(), 0.0);
        let mid = 0.5 * (12135.0 - 280.18);
        assert!((normalized_score(mid, "halfcheetah").unwrap() - 50.0).abs() < 1e-9);
        assert!(normalized_score(1.0, "ant").is_err());
    }

    #[test]
    fn zero_policy_return_stays_in_band_slack() {
        let mut rng = Rng::new(1);
        let mut env = RiskWorld::new();
        let policy = ScriptedPolicy(vec![0.0, 0.0]);
        let report =
            evaluate_policy(&policy, &mut env, 500, Discounting::UndiscountedSum, &mut rng).unwrap();
        // staying put earns 10·(x0+y0)/√2 per episode, bounded by the band
        assert!(report.mean_return.abs() <= 10.0 * 0.25 / std::f64::consts::SQRT_2 + 0.3);
        assert!(report.mean_return.abs() < 0.3);
    }

    #[test]
    fn greedy_upper_right_hits_reported_range() {
        let mut rng = Rng::new(2);
        let mut env = RiskWorld::new();
        let policy = ScriptedPolicy(vec![1.0, 1.0]);
        let report =
            evaluate_policy(&policy, &mut env, 500, Discounting::UndiscountedSum, &mut rng).unwrap();
        assert!(
            (35.0..=42.5).contains(&report.mean_return),
            "greedy return {}",
            report.mean_return
        );
    }

    #[test]
    fn single_episode_has_zero_std() {
        let mut rng = Rng::new(3);
        let mut env = RiskWorld::new();
        let policy = ScriptedPolicy(vec![0.5, -0.5]);
        let report =
            evaluate_policy(&policy, &mut env, 1, Discounting::Gamma(0.9), &mut rng).unwrap();
        assert_eq!(report.std_return, 0.0);
        assert_eq!(report.episodes, 1);
    }

    #[test]
    fn evaluation_is_reproducible() {
        let policy = ScriptedPolicy(vec![0.3, 0.1]);
        let run = || {
            let mut rng = Rng::new(11);
            let mut env = RiskWorld::new();
            evaluate_policy(&policy, &mut env, 50, Discounting::UndiscountedSum, &mut rng)
                .unwrap()
                .mean_return
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    fn zero_action_dataset(n: usize, rng: &mut Rng) -> ReplayBuffer {
        let mut buf = ReplayBuffer::new(BufferTag::Env, None);
        for _ in 0..n {
            let s = vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
            buf.push(Transition::new(s.clone(), vec![0.0, 0.0], 0.0, s, false));
        }
        buf
    }

    #[test]
    fn lookup_policy_has_zero_distance() {
        let mut rng = Rng::new(4);
        let buf = zero_action_dataset(100, &mut rng);
        let policy = ScriptedPolicy(vec![0.0, 0.0]);
        let d = action_distance(&policy, &buf, ActMode::Deterministic, &mut rng).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn uniform_policy_distance_matches_expectation() {
        // E‖U‖₂ over U ~ Uniform([−1,1]²) = (√2 + asinh(1))/3 ≈ 0.7652
        let mut rng = Rng::new(5);
        let buf = zero_action_dataset(20_000, &mut rng);
        let policy = RandomPolicy::new(ActionSpace::symmetric_unit(2));
        let d = action_distance(&policy, &buf, ActMode::Stochastic, &mut rng).unwrap();
        assert!((d - 0.7652).abs() < 0.02, "mean uniform norm {d}");
    }

    #[test]
    fn zero_uncertainty_stub_gives_zero_eps_u() {
        let mut rng = Rng::new(6);
        let starts = vec![vec![0.0, 0.0]; 10];
        let policy = ScriptedPolicy(vec![0.1, 0.1]);
        let mut step = |s: &[f64], a: &[f64], _r: &mut Rng| -> (Vec<f64>, f64) {
            (s.iter().zip(a.iter()).map(|(x, y)| x + y).collect(), 0.0)
        };
        let eps =
            discounted_signal_average(&policy, &starts, &mut step, 0.99, 5, &mut rng).unwrap();
        assert_eq!(eps, 0.0);
    }

    #[test]
    fn eps_u_is_scale_equivariant() {
        let policy = ScriptedPolicy(vec![0.1, 0.1]);
        let starts = vec![vec![0.2, -0.2]; 8];
        let run = |scale: f64| {
            let mut rng = Rng::new(7);
            let mut step = move |s: &[f64], _a: &[f64], _r: &mut Rng| -> (Vec<f64>, f64) {
                (s.to_vec(), scale * (1.0 + s[0]))
            };
            discounted_signal_average(&policy, &starts, &mut step, 0.95, 4, &mut rng).unwrap()
        };
        let base = run(1.0);
        let scaled = run(3.5);
        assert!((scaled - 3.5 * base).abs() < 1e-12);
        assert!(base >= 0.0);
    }

    #[test]
    fn perfect_model_error_within_noise() {
        let mut rng = Rng::new(8);
        // identical stochastic kernels on both sides
        let kernel = |s: &[f64], a: &[f64], rng: &mut Rng| -> Vec<f64> {
            vec![s[0] + a[0] + 0.3 * rng.normal()]
        };
        let model = FnSampler(kernel);
        let truth = FnSampler(kernel);
        let value = |s: &[f64]| 2.0 * s[0] + 1.0;
        let pairs = vec![(vec![0.0], vec![0.5]), (vec![1.0], vec![-0.5])];
        let est = model_error_estimate(&model, &truth, &value, &pairs, 4000, &mut rng).unwrap();
        for (g, se) in est {
            assert!(g.abs() <= 3.0 * se, "gap {g} exceeds 3σ {}", 3.0 * se);
        }
    }

    #[test]
    fn perturbed_tabular_row_recovers_known_gap() {
        let mut rng = Rng::new(9);
        // two next states with values V = {0, 1}; truth picks state 1 with
        // p = 0.5, the model with p = 0.5 + δ → G = δ·(V(1) − V(0)) = δ
        let delta = 0.2;
        let truth = FnSampler(|_s: &[f64], _a: &[f64], rng: &mut Rng| {
            vec![if rng.next_f64() < 0.5 { 1.0 } else { 0.0 }]
        });
        let model = FnSampler(move |_s: &[f64], _a: &[f64], rng: &mut Rng| {
            vec![if rng.next_f64() < 0.5 + delta { 1.0 } else { 0.0 }]
        });
        let value = |s: &[f64]| s[0];
        let pairs = vec![(vec![0.0], vec![0.0])];
        let est = model_error_estimate(&model, &truth, &value, &pairs, 20_000, &mut rng).unwrap();
        let (g, se) = est[0];
        assert!((g - delta).abs() <= 3.0 * se, "gap {g} vs δ {delta} (3σ {})", 3.0 * se);
    }
}
