//! Exact least-squares value iteration on tabular one-hot linear MDPs with a
//! √(φᵀΛ⁻¹φ) confidence bonus, plus the dynamic-programming oracles used to
//! compute noise-free regret.

use crate::envs::{LinearMdpSpec, TabularSim};
use crate::numkit::{Cholesky, Matrix, Rng};
use crate::{CoreError, Result};

/// Posterior variance φᵀΛ⁻¹φ of a ridge estimate; its square root is the
/// bonus unit.
pub fn posterior_variance(lambda: &Matrix, phi: &[f64]) -> Result<f64> {
    if lambda.rows() != phi.len() {
        return Err(CoreError::Validation("posterior_variance dimension mismatch".into()));
    }
    let chol = Cholesky::factor(lambda)?;
    Ok(chol.quad_form(phi))
}

/// Scale of the default bonus coefficient, tuned once on the two-armed
/// bandit instance (the optimal-regret plateau there spans roughly
/// c ∈ [0.07, 12]; 0.6 sits well inside it and lands the needle instance in
/// its convergent range).
pub const LAMBDA_SCALE_C: f64 = 0.6;

/// Default run coefficient: c·√(log(2dT/p)) with T = episodes·H, p = 0.1.
/// Keeps the confidence-log growth of the theoretical coefficient; the
/// d·H prefactor is dropped because at these instance sizes it pins every
/// clipped Q at H and the lowest-index tie-break then never explores.
pub fn default_lambda_bonus(d: usize, horizon: usize, episodes: usize) -> f64 {
    let t = (episodes * horizon) as f64;
    let iota = (2.0 * d as f64 * t / 0.1).ln().max(1.0);
    LAMBDA_SCALE_C * iota.sqrt()
}

/// Full confidence-bound scale c·d·H·√(log(2dHK/ξ)) used when checking that
/// the bonus upper-bounds empirical Bellman-target errors.
pub fn admissibility_lambda(d: usize, horizon: usize, episodes: usize, xi: f64) -> f64 {
    let zeta = (2.0 * d as f64 * horizon as f64 * episodes as f64 / xi).ln().max(1.0);
    0.18 * d as f64 * horizon as f64 * zeta.sqrt()
}

/// Greedy tabular policy: action index per (h, s).
pub type GreedyPolicy = Vec<Vec<usize>>;

/// Per-step ridge statistics of a finished run.
#[derive(Debug, Clone)]
pub struct LsviState {
    /// Λ_h per step, including the β·I prior.
    pub lambda: Vec<Matrix>,
    /// Cached Λ_h⁻¹, maintained by rank-1 updates with periodic refactoring.
    pub lambda_inv: Vec<Matrix>,
    /// Ridge weights w_h.
    pub weights: Vec<Vec<f64>>,
    pub beta: f64,
    pub lambda_bonus: f64,
    pub horizon: usize,
    pub episodes: usize,
}

/// Per-episode suboptimality against the exact oracle and its running sum.
#[derive(Debug, Clone)]
pub struct RegretSeries {
    pub instant: Vec<f64>,
    pub cumulative: Vec<f64>,
}

/// Build a regret series from exact per-episode policy values.
pub fn regret_series(episode_values: &[f64], v_star: f64) -> RegretSeries {
    let mut instant = Vec::with_capacity(episode_values.len());
    let mut cumulative = Vec::with_capacity(episode_values.len());
    let mut total = 0.0;
    for &v in episode_values {
        let r = v_star - v;
        total += r;
        instant.push(r);
        cumulative.push(total);
    }
    RegretSeries { instant, cumulative }
}

/// Exact backward induction on the true spec. Returns the optimal value
/// table V[h][s] for h = 0..=H (V[H] = 0) and a greedy optimal policy with
/// ties broken toward the lower action index.
pub fn optimal_values(mdp: &LinearMdpSpec) -> (Matrix, GreedyPolicy) {
    let (s_n, a_n, h_n) = (mdp.n_states, mdp.n_actions, mdp.horizon);
    let mut v = Matrix::zeros(h_n + 1, s_n);
    let mut policy = vec![vec![0usize; s_n]; h_n];
    for h in (0..h_n).rev() {
        for s in 0..s_n {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..a_n {
                let row = mdp.transition_row(s, a);
                let mut q = mdp.reward(s, a);
                for (s2, &p) in row.iter().enumerate() {
                    q += p * v[(h + 1, s2)];
                }
                if q > best + 1e-15 {
                    best = q;
                    best_a = a;
                }
            }
            v[(h, s)] = best;
            policy[h][s] = best_a;
        }
    }
    (v, policy)
}

/// Exact evaluation of a greedy tabular policy on the true spec.
pub fn evaluate_tabular_policy(mdp: &LinearMdpSpec, policy: &GreedyPolicy) -> Matrix {
    let (s_n, h_n) = (mdp.n_states, mdp.horizon);
    let mut v = Matrix::zeros(h_n + 1, s_n);
    for h in (0..h_n).rev() {
        for s in 0..s_n {
            let a = policy[h][s];
            let row = mdp.transition_row(s, a);
            let mut q = mdp.reward(s, a);
            for (s2, &p) in row.iter().enumerate() {
                q += p * v[(h + 1, s2)];
            }
            v[(h, s)] = q;
        }
    }
    v
}

struct StepData {
    /// (feature index, next state, reward) per past episode.
    samples: Vec<(usize, usize, f64)>,
}

/// Full LSVI run: per episode, recompute per-step ridge statistics from all
/// past data, act greedily with respect to the bonus-augmented Q (clipped to
/// [0, H]), and score the episode's greedy policy against the exact oracle.
///
/// λ_bonus plays the role of λ^o + λ^p: the O-MDP supplies the exploration
/// bonus while the regression target is the penalized reward, and λ_bonus = 0
/// recovers the greedy baseline.
pub fn run_lsvi_orpo(
    mdp: &LinearMdpSpec,
    episodes: usize,
    beta: f64,
    lambda_bonus: f64,
    rng: &mut Rng,
) -> Result<(Vec<GreedyPolicy>, RegretSeries, LsviState)> {
    if episodes == 0 {
        return Err(CoreError::Validation("need at least one episode".into()));
    }
    if !(beta > 0.0) {
        return Err(CoreError::Validation("beta must be positive".into()));
    }
    if lambda_bonus < 0.0 {
        return Err(CoreError::Validation("lambda_bonus must be non-negative".into()));
    }
    mdp.validate()?;
    let d = mdp.feature_dim;
    let h_n = mdp.horizon;
    let cap_h = h_n as f64;

    let mut lambda: Vec<Matrix> = (0..h_n)
        .map(|_| {
            let mut m = Matrix::zeros(d, d);
            for i in 0..d {
                m[(i, i)] = beta;
            }
            m
        })
        .collect();
    let mut lambda_inv: Vec<Matrix> = (0..h_n)
        .map(|_| {
            let mut m = Matrix::zeros(d, d);
            for i in 0..d {
                m[(i, i)] = 1.0 / beta;
            }
            m
        })
        .collect();
    let mut data: Vec<StepData> = (0..h_n).map(|_| StepData { samples: Vec::new() }).collect();
    let mut weights: Vec<Vec<f64>> = vec![vec![0.0; d]; h_n];
    // Q_h(s,a) = clip(w[idx] + λ·√(Λ⁻¹)_{idx,idx}, 0, H); store per (h, idx).
    let mut q_tables: Vec<Vec<f64>> = vec![vec![0.0; d]; h_n];

    let mut sim = TabularSim::new(mdp);
    let mut snapshots: Vec<GreedyPolicy> = Vec::with_capacity(episodes);
    let mut episode_values = Vec::with_capacity(episodes);
    let (v_star, _) = optimal_values(mdp);
    let v_star_start = v_star[(0, mdp.start_state)];

    for episode in 1..=episodes {
        // Fold the previous episode's transitions into the per-step
        // statistics: rank-1 Λ update with a Sherman-Morrison update of the
        // cached inverse, refactored from scratch every 64 episodes.
        if episode > 1 {
            let refactor = episode % 64 == 0;
            for h in 0..h_n {
                let (idx, _, _) = *data[h].samples.last().expect("one sample per past episode");
                lambda[h][(idx, idx)] += 1.0;
                if refactor {
                    lambda_inv[h] = Cholesky::factor(&lambda[h])?.inverse();
                } else {
                    sherman_morrison_onehot(&mut lambda_inv[h], idx);
                }
            }
        }

        // Backward pass h = H..1.
        for h in (0..h_n).rev() {
            // Σ_i φ_i·y_i accumulates per feature index for one-hot φ.
            let mut xty = vec![0.0; d];
            for &(idx, next_s, r) in &data[h].samples {
                let next_value = if h + 1 < h_n {
                    (0..mdp.n_actions)
                        .map(|a| q_tables[h + 1][next_s * mdp.n_actions + a])
                        .fold(f64::NEG_INFINITY, f64::max)
                } else {
                    0.0
                };
                xty[idx] += r + next_value;
            }
            let w = lambda_inv[h].matvec(&xty);
            for idx in 0..d {
                let bonus = lambda_bonus * lambda_inv[h][(idx, idx)].max(0.0).sqrt();
                q_tables[h][idx] = (w[idx] + bonus).clamp(0.0, cap_h);
            }
            weights[h] = w;
        }

        // Snapshot the greedy policy implied by this episode's Q tables.
        let policy: GreedyPolicy = (0..h_n)
            .map(|h| {
                (0..mdp.n_states)
                    .map(|s| {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_a = 0;
                        for a in 0..mdp.n_actions {
                            let q = q_tables[h][s * mdp.n_actions + a];
                            if q > best + 1e-15 {
                                best = q;
                                best_a = a;
                            }
                        }
                        best_a
                    })
                    .collect()
            })
            .collect();

        // Forward pass: act greedily, record transitions.
        let mut s = sim.reset();
        for h in 0..h_n {
            let a = policy[h][s];
            let idx = mdp.feature_index(s, a);
            let (next, r, _) = sim.step(a, rng);
            data[h].samples.push((idx, next, r));
            s = next;
        }

        let v_pi = evaluate_tabular_policy(mdp, &policy);
        episode_values.push(v_pi[(0, mdp.start_state)]);
        snapshots.push(policy);
    }

    let regret = regret_series(&episode_values, v_star_start);
    let state = LsviState {
        lambda,
        lambda_inv,
        weights,
        beta,
        lambda_bonus,
        horizon: h_n,
        episodes,
    };
    Ok((snapshots, regret, state))
}

/// (Λ + e_j e_jᵀ)⁻¹ from Λ⁻¹ via Sherman-Morrison.
fn sherman_morrison_onehot(inv: &mut Matrix, j: usize) {
    let d = inv.rows();
    let col: Vec<f64> = (0..d).map(|i| inv[(i, j)]).collect();
    let denom = 1.0 + inv[(j, j)];
    for i in 0..d {
        let ci = col[i] / denom;
        if ci == 0.0 {
            continue;
        }
        let row = inv.row_mut(i);
        for (k, &ck) in col.iter().enumerate() {
            row[k] -= ci * ck;
        }
    }
}
