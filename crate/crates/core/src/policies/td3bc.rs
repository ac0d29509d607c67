//! TD3 with an adaptive behavior-cloning term: clipped double-Q targets,
//! target-policy smoothing, delayed actor updates, and an actor objective
//! −λ·Q1(s,π(s)) + ‖π(s)−a‖² with λ = α_bc / mean|Q1| over the batch.

use super::sac::{concat_cols, critic_step, polyak};
use super::{ActMode, ActionSpace, Policy};
use crate::bytesio::{
    expect_magic, read_f64_vec, read_u32, read_u64, read_u8, write_f64_slice, write_u32,
    write_u64, write_u8,
};
use crate::datasets::TransitionBatch;
use crate::dynamics::{read_net, write_net, Normalizer};
use crate::numkit::{AdamConfig, AdamState, Gradients, Matrix, MlpNetwork, Rng};
use crate::{CoreError, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

const CKPT_MAGIC: &[u8; 4] = b"OCKP";
const CKPT_VERSION: u32 = 1;
const CKPT_KIND_TD3BC: u8 = 2;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Td3BcConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr: f64,
    pub hidden: Vec<usize>,
    /// Std of target-policy smoothing noise, in halfwidth units.
    pub policy_noise: f64,
    pub noise_clip: f64,
    pub policy_delay: usize,
    pub alpha_bc: f64,
    /// Exploration noise for stochastic rollouts, in halfwidth units.
    pub expl_noise: f64,
}

impl Default for Td3BcConfig {
    fn default() -> Self {
        Td3BcConfig {
            gamma: 0.99,
            tau: 5e-3,
            lr: 3e-4,
            hidden: vec![32, 32],
            policy_noise: 0.2,
            noise_clip: 0.5,
            policy_delay: 2,
            alpha_bc: 2.5,
            expl_noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Td3BcLosses {
    pub critic1: f64,
    pub critic2: f64,
    /// Actor loss at the last delayed update (0 until the first one).
    pub actor: f64,
    pub bc_term: f64,
    pub lambda_bc: f64,
}

#[derive(Debug, Clone)]
pub struct Td3BcPolicy {
    actor: MlpNetwork,
    tactor: MlpNetwork,
    q1: MlpNetwork,
    q2: MlpNetwork,
    tq1: MlpNetwork,
    tq2: MlpNetwork,
    actor_adam: AdamState,
    q1_adam: AdamState,
    q2_adam: AdamState,
    updates: u64,
    last_actor: Td3BcLosses,
    state_norm: Normalizer,
    pub cfg: Td3BcConfig,
    pub space: ActionSpace,
    state_dim: usize,
    action_dim: usize,
}

impl Td3BcPolicy {
    /// `state_norm` should carry offline-dataset statistics; pass unit stats
    /// to disable normalization.
    pub fn new(
        state_dim: usize,
        space: ActionSpace,
        cfg: Td3BcConfig,
        state_norm: Normalizer,
        rng: &mut Rng,
    ) -> Self {
        let action_dim = space.dim();
        let mut actor_sizes = vec![state_dim];
        actor_sizes.extend_from_slice(&cfg.hidden);
        actor_sizes.push(action_dim);
        let mut critic_sizes = vec![state_dim + action_dim];
        critic_sizes.extend_from_slice(&cfg.hidden);
        critic_sizes.push(1);
        let mut actor = MlpNetwork::new(&actor_sizes, &mut rng.derive(1));
        actor.scale_final_layer(1e-2);
        let q1 = MlpNetwork::new(&critic_sizes, &mut rng.derive(2));
        let q2 = MlpNetwork::new(&critic_sizes, &mut rng.derive(3));
        let adam = AdamConfig::with_lr(cfg.lr);
        Td3BcPolicy {
            tactor: actor.clone(),
            tq1: q1.clone(),
            tq2: q2.clone(),
            actor_adam: AdamState::new(&actor, adam),
            q1_adam: AdamState::new(&q1, adam),
            q2_adam: AdamState::new(&q2, adam),
            actor,
            q1,
            q2,
            updates: 0,
            last_actor: Td3BcLosses::default(),
            state_norm,
            cfg,
            space,
            state_dim,
            action_dim,
        }
    }

    pub fn unit_normalizer(state_dim: usize) -> Normalizer {
        Normalizer { mean: vec![0.0; state_dim], std: vec![1.0; state_dim] }
    }

    pub fn actor(&self) -> &MlpNetwork {
        &self.actor
    }

    pub fn critics(&self) -> (&MlpNetwork, &MlpNetwork) {
        (&self.q1, &self.q2)
    }

    pub fn update_count(&self) -> u64 {
        self.updates
    }

    fn normalize_states(&self, states: &Matrix) -> Matrix {
        self.state_norm.normalize(states)
    }

    fn squash(&self, raw: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(raw.rows(), self.action_dim);
        for i in 0..raw.rows() {
            for d in 0..self.action_dim {
                out[(i, d)] =
                    self.space.center(d) + self.space.halfwidth(d) * raw[(i, d)].tanh();
            }
        }
        out
    }

    /// One critic step; every `policy_delay`-th call also updates the actor
    /// (with the adaptive BC weight recomputed on the batch) and the targets.
    pub fn update(&mut self, batch: &TransitionBatch, rng: &mut Rng) -> Result<Td3BcLosses> {
        if batch.is_empty() {
            return Err(CoreError::Validation("empty TD3+BC batch".into()));
        }
        let b = batch.len();
        let states = self.normalize_states(&batch.states);
        let next_states = self.normalize_states(&batch.next_states);

        // smoothed target actions
        let t_raw = self.tactor.forward(&next_states);
        let mut next_actions = self.squash(&t_raw);
        for i in 0..b {
            for d in 0..self.action_dim {
                let hw = self.space.halfwidth(d);
                let noise = (self.cfg.policy_noise * hw * rng.normal())
                    .clamp(-self.cfg.noise_clip * hw, self.cfg.noise_clip * hw);
                next_actions[(i, d)] =
                    (next_actions[(i, d)] + noise).clamp(self.space.low[d], self.space.high[d]);
            }
        }
        let xq_next = concat_cols(&next_states, &next_actions);
        let t1 = self.tq1.forward(&xq_next);
        let t2 = self.tq2.forward(&xq_next);
        let targets: Vec<f64> = (0..b)
            .map(|i| {
                batch.rewards[i]
                    + self.cfg.gamma * batch.not_terminal[i] * t1[(i, 0)].min(t2[(i, 0)])
            })
            .collect();

        let xq = concat_cols(&states, &batch.actions);
        let closs1 = critic_step(&mut self.q1, &mut self.q1_adam, &xq, &targets)?;
        let closs2 = critic_step(&mut self.q2, &mut self.q2_adam, &xq, &targets)?;

        self.updates += 1;
        if self.updates % self.cfg.policy_delay as u64 == 0 {
            // adaptive BC scale from the current batch
            let pi = self.squash(&self.actor.forward(&states));
            let q = self.q1.forward(&concat_cols(&states, &pi));
            let mean_abs_q: f64 = (0..b).map(|i| q[(i, 0)].abs()).sum::<f64>() / b as f64;
            let lambda = self.cfg.alpha_bc / (mean_abs_q + 1e-8);

            let (actor_loss, bc_term, grads) = td3bc_actor_loss_and_grads(
                &self.actor,
                &self.q1,
                &states,
                &batch.actions,
                lambda,
                &self.space,
            );
            if !actor_loss.is_finite() || !grads.all_finite() {
                return Err(CoreError::Numerical(format!("TD3+BC actor loss diverged: {actor_loss}")));
            }
            self.actor_adam.step(&mut self.actor, &grads);
            polyak(&mut self.tactor, &self.actor, self.cfg.tau);
            polyak(&mut self.tq1, &self.q1, self.cfg.tau);
            polyak(&mut self.tq2, &self.q2, self.cfg.tau);
            self.last_actor = Td3BcLosses {
                critic1: closs1,
                critic2: closs2,
                actor: actor_loss,
                bc_term,
                lambda_bc: lambda,
            };
        }

        Ok(Td3BcLosses { critic1: closs1, critic2: closs2, ..self.last_actor })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CKPT_MAGIC)?;
        write_u32(&mut w, CKPT_VERSION)?;
        write_u8(&mut w, CKPT_KIND_TD3BC)?;
        write_u64(&mut w, self.state_dim as u64)?;
        write_u64(&mut w, self.action_dim as u64)?;
        write_u64(&mut w, self.cfg.hidden.len() as u64)?;
        for &h in &self.cfg.hidden {
            write_u64(&mut w, h as u64)?;
        }
        write_f64_slice(&mut w, &self.space.low)?;
        write_f64_slice(&mut w, &self.space.high)?;
        write_f64_slice(&mut w, &self.state_norm.mean)?;
        write_f64_slice(&mut w, &self.state_norm.std)?;
        for net in [&self.actor, &self.tactor, &self.q1, &self.q2, &self.tq1, &self.tq2] {
            write_net(&mut w, net)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Td3BcPolicy> {
        let mut r = BufReader::new(File::open(path)?);
        expect_magic(&mut r, CKPT_MAGIC, "td3bc checkpoint")?;
        if read_u32(&mut r)? != CKPT_VERSION {
            return Err(CoreError::Schema("td3bc checkpoint version".into()));
        }
        if read_u8(&mut r)? != CKPT_KIND_TD3BC {
            return Err(CoreError::Schema("not a td3bc checkpoint".into()));
        }
        let state_dim = read_u64(&mut r)? as usize;
        let action_dim = read_u64(&mut r)? as usize;
        let n_hidden = read_u64(&mut r)? as usize;
        let mut hidden = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            hidden.push(read_u64(&mut r)? as usize);
        }
        let low = read_f64_vec(&mut r)?;
        let high = read_f64_vec(&mut r)?;
        let state_norm = Normalizer { mean: read_f64_vec(&mut r)?, std: read_f64_vec(&mut r)? };
        let mut actor_sizes = vec![state_dim];
        actor_sizes.extend_from_slice(&hidden);
        actor_sizes.push(action_dim);
        let mut critic_sizes = vec![state_dim + action_dim];
        critic_sizes.extend_from_slice(&hidden);
        critic_sizes.push(1);
        let actor = read_net(&mut r, &actor_sizes)?;
        let tactor = read_net(&mut r, &actor_sizes)?;
        let q1 = read_net(&mut r, &critic_sizes)?;
        let q2 = read_net(&mut r, &critic_sizes)?;
        let tq1 = read_net(&mut r, &critic_sizes)?;
        let tq2 = read_net(&mut r, &critic_sizes)?;
        let cfg = Td3BcConfig { hidden, ..Default::default() };
        let adam = AdamConfig::with_lr(cfg.lr);
        Ok(Td3BcPolicy {
            actor_adam: AdamState::new(&actor, adam),
            q1_adam: AdamState::new(&q1, adam),
            q2_adam: AdamState::new(&q2, adam),
            actor,
            tactor,
            q1,
            q2,
            tq1,
            tq2,
            updates: 0,
            last_actor: Td3BcLosses::default(),
            state_norm,
            cfg,
            space: ActionSpace { low, high },
            state_dim,
            action_dim,
        })
    }
}

impl Policy for Td3BcPolicy {
    fn act(&self, state: &[f64], mode: ActMode, rng: &mut Rng) -> Vec<f64> {
        let states = Matrix::from_rows(&[state.to_vec()]);
        let norm = self.normalize_states(&states);
        let raw = self.actor.forward(&norm);
        let mut action: Vec<f64> = (0..self.action_dim)
            .map(|d| self.space.center(d) + self.space.halfwidth(d) * raw[(0, d)].tanh())
            .collect();
        if mode == ActMode::Stochastic {
            for (d, a) in action.iter_mut().enumerate() {
                *a += self.cfg.expl_noise * self.space.halfwidth(d) * rng.normal();
            }
            self.space.clamp(&mut action);
        }
        action
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }
}

/// Actor objective −λ·mean Q1(s,π(s)) + mean ‖π(s)−a‖²; λ is treated as a
/// constant of the batch. Returns (loss, bc term, actor gradients).
pub fn td3bc_actor_loss_and_grads(
    actor: &MlpNetwork,
    q1: &MlpNetwork,
    states: &Matrix,
    batch_actions: &Matrix,
    lambda: f64,
    space: &ActionSpace,
) -> (f64, f64, Gradients) {
    let b = states.rows();
    let bf = b as f64;
    let ad = space.dim();
    let cache = actor.forward_cached(states);
    let raw = cache.output();
    let mut pi = Matrix::zeros(b, ad);
    for i in 0..b {
        for d in 0..ad {
            pi[(i, d)] = space.center(d) + space.halfwidth(d) * raw[(i, d)].tanh();
        }
    }
    let xq = concat_cols(states, &pi);
    let qcache = q1.forward_cached(&xq);
    let qv = qcache.output();

    let mut q_term = 0.0;
    let mut bc_term = 0.0;
    let mut dl_dq = Matrix::zeros(b, 1);
    for i in 0..b {
        q_term += qv[(i, 0)];
        dl_dq[(i, 0)] = -lambda / bf;
        for d in 0..ad {
            let e = pi[(i, d)] - batch_actions[(i, d)];
            bc_term += e * e;
        }
    }
    q_term /= bf;
    bc_term /= bf;
    let loss = -lambda * q_term + bc_term;

    let (_, din) = q1.backward(&xq, &qcache, &dl_dq);
    let sd = states.cols();
    let mut dl_draw = Matrix::zeros(b, ad);
    for i in 0..b {
        for d in 0..ad {
            let t = raw[(i, d)].tanh();
            let dpi = space.halfwidth(d) * (1.0 - t * t);
            let dl_dpi = din[(i, sd + d)] + 2.0 * (pi[(i, d)] - batch_actions[(i, d)]) / bf;
            dl_draw[(i, d)] = dl_dpi * dpi;
        }
    }
    let (grads, _) = actor.backward(states, &cache, &dl_draw);
    (loss, bc_term, grads)
}

/// Loss value only, for finite-difference checks.
pub fn td3bc_actor_loss_value(
    actor: &MlpNetwork,
    q1: &MlpNetwork,
    states: &Matrix,
    batch_actions: &Matrix,
    lambda: f64,
    space: &ActionSpace,
) -> f64 {
    let b = states.rows();
    let ad = space.dim();
    let raw = actor.forward(states);
    let mut pi = Matrix::zeros(b, ad);
    for i in 0..b {
        for d in 0..ad {
            pi[(i, d)] = space.center(d) + space.halfwidth(d) * raw[(i, d)].tanh();
        }
    }
    let q = q1.forward(&concat_cols(states, &pi));
    let mut q_term = 0.0;
    let mut bc = 0.0;
    for i in 0..b {
        q_term += q[(i, 0)];
        for d in 0..ad {
            let e = pi[(i, d)] - batch_actions[(i, d)];
            bc += e * e;
        }
    }
    -lambda * q_term / b as f64 + bc / b as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::BufferTag;
    use crate::envs::Transition;

    fn small_td3(rng: &mut Rng, alpha_bc: f64) -> Td3BcPolicy {
        let cfg = Td3BcConfig { alpha_bc, lr: 1e-3, hidden: vec![16, 16], ..Default::default() };
        Td3BcPolicy::new(2, ActionSpace::symmetric_unit(2), cfg, Td3BcPolicy::unit_normalizer(2), rng)
    }

    fn single_action_batch(n: usize, rng: &mut Rng) -> (Vec<Transition>, TransitionBatch) {
        let trans: Vec<Transition> = (0..n)
            .map(|_| {
                let s = vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
                Transition::new(s.clone(), vec![0.35, -0.6], 0.3, s, false)
            })
            .collect();
        let tagged: Vec<_> = trans.iter().map(|t| (t, BufferTag::Env)).collect();
        let batch = TransitionBatch::from_refs(&tagged);
        (trans, batch)
    }

    #[test]
    fn zero_bc_weight_gives_pure_cloning() {
        // α_bc = 0 makes λ = 0, so the actor objective reduces to the BC
        // term; on a single-action dataset the actor converges to it.
        let mut rng = Rng::new(1);
        let mut td3 = small_td3(&mut rng, 0.0);
        let (_trans, batch) = single_action_batch(64, &mut rng);
        for _ in 0..3000 {
            td3.update(&batch, &mut rng).unwrap();
        }
        let mut worst: f64 = 0.0;
        for i in 0..batch.len() {
            let a = td3.act(batch.states.row(i), ActMode::Deterministic, &mut rng);
            let dist = ((a[0] - 0.35).powi(2) + (a[1] + 0.6).powi(2)).sqrt();
            worst = worst.max(dist);
        }
        assert!(worst < 0.05, "worst BC distance {worst}");
    }

    #[test]
    fn actor_updates_only_on_delayed_steps() {
        let mut rng = Rng::new(2);
        let mut td3 = small_td3(&mut rng, 2.5);
        assert_eq!(td3.cfg.policy_delay, 2);
        let (_t, batch) = single_action_batch(16, &mut rng);
        let before = td3.actor.layers()[0].w.clone();
        td3.update(&batch, &mut rng).unwrap(); // update 1: critic only
        assert_eq!(td3.actor.layers()[0].w, before);
        td3.update(&batch, &mut rng).unwrap(); // update 2: actor moves
        assert_ne!(td3.actor.layers()[0].w, before);
    }

    #[test]
    fn actions_stay_in_bounds() {
        let mut rng = Rng::new(3);
        let td3 = small_td3(&mut rng, 2.5);
        for _ in 0..50 {
            let s = vec![rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)];
            let a = td3.act(&s, ActMode::Stochastic, &mut rng);
            assert!(a.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn actor_gradients_match_finite_differences() {
        let mut rng = Rng::new(4);
        let td3 = small_td3(&mut rng, 2.5);
        let (_t, batch) = single_action_batch(8, &mut rng);
        let states = td3.normalize_states(&batch.states);
        let lambda = 1.3;
        let (_, _, grads) = td3bc_actor_loss_and_grads(
            &td3.actor,
            &td3.q1,
            &states,
            &batch.actions,
            lambda,
            &td3.space,
        );
        let err = crate::numkit::grad_check(
            &td3.actor,
            &grads,
            |net| td3bc_actor_loss_value(net, &td3.q1, &states, &batch.actions, lambda, &td3.space),
            1e-5,
            250,
            &mut rng,
        );
        assert!(err < 1e-4, "td3bc actor grad error {err}");
    }

    #[test]
    fn lambda_reported_per_actor_update() {
        let mut rng = Rng::new(5);
        let mut td3 = small_td3(&mut rng, 2.5);
        let (_t, batch) = single_action_batch(16, &mut rng);
        td3.update(&batch, &mut rng).unwrap();
        let l = td3.update(&batch, &mut rng).unwrap();
        assert!(l.lambda_bc > 0.0);
    }
}
