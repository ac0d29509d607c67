//! Soft actor-critic with a tanh-squashed Gaussian actor, twin critics with
//! target copies, and auto-tuned entropy temperature. All gradients are
//! assembled by hand on top of the MLP backward pass.

use super::{ActMode, ActionSpace, Policy};
use crate::bytesio::{expect_magic, read_f64, read_u32, read_u64, read_u8, write_f64, write_f64_slice, write_u32, write_u64, write_u8};
use crate::datasets::TransitionBatch;
use crate::dynamics::{read_net, write_net};
use crate::numkit::{
    soft_clamp, soft_clamp_deriv, AdamConfig, AdamState, Gradients, Matrix, MlpNetwork, Rng,
    ScalarAdam, LOG_STD_MAX, LOG_STD_MIN,
};
use crate::{CoreError, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
const SQUASH_EPS: f64 = 1e-6;
const CKPT_MAGIC: &[u8; 4] = b"OCKP";
const CKPT_VERSION: u32 = 1;
const CKPT_KIND_SAC: u8 = 1;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub auto_alpha: bool,
    pub init_alpha: f64,
    /// Defaults to −action_dim when unset.
    pub target_entropy: Option<f64>,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            gamma: 0.99,
            tau: 5e-3,
            lr: 3e-4,
            hidden: vec![32, 32],
            auto_alpha: true,
            init_alpha: 1.0,
            target_entropy: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SacLosses {
    pub critic1: f64,
    pub critic2: f64,
    pub actor: f64,
    pub alpha: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct SacPolicy {
    actor: MlpNetwork,
    q1: MlpNetwork,
    q2: MlpNetwork,
    tq1: MlpNetwork,
    tq2: MlpNetwork,
    actor_adam: AdamState,
    q1_adam: AdamState,
    q2_adam: AdamState,
    log_alpha: f64,
    alpha_adam: ScalarAdam,
    pub cfg: SacConfig,
    pub space: ActionSpace,
    state_dim: usize,
    action_dim: usize,
}

impl SacPolicy {
    pub fn new(state_dim: usize, space: ActionSpace, cfg: SacConfig, rng: &mut Rng) -> Self {
        let action_dim = space.dim();
        let mut actor_sizes = vec![state_dim];
        actor_sizes.extend_from_slice(&cfg.hidden);
        actor_sizes.push(2 * action_dim);
        let mut critic_sizes = vec![state_dim + action_dim];
        critic_sizes.extend_from_slice(&cfg.hidden);
        critic_sizes.push(1);

        let mut actor = MlpNetwork::new(&actor_sizes, &mut rng.derive(1));
        actor.scale_final_layer(1e-2);
        let q1 = MlpNetwork::new(&critic_sizes, &mut rng.derive(2));
        let q2 = MlpNetwork::new(&critic_sizes, &mut rng.derive(3));
        let tq1 = q1.clone();
        let tq2 = q2.clone();
        let adam = AdamConfig::with_lr(cfg.lr);
        SacPolicy {
            actor_adam: AdamState::new(&actor, adam),
            q1_adam: AdamState::new(&q1, adam),
            q2_adam: AdamState::new(&q2, adam),
            alpha_adam: ScalarAdam::new(adam),
            log_alpha: cfg.init_alpha.max(1e-8).ln(),
            actor,
            q1,
            q2,
            tq1,
            tq2,
            cfg,
            space,
            state_dim,
            action_dim,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn actor(&self) -> &MlpNetwork {
        &self.actor
    }

    pub fn critics(&self) -> (&MlpNetwork, &MlpNetwork) {
        (&self.q1, &self.q2)
    }

    pub fn target_critics(&self) -> (&MlpNetwork, &MlpNetwork) {
        (&self.tq1, &self.tq2)
    }

    fn target_entropy(&self) -> f64 {
        self.cfg.target_entropy.unwrap_or(-(self.action_dim as f64))
    }

    /// One SAC step on a mixed batch: both critics, the reparameterized
    /// actor, the temperature, then a Polyak update of the target critics.
    pub fn update(&mut self, batch: &TransitionBatch, rng: &mut Rng) -> Result<SacLosses> {
        if batch.is_empty() {
            return Err(CoreError::Validation("empty SAC batch".into()));
        }
        let b = batch.len();
        let alpha = self.alpha();

        // Bootstrapped targets from the target critics and a fresh sample of
        // the current actor at the next states.
        let mut zeta_next = Matrix::zeros(b, self.action_dim);
        rng.fill_normal(zeta_next.data_mut());
        let next_head = squashed_gaussian(&self.actor, &batch.next_states, &zeta_next, &self.space);
        let xq_next = concat_cols(&batch.next_states, &next_head.actions);
        let t1 = self.tq1.forward(&xq_next);
        let t2 = self.tq2.forward(&xq_next);
        let targets: Vec<f64> = (0..b)
            .map(|i| {
                let q = t1[(i, 0)].min(t2[(i, 0)]) - alpha * next_head.logp[i];
                batch.rewards[i] + self.cfg.gamma * batch.not_terminal[i] * q
            })
            .collect();

        let xq = concat_cols(&batch.states, &batch.actions);
        let closs1 = critic_step(&mut self.q1, &mut self.q1_adam, &xq, &targets)?;
        let closs2 = critic_step(&mut self.q2, &mut self.q2_adam, &xq, &targets)?;

        // Reparameterized actor step against the (frozen) online critics.
        let mut zeta = Matrix::zeros(b, self.action_dim);
        rng.fill_normal(zeta.data_mut());
        let (actor_loss, actor_grads, mean_logp) = actor_loss_and_grads(
            &self.actor,
            &self.q1,
            &self.q2,
            &batch.states,
            &zeta,
            alpha,
            &self.space,
        );
        if !actor_loss.is_finite() || !actor_grads.all_finite() {
            return Err(CoreError::Numerical(format!("SAC actor loss diverged: {actor_loss}")));
        }
        self.actor_adam.step(&mut self.actor, &actor_grads);

        // Temperature step toward the entropy target.
        let mut alpha_loss = 0.0;
        if self.cfg.auto_alpha {
            let grad = -(mean_logp + self.target_entropy());
            alpha_loss = -self.log_alpha * (mean_logp + self.target_entropy());
            self.alpha_adam.step(&mut self.log_alpha, grad);
        }

        polyak(&mut self.tq1, &self.q1, self.cfg.tau);
        polyak(&mut self.tq2, &self.q2, self.cfg.tau);

        Ok(SacLosses {
            critic1: closs1,
            critic2: closs2,
            actor: actor_loss,
            alpha: alpha_loss,
            entropy: -mean_logp,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CKPT_MAGIC)?;
        write_u32(&mut w, CKPT_VERSION)?;
        write_u8(&mut w, CKPT_KIND_SAC)?;
        write_u64(&mut w, self.state_dim as u64)?;
        write_u64(&mut w, self.action_dim as u64)?;
        write_u64(&mut w, self.cfg.hidden.len() as u64)?;
        for &h in &self.cfg.hidden {
            write_u64(&mut w, h as u64)?;
        }
        write_f64_slice(&mut w, &self.space.low)?;
        write_f64_slice(&mut w, &self.space.high)?;
        write_f64(&mut w, self.log_alpha)?;
        for net in [&self.actor, &self.q1, &self.q2, &self.tq1, &self.tq2] {
            write_net(&mut w, net)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SacPolicy> {
        let mut r = BufReader::new(File::open(path)?);
        expect_magic(&mut r, CKPT_MAGIC, "sac checkpoint")?;
        if read_u32(&mut r)? != CKPT_VERSION {
            return Err(CoreError::Schema("sac checkpoint version".into()));
        }
        if read_u8(&mut r)? != CKPT_KIND_SAC {
            return Err(CoreError::Schema("not a sac checkpoint".into()));
        }
        let state_dim = read_u64(&mut r)? as usize;
        let action_dim = read_u64(&mut r)? as usize;
        let n_hidden = read_u64(&mut r)? as usize;
        let mut hidden = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            hidden.push(read_u64(&mut r)? as usize);
        }
        let low = crate::bytesio::read_f64_vec(&mut r)?;
        let high = crate::bytesio::read_f64_vec(&mut r)?;
        let log_alpha = read_f64(&mut r)?;
        let mut actor_sizes = vec![state_dim];
        actor_sizes.extend_from_slice(&hidden);
        actor_sizes.push(2 * action_dim);
        let mut critic_sizes = vec![state_dim + action_dim];
        critic_sizes.extend_from_slice(&hidden);
        critic_sizes.push(1);
        let actor = read_net(&mut r, &actor_sizes)?;
        let q1 = read_net(&mut r, &critic_sizes)?;
        let q2 = read_net(&mut r, &critic_sizes)?;
        let tq1 = read_net(&mut r, &critic_sizes)?;
        let tq2 = read_net(&mut r, &critic_sizes)?;
        let cfg = SacConfig { hidden, ..Default::default() };
        let adam = AdamConfig::with_lr(cfg.lr);
        Ok(SacPolicy {
            actor_adam: AdamState::new(&actor, adam),
            q1_adam: AdamState::new(&q1, adam),
            q2_adam: AdamState::new(&q2, adam),
            alpha_adam: ScalarAdam::new(adam),
            log_alpha,
            actor,
            q1,
            q2,
            tq1,
            tq2,
            cfg,
            space: ActionSpace { low, high },
            state_dim,
            action_dim,
        })
    }
}

impl Policy for SacPolicy {
    fn act(&self, state: &[f64], mode: ActMode, rng: &mut Rng) -> Vec<f64> {
        let states = Matrix::from_rows(&[state.to_vec()]);
        let out = self.actor.forward(&states);
        let row = out.row(0);
        let mut action = Vec::with_capacity(self.action_dim);
        for d in 0..self.action_dim {
            let mu = row[d];
            let z = match mode {
                ActMode::Deterministic => mu,
                ActMode::Stochastic => {
                    let ls = soft_clamp(row[self.action_dim + d], LOG_STD_MIN, LOG_STD_MAX);
                    mu + ls.exp() * rng.normal()
                }
            };
            action.push(self.space.center(d) + self.space.halfwidth(d) * z.tanh());
        }
        action
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }
}

/// Squashed-Gaussian head evaluated on a batch with frozen noise.
pub struct SquashedSample {
    pub actions: Matrix,
    pub logp: Vec<f64>,
    /// tanh(z) per entry, kept for gradient assembly.
    pub t: Matrix,
    pub sigma: Matrix,
    pub raw: Matrix,
}

/// Forward the actor and squash: a = center + halfwidth·tanh(μ + σ·ζ), with
/// the change-of-variables log-density correction.
pub fn squashed_gaussian(
    actor: &MlpNetwork,
    states: &Matrix,
    zeta: &Matrix,
    space: &ActionSpace,
) -> SquashedSample {
    let b = states.rows();
    let ad = space.dim();
    let raw = actor.forward(states);
    let mut actions = Matrix::zeros(b, ad);
    let mut t = Matrix::zeros(b, ad);
    let mut sigma = Matrix::zeros(b, ad);
    let mut logp = vec![0.0; b];
    for i in 0..b {
        let row = raw.row(i);
        let mut lp = 0.0;
        for d in 0..ad {
            let mu = row[d];
            let ls = soft_clamp(row[ad + d], LOG_STD_MIN, LOG_STD_MAX);
            let sd = ls.exp();
            let z = mu + sd * zeta[(i, d)];
            let td = z.tanh();
            let hw = space.halfwidth(d);
            actions[(i, d)] = space.center(d) + hw * td;
            t[(i, d)] = td;
            sigma[(i, d)] = sd;
            let zd = zeta[(i, d)];
            lp += -0.5 * zd * zd - ls - HALF_LN_2PI - (hw * (1.0 - td * td) + SQUASH_EPS).ln();
        }
        logp[i] = lp;
    }
    SquashedSample { actions, logp, t, sigma, raw }
}

/// Actor objective mean(α·logπ(ã|s) − min(Q1,Q2)(s,ã)) with reparameterized
/// ã and frozen critics; returns (loss, actor gradients, mean logπ).
pub fn actor_loss_and_grads(
    actor: &MlpNetwork,
    q1: &MlpNetwork,
    q2: &MlpNetwork,
    states: &Matrix,
    zeta: &Matrix,
    alpha: f64,
    space: &ActionSpace,
) -> (f64, Gradients, f64) {
    let b = states.rows();
    let bf = b as f64;
    let ad = space.dim();
    let cache = actor.forward_cached(states);
    let raw = cache.output();

    // recompute head quantities from the cached raw outputs
    let mut t = Matrix::zeros(b, ad);
    let mut sigma = Matrix::zeros(b, ad);
    let mut actions = Matrix::zeros(b, ad);
    let mut logp = vec![0.0; b];
    for i in 0..b {
        let row = raw.row(i);
        let mut lp = 0.0;
        for d in 0..ad {
            let ls = soft_clamp(row[ad + d], LOG_STD_MIN, LOG_STD_MAX);
            let sd = ls.exp();
            let z = row[d] + sd * zeta[(i, d)];
            let td = z.tanh();
            let hw = space.halfwidth(d);
            t[(i, d)] = td;
            sigma[(i, d)] = sd;
            actions[(i, d)] = space.center(d) + hw * td;
            let zd = zeta[(i, d)];
            lp += -0.5 * zd * zd - ls - HALF_LN_2PI - (hw * (1.0 - td * td) + SQUASH_EPS).ln();
        }
        logp[i] = lp;
    }

    let xq = concat_cols(states, &actions);
    let c1 = q1.forward_cached(&xq);
    let c2 = q2.forward_cached(&xq);
    let q1v = c1.output();
    let q2v = c2.output();

    let mut loss = 0.0;
    let mut dl1 = Matrix::zeros(b, 1);
    let mut dl2 = Matrix::zeros(b, 1);
    for i in 0..b {
        let (qa, qb) = (q1v[(i, 0)], q2v[(i, 0)]);
        let qmin = qa.min(qb);
        loss += alpha * logp[i] - qmin;
        if qa <= qb {
            dl1[(i, 0)] = -1.0 / bf;
        } else {
            dl2[(i, 0)] = -1.0 / bf;
        }
    }
    loss /= bf;

    // critic input gradients → dL/da
    let (_, din1) = q1.backward(&xq, &c1, &dl1);
    let (_, din2) = q2.backward(&xq, &c2, &dl2);
    let sd_cols = states.cols();

    // assemble dL/d(actor raw outputs)
    let mut dl_draw = Matrix::zeros(b, 2 * ad);
    let w = 1.0 / bf;
    for i in 0..b {
        let raw_row = raw.row(i);
        for d in 0..ad {
            let hw = space.halfwidth(d);
            let td = t[(i, d)];
            let s2 = 1.0 - td * td;
            let dlogp_dz = 2.0 * hw * td * s2 / (hw * s2 + SQUASH_EPS);
            let dq_da = din1[(i, sd_cols + d)] + din2[(i, sd_cols + d)];
            let dl_dz = w * alpha * dlogp_dz + dq_da * hw * s2;
            let dl_dls = -w * alpha + dl_dz * sigma[(i, d)] * zeta[(i, d)];
            dl_draw[(i, d)] = dl_dz;
            dl_draw[(i, ad + d)] = dl_dls * soft_clamp_deriv(raw_row[ad + d], LOG_STD_MIN, LOG_STD_MAX);
        }
    }
    let (grads, _) = actor.backward(states, &cache, &dl_draw);
    let mean_logp = logp.iter().sum::<f64>() / bf;
    (loss, grads, mean_logp)
}

/// Loss value only, for finite-difference checks with frozen noise.
pub fn actor_loss_value(
    actor: &MlpNetwork,
    q1: &MlpNetwork,
    q2: &MlpNetwork,
    states: &Matrix,
    zeta: &Matrix,
    alpha: f64,
    space: &ActionSpace,
) -> f64 {
    let head = squashed_gaussian(actor, states, zeta, space);
    let xq = concat_cols(states, &head.actions);
    let q1v = q1.forward(&xq);
    let q2v = q2.forward(&xq);
    let b = states.rows();
    let mut loss = 0.0;
    for i in 0..b {
        loss += alpha * head.logp[i] - q1v[(i, 0)].min(q2v[(i, 0)]);
    }
    loss / b as f64
}

/// Mean squared TD error step for one critic; returns the pre-update loss.
pub fn critic_step(
    critic: &mut MlpNetwork,
    adam: &mut AdamState,
    inputs: &Matrix,
    targets: &[f64],
) -> Result<f64> {
    let b = inputs.rows();
    let cache = critic.forward_cached(inputs);
    let out = cache.output();
    let mut dl = Matrix::zeros(b, 1);
    let mut loss = 0.0;
    for i in 0..b {
        let e = out[(i, 0)] - targets[i];
        loss += e * e;
        dl[(i, 0)] = 2.0 * e / b as f64;
    }
    loss /= b as f64;
    if !loss.is_finite() {
        return Err(CoreError::Numerical(format!("critic loss diverged: {loss}")));
    }
    let (grads, _) = critic.backward(inputs, &cache, &dl);
    if !grads.all_finite() {
        return Err(CoreError::Numerical("non-finite critic gradient".into()));
    }
    adam.step(critic, &grads);
    Ok(loss)
}

/// Critic regression loss value for gradient checks.
pub fn critic_loss_value(critic: &MlpNetwork, inputs: &Matrix, targets: &[f64]) -> f64 {
    let out = critic.forward(inputs);
    let b = inputs.rows();
    let mut loss = 0.0;
    for i in 0..b {
        let e = out[(i, 0)] - targets[i];
        loss += e * e;
    }
    loss / b as f64
}

/// target ← (1−τ)·target + τ·online
pub fn polyak(target: &mut MlpNetwork, online: &MlpNetwork, tau: f64) {
    for (tl, ol) in target.layers_mut().iter_mut().zip(online.layers()) {
        for (t, o) in tl.w.data_mut().iter_mut().zip(ol.w.data()) {
            *t = (1.0 - tau) * *t + tau * o;
        }
        for (t, o) in tl.b.iter_mut().zip(ol.b.iter()) {
            *t = (1.0 - tau) * *t + tau * o;
        }
    }
}

pub(crate) fn concat_cols(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.rows(), b.rows());
    let mut out = Matrix::zeros(a.rows(), a.cols() + b.cols());
    for i in 0..a.rows() {
        let row = out.row_mut(i);
        row[..a.cols()].copy_from_slice(a.row(i));
        row[a.cols()..].copy_from_slice(b.row(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Transition;

    fn toy_batch(n: usize, gamma_zero_target: bool, rng: &mut Rng) -> TransitionBatch {
        let refs: Vec<Transition> = (0..n)
            .map(|_| {
                let s = vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
                let a = vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
                let r = if gamma_zero_target { s[0] + a[1] } else { rng.uniform(-1.0, 1.0) };
                let ns = vec![s[0] + a[0], s[1] + a[1]];
                Transition::new(s, a, r, ns, false)
            })
            .collect();
        let tagged: Vec<_> = refs.iter().map(|t| (t, crate::datasets::BufferTag::Env)).collect();
        TransitionBatch::from_refs(&tagged)
    }

    fn small_sac(rng: &mut Rng, gamma: f64, tau: f64) -> SacPolicy {
        let cfg = SacConfig { gamma, tau, lr: 1e-3, hidden: vec![16, 16], ..Default::default() };
        SacPolicy::new(2, ActionSpace::symmetric_unit(2), cfg, rng)
    }

    #[test]
    fn zero_actor_emits_center_action() {
        let mut rng = Rng::new(1);
        let mut sac = small_sac(&mut rng, 0.99, 5e-3);
        for layer in sac.actor.layers_mut() {
            layer.w.fill(0.0);
            layer.b.iter_mut().for_each(|v| *v = 0.0);
        }
        let a = sac.act(&[0.3, -0.7], ActMode::Deterministic, &mut rng);
        assert_eq!(a, vec![0.0, 0.0]);
    }

    #[test]
    fn actions_respect_bounds() {
        let mut rng = Rng::new(2);
        let sac = small_sac(&mut rng, 0.99, 5e-3);
        for _ in 0..50 {
            let s = vec![rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)];
            let a = sac.act(&s, ActMode::Stochastic, &mut rng);
            assert!(a.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn stochastic_action_reproducible() {
        let mut rng = Rng::new(3);
        let sac = small_sac(&mut rng, 0.99, 5e-3);
        let a = sac.act(&[0.1, 0.2], ActMode::Stochastic, &mut Rng::new(50));
        let b = sac.act(&[0.1, 0.2], ActMode::Stochastic, &mut Rng::new(50));
        assert_eq!(a, b);
    }

    #[test]
    fn tau_one_copies_online_to_target() {
        let mut rng = Rng::new(4);
        let mut sac = small_sac(&mut rng, 0.9, 1.0);
        let batch = toy_batch(32, false, &mut rng);
        sac.update(&batch, &mut rng).unwrap();
        let (q1, _) = sac.critics();
        let (t1, _) = sac.target_critics();
        for (a, b) in q1.layers()[0].w.data().iter().zip(t1.layers()[0].w.data()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn gamma_zero_critic_regresses_to_reward() {
        let mut rng = Rng::new(5);
        let mut sac = small_sac(&mut rng, 0.0, 5e-3);
        let batch = toy_batch(64, true, &mut rng);
        for _ in 0..1500 {
            sac.update(&batch, &mut rng).unwrap();
        }
        let xq = concat_cols(&batch.states, &batch.actions);
        let out = sac.q1.forward(&xq);
        let mse: f64 = (0..batch.len())
            .map(|i| (out[(i, 0)] - batch.rewards[i]).powi(2))
            .sum::<f64>()
            / batch.len() as f64;
        assert!(mse < 1e-2, "critic MSE {mse}");
    }

    #[test]
    fn critic_td_error_drops_tenfold() {
        let mut rng = Rng::new(6);
        let mut sac = small_sac(&mut rng, 0.9, 5e-3);
        let batch = toy_batch(64, false, &mut rng);
        let first = sac.update(&batch, &mut rng).unwrap();
        let mut last = first;
        for _ in 0..2000 {
            last = sac.update(&batch, &mut rng).unwrap();
        }
        assert!(
            last.critic1 <= first.critic1 / 10.0,
            "critic loss {} -> {}",
            first.critic1,
            last.critic1
        );
    }

    #[test]
    fn updates_are_bit_reproducible() {
        let mut build = Rng::new(7);
        let batch = toy_batch(32, false, &mut build);
        let run = |seed: u64| -> Vec<f64> {
            let mut rng = Rng::new(seed);
            let mut sac = small_sac(&mut rng, 0.95, 5e-3);
            let mut out = Vec::new();
            let mut urng = rng.derive(9);
            for _ in 0..5 {
                let l = sac.update(&batch, &mut urng).unwrap();
                out.push(l.critic1);
                out.push(l.actor);
            }
            out
        };
        let a = run(123);
        let b = run(123);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn actor_gradients_match_finite_differences() {
        let mut rng = Rng::new(8);
        let sac = small_sac(&mut rng, 0.99, 5e-3);
        let batch = toy_batch(8, false, &mut rng);
        let mut zeta = Matrix::zeros(8, 2);
        rng.fill_normal(zeta.data_mut());
        let (_, grads, _) = actor_loss_and_grads(
            &sac.actor,
            &sac.q1,
            &sac.q2,
            &batch.states,
            &zeta,
            0.2,
            &sac.space,
        );
        let err = crate::numkit::grad_check(
            &sac.actor,
            &grads,
            |net| actor_loss_value(net, &sac.q1, &sac.q2, &batch.states, &zeta, 0.2, &sac.space),
            1e-5,
            250,
            &mut rng,
        );
        assert!(err < 1e-4, "actor grad error {err}");
    }
}
