//! Experiment orchestration: the outer loop alternating model rollouts,
//! rollout-policy updates, output-policy updates, and periodic evaluation,
//! with every stage drawing from seed-derived random streams so a rerun
//! reproduces metrics bit-exactly.

use crate::config::{ExperimentConfig, Preset};
use anyhow::Context;
use orpo_core::datasets::{sample_mixed_batch, BufferTag, MixSpec, ReplayBuffer, TransitionBatch};
use orpo_core::dynamics::{train_ensemble, DynamicsTrainReport, EnsembleDynamics, Normalizer, UncertaintyHeuristic};
use orpo_core::envs::{collect_riskworld_dataset, riskworld_reward, RiskWorld};
use orpo_core::eval::{action_distance, avg_model_uncertainty, evaluate_policy, Discounting, EvalReport};
use orpo_core::numkit::{Matrix, Rng};
use orpo_core::policies::{ActMode, ActionSpace, Policy, SacLosses, SacPolicy, Td3BcLosses, Td3BcPolicy};
use orpo_core::shaping::{generate_rollouts, RolloutConfig, ShapeMode};
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

// Stream labels for seed-derived RNGs.
const STREAM_ENV: u64 = 0x01;
const STREAM_DYNAMICS: u64 = 0x02;
const STREAM_SAC_INIT: u64 = 0x03;
const STREAM_TD3_INIT: u64 = 0x04;
const STREAM_FINAL_EVAL: u64 = 0x05;
const STREAM_ROLLOUT_BASE: u64 = 0x1000;
const STREAM_SAC_BASE: u64 = 0x2000;
const STREAM_TD3_BASE: u64 = 0x3000;
const STREAM_EVAL_BASE: u64 = 0x4000;

pub const METRICS_HEADER: &str = "epoch,grad_steps,mean_return,std_return,eps_u,action_distance,\
sac_critic1,sac_critic2,sac_actor,sac_alpha,sac_entropy,\
td3_critic1,td3_critic2,td3_actor,td3_bc,td3_lambda,config_hash";

/// Offline dataset for the configured environment, from the seed's env
/// stream.
pub fn collect_dataset(cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<ReplayBuffer> {
    let mut rng = Rng::new(seed).derive(STREAM_ENV);
    let data = collect_riskworld_dataset(cfg.env.dataset_size, &mut rng)?;
    Ok(ReplayBuffer::from_transitions(BufferTag::Env, data))
}

/// Ensemble training from the seed's dynamics stream; identical to what
/// `run_experiment` does internally when no pretrained model is supplied.
pub fn train_dynamics(
    cfg: &ExperimentConfig,
    seed: u64,
    dataset: &ReplayBuffer,
) -> anyhow::Result<(EnsembleDynamics, DynamicsTrainReport)> {
    let rng = Rng::new(seed).derive(STREAM_DYNAMICS);
    Ok(train_ensemble(dataset, &cfg.dynamics, &rng)?)
}

/// Pre-computed pieces shared across runs (e.g. one dynamics model serving
/// several presets of the same seed).
#[derive(Default)]
pub struct PretrainedParts<'a> {
    pub dataset: Option<&'a ReplayBuffer>,
    pub dynamics: Option<&'a EnsembleDynamics>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub preset: String,
    pub config_hash: String,
    pub final_eval: EvalReport,
    /// Distance of the rollout policy's actions from the dataset actions.
    pub rollout_action_distance: f64,
    /// Same for the deployed output policy.
    pub output_action_distance: f64,
    pub dynamics_holdout_nll: Vec<f64>,
    pub metrics_path: PathBuf,
}

#[derive(Default, Clone, Copy)]
struct LossAccum {
    sac: SacLosses,
    td3: Td3BcLosses,
    sac_n: usize,
    td3_n: usize,
}

impl LossAccum {
    fn add_sac(&mut self, l: SacLosses) {
        self.sac.critic1 += l.critic1;
        self.sac.critic2 += l.critic2;
        self.sac.actor += l.actor;
        self.sac.alpha += l.alpha;
        self.sac.entropy += l.entropy;
        self.sac_n += 1;
    }

    fn add_td3(&mut self, l: Td3BcLosses) {
        self.td3.critic1 += l.critic1;
        self.td3.critic2 += l.critic2;
        self.td3.actor += l.actor;
        self.td3.bc_term += l.bc_term;
        self.td3.lambda_bc += l.lambda_bc;
        self.td3_n += 1;
    }

    fn mean_sac(&self) -> SacLosses {
        let n = self.sac_n.max(1) as f64;
        SacLosses {
            critic1: self.sac.critic1 / n,
            critic2: self.sac.critic2 / n,
            actor: self.sac.actor / n,
            alpha: self.sac.alpha / n,
            entropy: self.sac.entropy / n,
        }
    }

    fn mean_td3(&self) -> Td3BcLosses {
        let n = self.td3_n.max(1) as f64;
        Td3BcLosses {
            critic1: self.td3.critic1 / n,
            critic2: self.td3.critic2 / n,
            actor: self.td3.actor / n,
            bc_term: self.td3.bc_term / n,
            lambda_bc: self.td3.lambda_bc / n,
        }
    }
}

/// Run one seed of the configured preset, writing config.toml, metrics.csv,
/// buffers, and checkpoints under `out_dir`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    seed: u64,
    out_dir: &Path,
    parts: PretrainedParts<'_>,
) -> anyhow::Result<RunSummary> {
    cfg.validate()?;
    let preset = cfg.preset();
    let shaper = cfg.effective_shaper()?;
    let config_hash = cfg.hash()?;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    fs::write(out_dir.join("config.toml"), cfg.to_toml_string()?)?;

    let root = Rng::new(seed);

    // offline dataset
    let owned_dataset;
    let d_env: &ReplayBuffer = match parts.dataset {
        Some(d) => d,
        None => {
            owned_dataset = collect_dataset(cfg, seed)?;
            &owned_dataset
        }
    };

    // dynamics model
    let owned_dynamics;
    let mut holdout_nll = Vec::new();
    let dynamics: &EnsembleDynamics = match parts.dynamics {
        Some(m) => m,
        None => {
            let (model, report) = train_dynamics(cfg, seed, d_env)?;
            holdout_nll = report.holdout_nll.clone();
            owned_dynamics = model;
            &owned_dynamics
        }
    };

    let state_dim = dynamics.state_dim();
    let space = ActionSpace::symmetric_unit(dynamics.action_dim());
    let mut sac = SacPolicy::new(state_dim, space.clone(), cfg.sac.clone(), &mut root.derive(STREAM_SAC_INIT));
    let state_stats = {
        let mut states = Matrix::zeros(d_env.len(), state_dim);
        for (i, t) in d_env.iter().enumerate() {
            states.row_mut(i).copy_from_slice(&t.state);
        }
        Normalizer::fit(&states)
    };
    let mut td3 = preset.trains_output_policy().then(|| {
        Td3BcPolicy::new(
            state_dim,
            space.clone(),
            cfg.td3bc.clone(),
            state_stats,
            &mut root.derive(STREAM_TD3_INIT),
        )
    });

    let rollout_mode =
        if preset.optimistic_rollouts() { ShapeMode::Optimistic } else { ShapeMode::Pessimistic };
    let roll_tag = if preset.optimistic_rollouts() { BufferTag::OptRaw } else { BufferTag::Pess };
    let cap = Some(cfg.train.model_buffer_capacity);
    let mut roll_buf = ReplayBuffer::new(roll_tag, cap);
    let mut rel_buf = ReplayBuffer::new(BufferTag::OptRelabel, cap);
    let mut pess_buf = ReplayBuffer::new(BufferTag::Pess, cap);

    let opt_cfg = RolloutConfig {
        horizon: cfg.rollout.horizon_optimistic,
        batch: cfg.rollout.batch,
        step_mode: cfg.rollout.step_mode,
        sanity_box: cfg.rollout.sanity_box,
    };
    let pess_cfg = RolloutConfig { horizon: cfg.rollout.horizon_pessimistic, ..opt_cfg.clone() };
    let known_reward_fn = |_s: &[f64], _a: &[f64], next: &[f64]| riskworld_reward(next);
    let known: Option<&dyn Fn(&[f64], &[f64], &[f64]) -> f64> =
        cfg.rollout.known_reward.then_some(&known_reward_fn);

    let sac_mix = MixSpec::new(cfg.mix.sac.clone(), cfg.mix.batch_size)?;
    let td3_mix = MixSpec::new(cfg.mix.td3bc.clone(), cfg.mix.batch_size)?;

    let metrics_path = out_dir.join("metrics.csv");
    let mut metrics = fs::File::create(&metrics_path)?;
    writeln!(metrics, "{METRICS_HEADER}")?;

    let mut grad_steps: u64 = 0;
    for epoch in 1..=cfg.train.epochs {
        let ep = epoch as u64;

        // (a) rollout-policy branch, optionally dual-appending the
        // pessimistic relabeling of the same tuples
        let roll_rng = root.derive(STREAM_ROLLOUT_BASE + ep);
        let rel = td3.is_some().then_some(&mut rel_buf);
        generate_rollouts(
            &sac,
            dynamics,
            &shaper,
            &opt_cfg,
            rollout_mode,
            d_env,
            &mut roll_buf,
            rel,
            known,
            &mut roll_rng.derive(0),
        )?;

        // (b) pessimistic branch from the output policy
        if let Some(ref td3_policy) = td3 {
            generate_rollouts(
                td3_policy,
                dynamics,
                &shaper,
                &pess_cfg,
                ShapeMode::Pessimistic,
                d_env,
                &mut pess_buf,
                None,
                known,
                &mut roll_rng.derive(1),
            )?;
        }

        let mut acc = LossAccum::default();

        // (c) rollout-policy updates on {D_env, rollout buffer}
        let mut sac_rng = root.derive(STREAM_SAC_BASE + ep);
        for _ in 0..cfg.train.sac_steps_per_epoch {
            let batch = sample_mixed_batch(&[d_env, &roll_buf], &sac_mix, &mut sac_rng)?;
            let tb = TransitionBatch::from_refs(&batch);
            acc.add_sac(sac.update(&tb, &mut sac_rng)?);
            grad_steps += 1;
        }

        // (d) output-policy updates on {D_env, relabeled, pessimistic}
        if let Some(ref mut td3_policy) = td3 {
            let mut td3_rng = root.derive(STREAM_TD3_BASE + ep);
            for _ in 0..cfg.train.td3bc_steps_per_epoch {
                let batch =
                    sample_mixed_batch(&[d_env, &rel_buf, &pess_buf], &td3_mix, &mut td3_rng)?;
                let tb = TransitionBatch::from_refs(&batch);
                acc.add_td3(td3_policy.update(&tb, &mut td3_rng)?);
                grad_steps += 1;
            }
        }

        // (e) periodic evaluation of the output policy
        let eval_rng = root.derive(STREAM_EVAL_BASE + ep);
        let output_policy: &dyn Policy = match td3 {
            Some(ref p) => p,
            None => &sac,
        };
        let mut env = RiskWorld::new();
        let report = evaluate_policy(
            output_policy,
            &mut env,
            cfg.train.eval_episodes,
            Discounting::UndiscountedSum,
            &mut eval_rng.derive(0),
        )?;
        let eps_u = avg_model_uncertainty(
            output_policy,
            dynamics,
            shaper.heuristic,
            cfg.rollout.step_mode,
            d_env,
            cfg.sac.gamma,
            cfg.rollout.horizon_optimistic,
            cfg.train.eps_u_rollouts,
            &mut eval_rng.derive(1),
        )?;
        let dist = action_distance(output_policy, d_env, ActMode::Deterministic, &mut eval_rng.derive(2))?;

        write_metrics_row(
            &mut metrics,
            epoch,
            grad_steps,
            &report,
            eps_u,
            dist,
            &acc.mean_sac(),
            td3.as_ref().map(|_| acc.mean_td3()),
            config_hash,
        )?;
    }
    metrics.flush()?;

    // final evaluation and artifacts
    let final_rng = root.derive(STREAM_FINAL_EVAL);
    let output_policy: &dyn Policy = match td3 {
        Some(ref p) => p,
        None => &sac,
    };
    let mut env = RiskWorld::new();
    let mut final_eval = evaluate_policy(
        output_policy,
        &mut env,
        cfg.train.final_eval_episodes,
        Discounting::UndiscountedSum,
        &mut final_rng.derive(0),
    )?;
    final_eval.eps_u = Some(avg_model_uncertainty(
        output_policy,
        dynamics,
        shaper.heuristic,
        cfg.rollout.step_mode,
        d_env,
        cfg.sac.gamma,
        cfg.rollout.horizon_optimistic,
        cfg.train.eps_u_rollouts,
        &mut final_rng.derive(1),
    )?);
    let output_dist =
        action_distance(output_policy, d_env, ActMode::Deterministic, &mut final_rng.derive(2))?;
    final_eval.action_distance = Some(output_dist);
    let rollout_dist =
        action_distance(&sac, d_env, ActMode::Deterministic, &mut final_rng.derive(3))?;

    sac.save(&out_dir.join("sac.bin"))?;
    if let Some(ref td3_policy) = td3 {
        td3_policy.save(&out_dir.join("td3bc.bin"))?;
    }
    if parts.dynamics.is_none() {
        dynamics.save(&out_dir.join("dynamics.bin"))?;
    }
    d_env.save(&out_dir.join("d_env.rbuf"))?;
    roll_buf.save(&out_dir.join("rollouts.rbuf"))?;
    if td3.is_some() {
        rel_buf.save(&out_dir.join("opt_relabel.rbuf"))?;
        pess_buf.save(&out_dir.join("pess.rbuf"))?;
    }

    let preset_name = match preset {
        Preset::Orpo => "orpo",
        Preset::Mopo => "mopo",
        Preset::Oroo => "oroo",
        Preset::OrpoNopess => "orpo-nopess",
    };
    let summary = RunSummary {
        seed,
        preset: preset_name.to_string(),
        config_hash: format!("{config_hash:016x}"),
        final_eval,
        rollout_action_distance: rollout_dist,
        output_action_distance: output_dist,
        dynamics_holdout_nll: holdout_nll,
        metrics_path,
    };
    let json = serde_json::to_string_pretty(&summary)?;
    fs::write(out_dir.join("summary.json"), json)?;
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn write_metrics_row(
    w: &mut dyn Write,
    epoch: usize,
    grad_steps: u64,
    report: &EvalReport,
    eps_u: f64,
    dist: f64,
    sac: &SacLosses,
    td3: Option<Td3BcLosses>,
    config_hash: u64,
) -> anyhow::Result<()> {
    let td3_cols = match td3 {
        Some(l) => format!(
            "{},{},{},{},{}",
            l.critic1, l.critic2, l.actor, l.bc_term, l.lambda_bc
        ),
        None => ",,,,".to_string(),
    };
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{},{},{},{:016x}",
        epoch,
        grad_steps,
        report.mean_return,
        report.std_return,
        eps_u,
        dist,
        sac.critic1,
        sac.critic2,
        sac.actor,
        sac.alpha,
        sac.entropy,
        td3_cols,
        config_hash
    )?;
    Ok(())
}

/// Evaluate uncertainty on a grid over the square, pairing each state with
/// the zero action. Rows are (x, y, u).
pub fn uncertainty_grid(
    dynamics: &EnsembleDynamics,
    resolution: usize,
    heuristic: UncertaintyHeuristic,
) -> Vec<(f64, f64, f64)> {
    assert!(resolution >= 2);
    let half = 3.0;
    let n = resolution;
    let mut out = Vec::with_capacity(n * n);
    let mut states = Matrix::zeros(n * n, 2);
    for i in 0..n {
        let x = -half + 2.0 * half * (i as f64) / ((n - 1) as f64);
        for j in 0..n {
            let y = -half + 2.0 * half * (j as f64) / ((n - 1) as f64);
            let row = states.row_mut(i * n + j);
            row[0] = x;
            row[1] = y;
        }
    }
    let actions = Matrix::zeros(n * n, 2);
    let rows = dynamics.predict_rows(&states, &actions);
    for idx in 0..n * n {
        let u = dynamics.uncertainty_at(&rows, idx, heuristic);
        out.push((states[(idx, 0)], states[(idx, 1)], u));
    }
    out
}

pub fn write_grid_csv(grid: &[(f64, f64, f64)], path: &Path) -> anyhow::Result<()> {
    let mut w = fs::File::create(path)?;
    writeln!(w, "x,y,u")?;
    for (x, y, u) in grid {
        writeln!(w, "{x},{y},{u}")?;
    }
    Ok(())
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = ranks(a);
    let rb = ranks(b);
    let n = ra.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(rb.iter()) {
        cov += (x - mean) * (y - mean);
        va += (x - mean) * (x - mean);
        vb += (y - mean) * (y - mean);
    }
    cov / (va.sqrt() * vb.sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// One-sided sign test p-value: probability of at least `wins` successes in
/// `n` fair coin flips.
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut p = 0.0;
    for k in wins..=n {
        p += binomial(n, k);
    }
    p / 2f64.powi(n as i32)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut num = 1.0;
    let mut den = 1.0;
    for i in 0..k {
        num *= (n - i) as f64;
        den *= (i + 1) as f64;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_detects_monotone_relations() {
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let b = vec![2.0, 4.0, 6.0, 8.0, 10.0];
        assert!((spearman(&a, &b) - 1.0).abs() < 1e-12);
        let c = vec![5.0, 4.0, 3.0, 2.0, 1.0];
        assert!((spearman(&a, &c) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_handles_ties() {
        let a = vec![1.0, 1.0, 2.0, 3.0];
        let b = vec![0.5, 0.5, 1.0, 2.0];
        let r = spearman(&a, &b);
        assert!(r > 0.99);
    }

    #[test]
    fn sign_test_values() {
        assert!((sign_test_p(5, 5) - 1.0 / 32.0).abs() < 1e-12);
        assert!((sign_test_p(4, 5) - 6.0 / 32.0).abs() < 1e-12);
    }
}
