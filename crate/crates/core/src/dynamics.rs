//! Ensemble of probabilistic Gaussian dynamics models predicting the state
//! delta and reward, trained by NLL on the offline dataset, with the
//! uncertainty heuristics used to build P-/O-MDP rewards.

use crate::bytesio::{
    expect_magic, read_f64_vec, read_u32, read_u64, read_u8, write_f64_slice, write_u32,
    write_u64, write_u8,
};
use crate::datasets::ReplayBuffer;
use crate::numkit::{
    mlp_train_step, soft_clamp, AdamConfig, AdamState, LossSpec, Matrix, MlpNetwork, Rng,
    LOG_STD_MAX, LOG_STD_MIN,
};
use crate::{CoreError, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

const CKPT_MAGIC: &[u8; 4] = b"OCKP";
const CKPT_VERSION: u32 = 1;
const CKPT_KIND_DYNAMICS: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UncertaintyHeuristic {
    MaxAleatoric,
    EnsembleVar,
    EnsembleStd,
}

/// Per-dimension affine normalizer with an ε floor on the scale.
#[derive(Debug, Clone)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(data: &Matrix) -> Normalizer {
        let n = data.rows().max(1) as f64;
        let d = data.cols();
        let mut mean = vec![0.0; d];
        for i in 0..data.rows() {
            for (m, v) in mean.iter_mut().zip(data.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..data.rows() {
            for (j, v) in data.row(i).iter().enumerate() {
                let e = v - mean[j];
                var[j] += e * e;
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt().max(1e-6)).collect();
        Normalizer { mean, std }
    }

    pub fn normalize_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn normalize(&self, data: &Matrix) -> Matrix {
        let mut out = data.clone();
        for i in 0..out.rows() {
            self.normalize_row(out.row_mut(i));
        }
        out
    }

    pub fn denormalize_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = *v * s + m;
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DynamicsConfig {
    pub n_members: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub holdout_frac: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            n_members: 7,
            hidden: vec![128, 128],
            lr: 1e-3,
            batch_size: 64,
            max_epochs: 300,
            patience: 5,
            holdout_frac: 0.1,
        }
    }
}

/// Per-member Gaussians for one (s,a), in normalized target space, plus the
/// ensemble-mean prediction.
#[derive(Debug, Clone)]
pub struct GaussianPrediction {
    pub member_means: Vec<Vec<f64>>,
    pub member_stds: Vec<Vec<f64>>,
    pub ensemble_mean: Vec<f64>,
}

/// How model rollouts draw next states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepMode {
    /// Sample from a uniformly chosen member's Gaussian.
    MemberUniform,
    /// Sample from the ensemble-mean Gaussian.
    MeanSample,
    /// Take the ensemble-mean prediction with no noise.
    MeanDeterministic,
}

#[derive(Debug, Clone)]
pub struct EnsembleDynamics {
    members: Vec<MlpNetwork>,
    pub input_norm: Normalizer,
    pub target_norm: Normalizer,
    state_dim: usize,
    action_dim: usize,
    hidden: Vec<usize>,
}

/// Training diagnostics: per-member holdout NLL at stop and epochs run.
#[derive(Debug, Clone)]
pub struct DynamicsTrainReport {
    pub holdout_nll: Vec<f64>,
    pub epochs_run: Vec<usize>,
}

/// Raw member outputs for a batch of inputs, still in normalized space.
pub struct EnsembleRows {
    pub member_mean: Vec<Matrix>,
    pub member_std: Vec<Matrix>,
}

impl EnsembleDynamics {
    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn target_dim(&self) -> usize {
        self.state_dim + 1
    }

    pub fn members(&self) -> &[MlpNetwork] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut Vec<MlpNetwork> {
        &mut self.members
    }

    fn normalized_inputs(&self, states: &Matrix, actions: &Matrix) -> Matrix {
        assert_eq!(states.rows(), actions.rows());
        let n = states.rows();
        let mut x = Matrix::zeros(n, self.state_dim + self.action_dim);
        for i in 0..n {
            let row = x.row_mut(i);
            row[..self.state_dim].copy_from_slice(states.row(i));
            row[self.state_dim..].copy_from_slice(actions.row(i));
            self.input_norm.normalize_row(row);
        }
        x
    }

    /// Forward every member on a batch of (s,a) rows.
    pub fn predict_rows(&self, states: &Matrix, actions: &Matrix) -> EnsembleRows {
        let x = self.normalized_inputs(states, actions);
        let k = self.target_dim();
        let mut member_mean = Vec::with_capacity(self.members.len());
        let mut member_std = Vec::with_capacity(self.members.len());
        for net in &self.members {
            let out = net.forward(&x);
            let n = out.rows();
            let mut mu = Matrix::zeros(n, k);
            let mut sd = Matrix::zeros(n, k);
            for i in 0..n {
                let row = out.row(i);
                let mu_row = mu.row_mut(i);
                mu_row.copy_from_slice(&row[..k]);
                let sd_row = sd.row_mut(i);
                for (j, v) in sd_row.iter_mut().enumerate() {
                    *v = soft_clamp(row[k + j], LOG_STD_MIN, LOG_STD_MAX).exp();
                }
            }
            member_mean.push(mu);
            member_std.push(sd);
        }
        EnsembleRows { member_mean, member_std }
    }

    /// All member Gaussians plus the ensemble mean for a single (s,a).
    pub fn predict(&self, state: &[f64], action: &[f64]) -> GaussianPrediction {
        let states = Matrix::from_rows(&[state.to_vec()]);
        let actions = Matrix::from_rows(&[action.to_vec()]);
        let rows = self.predict_rows(&states, &actions);
        prediction_at(&rows, 0, self.n_members(), self.target_dim())
    }

    /// Draw a normalized target for row `i` of a batched prediction.
    pub fn sample_target(&self, rows: &EnsembleRows, i: usize, mode: StepMode, rng: &mut Rng) -> Vec<f64> {
        let k = self.target_dim();
        let n = self.members.len();
        match mode {
            StepMode::MemberUniform => {
                let m = rng.index(n);
                let mu = rows.member_mean[m].row(i);
                let sd = rows.member_std[m].row(i);
                (0..k).map(|j| mu[j] + sd[j] * rng.normal()).collect()
            }
            StepMode::MeanSample => {
                let pred = prediction_at(rows, i, n, k);
                let mean_sd: Vec<f64> = (0..k)
                    .map(|j| pred.member_stds.iter().map(|s| s[j]).sum::<f64>() / n as f64)
                    .collect();
                (0..k).map(|j| pred.ensemble_mean[j] + mean_sd[j] * rng.normal()).collect()
            }
            StepMode::MeanDeterministic => prediction_at(rows, i, n, k).ensemble_mean,
        }
    }

    /// Denormalize a target sample into (Δs, reward).
    pub fn decode_target(&self, mut target: Vec<f64>) -> (Vec<f64>, f64) {
        self.target_norm.denormalize_row(&mut target);
        let r = target[self.state_dim];
        target.truncate(self.state_dim);
        (target, r)
    }

    /// Normalized state coordinates, used by the rollout sanity box.
    pub fn normalized_state(&self, state: &[f64]) -> Vec<f64> {
        state
            .iter()
            .enumerate()
            .map(|(j, v)| (v - self.input_norm.mean[j]) / self.input_norm.std[j])
            .collect()
    }

    pub fn uncertainty(&self, state: &[f64], action: &[f64], heuristic: UncertaintyHeuristic) -> f64 {
        uncertainty_of(&self.predict(state, action), heuristic)
    }

    /// Uncertainty of row `i` in a batched prediction.
    pub fn uncertainty_at(&self, rows: &EnsembleRows, i: usize, heuristic: UncertaintyHeuristic) -> f64 {
        uncertainty_of(&prediction_at(rows, i, self.n_members(), self.target_dim()), heuristic)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CKPT_MAGIC)?;
        write_u32(&mut w, CKPT_VERSION)?;
        write_u8(&mut w, CKPT_KIND_DYNAMICS)?;
        write_u64(&mut w, self.state_dim as u64)?;
        write_u64(&mut w, self.action_dim as u64)?;
        write_u64(&mut w, self.members.len() as u64)?;
        write_u64(&mut w, self.hidden.len() as u64)?;
        for &h in &self.hidden {
            write_u64(&mut w, h as u64)?;
        }
        write_f64_slice(&mut w, &self.input_norm.mean)?;
        write_f64_slice(&mut w, &self.input_norm.std)?;
        write_f64_slice(&mut w, &self.target_norm.mean)?;
        write_f64_slice(&mut w, &self.target_norm.std)?;
        for net in &self.members {
            write_net(&mut w, net)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<EnsembleDynamics> {
        let mut r = BufReader::new(File::open(path)?);
        expect_magic(&mut r, CKPT_MAGIC, "dynamics checkpoint")?;
        let version = read_u32(&mut r)?;
        if version != CKPT_VERSION {
            return Err(CoreError::Schema(format!("checkpoint version {version}")));
        }
        let kind = read_u8(&mut r)?;
        if kind != CKPT_KIND_DYNAMICS {
            return Err(CoreError::Schema(format!("expected dynamics checkpoint, got kind {kind}")));
        }
        let state_dim = read_u64(&mut r)? as usize;
        let action_dim = read_u64(&mut r)? as usize;
        let n_members = read_u64(&mut r)? as usize;
        let n_hidden = read_u64(&mut r)? as usize;
        let mut hidden = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            hidden.push(read_u64(&mut r)? as usize);
        }
        let input_norm = Normalizer { mean: read_f64_vec(&mut r)?, std: read_f64_vec(&mut r)? };
        let target_norm = Normalizer { mean: read_f64_vec(&mut r)?, std: read_f64_vec(&mut r)? };
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(&hidden);
        sizes.push(2 * (state_dim + 1));
        let mut members = Vec::with_capacity(n_members);
        for _ in 0..n_members {
            members.push(read_net(&mut r, &sizes)?);
        }
        Ok(EnsembleDynamics { members, input_norm, target_norm, state_dim, action_dim, hidden })
    }
}

pub(crate) fn write_net<W: Write>(w: &mut W, net: &MlpNetwork) -> Result<()> {
    for layer in net.layers() {
        write_f64_slice(w, layer.w.data())?;
        write_f64_slice(w, &layer.b)?;
    }
    Ok(())
}

pub(crate) fn read_net<R: std::io::Read>(r: &mut R, sizes: &[usize]) -> Result<MlpNetwork> {
    let mut net = MlpNetwork::zeros(sizes);
    for layer in net.layers_mut() {
        let w_data = read_f64_vec(r)?;
        if w_data.len() != layer.w.rows() * layer.w.cols() {
            return Err(CoreError::Schema("layer weight size mismatch".into()));
        }
        layer.w.data_mut().copy_from_slice(&w_data);
        let b = read_f64_vec(r)?;
        if b.len() != layer.b.len() {
            return Err(CoreError::Schema("layer bias size mismatch".into()));
        }
        layer.b = b;
    }
    Ok(net)
}

fn prediction_at(rows: &EnsembleRows, i: usize, n_members: usize, k: usize) -> GaussianPrediction {
    let mut member_means = Vec::with_capacity(n_members);
    let mut member_stds = Vec::with_capacity(n_members);
    let mut ensemble_mean = vec![0.0; k];
    for m in 0..n_members {
        let mu = rows.member_mean[m].row(i).to_vec();
        for (e, v) in ensemble_mean.iter_mut().zip(&mu) {
            *e += v;
        }
        member_means.push(mu);
        member_stds.push(rows.member_std[m].row(i).to_vec());
    }
    ensemble_mean.iter_mut().for_each(|v| *v /= n_members as f64);
    GaussianPrediction { member_means, member_stds, ensemble_mean }
}

/// Uncertainty heuristics over per-member Gaussians, in normalized target
/// space. EnsembleVar is the total (summed over dimensions) variance of the
/// mixture; EnsembleStd its square root; MaxAleatoric the largest member
/// std-vector norm.
pub fn uncertainty_of(pred: &GaussianPrediction, heuristic: UncertaintyHeuristic) -> f64 {
    let n = pred.member_means.len() as f64;
    match heuristic {
        UncertaintyHeuristic::MaxAleatoric => pred
            .member_stds
            .iter()
            .map(|s| s.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max),
        UncertaintyHeuristic::EnsembleVar => ensemble_var(pred, n),
        UncertaintyHeuristic::EnsembleStd => ensemble_var(pred, n).max(0.0).sqrt(),
    }
}

fn ensemble_var(pred: &GaussianPrediction, n: f64) -> f64 {
    let mut second_moment = 0.0;
    for (mu, sd) in pred.member_means.iter().zip(pred.member_stds.iter()) {
        second_moment += mu.iter().map(|v| v * v).sum::<f64>();
        second_moment += sd.iter().map(|v| v * v).sum::<f64>();
    }
    second_moment /= n;
    let mean_sq: f64 = pred.ensemble_mean.iter().map(|v| v * v).sum();
    second_moment - mean_sq
}

/// Train N independently initialized members on (s,a) → (s'−s, r) with
/// Gaussian NLL, early-stopping each member on a shared 10% holdout split.
pub fn train_ensemble(
    dataset: &ReplayBuffer,
    cfg: &DynamicsConfig,
    rng: &Rng,
) -> Result<(EnsembleDynamics, DynamicsTrainReport)> {
    if dataset.len() < 100 {
        return Err(CoreError::Validation(format!(
            "dynamics training needs at least 100 transitions, got {}",
            dataset.len()
        )));
    }
    if cfg.n_members < 2 {
        return Err(CoreError::Validation("ensemble needs at least 2 members".into()));
    }
    let n = dataset.len();
    let first = dataset.get(0);
    let state_dim = first.state.len();
    let action_dim = first.action.len();
    let in_dim = state_dim + action_dim;
    let target_dim = state_dim + 1;

    let mut inputs = Matrix::zeros(n, in_dim);
    let mut targets = Matrix::zeros(n, target_dim);
    for (i, t) in dataset.iter().enumerate() {
        let row = inputs.row_mut(i);
        row[..state_dim].copy_from_slice(&t.state);
        row[state_dim..].copy_from_slice(&t.action);
        let trow = targets.row_mut(i);
        for j in 0..state_dim {
            trow[j] = t.next_state[j] - t.state[j];
        }
        trow[state_dim] = t.reward;
    }
    let input_norm = Normalizer::fit(&inputs);
    let target_norm = Normalizer::fit(&targets);
    let x = input_norm.normalize(&inputs);
    let y = target_norm.normalize(&targets);

    // Shared holdout split; members differ in init and batch order only.
    let mut split_rng = rng.derive(0xD5);
    let mut order: Vec<usize> = (0..n).collect();
    split_rng.shuffle(&mut order);
    let n_holdout = ((n as f64 * cfg.holdout_frac) as usize).clamp(1, n - 1);
    let (holdout_idx, train_idx) = order.split_at(n_holdout);

    let take = |rows: &Matrix, idx: &[usize]| -> Matrix {
        let mut out = Matrix::zeros(idx.len(), rows.cols());
        for (i, &j) in idx.iter().enumerate() {
            out.row_mut(i).copy_from_slice(rows.row(j));
        }
        out
    };
    let x_hold = take(&x, holdout_idx);
    let y_hold = take(&y, holdout_idx);

    let mut sizes = vec![in_dim];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(2 * target_dim);

    let mut members = Vec::with_capacity(cfg.n_members);
    let mut holdout_nll = Vec::with_capacity(cfg.n_members);
    let mut epochs_run = Vec::with_capacity(cfg.n_members);
    for m in 0..cfg.n_members {
        let mut mrng = rng.derive(0xE0 + m as u64);
        let mut net = MlpNetwork::new(&sizes, &mut mrng);
        let mut adam = AdamState::new(&net, AdamConfig::with_lr(cfg.lr));
        let mut idx = train_idx.to_vec();
        let mut best = f64::INFINITY;
        let mut since_best = 0;
        let mut epochs = 0;
        for _epoch in 0..cfg.max_epochs {
            epochs += 1;
            mrng.shuffle(&mut idx);
            for chunk in idx.chunks(cfg.batch_size) {
                let xb = take(&x, chunk);
                let yb = take(&y, chunk);
                mlp_train_step(&mut net, &mut adam, &LossSpec::GaussianNll { targets: &yb }, &xb)?;
            }
            let out = net.forward(&x_hold);
            let (nll, _) = crate::numkit::gaussian_nll(&out, &y_hold);
            if nll < best - 1e-6 {
                best = nll;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
        holdout_nll.push(best);
        epochs_run.push(epochs);
        members.push(net);
    }

    Ok((
        EnsembleDynamics {
            members,
            input_norm,
            target_norm,
            state_dim,
            action_dim,
            hidden: cfg.hidden.clone(),
        },
        DynamicsTrainReport { holdout_nll, epochs_run },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::BufferTag;
    use crate::envs::Transition;

    fn linear_dataset(n: usize, noise: f64, rng: &mut Rng) -> ReplayBuffer {
        let mut buf = ReplayBuffer::new(BufferTag::Env, None);
        for _ in 0..n {
            let s = vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
            let a = vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
            let next = vec![s[0] + a[0] + noise * rng.normal(), s[1] + a[1] + noise * rng.normal()];
            let r = 0.5 * (s[0] + a[1]) + noise * rng.normal();
            buf.push(Transition::new(s, a, r, next, false));
        }
        buf
    }

    fn small_cfg() -> DynamicsConfig {
        DynamicsConfig {
            n_members: 3,
            hidden: vec![32, 32],
            lr: 1e-3,
            batch_size: 64,
            max_epochs: 60,
            patience: 5,
            holdout_frac: 0.1,
        }
    }

    #[test]
    fn learns_deterministic_linear_dynamics() {
        let mut rng = Rng::new(10);
        let buf = linear_dataset(600, 0.0, &mut rng);
        let (model, report) = train_ensemble(&buf, &small_cfg(), &Rng::new(11)).unwrap();
        assert!(report.holdout_nll.iter().all(|v| v.is_finite()));
        // holdout mean-prediction MSE on the state delta, raw units
        let mut mse = 0.0;
        let mut count = 0;
        for t in buf.iter().take(100) {
            let pred = model.predict(&t.state, &t.action);
            let (delta, _r) = model.decode_target(pred.ensemble_mean.clone());
            for j in 0..2 {
                let e = delta[j] - (t.next_state[j] - t.state[j]);
                mse += e * e;
                count += 1;
            }
        }
        mse /= count as f64;
        assert!(mse < 1e-3, "holdout delta MSE {mse}");
    }

    #[test]
    fn recovers_injected_noise_scale() {
        let mut rng = Rng::new(12);
        let buf = linear_dataset(800, 0.1, &mut rng);
        let (model, _) = train_ensemble(&buf, &small_cfg(), &Rng::new(13)).unwrap();
        // mean aleatoric std over dataset inputs, converted to raw units
        let mut acc = 0.0;
        let mut count = 0;
        for t in buf.iter().take(200) {
            let pred = model.predict(&t.state, &t.action);
            for sd in &pred.member_stds {
                for j in 0..model.target_dim() {
                    acc += sd[j] * model.target_norm.std[j];
                    count += 1;
                }
            }
        }
        let mean_std = acc / count as f64;
        assert!(
            (0.05..=0.2).contains(&mean_std),
            "recovered aleatoric std {mean_std} outside [0.05, 0.2]"
        );
    }

    #[test]
    fn members_are_distinct() {
        let mut rng = Rng::new(14);
        let buf = linear_dataset(200, 0.0, &mut rng);
        let cfg = DynamicsConfig { n_members: 7, max_epochs: 2, ..small_cfg() };
        let (model, _) = train_ensemble(&buf, &cfg, &Rng::new(15)).unwrap();
        assert_eq!(model.n_members(), 7);
        for i in 0..7 {
            for j in (i + 1)..7 {
                let a = model.members()[i].layers()[0].w.data();
                let b = model.members()[j].layers()[0].w.data();
                let dist: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                assert!(dist > 0.0, "members {i} and {j} coincide");
            }
        }
    }

    #[test]
    fn tiny_dataset_rejected() {
        let mut rng = Rng::new(16);
        let buf = linear_dataset(50, 0.0, &mut rng);
        assert!(train_ensemble(&buf, &small_cfg(), &Rng::new(1)).is_err());
    }

    #[test]
    fn identical_members_collapse_to_aleatoric() {
        let mut rng = Rng::new(17);
        let buf = linear_dataset(200, 0.05, &mut rng);
        let cfg = DynamicsConfig { n_members: 3, max_epochs: 3, ..small_cfg() };
        let (mut model, _) = train_ensemble(&buf, &cfg, &Rng::new(18)).unwrap();
        let first = model.members()[0].clone();
        for m in model.members_mut().iter_mut() {
            *m = first.clone();
        }
        let t = buf.get(0);
        let pred = model.predict(&t.state, &t.action);
        for m in 1..pred.member_means.len() {
            assert_eq!(pred.member_means[0], pred.member_means[m]);
        }
        for (e, m) in pred.ensemble_mean.iter().zip(&pred.member_means[0]) {
            assert!((e - m).abs() <= 1e-15 * m.abs().max(1.0));
        }
        // with identical means the mixture variance is purely aleatoric
        let n = pred.member_stds.len() as f64;
        let mean_sq_sigma: f64 = pred
            .member_stds
            .iter()
            .map(|s| s.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / n;
        let u = uncertainty_of(&pred, UncertaintyHeuristic::EnsembleStd);
        assert!((u - mean_sq_sigma.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn uncertainty_hand_examples() {
        let pred = GaussianPrediction {
            member_means: vec![vec![0.0], vec![2.0]],
            member_stds: vec![vec![0.0], vec![0.0]],
            ensemble_mean: vec![1.0],
        };
        let var = uncertainty_of(&pred, UncertaintyHeuristic::EnsembleVar);
        let std = uncertainty_of(&pred, UncertaintyHeuristic::EnsembleStd);
        assert!((var - 1.0).abs() < 1e-12);
        assert!((std - 1.0).abs() < 1e-12);

        let pred = GaussianPrediction {
            member_means: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            member_stds: vec![vec![0.1 / 2f64.sqrt(); 2], vec![0.3 / 2f64.sqrt(); 2]],
            ensemble_mean: vec![0.0, 0.0],
        };
        let ma = uncertainty_of(&pred, UncertaintyHeuristic::MaxAleatoric);
        assert!((ma - 0.3).abs() < 1e-12);
    }

    #[test]
    fn std_squared_matches_var() {
        let mut rng = Rng::new(19);
        for _ in 0..50 {
            let n = 2 + rng.index(5);
            let k = 1 + rng.index(4);
            let member_means: Vec<Vec<f64>> =
                (0..n).map(|_| (0..k).map(|_| rng.normal()).collect()).collect();
            let member_stds: Vec<Vec<f64>> =
                (0..n).map(|_| (0..k).map(|_| rng.next_f64() + 0.01).collect()).collect();
            let mut ensemble_mean = vec![0.0; k];
            for mu in &member_means {
                for (e, v) in ensemble_mean.iter_mut().zip(mu) {
                    *e += v / n as f64;
                }
            }
            let pred = GaussianPrediction { member_means, member_stds, ensemble_mean };
            let var = uncertainty_of(&pred, UncertaintyHeuristic::EnsembleVar);
            let std = uncertainty_of(&pred, UncertaintyHeuristic::EnsembleStd);
            assert!(var >= 0.0);
            assert!((std * std - var).abs() <= 1e-12 * var.abs().max(1.0));
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let mut rng = Rng::new(20);
        let buf = linear_dataset(200, 0.0, &mut rng);
        let cfg = DynamicsConfig { n_members: 2, max_epochs: 2, ..small_cfg() };
        let (model, _) = train_ensemble(&buf, &cfg, &Rng::new(21)).unwrap();
        let s = Matrix::from_rows(&[vec![0.1, -0.1]]);
        let a = Matrix::from_rows(&[vec![0.5, 0.5]]);
        let rows = model.predict_rows(&s, &a);
        let mut r1 = Rng::new(77);
        let mut r2 = Rng::new(77);
        let t1 = model.sample_target(&rows, 0, StepMode::MemberUniform, &mut r1);
        let t2 = model.sample_target(&rows, 0, StepMode::MemberUniform, &mut r2);
        assert_eq!(t1, t2);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut rng = Rng::new(22);
        let buf = linear_dataset(200, 0.0, &mut rng);
        let cfg = DynamicsConfig { n_members: 2, max_epochs: 2, ..small_cfg() };
        let (model, _) = train_ensemble(&buf, &cfg, &Rng::new(23)).unwrap();
        let dir = std::env::temp_dir().join("orpo_dyn_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("dyn.bin");
        model.save(&path).unwrap();
        let loaded = EnsembleDynamics::load(&path).unwrap();
        let t = buf.get(3);
        let a = model.predict(&t.state, &t.action);
        let b = loaded.predict(&t.state, &t.action);
        assert_eq!(a.ensemble_mean, b.ensemble_mean);
        assert_eq!(a.member_stds, b.member_stds);
    }
}
