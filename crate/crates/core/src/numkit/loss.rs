//! Loss functions for direct regression training plus the smooth bounding
//! used on log-std heads everywhere in the artifact.

use super::adam::AdamState;
use super::matrix::Matrix;
use super::mlp::MlpNetwork;
use crate::{CoreError, Result};

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Smooth clamp of raw log-std outputs into [lo, hi]; approximately the
/// identity in the interior.
pub fn soft_clamp(x: f64, lo: f64, hi: f64) -> f64 {
    let y1 = hi - softplus(hi - x);
    lo + softplus(y1 - lo)
}

/// Derivative of `soft_clamp` with respect to x.
pub fn soft_clamp_deriv(x: f64, lo: f64, hi: f64) -> f64 {
    let y1 = hi - softplus(hi - x);
    sigmoid(hi - x) * sigmoid(y1 - lo)
}

pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Regression losses consumed by `mlp_train_step`.
pub enum LossSpec<'a> {
    /// Mean over the batch of the summed squared error against `targets`.
    SquaredError { targets: &'a Matrix },
    /// Mean diagonal Gaussian negative log-likelihood. The network output is
    /// split in half: means first, raw log-stds second; log-stds are
    /// soft-clamped to [LOG_STD_MIN, LOG_STD_MAX].
    GaussianNll { targets: &'a Matrix },
}

impl LossSpec<'_> {
    /// Returns (loss, dL/d raw outputs).
    pub fn eval(&self, outputs: &Matrix) -> (f64, Matrix) {
        match self {
            LossSpec::SquaredError { targets } => {
                assert_eq!(
                    (outputs.rows(), outputs.cols()),
                    (targets.rows(), targets.cols()),
                    "squared error target shape mismatch"
                );
                let b = outputs.rows() as f64;
                let mut grad = Matrix::zeros(outputs.rows(), outputs.cols());
                let mut loss = 0.0;
                for ((g, o), t) in grad
                    .data_mut()
                    .iter_mut()
                    .zip(outputs.data().iter())
                    .zip(targets.data().iter())
                {
                    let e = o - t;
                    loss += e * e;
                    *g = 2.0 * e / b;
                }
                (loss / b, grad)
            }
            LossSpec::GaussianNll { targets } => gaussian_nll(outputs, targets),
        }
    }
}

/// Mean over the batch of ½[(t−μ)ᵀΣ⁻¹(t−μ) + log det Σ] + const, with
/// diagonal Σ parameterized by soft-clamped log-stds.
pub fn gaussian_nll(outputs: &Matrix, targets: &Matrix) -> (f64, Matrix) {
    let k = targets.cols();
    assert_eq!(outputs.cols(), 2 * k, "gaussian head needs 2x target width");
    assert_eq!(outputs.rows(), targets.rows());
    let b = outputs.rows();
    let bf = b as f64;
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
    let mut grad = Matrix::zeros(b, 2 * k);
    let mut loss = 0.0;
    for i in 0..b {
        let out = outputs.row(i);
        let t = targets.row(i);
        let g = grad.row_mut(i);
        for j in 0..k {
            let mu = out[j];
            let raw = out[k + j];
            let ls = soft_clamp(raw, LOG_STD_MIN, LOG_STD_MAX);
            let inv_var = (-2.0 * ls).exp();
            let e = t[j] - mu;
            loss += 0.5 * e * e * inv_var + ls + HALF_LN_2PI;
            g[j] = -e * inv_var / bf;
            let dls = (1.0 - e * e * inv_var) / bf;
            g[k + j] = dls * soft_clamp_deriv(raw, LOG_STD_MIN, LOG_STD_MAX);
        }
    }
    (loss / bf, grad)
}

/// One training step: forward, analytic backward, Adam update. Returns the
/// pre-update loss. Non-finite losses or gradients abort.
pub fn mlp_train_step(
    net: &mut MlpNetwork,
    adam: &mut AdamState,
    loss: &LossSpec<'_>,
    inputs: &Matrix,
) -> Result<f64> {
    if inputs.rows() == 0 {
        return Err(CoreError::Validation("empty training batch".into()));
    }
    let cache = net.forward_cached(inputs);
    let (loss_val, dl_dout) = loss.eval(cache.output());
    if !loss_val.is_finite() {
        return Err(CoreError::Numerical(format!("training loss is not finite: {loss_val}")));
    }
    let (grads, _) = net.backward(inputs, &cache, &dl_dout);
    if !grads.all_finite() {
        return Err(CoreError::Numerical("non-finite gradient encountered".into()));
    }
    adam.step(net, &grads);
    Ok(loss_val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::adam::AdamConfig;
    use crate::numkit::rng::Rng;

    #[test]
    fn soft_clamp_bounds_and_identity() {
        // the double softplus overshoots the top bound by at most e^(lo−hi)
        assert!((soft_clamp(0.0, LOG_STD_MIN, LOG_STD_MAX) - 0.0).abs() < 0.2);
        assert!(soft_clamp(100.0, LOG_STD_MIN, LOG_STD_MAX) <= LOG_STD_MAX + 1e-4);
        assert!(soft_clamp(-100.0, LOG_STD_MIN, LOG_STD_MAX) >= LOG_STD_MIN - 1e-9);
        // derivative positive everywhere
        for x in [-50.0, -3.0, 0.0, 1.9, 40.0] {
            assert!(soft_clamp_deriv(x, LOG_STD_MIN, LOG_STD_MAX) > 0.0);
        }
    }

    #[test]
    fn squared_error_converges_on_fixed_batch() {
        let mut rng = Rng::new(8);
        let mut net = MlpNetwork::new(&[2, 16, 1], &mut rng);
        let mut adam = AdamState::new(&net, AdamConfig::with_lr(1e-2));
        let inputs = Matrix::from_fn(8, 2, |_, _| rng.uniform(-1.0, 1.0));
        let targets = Matrix::from_fn(8, 1, |_, _| 0.7);
        let loss = LossSpec::SquaredError { targets: &targets };
        let mut last = f64::INFINITY;
        for _ in 0..500 {
            last = mlp_train_step(&mut net, &mut adam, &loss, &inputs).unwrap();
        }
        assert!(last < 1e-3, "loss stuck at {last}");
    }

    #[test]
    fn nll_recovers_known_noise_scale() {
        let mut rng = Rng::new(21);
        let sigma = 0.3;
        let n = 256;
        let inputs = Matrix::from_fn(n, 1, |_, _| rng.uniform(-1.0, 1.0));
        let targets = Matrix::from_fn(n, 1, |i, _| 2.0 * inputs[(i, 0)] + sigma * rng.normal());
        let mut net = MlpNetwork::new(&[1, 32, 2], &mut rng);
        let mut adam = AdamState::new(&net, AdamConfig::with_lr(3e-3));
        let loss = LossSpec::GaussianNll { targets: &targets };
        for _ in 0..2000 {
            mlp_train_step(&mut net, &mut adam, &loss, &inputs).unwrap();
        }
        let out = net.forward(&inputs);
        let mean_ls: f64 =
            (0..n).map(|i| soft_clamp(out[(i, 1)], LOG_STD_MIN, LOG_STD_MAX)).sum::<f64>() / n as f64;
        assert!(
            (mean_ls - sigma.ln()).abs() < 0.1,
            "learned log-std {mean_ls} vs true {}",
            sigma.ln()
        );
    }
}
