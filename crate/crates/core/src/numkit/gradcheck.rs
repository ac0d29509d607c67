//! Central finite-difference verification of analytic gradients.

use super::mlp::{Gradients, MlpNetwork};
use super::rng::Rng;

/// Compare analytic gradients against central finite differences of `loss_fn`
/// over a random subsample of at least `min_coords` parameter coordinates
/// (all of them when the network is small). Returns the maximum error,
/// normalized by max(1, |fd|, |analytic|); zero gradients on both sides count
/// as zero error.
pub fn grad_check<F: Fn(&MlpNetwork) -> f64>(
    net: &MlpNetwork,
    analytic: &Gradients,
    loss_fn: F,
    epsilon: f64,
    min_coords: usize,
    rng: &mut Rng,
) -> f64 {
    assert!((1e-6..=1e-4).contains(&epsilon), "epsilon outside supported range");
    let total = net.param_count();
    let coords: Vec<usize> = if total <= min_coords {
        (0..total).collect()
    } else {
        let mut idx: Vec<usize> = (0..total).collect();
        rng.shuffle(&mut idx);
        idx.truncate(min_coords);
        idx
    };
    let mut work = net.clone();
    let mut worst: f64 = 0.0;
    for &c in &coords {
        let orig = work.get_param(c);
        work.set_param(c, orig + epsilon);
        let lp = loss_fn(&work);
        work.set_param(c, orig - epsilon);
        let lm = loss_fn(&work);
        work.set_param(c, orig);
        let fd = (lp - lm) / (2.0 * epsilon);
        let an = MlpNetwork::get_grad(analytic, c, net);
        if fd.abs() < 1e-12 && an.abs() < 1e-12 {
            continue;
        }
        let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1.0);
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::loss::LossSpec;
    use crate::numkit::matrix::Matrix;

    #[test]
    fn linear_net_squared_error_is_exact() {
        let mut rng = Rng::new(17);
        let net = MlpNetwork::new(&[3, 2], &mut rng);
        let inputs = Matrix::from_fn(6, 3, |_, _| rng.uniform(-1.0, 1.0));
        let targets = Matrix::from_fn(6, 2, |_, _| rng.uniform(-1.0, 1.0));
        let spec = LossSpec::SquaredError { targets: &targets };
        let cache = net.forward_cached(&inputs);
        let (_, dl) = spec.eval(cache.output());
        let (grads, _) = net.backward(&inputs, &cache, &dl);
        let err = grad_check(
            &net,
            &grads,
            |n| {
                let out = n.forward(&inputs);
                spec.eval(&out).0
            },
            1e-5,
            200,
            &mut rng,
        );
        assert!(err < 1e-7, "relative error {err}");
    }

    #[test]
    fn two_hidden_layer_nll_matches() {
        let mut rng = Rng::new(23);
        let net = MlpNetwork::new(&[3, 16, 16, 4], &mut rng);
        let inputs = Matrix::from_fn(10, 3, |_, _| rng.uniform(-1.0, 1.0));
        let targets = Matrix::from_fn(10, 2, |_, _| rng.uniform(-1.0, 1.0));
        let spec = LossSpec::GaussianNll { targets: &targets };
        let cache = net.forward_cached(&inputs);
        let (_, dl) = spec.eval(cache.output());
        let (grads, _) = net.backward(&inputs, &cache, &dl);
        let err = grad_check(
            &net,
            &grads,
            |n| {
                let out = n.forward(&inputs);
                spec.eval(&out).0
            },
            1e-5,
            300,
            &mut rng,
        );
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn constant_loss_reports_zero() {
        let mut rng = Rng::new(31);
        let net = MlpNetwork::new(&[2, 4, 1], &mut rng);
        let grads = Gradients::zeros_like(&net);
        let err = grad_check(&net, &grads, |_| 1.25, 1e-5, 200, &mut rng);
        assert_eq!(err, 0.0);
    }
}
