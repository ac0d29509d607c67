//! Adam optimizer state shaped like a network's parameters.

use super::mlp::{Gradients, MlpNetwork};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Default::default() }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl AdamState {
    pub fn new(net: &MlpNetwork, cfg: AdamConfig) -> Self {
        AdamState { cfg, step: 0, m: Gradients::zeros_like(net), v: Gradients::zeros_like(net) }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update of `net` along `grads`.
    pub fn step(&mut self, net: &mut MlpNetwork, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        let lr_t = self.cfg.lr * bc2.sqrt() / bc1;
        for (l, layer) in net.layers_mut().iter_mut().enumerate() {
            let g = &grads.layers[l];
            let m = &mut self.m.layers[l];
            let v = &mut self.v.layers[l];
            for ((p, gi), (mi, vi)) in layer
                .w
                .data_mut()
                .iter_mut()
                .zip(g.w.data().iter())
                .zip(m.w.data_mut().iter_mut().zip(v.w.data_mut().iter_mut()))
            {
                *mi = self.cfg.beta1 * *mi + (1.0 - self.cfg.beta1) * gi;
                *vi = self.cfg.beta2 * *vi + (1.0 - self.cfg.beta2) * gi * gi;
                *p -= lr_t * *mi / (vi.sqrt() + self.cfg.eps);
            }
            for ((p, gi), (mi, vi)) in layer
                .b
                .iter_mut()
                .zip(g.b.iter())
                .zip(m.b.iter_mut().zip(v.b.iter_mut()))
            {
                *mi = self.cfg.beta1 * *mi + (1.0 - self.cfg.beta1) * gi;
                *vi = self.cfg.beta2 * *vi + (1.0 - self.cfg.beta2) * gi * gi;
                *p -= lr_t * *mi / (vi.sqrt() + self.cfg.eps);
            }
        }
    }
}

/// Scalar Adam for single tunable values such as the entropy temperature.
#[derive(Debug, Clone)]
pub struct ScalarAdam {
    pub cfg: AdamConfig,
    step: u64,
    m: f64,
    v: f64,
}

impl ScalarAdam {
    pub fn new(cfg: AdamConfig) -> Self {
        ScalarAdam { cfg, step: 0, m: 0.0, v: 0.0 }
    }

    pub fn step(&mut self, param: &mut f64, grad: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        let lr_t = self.cfg.lr * bc2.sqrt() / bc1;
        self.m = self.cfg.beta1 * self.m + (1.0 - self.cfg.beta1) * grad;
        self.v = self.cfg.beta2 * self.v + (1.0 - self.cfg.beta2) * grad * grad;
        *param -= lr_t * self.m / (self.v.sqrt() + self.cfg.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::rng::Rng;

    #[test]
    fn zero_lr_leaves_params_unchanged() {
        let mut rng = Rng::new(4);
        let mut net = MlpNetwork::new(&[2, 4, 1], &mut rng);
        let before = net.layers()[0].w.clone();
        let mut grads = Gradients::zeros_like(&net);
        grads.layers[0].w.fill(1.0);
        let mut adam = AdamState::new(&net, AdamConfig { lr: 0.0, ..Default::default() });
        adam.step(&mut net, &grads);
        assert_eq!(net.layers()[0].w, before);
        assert_eq!(adam.step_count(), 1);
    }
}
