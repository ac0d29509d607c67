//! Minimal dense feed-forward network with manual backpropagation.
//! Hidden layers use ReLU; the final layer is linear. Heads (Gaussian
//! splits, tanh squashing, bounded log-stds) are applied by callers on the
//! raw outputs so that one backward pass serves every loss in the artifact.

use super::matrix::{axpy, Matrix};
use super::rng::Rng;

#[derive(Debug, Clone)]
pub struct DenseLayer {
    /// out×in weight matrix.
    pub w: Matrix,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpNetwork {
    layers: Vec<DenseLayer>,
    sizes: Vec<usize>,
}

/// Per-layer parameter gradients, shaped like the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<DenseLayer>,
}

impl Gradients {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| DenseLayer { w: Matrix::zeros(l.w.rows(), l.w.cols()), b: vec![0.0; l.b.len()] })
                .collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            a.w.add_scaled(&b.w, 1.0);
            for (x, y) in a.b.iter_mut().zip(b.b.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in self.layers.iter_mut() {
            l.w.scale(s);
            l.b.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.all_finite() && l.b.iter().all(|v| v.is_finite()))
    }
}

/// Post-activation values per layer from a cached forward pass.
#[derive(Debug)]
pub struct ForwardCache {
    /// acts[l] is the output of layer l after its activation;
    /// acts[last] is the raw linear output.
    pub acts: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.acts.last().expect("empty cache")
    }
}

impl MlpNetwork {
    /// `sizes` = [input, hidden.., output]. Weights and biases start uniform
    /// in ±1/√fan_in.
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for win in sizes.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = Matrix::from_fn(fan_out, fan_in, |_, _| rng.uniform(-bound, bound));
            let b = (0..fan_out).map(|_| rng.uniform(-bound, bound)).collect();
            layers.push(DenseLayer { w, b });
        }
        MlpNetwork { layers, sizes: sizes.to_vec() }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2);
        let layers = sizes
            .windows(2)
            .map(|win| DenseLayer { w: Matrix::zeros(win[1], win[0]), b: vec![0.0; win[1]] })
            .collect();
        MlpNetwork { layers, sizes: sizes.to_vec() }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut Vec<DenseLayer> {
        &mut self.layers
    }

    /// Scale the last layer's parameters; small final layers keep early
    /// policy outputs near zero.
    pub fn scale_final_layer(&mut self, s: f64) {
        let l = self.layers.last_mut().unwrap();
        l.w.scale(s);
        l.b.iter_mut().for_each(|v| *v *= s);
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.rows() * l.w.cols() + l.b.len()).sum()
    }

    pub fn get_param(&self, idx: usize) -> f64 {
        let (l, o, j) = self.locate(idx);
        match j {
            Some(j) => self.layers[l].w[(o, j)],
            None => self.layers[l].b[o],
        }
    }

    pub fn set_param(&mut self, idx: usize, v: f64) {
        let (l, o, j) = self.locate(idx);
        match j {
            Some(j) => self.layers[l].w[(o, j)] = v,
            None => self.layers[l].b[o] = v,
        }
    }

    pub fn get_grad(grads: &Gradients, idx: usize, net: &MlpNetwork) -> f64 {
        let (l, o, j) = net.locate(idx);
        match j {
            Some(j) => grads.layers[l].w[(o, j)],
            None => grads.layers[l].b[o],
        }
    }

    fn locate(&self, mut idx: usize) -> (usize, usize, Option<usize>) {
        for (l, layer) in self.layers.iter().enumerate() {
            let nw = layer.w.rows() * layer.w.cols();
            if idx < nw {
                return (l, idx / layer.w.cols(), Some(idx % layer.w.cols()));
            }
            idx -= nw;
            if idx < layer.b.len() {
                return (l, idx, None);
            }
            idx -= layer.b.len();
        }
        panic!("parameter index out of range");
    }

    /// Batched forward pass; row i of the result is the network applied to
    /// row i of `inputs`.
    pub fn forward(&self, inputs: &Matrix) -> Matrix {
        self.forward_cached(inputs).acts.pop().unwrap()
    }

    pub fn forward_cached(&self, inputs: &Matrix) -> ForwardCache {
        assert_eq!(inputs.cols(), self.input_dim(), "input width mismatch");
        let n_layers = self.layers.len();
        let mut acts = Vec::with_capacity(n_layers);
        let mut cur = inputs;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = cur.matmul_nt(&layer.w);
            for i in 0..z.rows() {
                let row = z.row_mut(i);
                for (v, &bias) in row.iter_mut().zip(layer.b.iter()) {
                    *v += bias;
                }
            }
            if l + 1 < n_layers {
                z.data_mut().iter_mut().for_each(|v| {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                });
            }
            acts.push(z);
            cur = acts.last().unwrap();
        }
        ForwardCache { acts }
    }

    /// Backpropagate `dl_dout` (B×out). Returns parameter gradients and the
    /// gradient with respect to the inputs, which lets losses chain across
    /// networks (e.g. a critic feeding an actor update).
    pub fn backward(&self, inputs: &Matrix, cache: &ForwardCache, dl_dout: &Matrix) -> (Gradients, Matrix) {
        let batch = inputs.rows();
        assert_eq!(dl_dout.rows(), batch);
        assert_eq!(dl_dout.cols(), self.output_dim());
        let mut grads = Gradients::zeros_like(self);
        let mut delta = dl_dout.clone();
        for l in (0..self.layers.len()).rev() {
            let layer_input: &Matrix = if l == 0 { inputs } else { &cache.acts[l - 1] };
            {
                let g = &mut grads.layers[l];
                for i in 0..batch {
                    let d_row = delta.row(i);
                    let in_row = layer_input.row(i);
                    for (o, &d) in d_row.iter().enumerate() {
                        if d != 0.0 {
                            axpy(g.w.row_mut(o), in_row, d);
                            g.b[o] += d;
                        }
                    }
                }
            }
            // dL/d(layer input), masked by the ReLU applied to that input.
            let w = &self.layers[l].w;
            let mut dx = Matrix::zeros(batch, w.cols());
            for i in 0..batch {
                let d_row = delta.row(i);
                let dx_row = dx.row_mut(i);
                for (o, &d) in d_row.iter().enumerate() {
                    if d != 0.0 {
                        axpy(dx_row, w.row(o), d);
                    }
                }
            }
            if l > 0 {
                let act = &cache.acts[l - 1];
                for (v, &a) in dx.data_mut().iter_mut().zip(act.data().iter()) {
                    if a <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            delta = dx;
        }
        (grads, delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_replicates_bias() {
        let mut net = MlpNetwork::zeros(&[3, 2]);
        net.layers_mut()[0].b = vec![0.5, -1.5];
        let x = Matrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64);
        let out = net.forward(&x);
        for i in 0..4 {
            assert_eq!(out.row(i), &[0.5, -1.5]);
        }
    }

    #[test]
    fn identity_single_layer() {
        let mut net = MlpNetwork::zeros(&[3, 3]);
        net.layers_mut()[0].w = Matrix::identity(3);
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0]]);
        let out = net.forward(&x);
        assert_eq!(out.row(0), x.row(0));
    }

    #[test]
    fn batched_matches_single_row() {
        let mut rng = Rng::new(11);
        let net = MlpNetwork::new(&[4, 8, 3], &mut rng);
        let batch = Matrix::from_fn(5, 4, |_, _| rng.uniform(-1.0, 1.0));
        let out = net.forward(&batch);
        for i in 0..5 {
            let single = Matrix::from_rows(&[batch.row(i).to_vec()]);
            let o = net.forward(&single);
            assert_eq!(out.row(i), o.row(0));
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = Rng::new(1);
        let net = MlpNetwork::new(&[4, 16, 2], &mut rng);
        let x = Matrix::from_fn(3, 4, |_, _| rng.uniform(-1.0, 1.0));
        let a = net.forward(&x);
        let b = net.forward(&x);
        for (u, v) in a.data().iter().zip(b.data().iter()) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn seeded_build_is_bit_identical() {
        let net1 = MlpNetwork::new(&[3, 8, 2], &mut Rng::new(99));
        let net2 = MlpNetwork::new(&[3, 8, 2], &mut Rng::new(99));
        for (l1, l2) in net1.layers().iter().zip(net2.layers().iter()) {
            for (a, b) in l1.w.data().iter().zip(l2.w.data().iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
