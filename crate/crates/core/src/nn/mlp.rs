use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mat::{affine, affine_backward};
use super::params::Params;

/// Dense layer view into a [`Params`] buffer; weights are `in x out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub inp: usize,
    pub out: usize,
}

impl Linear {
    pub fn new<R: Rng>(params: &mut Params, name: &str, inp: usize, out: usize, rng: &mut R) -> Self {
        let w = params.add_uniform(format!("{name}.weight"), inp, out, inp, rng);
        let b = params.add_uniform(format!("{name}.bias"), 1, out, inp, rng);
        Self { w, b, inp, out }
    }

    pub fn weight<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.w..self.w + self.inp * self.out]
    }

    pub fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.b..self.b + self.out]
    }

    pub fn forward(&self, p: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
        affine(x, rows, self.weight(p), self.bias(p), self.inp, self.out)
    }

    /// Accumulates parameter gradients into `grad`.
    pub fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], rows: usize, grad: &mut [f64], need_dx: bool) -> Option<Vec<f64>> {
        // weight and bias live in disjoint ranges of `grad`
        let (lo, hi) = grad.split_at_mut(self.b);
        let dw = &mut lo[self.w..self.w + self.inp * self.out];
        let db = &mut hi[..self.out];
        affine_backward(x, dy, rows, self.weight(p), self.inp, self.out, dw, db, need_dx)
    }
}

/// Fully connected network with ReLU between layers and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub layers: Vec<Linear>,
    pub params: Params,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    rows: usize,
    /// Input of each layer (post-activation of the previous one).
    inputs: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let mut params = Params::new();
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&mut params, &format!("layer{i}"), w[0], w[1], rng))
            .collect();
        Self { sizes: sizes.to_vec(), layers, params }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        self.forward_with(&self.params.data, x, rows).0
    }

    pub fn forward_cached(&self, x: &[f64], rows: usize) -> (Vec<f64>, MlpCache) {
        self.forward_with(&self.params.data, x, rows)
    }

    /// Forward pass with an explicit parameter vector of this layout.
    pub fn forward_with(&self, p: &[f64], x: &[f64], rows: usize) -> (Vec<f64>, MlpCache) {
        assert_eq!(x.len(), rows * self.input_dim(), "input shape");
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(p, &h, rows);
            if i + 1 < self.layers.len() {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut h, y));
        }
        (h, MlpCache { rows, inputs })
    }

    /// Gradient of the loss with respect to every parameter, given the loss
    /// gradient at the output.
    pub fn backward(&self, cache: &MlpCache, dout: &[f64]) -> Vec<f64> {
        self.backward_with(&self.params.data, cache, dout)
    }

    pub fn backward_with(&self, p: &[f64], cache: &MlpCache, dout: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; p.len()];
        let mut dy = dout.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.inputs[i];
            let dx = layer.backward(p, x, &dy, cache.rows, &mut grad, i > 0);
            if let Some(mut dx) = dx {
                // x is the ReLU output of the previous layer
                for (d, v) in dx.iter_mut().zip(x) {
                    if *v <= 0.0 {
                        *d = 0.0;
                    }
                }
                dy = dx;
            }
        }
        grad
    }

    /// Bit pattern of ReLU activity, used to skip finite-difference probes
    /// that straddle a kink.
    pub fn activation_signature(&self, cache: &MlpCache) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for x in cache.inputs.iter().skip(1) {
            for v in x {
                (*v > 0.0).hash(&mut h);
            }
        }
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_and_parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = Mlp::new(&[18, 256, 256, 25], &mut rng);
        assert_eq!(q.params.len(), 18 * 256 + 256 + 256 * 256 + 256 + 256 * 25 + 25);
        assert_eq!(q.forward(&[0.1; 36], 2).len(), 50);
    }

    #[test]
    fn single_layer_is_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Mlp::new(&[3, 2], &mut rng);
        let x = [1.0, -2.0, 0.5];
        let y = m.forward(&x, 1);
        let w = m.layers[0].weight(&m.params.data);
        let b = m.layers[0].bias(&m.params.data);
        for j in 0..2 {
            let want = b[j] + (0..3).map(|i| x[i] * w[i * 2 + j]).sum::<f64>();
            assert!((y[j] - want).abs() < 1e-14);
        }
    }
}
