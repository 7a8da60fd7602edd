//! Encoder-only transformer regressor with an exact backward pass.
//!
//! Input projection plus sinusoidal positions, pre-LN blocks (multi-head
//! self-attention, then a GELU feed-forward layer, each with a residual and
//! dropout on the sublayer output), mean pooling over positions and a linear
//! head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Linear;
use super::params::Params;
use crate::error::{Error, Result};

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformerConfig {
    pub n_features: usize,
    pub seq_len: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub blocks: usize,
    /// Dropout rate per block.
    pub dropout: Vec<f64>,
    pub n_outputs: usize,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            n_features: 16,
            seq_len: 8,
            model_dim: 90,
            heads: 5,
            ff_dim: 360,
            blocks: 3,
            dropout: vec![0.10, 0.10, 0.15],
            n_outputs: 20,
        }
    }
}

impl TransformerConfig {
    /// The default configuration cut or extended to `blocks` blocks; extra
    /// blocks reuse the last dropout rate.
    pub fn with_depth(blocks: usize) -> Self {
        let base = Self::default();
        let last = *base.dropout.last().unwrap();
        let dropout = (0..blocks).map(|i| base.dropout.get(i).copied().unwrap_or(last)).collect();
        Self { blocks, dropout, ..base }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.model_dim % self.heads != 0 {
            return Err(Error::Config(format!("model_dim {} not divisible by {} heads", self.model_dim, self.heads)));
        }
        if self.dropout.len() != self.blocks {
            return Err(Error::Config(format!("{} dropout rates for {} blocks", self.dropout.len(), self.blocks)));
        }
        if self.dropout.iter().any(|d| !(0.0..1.0).contains(d)) {
            return Err(Error::Config("dropout rates must lie in [0, 1)".into()));
        }
        if self.n_features == 0 || self.seq_len == 0 || self.n_outputs == 0 || self.ff_dim == 0 {
            return Err(Error::Config("transformer dimensions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct LayerNorm {
    g: usize,
    b: usize,
    dim: usize,
}

impl LayerNorm {
    fn new(params: &mut Params, name: &str, dim: usize) -> Self {
        let g = params.add(format!("{name}.gamma"), 1, dim, || 1.0);
        let b = params.add(format!("{name}.beta"), 1, dim, || 0.0);
        Self { g, b, dim }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Block {
    ln1: LayerNorm,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

/// Normalised rows and their reciprocal standard deviations.
#[derive(Debug, Clone)]
pub struct LnCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

/// `y = xhat * gamma + beta` per row of width `dim`.
pub fn layer_norm(x: &[f64], dim: usize, gamma: &[f64], beta: &[f64]) -> (Vec<f64>, LnCache) {
    let rows = x.len() / dim;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * dim..(r + 1) * dim];
        let mean = row.iter().sum::<f64>() / dim as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / dim as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for j in 0..dim {
            let h = (row[j] - mean) * rs;
            xhat[r * dim + j] = h;
            y[r * dim + j] = h * gamma[j] + beta[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward(dy: &[f64], cache: &LnCache, dim: usize, gamma: &[f64], dg: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let mut dx = vec![0.0; dy.len()];
    let n = dim as f64;
    let mut dxhat = vec![0.0; dim];
    for (r, &rs) in cache.rstd.iter().enumerate() {
        let row = r * dim..(r + 1) * dim;
        let (dyr, xh) = (&dy[row.clone()], &cache.xhat[row.clone()]);
        let mut sum = 0.0;
        let mut sum_x = 0.0;
        for j in 0..dim {
            dg[j] += dyr[j] * xh[j];
            db[j] += dyr[j];
            dxhat[j] = dyr[j] * gamma[j];
            sum += dxhat[j];
            sum_x += dxhat[j] * xh[j];
        }
        for j in 0..dim {
            dx[r * dim + j] = rs / n * (n * dxhat[j] - sum - xh[j] * sum_x);
        }
    }
    dx
}

fn split_ln<'a>(grad: &'a mut [f64], ln: &LayerNorm) -> (&'a mut [f64], &'a mut [f64]) {
    let (lo, hi) = grad.split_at_mut(ln.b);
    (&mut lo[ln.g..ln.g + ln.dim], &mut hi[..ln.dim])
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2)) + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn sinusoidal_positions(seq_len: usize, dim: usize) -> Vec<f64> {
    let mut pe = vec![0.0; seq_len * dim];
    for t in 0..seq_len {
        for i in 0..dim {
            let freq = 1.0 / 10000f64.powf((i - i % 2) as f64 / dim as f64);
            let a = t as f64 * freq;
            pe[t * dim + i] = if i % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    pe
}

#[derive(Debug, Clone)]
struct BlockCache {
    ln1: LnCache,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    attn: Vec<f64>,
    mask1: Option<Vec<f64>>,
    ln2: LnCache,
    c: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
    mask2: Option<Vec<f64>>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct TransformerCache {
    batch: usize,
    x: Vec<f64>,
    blocks: Vec<BlockCache>,
    pooled: Vec<f64>,
}

impl TransformerCache {
    /// Attention weights of `block`, laid out `[batch][head][query][key]`.
    pub fn attention(&self, block: usize) -> &[f64] {
        &self.blocks[block].probs
    }

    /// Normalised (pre-affine) rows of the first layer norm in `block`.
    pub fn ln1_normalised(&self, block: usize) -> &[f64] {
        &self.blocks[block].ln1.xhat
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transformer {
    pub config: TransformerConfig,
    pub params: Params,
    input: Linear,
    blocks: Vec<Block>,
    head: Linear,
    #[serde(skip)]
    pe: Vec<f64>,
}

fn dropout_mask<R: Rng>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect()
}

impl Transformer {
    pub fn new<R: Rng>(config: TransformerConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.model_dim;
        let mut params = Params::new();
        let input = Linear::new(&mut params, "input", config.n_features, d, rng);
        let blocks = (0..config.blocks)
            .map(|i| {
                let n = |s: &str| format!("block{i}.{s}");
                Block {
                    ln1: LayerNorm::new(&mut params, &n("ln1"), d),
                    q: Linear::new(&mut params, &n("query"), d, d, rng),
                    k: Linear::new(&mut params, &n("key"), d, d, rng),
                    v: Linear::new(&mut params, &n("value"), d, d, rng),
                    o: Linear::new(&mut params, &n("attn_out"), d, d, rng),
                    ln2: LayerNorm::new(&mut params, &n("ln2"), d),
                    ff1: Linear::new(&mut params, &n("ff1"), d, config.ff_dim, rng),
                    ff2: Linear::new(&mut params, &n("ff2"), config.ff_dim, d, rng),
                }
            })
            .collect();
        let head = Linear::new(&mut params, "head", d, config.n_outputs, rng);
        let pe = sinusoidal_positions(config.seq_len, d);
        Ok(Self { config, params, input, blocks, head, pe })
    }

    /// Rebuilds derived state after deserialisation.
    pub fn restore(mut self) -> Result<Self> {
        self.config.validate()?;
        self.pe = sinusoidal_positions(self.config.seq_len, self.config.model_dim);
        Ok(self)
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn window_len(&self) -> usize {
        self.config.seq_len * self.config.n_features
    }

    /// Sets the output head to zero.
    pub fn zero_head(&mut self) {
        let len = self.head.inp * self.head.out;
        self.params.data[self.head.w..self.head.w + len].fill(0.0);
        self.params.data[self.head.b..self.head.b + self.head.out].fill(0.0);
    }

    /// Inference on `batch` windows of `seq_len x n_features`.
    pub fn predict(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self.forward_with::<rand_chacha::ChaCha8Rng>(&self.params.data, x, batch, None)?.0)
    }

    pub fn forward<R: Rng>(&self, x: &[f64], batch: usize, dropout_rng: Option<&mut R>) -> Result<(Vec<f64>, TransformerCache)> {
        self.forward_with(&self.params.data, x, batch, dropout_rng)
    }

    /// Forward pass with explicit parameters. Dropout is active only when an
    /// RNG is supplied.
    pub fn forward_with<R: Rng>(
        &self,
        p: &[f64],
        x: &[f64],
        batch: usize,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<(Vec<f64>, TransformerCache)> {
        let cfg = &self.config;
        if x.len() != batch * self.window_len() {
            return Err(Error::Shape {
                expected: format!("{batch} x {} x {}", cfg.seq_len, cfg.n_features),
                got: format!("{} values", x.len()),
            });
        }
        let (t, d) = (cfg.seq_len, cfg.model_dim);
        let rows = batch * t;
        let mut h = self.input.forward(p, x, rows);
        for (r, row) in h.chunks_exact_mut(d).enumerate() {
            let pos = &self.pe[(r % t) * d..(r % t + 1) * d];
            row.iter_mut().zip(pos).for_each(|(v, e)| *v += e);
        }
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (bi, blk) in self.blocks.iter().enumerate() {
            let ln = &blk.ln1;
            let (a, ln1) = layer_norm(&h, d, &p[ln.g..ln.g + d], &p[ln.b..ln.b + d]);
            let q = blk.q.forward(p, &a, rows);
            let k = blk.k.forward(p, &a, rows);
            let v = blk.v.forward(p, &a, rows);
            let (attn, probs) = self.attention(&q, &k, &v, batch);
            let mut z = blk.o.forward(p, &attn, rows);
            let rate = cfg.dropout[bi];
            let mask1 = dropout_rng.as_deref_mut().filter(|_| rate > 0.0).map(|rng| dropout_mask(z.len(), rate, rng));
            if let Some(m) = &mask1 {
                z.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
            }
            h.iter_mut().zip(&z).for_each(|(hv, zv)| *hv += zv);

            let ln = &blk.ln2;
            let (c, ln2) = layer_norm(&h, d, &p[ln.g..ln.g + d], &p[ln.b..ln.b + d]);
            let u = blk.ff1.forward(p, &c, rows);
            let g: Vec<f64> = u.iter().map(|&v| gelu(v)).collect();
            let mut y = blk.ff2.forward(p, &g, rows);
            let mask2 = dropout_rng.as_deref_mut().filter(|_| rate > 0.0).map(|rng| dropout_mask(y.len(), rate, rng));
            if let Some(m) = &mask2 {
                y.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
            }
            h.iter_mut().zip(&y).for_each(|(hv, yv)| *hv += yv);
            caches.push(BlockCache { ln1, a, q, k, v, probs, attn, mask1, ln2, c, u, g, mask2 });
        }
        let mut pooled = vec![0.0; batch * d];
        for b in 0..batch {
            for s in 0..t {
                let row = &h[(b * t + s) * d..(b * t + s + 1) * d];
                pooled[b * d..(b + 1) * d].iter_mut().zip(row).for_each(|(pv, hv)| *pv += hv / t as f64);
            }
        }
        let out = self.head.forward(p, &pooled, batch);
        Ok((out, TransformerCache { batch, x: x.to_vec(), blocks: caches, pooled }))
    }

    /// Scaled dot-product attention per window and head. Returns the
    /// concatenated head outputs and the attention weights.
    fn attention(&self, q: &[f64], k: &[f64], v: &[f64], batch: usize) -> (Vec<f64>, Vec<f64>) {
        let cfg = &self.config;
        let (t, d, nh, dh) = (cfg.seq_len, cfg.model_dim, cfg.heads, cfg.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = vec![0.0; batch * t * d];
        let mut probs = vec![0.0; batch * nh * t * t];
        for b in 0..batch {
            for hd in 0..nh {
                let col = hd * dh;
                for i in 0..t {
                    let qi = &q[(b * t + i) * d + col..(b * t + i) * d + col + dh];
                    let pr = &mut probs[((b * nh + hd) * t + i) * t..((b * nh + hd) * t + i + 1) * t];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..t {
                        let kj = &k[(b * t + j) * d + col..(b * t + j) * d + col + dh];
                        pr[j] = super::mat::dot(qi, kj) * scale;
                        max = max.max(pr[j]);
                    }
                    let mut sum = 0.0;
                    for s in pr.iter_mut() {
                        *s = (*s - max).exp();
                        sum += *s;
                    }
                    pr.iter_mut().for_each(|s| *s /= sum);
                    let oi = &mut out[(b * t + i) * d + col..(b * t + i) * d + col + dh];
                    for j in 0..t {
                        let vj = &v[(b * t + j) * d + col..(b * t + j) * d + col + dh];
                        oi.iter_mut().zip(vj).for_each(|(o, x)| *o += pr[j] * x);
                    }
                }
            }
        }
        (out, probs)
    }

    fn attention_backward(&self, dout: &[f64], c: &BlockCache, batch: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let cfg = &self.config;
        let (t, d, nh, dh) = (cfg.seq_len, cfg.model_dim, cfg.heads, cfg.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = vec![0.0; c.q.len()];
        let mut dk = vec![0.0; c.k.len()];
        let mut dv = vec![0.0; c.v.len()];
        let mut dp = vec![0.0; t];
        for b in 0..batch {
            for hd in 0..nh {
                let col = hd * dh;
                let at = |r: usize| (b * t + r) * d + col;
                for i in 0..t {
                    let pr = &c.probs[((b * nh + hd) * t + i) * t..((b * nh + hd) * t + i + 1) * t];
                    let doi = &dout[at(i)..at(i) + dh];
                    for j in 0..t {
                        dp[j] = super::mat::dot(doi, &c.v[at(j)..at(j) + dh]);
                        dv[at(j)..at(j) + dh].iter_mut().zip(doi).for_each(|(g, x)| *g += pr[j] * x);
                    }
                    let inner: f64 = pr.iter().zip(&dp).map(|(a, b)| a * b).sum();
                    for j in 0..t {
                        let ds = pr[j] * (dp[j] - inner) * scale;
                        for e in 0..dh {
                            dq[at(i) + e] += ds * c.k[at(j) + e];
                            dk[at(j) + e] += ds * c.q[at(i) + e];
                        }
                    }
                }
            }
        }
        (dq, dk, dv)
    }

    pub fn backward(&self, cache: &TransformerCache, dout: &[f64]) -> Vec<f64> {
        self.backward_with(&self.params.data, cache, dout)
    }

    /// Parameter gradient given the loss gradient at the output.
    pub fn backward_with(&self, p: &[f64], cache: &TransformerCache, dout: &[f64]) -> Vec<f64> {
        let cfg = &self.config;
        let (t, d) = (cfg.seq_len, cfg.model_dim);
        let batch = cache.batch;
        let rows = batch * t;
        let mut grad = vec![0.0; p.len()];
        let dpooled = self.head.backward(p, &cache.pooled, dout, batch, &mut grad, true).unwrap();
        let mut dh = vec![0.0; rows * d];
        for b in 0..batch {
            for s in 0..t {
                dh[(b * t + s) * d..(b * t + s + 1) * d]
                    .iter_mut()
                    .zip(&dpooled[b * d..(b + 1) * d])
                    .for_each(|(x, g)| *x = g / t as f64);
            }
        }
        for (blk, c) in self.blocks.iter().zip(&cache.blocks).rev() {
            let mut dy = dh.clone();
            if let Some(m) = &c.mask2 {
                dy.iter_mut().zip(m).for_each(|(g, k)| *g *= k);
            }
            let mut dg = blk.ff2.backward(p, &c.g, &dy, rows, &mut grad, true).unwrap();
            dg.iter_mut().zip(&c.u).for_each(|(g, &u)| *g *= gelu_grad(u));
            let dc = blk.ff1.backward(p, &c.c, &dg, rows, &mut grad, true).unwrap();
            let (gg, gb) = split_ln(&mut grad, &blk.ln2);
            let dln2 = layer_norm_backward(&dc, &c.ln2, d, &p[blk.ln2.g..blk.ln2.g + d], gg, gb);
            dh.iter_mut().zip(&dln2).for_each(|(a, b)| *a += b);

            let mut dz = dh.clone();
            if let Some(m) = &c.mask1 {
                dz.iter_mut().zip(m).for_each(|(g, k)| *g *= k);
            }
            let dattn = blk.o.backward(p, &c.attn, &dz, rows, &mut grad, true).unwrap();
            let (dq, dk, dv) = self.attention_backward(&dattn, c, batch);
            let mut da = blk.q.backward(p, &c.a, &dq, rows, &mut grad, true).unwrap();
            let dak = blk.k.backward(p, &c.a, &dk, rows, &mut grad, true).unwrap();
            let dav = blk.v.backward(p, &c.a, &dv, rows, &mut grad, true).unwrap();
            for ((a, k), v) in da.iter_mut().zip(&dak).zip(&dav) {
                *a += k + v;
            }
            let (gg, gb) = split_ln(&mut grad, &blk.ln1);
            let dln1 = layer_norm_backward(&da, &c.ln1, d, &p[blk.ln1.g..blk.ln1.g + d], gg, gb);
            dh.iter_mut().zip(&dln1).for_each(|(a, b)| *a += b);
        }
        self.input.backward(p, &cache.x, &dh, rows, &mut grad, false);
        grad
    }
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len());
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(p, y)| 2.0 * (p - y) / n).collect();
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> Transformer {
        Transformer::new(TransformerConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn window(seed: u64, batch: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..batch * 128).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn parameter_budget() {
        let m = model(0);
        assert_eq!(m.n_params(), 1530 + 3 * 98_370 + 1820);
    }

    #[test]
    fn output_shape_and_determinism() {
        let m = model(1);
        let x = window(2, 3);
        let a = m.predict(&x, 3).unwrap();
        assert_eq!(a.len(), 60);
        assert_eq!(a, m.predict(&x, 3).unwrap());
        assert!(m.predict(&x[..100], 1).is_err());
    }

    #[test]
    fn zero_head_gives_zero_output() {
        let mut m = model(3);
        m.zero_head();
        assert!(m.predict(&vec![0.0; 128], 1).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let m = model(4);
        let (_, cache) = m.forward::<ChaCha8Rng>(&window(5, 2), 2, None).unwrap();
        for b in 0..3 {
            for row in cache.attention(b).chunks_exact(8) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn layer_norm_rows_are_standardised() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..16 * 90).map(|i| (i % 7) as f64 * 3.0 + rng.random::<f64>() * 20.0).collect();
        let (_, cache) = layer_norm(&x, 90, &[1.0; 90], &[0.0; 90]);
        for row in cache.xhat.chunks_exact(90) {
            let mean = row.iter().sum::<f64>() / 90.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 90.0;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-5, "{var}");
        }
    }

    #[test]
    fn dropout_only_in_training() {
        let m = model(8);
        let x = window(9, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (train, _) = m.forward(&x, 1, Some(&mut rng)).unwrap();
        assert_ne!(train, m.predict(&x, 1).unwrap());
    }

    #[test]
    fn gelu_matches_reference_values() {
        // Phi(1) = 0.841344746...
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert_eq!(gelu(0.0), 0.0);
        let h = 1e-6;
        for x in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }
}
