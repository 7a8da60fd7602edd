//! Mini-batch training of the transformer forecaster.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::{mse, Adam, Transformer, TransformerConfig};
use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement of `min_delta` before
    /// stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-3, batch_size: 64, max_epochs: 200, patience: 10, min_delta: 1e-5, val_fraction: 0.2, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Validation loss before the first update.
    pub initial_val_loss: f64,
    /// Mean mini-batch loss per epoch (dropout active).
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

const EVAL_CHUNK: usize = 256;

/// Scaled predictions for every window in `data`.
pub fn predict_all(model: &Transformer, data: &Dataset, exec: Execution) -> Result<Vec<f64>> {
    let wl = data.window_len();
    let chunks: Vec<(usize, usize)> = (0..data.len()).step_by(EVAL_CHUNK).map(|s| (s, (s + EVAL_CHUNK).min(data.len()))).collect();
    let parts = par::map(exec, chunks, |(a, b)| model.predict(&data.inputs[a * wl..b * wl], b - a));
    let mut out = Vec::with_capacity(data.targets.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn eval_loss(model: &Transformer, data: &Dataset, exec: Execution) -> Result<f64> {
    Ok(mse(&predict_all(model, data, exec)?, &data.targets).0)
}

/// Trains on `train`, early-stops on `val` and returns the parameters of the
/// best validation epoch.
pub fn train_transformer(
    config: TransformerConfig,
    train: &Dataset,
    val: &Dataset,
    tc: &TrainConfig,
    exec: Execution,
) -> Result<(Transformer, TrainOutcome)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Dimension("empty training or validation split".into()));
    }
    if config.n_features != train.n_features || config.n_outputs != train.n_outputs {
        return Err(Error::Dimension(format!(
            "model expects {} features / {} outputs, data has {} / {}",
            config.n_features, config.n_outputs, train.n_features, train.n_outputs
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut model = Transformer::new(config, &mut rng)?;
    let mut opt = Adam::new(tc.lr, model.n_params());
    let initial_val_loss = eval_loss(&model, val, exec)?;
    let mut best = (initial_val_loss, model.params.data.clone(), 0usize);
    let mut reference = initial_val_loss;
    let mut stale = 0;
    let mut train_losses = Vec::new();
    let mut val_losses = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let (wl, no) = (train.window_len(), train.n_outputs);
    let mut xb = Vec::with_capacity(tc.batch_size * wl);
    let mut yb = Vec::with_capacity(tc.batch_size * no);
    for epoch in 1..=tc.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for idx in order.chunks(tc.batch_size) {
            xb.clear();
            yb.clear();
            for &i in idx {
                xb.extend_from_slice(train.input(i));
                yb.extend_from_slice(train.target(i));
            }
            let (out, cache) = model.forward(&xb, idx.len(), Some(&mut rng))?;
            let (loss, dout) = mse(&out, &yb);
            if !loss.is_finite() {
                return Err(Error::NonFinite { loss, context: format!("predictor epoch {epoch}, batch {batches}") });
            }
            let grad = model.backward(&cache, &dout);
            opt.step(&mut model.params.data, &grad);
            sum += loss;
            batches += 1;
        }
        let val_loss = eval_loss(&model, val, exec)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite { loss: val_loss, context: format!("predictor validation, epoch {epoch}") });
        }
        train_losses.push(sum / batches as f64);
        val_losses.push(val_loss);
        log::debug!("epoch {epoch}: train {:.6} val {val_loss:.6}", sum / batches as f64);
        if val_loss < best.0 {
            best = (val_loss, model.params.data.clone(), epoch);
        }
        if val_loss < reference - tc.min_delta {
            reference = val_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= tc.patience {
                break;
            }
        }
    }
    model.params.data = best.1;
    let outcome = TrainOutcome { initial_val_loss, train_losses, val_losses, best_epoch: best.2, best_val_loss: best.0 };
    Ok((model, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::linear::LinearPredictor;
    use crate::predictor::nrmse::nrmse;
    use rand::Rng;

    fn small_config() -> TransformerConfig {
        TransformerConfig { n_features: 2, seq_len: 8, model_dim: 12, heads: 2, ff_dim: 24, blocks: 1, dropout: vec![0.0], n_outputs: 2 }
    }

    fn linear_data(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ds = Dataset { n_features: 2, n_outputs: 2, ..Default::default() };
        for _ in 0..n {
            let x: Vec<f64> = (0..16).map(|_| rng.random::<f64>()).collect();
            let m = x.iter().sum::<f64>() / 16.0;
            let odd = x.iter().skip(1).step_by(2).sum::<f64>() / 8.0;
            ds.targets.push(0.2 + 0.6 * m + 0.05 * (rng.random::<f64>() - 0.5));
            ds.targets.push(0.8 - 0.5 * odd + 0.05 * (rng.random::<f64>() - 0.5));
            ds.inputs.extend(x);
        }
        ds
    }

    #[test]
    fn improves_and_is_deterministic() {
        let data = linear_data(600, 0);
        let (train, val) = data.split(0.8);
        let tc = TrainConfig { max_epochs: 40, batch_size: 32, ..Default::default() };
        let (model, out) = train_transformer(small_config(), &train, &val, &tc, Execution::Sequential).unwrap();
        assert!(out.best_val_loss <= out.initial_val_loss);
        let (_, again) = train_transformer(small_config(), &train, &val, &tc, Execution::Parallel).unwrap();
        assert_eq!(out, again);
        // within 2x of the least-squares fit on linearly generated data
        let lp = LinearPredictor::fit(&train).unwrap();
        let lin = nrmse(&lp.predict(&val.inputs, val.len()).unwrap(), &val.targets, 2).mean;
        let tf = nrmse(&predict_all(&model, &val, Execution::Sequential).unwrap(), &val.targets, 2).mean;
        assert!(tf <= 2.0 * lin, "transformer {tf} vs linear {lin}");
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let data = linear_data(50, 1);
        let (train, val) = data.split(0.8);
        let cfg = TransformerConfig { n_features: 3, ..small_config() };
        assert!(train_transformer(cfg, &train, &val, &TrainConfig::default(), Execution::Sequential).is_err());
    }
}
