use serde::{Deserialize, Serialize};

/// Per-output NRMSE and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NrmseReport {
    pub per_output: Vec<f64>,
    pub mean: f64,
}

/// RMSE over samples divided by the range of the truth, per output column,
/// then averaged. Columns whose truth is constant have no defined range and
/// are reported as NaN and left out of the mean.
pub fn nrmse(pred: &[f64], truth: &[f64], n_outputs: usize) -> NrmseReport {
    assert_eq!(pred.len(), truth.len());
    assert!(n_outputs > 0 && truth.len() % n_outputs == 0);
    let n = truth.len() / n_outputs;
    let mut per_output = Vec::with_capacity(n_outputs);
    for c in 0..n_outputs {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut sq = 0.0;
        for i in 0..n {
            let t = truth[i * n_outputs + c];
            lo = lo.min(t);
            hi = hi.max(t);
            sq += (pred[i * n_outputs + c] - t).powi(2);
        }
        let range = hi - lo;
        per_output.push(if range > 0.0 { (sq / n as f64).sqrt() / range } else { f64::NAN });
    }
    let valid: Vec<f64> = per_output.iter().copied().filter(|v| v.is_finite()).collect();
    let mean = if valid.is_empty() { 0.0 } else { valid.iter().sum::<f64>() / valid.len() as f64 };
    NrmseReport { per_output, mean }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_is_zero() {
        let t = [0.1, 0.5, 0.9, 0.3];
        assert_eq!(nrmse(&t, &t, 2).mean, 0.0);
    }

    #[test]
    fn constant_offset() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 / 7.0).collect();
        let range = t[49] - t[0];
        let p: Vec<f64> = t.iter().map(|v| v + 0.3).collect();
        assert!((nrmse(&p, &t, 1).mean - 0.3 / range).abs() < 1e-12);
    }

    #[test]
    fn constant_predictor_on_uniform_grid() {
        // truth 0, 1/(n-1), ..., 1 against a constant 0.5: RMSE is the
        // population standard deviation of the grid
        let n = 101;
        let t: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let p = vec![0.5; n];
        let var = t.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>() / n as f64;
        let direct = ((n as f64 + 1.0) / (12.0 * (n as f64 - 1.0))).sqrt();
        assert!((var.sqrt() - direct).abs() < 1e-12);
        assert!((nrmse(&p, &t, 1).mean - direct).abs() < 1e-12);
    }
}
