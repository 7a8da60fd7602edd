//! Least-squares linear forecaster.

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// Ridge strength used when the design matrix is rank deficient.
pub const RIDGE_FALLBACK: f64 = 1e-6;
const RANK_TOL: f64 = 1e-10;

/// Affine map from a flattened window (plus bias) to all forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictor {
    pub n_inputs: usize,
    pub n_outputs: usize,
    /// `(n_inputs + 1) x n_outputs`, bias row last.
    pub weights: Vec<f64>,
    pub ridge_used: bool,
}

/// Solves `min ||A x - B||` by Householder QR. `a` is column-major
/// `rows x cols`, `b` column-major `rows x k`. Returns the column-major
/// `cols x k` solution, or `None` when `R` has a (near-)zero pivot.
fn qr_solve(mut a: Vec<f64>, rows: usize, cols: usize, mut b: Vec<f64>, k: usize) -> Option<Vec<f64>> {
    let mut diag = vec![0.0; cols];
    for j in 0..cols {
        let col = &mut a[j * rows..(j + 1) * rows];
        let norm = col[j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        let alpha = if col[j] > 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in place of the column
        col[j] -= alpha;
        let vnorm2 = col[j..].iter().map(|v| v * v).sum::<f64>();
        diag[j] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        let (head, tail) = a.split_at_mut((j + 1) * rows);
        let v = &head[j * rows + j..(j + 1) * rows];
        for c in tail.chunks_exact_mut(rows) {
            let s = 2.0 * v.iter().zip(&c[j..]).map(|(x, y)| x * y).sum::<f64>() / vnorm2;
            c[j..].iter_mut().zip(v).for_each(|(y, x)| *y -= s * x);
        }
        for c in b.chunks_exact_mut(rows) {
            let s = 2.0 * v.iter().zip(&c[j..]).map(|(x, y)| x * y).sum::<f64>() / vnorm2;
            c[j..].iter_mut().zip(v).for_each(|(y, x)| *y -= s * x);
        }
    }
    let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if diag.iter().any(|d| d.abs() <= RANK_TOL * scale) {
        return None;
    }
    // back substitution with R (diag on `diag`, strict upper part in `a`)
    let mut x = vec![0.0; cols * k];
    for c in 0..k {
        let rhs = &b[c * rows..(c + 1) * rows];
        for i in (0..cols).rev() {
            let mut s = rhs[i];
            for l in i + 1..cols {
                s -= a[l * rows + i] * x[c * cols + l];
            }
            x[c * cols + i] = s / diag[i];
        }
    }
    Some(x)
}

impl LinearPredictor {
    pub fn fit(data: &Dataset) -> Result<Self> {
        let n = data.len();
        let m = data.window_len() + 1;
        let k = data.n_outputs;
        if n < m {
            return Err(Error::Dimension(format!("linear fit needs at least {m} windows, got {n}")));
        }
        let design = |extra: usize| {
            let rows = n + extra;
            let mut a = vec![0.0; rows * m];
            for i in 0..n {
                for (j, &v) in data.input(i).iter().enumerate() {
                    a[j * rows + i] = v;
                }
                a[(m - 1) * rows + i] = 1.0;
            }
            let mut b = vec![0.0; rows * k];
            for i in 0..n {
                for (c, &v) in data.target(i).iter().enumerate() {
                    b[c * rows + i] = v;
                }
            }
            (a, b)
        };
        let (a, b) = design(0);
        let (x, ridge_used) = match qr_solve(a, n, m, b, k) {
            Some(x) => (x, false),
            None => {
                log::warn!("linear fit: design matrix is rank deficient, using ridge {RIDGE_FALLBACK}");
                let rows = n + m;
                let (mut a, b) = design(m);
                let r = RIDGE_FALLBACK.sqrt();
                for j in 0..m {
                    a[j * rows + n + j] = r;
                }
                let x = qr_solve(a, rows, m, b, k).ok_or_else(|| Error::Dimension("ridge system is singular".into()))?;
                (x, true)
            }
        };
        let mut weights = vec![0.0; m * k];
        for c in 0..k {
            for j in 0..m {
                weights[j * k + c] = x[c * m + j];
            }
        }
        Ok(Self { n_inputs: m - 1, n_outputs: k, weights, ridge_used })
    }

    /// Scaled forecasts for `batch` flattened windows.
    pub fn predict(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        if x.len() != batch * self.n_inputs {
            return Err(Error::Shape { expected: format!("{batch} x {}", self.n_inputs), got: x.len().to_string() });
        }
        let bias = &self.weights[self.n_inputs * self.n_outputs..];
        Ok(crate::nn::affine(x, batch, &self.weights[..self.n_inputs * self.n_outputs], bias, self.n_inputs, self.n_outputs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::nrmse::nrmse;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(n: usize, f: impl Fn(&[f64], usize) -> f64, rng: &mut ChaCha8Rng) -> Dataset {
        let mut ds = Dataset { n_features: 2, n_outputs: 3, ..Default::default() };
        for _ in 0..n {
            let x: Vec<f64> = (0..16).map(|_| rng.random::<f64>()).collect();
            for c in 0..3 {
                ds.targets.push(f(&x, c));
            }
            ds.inputs.extend(x);
        }
        ds
    }

    #[test]
    fn recovers_exact_linear_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ds = dataset(200, |x, c| 0.1 * c as f64 + x.iter().enumerate().map(|(i, v)| v * ((i + c) as f64).sin()).sum::<f64>(), &mut rng);
        let lp = LinearPredictor::fit(&ds).unwrap();
        assert!(!lp.ridge_used);
        let pred = lp.predict(&ds.inputs, ds.len()).unwrap();
        assert!(nrmse(&pred, &ds.targets, 3).mean <= 1e-8);
    }

    #[test]
    fn constant_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ds = dataset(100, |_, c| 0.25 + c as f64, &mut rng);
        let lp = LinearPredictor::fit(&ds).unwrap();
        let out = lp.predict(&ds.inputs[..16], 1).unwrap();
        for (c, v) in out.iter().enumerate() {
            assert!((v - (0.25 + c as f64)).abs() < 1e-9);
        }
    }

    #[test]
    fn rank_deficiency_falls_back_to_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ds = dataset(100, |x, _| x[0], &mut rng);
        // a constant column duplicates the bias
        for i in 0..ds.len() {
            ds.inputs[i * 16 + 5] = 1.0;
        }
        let lp = LinearPredictor::fit(&ds).unwrap();
        assert!(lp.ridge_used);
        let pred = lp.predict(&ds.inputs, ds.len()).unwrap();
        assert!(nrmse(&pred, &ds.targets, 3).mean < 1e-5);
    }

    #[test]
    fn too_few_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(LinearPredictor::fit(&dataset(10, |x, _| x[0], &mut rng)).is_err());
    }

    #[test]
    fn beats_last_value_on_ar1() {
        // x_t = 0.3 + 0.6 (x_{t-1} - 0.3) + noise; one feature, one target
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut series = vec![0.3];
        for _ in 0..3000 {
            let prev = *series.last().unwrap();
            series.push(0.3 + 0.6 * (prev - 0.3) + 0.05 * (rng.random::<f64>() - 0.5));
        }
        let mut ds = Dataset { n_features: 1, n_outputs: 1, ..Default::default() };
        let mut lvcf = Vec::new();
        for end in 8..series.len() {
            ds.inputs.extend_from_slice(&series[end - 8..end]);
            ds.targets.push(series[end]);
            lvcf.push(series[end - 1]);
        }
        let lp = LinearPredictor::fit(&ds).unwrap();
        let pred = lp.predict(&ds.inputs, ds.len()).unwrap();
        assert!(nrmse(&pred, &ds.targets, 1).mean <= nrmse(&lvcf, &ds.targets, 1).mean);
    }
}
