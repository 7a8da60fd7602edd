use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature min-max scaling of `ln(x + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl LogMinMaxScaler {
    /// Fits on row-major `rows x n_features` data.
    pub fn fit(data: &[f64], n_features: usize) -> Result<Self> {
        if n_features == 0 || data.is_empty() || data.len() % n_features != 0 {
            return Err(Error::Dimension(format!("{} values do not form rows of {n_features}", data.len())));
        }
        let mut min = vec![f64::INFINITY; n_features];
        let mut max = vec![f64::NEG_INFINITY; n_features];
        for row in data.chunks_exact(n_features) {
            for (j, &x) in row.iter().enumerate() {
                if !(x >= 0.0) || !x.is_finite() {
                    return Err(Error::Contract(format!("scaler input must be finite and non-negative, got {x}")));
                }
                let l = x.ln_1p();
                min[j] = min[j].min(l);
                max[j] = max[j].max(l);
            }
        }
        Ok(Self { min, max })
    }

    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    /// Maps a raw value of `feature` into `[0, 1]` (within the fitted range).
    /// Constant features map to 0.
    pub fn scale(&self, feature: usize, x: f64) -> f64 {
        let span = self.max[feature] - self.min[feature];
        if span <= 0.0 {
            return 0.0;
        }
        (x.max(0.0).ln_1p() - self.min[feature]) / span
    }

    /// Inverse of [`scale`](Self::scale); the input is clamped to `[0, 1]`
    /// first so out-of-range model outputs stay within the training range.
    pub fn unscale(&self, feature: usize, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        let span = (self.max[feature] - self.min[feature]).max(0.0);
        (self.min[feature] + s * span).exp_m1()
    }

    pub fn scale_row(&self, row: &[f64], out: &mut Vec<f64>) {
        out.extend(row.iter().enumerate().map(|(j, &x)| self.scale(j, x)));
    }
}
