//! Congestion forecasting: per-path CWND and SRTT at 100 to 500 ms ahead
//! from the last eight telemetry bins.

pub mod dataset;
pub mod linear;
pub mod nrmse;
pub mod scaler;
pub mod train;

use serde::{Deserialize, Serialize};

pub use dataset::{collect_telemetry, fit_scaler, target_index, Dataset, PredictionSet, FAR, HORIZONS, MID, WINDOW};
pub use linear::LinearPredictor;
pub use nrmse::{nrmse, NrmseReport};
pub use scaler::LogMinMaxScaler;
pub use train::{predict_all, train_transformer, TrainConfig, TrainOutcome};

use crate::error::{Error, Result};
use crate::netsim::telemetry::METRICS_PER_PATH;
use crate::netsim::TelemetryBin;
use crate::nn::Transformer;
use crate::par::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
pub enum Model {
    Linear(LinearPredictor),
    Transformer(Transformer),
}

/// A trained forecaster together with the scaler it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub n_paths: usize,
    pub scaler: LogMinMaxScaler,
    pub model: Model,
}

impl Predictor {
    pub fn new(n_paths: usize, scaler: LogMinMaxScaler, model: Model) -> Result<Self> {
        if scaler.n_features() != n_paths * METRICS_PER_PATH {
            return Err(Error::Dimension(format!("scaler has {} features for {n_paths} paths", scaler.n_features())));
        }
        let p = Self { n_paths, scaler, model };
        p.check_model()?;
        Ok(p)
    }

    fn check_model(&self) -> Result<()> {
        let (inp, out) = match &self.model {
            Model::Linear(l) => (l.n_inputs, l.n_outputs),
            Model::Transformer(t) => (t.window_len(), t.config.n_outputs),
        };
        let want = (WINDOW * self.scaler.n_features(), dataset::outputs_for(self.n_paths));
        if (inp, out) != want {
            return Err(Error::Dimension(format!("model maps {inp} -> {out}, expected {} -> {}", want.0, want.1)));
        }
        Ok(())
    }

    /// Finishes deserialisation.
    pub fn restore(self) -> Result<Self> {
        let model = match self.model {
            Model::Transformer(t) => Model::Transformer(t.restore()?),
            m => m,
        };
        let p = Self { model, ..self };
        p.check_model()?;
        Ok(p)
    }

    pub fn arch(&self) -> &'static str {
        match self.model {
            Model::Linear(_) => "linear",
            Model::Transformer(_) => "transformer",
        }
    }

    /// Scaled outputs for `batch` scaled windows.
    pub fn predict_scaled(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        match &self.model {
            Model::Linear(l) => l.predict(x, batch),
            Model::Transformer(t) => t.predict(x, batch),
        }
    }

    /// Forecast from the last [`WINDOW`] bins of `history`.
    pub fn predict(&self, history: &[TelemetryBin]) -> Result<PredictionSet> {
        if history.len() < WINDOW {
            return Err(Error::Dimension(format!("need {WINDOW} bins of history, got {}", history.len())));
        }
        let mut x = Vec::with_capacity(WINDOW * self.scaler.n_features());
        for bin in &history[history.len() - WINDOW..] {
            if bin.paths.len() != self.n_paths {
                return Err(Error::Dimension(format!("telemetry has {} paths, predictor {}", bin.paths.len(), self.n_paths)));
            }
            self.scaler.scale_row(&bin.features(), &mut x);
        }
        let out = self.predict_scaled(&x, 1)?;
        PredictionSet::from_scaled(&out, &self.scaler, self.n_paths)
    }

    pub fn evaluate(&self, data: &Dataset, exec: Execution) -> Result<NrmseReport> {
        let pred = match &self.model {
            Model::Linear(l) => l.predict(&data.inputs, data.len())?,
            Model::Transformer(t) => predict_all(t, data, exec)?,
        };
        Ok(nrmse(&pred, &data.targets, data.n_outputs))
    }
}

/// Mean NRMSE of the outputs at horizon index `h` (0 = 100 ms).
pub fn horizon_nrmse(report: &NrmseReport, n_paths: usize, h: usize) -> f64 {
    let vals: Vec<f64> = (0..n_paths)
        .flat_map(|p| [target_index(p, h, false), target_index(p, h, true)])
        .map(|i| report.per_output[i])
        .filter(|v| v.is_finite())
        .collect();
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}
