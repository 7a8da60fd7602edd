//! Agent observation vector.
//!
//! Layout for `N` paths (`9N` entries):
//! `[w_p, tau_p]` per path, then mid-horizon deltas `[dw, dtau]` per path,
//! far-horizon deltas per path, the previous fraction `phi/100` per path and
//! finally the congestion flags `[c_w, c_tau]` per path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netsim::telemetry::{CWND_METRIC, METRICS_PER_PATH, SRTT_METRIC};
use crate::predictor::{LogMinMaxScaler, PredictionSet, FAR, MID};

pub const DELTA_CLAMP: f64 = 10.0;
pub const DELTA_EPS: f64 = 1e-6;
/// A forecast window below this share of the current one raises `c_w`.
pub const CWND_DROP_RATIO: f64 = 0.95;
/// A forecast SRTT above this multiple of the current one raises `c_tau`.
pub const SRTT_RISE_RATIO: f64 = 1.1;

pub fn state_dim(n_paths: usize) -> usize {
    9 * n_paths
}

/// Current per-path CWND (segments) and SRTT (ms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub cwnd: Vec<f64>,
    pub srtt: Vec<f64>,
}

impl Observation {
    pub fn n_paths(&self) -> usize {
        self.cwnd.len()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub values: Vec<f64>,
    n_paths: usize,
}

fn rel_delta(forecast: f64, current: f64) -> f64 {
    ((forecast - current) / current.abs().max(DELTA_EPS)).clamp(-DELTA_CLAMP, DELTA_CLAMP)
}

/// `c_w` for one path.
pub fn cwnd_flag(current: f64, forecast_far: f64) -> bool {
    forecast_far < CWND_DROP_RATIO * current
}

/// `c_tau` for one path.
pub fn srtt_flag(current: f64, forecast_far: f64) -> bool {
    forecast_far > SRTT_RISE_RATIO * current
}

/// Builds the state. Raw CWND and SRTT entries go through the predictor's
/// scaler so every entry sits on a comparable scale.
pub fn build_state(obs: &Observation, pred: &PredictionSet, prev_phi: &[u8], scaler: &LogMinMaxScaler) -> Result<AgentState> {
    let n = obs.n_paths();
    if pred.n_paths() != n || prev_phi.len() != n || obs.srtt.len() != n {
        return Err(Error::Dimension(format!(
            "state inputs disagree on path count: obs {n}, forecast {}, fractions {}",
            pred.n_paths(),
            prev_phi.len()
        )));
    }
    if scaler.n_features() != n * METRICS_PER_PATH {
        return Err(Error::Dimension(format!("scaler covers {} features, need {}", scaler.n_features(), n * METRICS_PER_PATH)));
    }
    let mut v = vec![0.0; state_dim(n)];
    for p in 0..n {
        let (w, tau) = (obs.cwnd[p], obs.srtt[p]);
        v[2 * p] = scaler.scale(p * METRICS_PER_PATH + CWND_METRIC, w);
        v[2 * p + 1] = scaler.scale(p * METRICS_PER_PATH + SRTT_METRIC, tau);
        v[2 * n + 2 * p] = rel_delta(pred.cwnd[p][MID], w);
        v[2 * n + 2 * p + 1] = rel_delta(pred.srtt[p][MID], tau);
        v[4 * n + 2 * p] = rel_delta(pred.cwnd[p][FAR], w);
        v[4 * n + 2 * p + 1] = rel_delta(pred.srtt[p][FAR], tau);
        v[6 * n + p] = prev_phi[p] as f64 / 100.0;
        v[7 * n + 2 * p] = cwnd_flag(w, pred.cwnd[p][FAR]) as u8 as f64;
        v[7 * n + 2 * p + 1] = srtt_flag(tau, pred.srtt[p][FAR]) as u8 as f64;
    }
    Ok(AgentState { values: v, n_paths: n })
}

impl AgentState {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn cwnd_flag(&self, p: usize) -> bool {
        self.values[7 * self.n_paths + 2 * p] != 0.0
    }

    pub fn srtt_flag(&self, p: usize) -> bool {
        self.values[7 * self.n_paths + 2 * p + 1] != 0.0
    }

    pub fn prev_fraction(&self, p: usize) -> f64 {
        self.values[6 * self.n_paths + p]
    }

    pub fn mid_deltas(&self) -> &[f64] {
        &self.values[2 * self.n_paths..4 * self.n_paths]
    }

    pub fn far_deltas(&self) -> &[f64] {
        &self.values[4 * self.n_paths..6 * self.n_paths]
    }

    /// The same state with every forecast-derived entry (deltas and flags)
    /// set to zero.
    pub fn without_forecast(mut self) -> Self {
        let n = self.n_paths;
        self.values[2 * n..6 * n].fill(0.0);
        self.values[7 * n..9 * n].fill(0.0);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scaler() -> LogMinMaxScaler {
        LogMinMaxScaler::fit(&[[0.0; 16], [1000.0; 16]].concat(), 16).unwrap()
    }

    fn forecast(w: [f64; 2], tau: [f64; 2]) -> PredictionSet {
        PredictionSet::flat(&w, &tau)
    }

    #[test]
    fn flag_thresholds() {
        assert!(cwnd_flag(100.0, 94.0));
        assert!(!cwnd_flag(100.0, 95.0));
        assert!(srtt_flag(50.0, 56.0));
        assert!(!srtt_flag(50.0, 55.0));
    }

    #[test]
    fn steady_state() {
        let obs = Observation { cwnd: vec![100.0, 40.0], srtt: vec![50.0, 70.0] };
        let s = build_state(&obs, &forecast([100.0, 40.0], [50.0, 70.0]), &[100, 100], &scaler()).unwrap();
        assert_eq!(s.values.len(), 18);
        assert!(s.mid_deltas().iter().chain(s.far_deltas()).all(|d| *d == 0.0));
        assert_eq!(s.values[12..14], [1.0, 1.0]);
        assert!(s.values[14..].iter().all(|f| *f == 0.0));
    }

    #[test]
    fn deltas_flags_and_clamp() {
        let obs = Observation { cwnd: vec![100.0, 1e-9], srtt: vec![50.0, 50.0] };
        let mut pred = forecast([94.0, 30.0], [56.0, 50.0]);
        pred.cwnd[0][MID] = 110.0;
        let s = build_state(&obs, &pred, &[47, 65], &scaler()).unwrap();
        assert!((s.mid_deltas()[0] - 0.1).abs() < 1e-12);
        assert!((s.far_deltas()[0] + 0.06).abs() < 1e-12);
        assert!((s.far_deltas()[1] - 0.12).abs() < 1e-12);
        // near-zero window: delta is clamped
        assert_eq!(s.far_deltas()[2], DELTA_CLAMP);
        assert!(s.cwnd_flag(0) && s.srtt_flag(0));
        assert!(!s.cwnd_flag(1) && !s.srtt_flag(1));
        assert_eq!(s.prev_fraction(0), 0.47);
    }

    #[test]
    fn forecast_free_variant_keeps_shape() {
        let obs = Observation { cwnd: vec![100.0, 40.0], srtt: vec![50.0, 70.0] };
        let s = build_state(&obs, &forecast([10.0, 90.0], [90.0, 10.0]), &[30, 82], &scaler()).unwrap();
        let z = s.clone().without_forecast();
        assert_eq!(z.values.len(), 18);
        assert!(z.values[4..12].iter().chain(&z.values[14..]).all(|v| *v == 0.0));
        assert_eq!(z.values[..4], s.values[..4]);
        assert_eq!(z.values[12..14], s.values[12..14]);
    }

    #[test]
    fn rejects_mismatched_paths() {
        let obs = Observation { cwnd: vec![100.0], srtt: vec![50.0] };
        assert!(build_state(&obs, &forecast([1.0, 1.0], [1.0, 1.0]), &[30], &scaler()).is_err());
    }
}
