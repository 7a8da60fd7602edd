//! Sliding windows of binned telemetry and their forecast targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scaler::LogMinMaxScaler;
use crate::agent::ActionSpace;
use crate::error::{Error, Result};
use crate::netsim::telemetry::{CWND_METRIC, METRICS_PER_PATH, SRTT_METRIC};
use crate::netsim::{Simulator, TelemetryBin};
use crate::par::{self, Execution};
use crate::scenario::Scenario;
use crate::schedulers::{random_phi, PacketScheduler};

/// Input steps per window (100 ms bins).
pub const WINDOW: usize = 8;
/// Forecast horizons, 100 ms apart.
pub const HORIZONS: usize = 5;
/// Index of the 200 ms horizon.
pub const MID: usize = 1;
/// Index of the 500 ms horizon.
pub const FAR: usize = HORIZONS - 1;

/// Position of a forecast in the flat output vector; `h` counts from 0
/// (100 ms) and `srtt` selects the delay forecast over the window one.
pub fn target_index(path: usize, h: usize, srtt: bool) -> usize {
    (path * HORIZONS + h) * 2 + srtt as usize
}

pub fn outputs_for(n_paths: usize) -> usize {
    n_paths * HORIZONS * 2
}

/// Forecast CWND and SRTT per path and horizon, in raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub cwnd: Vec<[f64; HORIZONS]>,
    pub srtt: Vec<[f64; HORIZONS]>,
}

impl PredictionSet {
    pub fn n_paths(&self) -> usize {
        self.cwnd.len()
    }

    /// Unscales a model output laid out by [`target_index`].
    pub fn from_scaled(out: &[f64], scaler: &LogMinMaxScaler, n_paths: usize) -> Result<Self> {
        if out.len() != outputs_for(n_paths) {
            return Err(Error::Shape { expected: outputs_for(n_paths).to_string(), got: out.len().to_string() });
        }
        let mut cwnd = vec![[0.0; HORIZONS]; n_paths];
        let mut srtt = vec![[0.0; HORIZONS]; n_paths];
        for p in 0..n_paths {
            for h in 0..HORIZONS {
                cwnd[p][h] = scaler.unscale(p * METRICS_PER_PATH + CWND_METRIC, out[target_index(p, h, false)]);
                srtt[p][h] = scaler.unscale(p * METRICS_PER_PATH + SRTT_METRIC, out[target_index(p, h, true)]);
            }
        }
        Ok(Self { cwnd, srtt })
    }

    /// Realised values from the bins that follow a window.
    pub fn from_future(future: &[TelemetryBin]) -> Result<Self> {
        if future.len() < HORIZONS {
            return Err(Error::Dimension(format!("need {HORIZONS} future bins, got {}", future.len())));
        }
        let n = future[0].paths.len();
        let mut cwnd = vec![[0.0; HORIZONS]; n];
        let mut srtt = vec![[0.0; HORIZONS]; n];
        for (h, bin) in future.iter().take(HORIZONS).enumerate() {
            for (p, pb) in bin.paths.iter().enumerate() {
                cwnd[p][h] = pb.cwnd;
                srtt[p][h] = pb.srtt;
            }
        }
        Ok(Self { cwnd, srtt })
    }

    /// Every horizon equal to the given current values.
    pub fn flat(cwnd: &[f64], srtt: &[f64]) -> Self {
        Self { cwnd: cwnd.iter().map(|&w| [w; HORIZONS]).collect(), srtt: srtt.iter().map(|&t| [t; HORIZONS]).collect() }
    }
}

/// Scaled windows (`len x WINDOW x n_features`) and targets
/// (`len x n_outputs`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub n_features: usize,
    pub n_outputs: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        if self.n_outputs == 0 {
            0
        } else {
            self.targets.len() / self.n_outputs
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn window_len(&self) -> usize {
        WINDOW * self.n_features
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.window_len()..(i + 1) * self.window_len()]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.n_outputs..(i + 1) * self.n_outputs]
    }

    /// Windows from consecutive runs; no window crosses a run boundary.
    pub fn from_runs(runs: &[Vec<TelemetryBin>], scaler: &LogMinMaxScaler) -> Result<Self> {
        let n_paths = runs.iter().find_map(|r| r.first()).map(|b| b.paths.len()).ok_or_else(|| Error::Dimension("no telemetry".into()))?;
        let n_features = n_paths * METRICS_PER_PATH;
        if scaler.n_features() != n_features {
            return Err(Error::Dimension(format!("scaler has {} features, telemetry {n_features}", scaler.n_features())));
        }
        let mut ds = Dataset { n_features, n_outputs: outputs_for(n_paths), ..Default::default() };
        for run in runs {
            let scaled: Vec<Vec<f64>> = run
                .iter()
                .map(|b| {
                    let mut v = Vec::with_capacity(n_features);
                    scaler.scale_row(&b.features(), &mut v);
                    v
                })
                .collect();
            if scaled.iter().any(|r| r.len() != n_features) {
                return Err(Error::Dimension("path count changes within a run".into()));
            }
            for end in WINDOW..=scaled.len().saturating_sub(HORIZONS) {
                for row in &scaled[end - WINDOW..end] {
                    ds.inputs.extend_from_slice(row);
                }
                for p in 0..n_paths {
                    for h in 0..HORIZONS {
                        let row = &scaled[end + h];
                        ds.targets.push(row[p * METRICS_PER_PATH + CWND_METRIC]);
                        ds.targets.push(row[p * METRICS_PER_PATH + SRTT_METRIC]);
                    }
                }
            }
        }
        Ok(ds)
    }

    /// Chronological split: the first `frac` of windows, then the rest.
    pub fn split(&self, frac: f64) -> (Dataset, Dataset) {
        let cut = ((self.len() as f64) * frac).round() as usize;
        let (wl, no) = (self.window_len(), self.n_outputs);
        let part = |a: usize, b: usize| Dataset {
            n_features: self.n_features,
            n_outputs: no,
            inputs: self.inputs[a * wl..b * wl].to_vec(),
            targets: self.targets[a * no..b * no].to_vec(),
        };
        (part(0, cut), part(cut, self.len()))
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut ds = Dataset { n_features: self.n_features, n_outputs: self.n_outputs, ..Default::default() };
        for &i in idx {
            ds.inputs.extend_from_slice(self.input(i));
            ds.targets.extend_from_slice(self.target(i));
        }
        ds
    }
}

/// Fits the scaler on every bin of every run.
pub fn fit_scaler(runs: &[Vec<TelemetryBin>]) -> Result<LogMinMaxScaler> {
    let n = runs.iter().find_map(|r| r.first()).map(|b| b.paths.len() * METRICS_PER_PATH).unwrap_or(0);
    let flat: Vec<f64> = runs.iter().flatten().flat_map(|b| b.features()).collect();
    LogMinMaxScaler::fit(&flat, n)
}

/// Telemetry from runs on `scenario` under an exploratory fraction policy:
/// each control cycle keeps the previous fractions or, with probability
/// `switch_prob`, draws new ones uniformly.
pub fn collect_telemetry(
    scenario: &Scenario,
    runs: usize,
    cycles: usize,
    switch_prob: f64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Vec<TelemetryBin>>> {
    let space = ActionSpace::five_level(scenario.n_paths());
    let out = par::map_range(exec, runs, |r| -> Result<Vec<TelemetryBin>> {
        let run_seed = seed.wrapping_add(r as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
        let mut sim = Simulator::new(scenario.path_configs(run_seed), PacketScheduler::MinRtt)?;
        let bin = sim.bin_ms();
        let mut phi = random_phi(&mut rng, &space);
        for _ in 0..cycles {
            if rng.random::<f64>() < switch_prob {
                phi = random_phi(&mut rng, &space);
            }
            sim.apply_cwnd_fractions(&phi, &space)?;
            sim.run(bin);
        }
        Ok(sim.drain_telemetry())
    });
    out.into_iter().collect()
}
