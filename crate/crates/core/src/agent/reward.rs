//! Multi-objective reward.
//!
//! Every component is computed from the current observation, the far-horizon
//! forecast and the fraction vectors before and after the action.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::MTU_BITS;

/// Bits per second to Mbps.
const QUALITY_SCALE: f64 = 1e-6;
const QUALITY_EMA_KEEP: f64 = 0.9;
const PREEMPTIVE_BONUS: f64 = 0.5;
const STABILITY_SCALE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub throughput: f64,
    pub delay: f64,
    pub preemptive: f64,
    pub stability: f64,
    pub quality: f64,
    pub idleness: f64,
}

impl Default for RewardWeights {
    /// The calibrated operating point.
    fn default() -> Self {
        Self { throughput: 3.329, delay: 1.332, preemptive: 2.194, stability: 0.175, quality: 2.130, idleness: 0.974 }
    }
}

impl RewardWeights {
    pub const NAMES: [&'static str; 6] = ["throughput", "delay", "preemptive", "stability", "quality", "idleness"];

    pub fn as_array(&self) -> [f64; 6] {
        [self.throughput, self.delay, self.preemptive, self.stability, self.quality, self.idleness]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { throughput: a[0], delay: a[1], preemptive: a[2], stability: a[3], quality: a[4], idleness: a[5] }
    }

    pub fn validate(&self) -> Result<()> {
        match self.as_array().iter().zip(Self::NAMES).find(|(w, _)| !(w.is_finite() && **w > 0.0)) {
            Some((w, name)) => Err(Error::Config(format!("reward weight {name} must be positive and finite, got {w}"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardComponents {
    pub throughput: f64,
    pub delay: f64,
    pub preemptive: f64,
    pub stability: f64,
    /// Smoothed value; this is what enters the aggregate.
    pub quality: f64,
    pub idleness: f64,
}

impl RewardComponents {
    pub fn as_array(&self) -> [f64; 6] {
        [self.throughput, self.delay, self.preemptive, self.stability, self.quality, self.idleness]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { throughput: a[0], delay: a[1], preemptive: a[2], stability: a[3], quality: a[4], idleness: a[5] }
    }

    pub fn aggregate(&self, w: &RewardWeights) -> f64 {
        self.as_array().iter().zip(w.as_array()).map(|(c, w)| c * w).sum()
    }
}

/// Sum of relative forecast CWND changes.
pub fn throughput_term(cwnd: &[f64], cwnd_far: &[f64]) -> f64 {
    cwnd.iter().zip(cwnd_far).map(|(w, f)| (f - w) / w.max(f64::MIN_POSITIVE)).sum()
}

/// Sum of relative forecast SRTT improvements.
pub fn delay_term(srtt: &[f64], srtt_far: &[f64]) -> f64 {
    srtt.iter().zip(srtt_far).map(|(t, f)| (t - f) / t.max(f64::MIN_POSITIVE)).sum()
}

/// Rewards cutting a path's fraction ahead of a forecast CWND drop and
/// raising it ahead of growth; averaged over paths.
pub fn preemptive_term(cwnd: &[f64], cwnd_far: &[f64], phi: &[u8], prev_phi: &[u8]) -> f64 {
    let n = cwnd.len();
    let total: f64 = (0..n)
        .map(|p| {
            let falling = cwnd_far[p] < cwnd[p];
            match (falling, phi[p].cmp(&prev_phi[p])) {
                (true, std::cmp::Ordering::Less) => PREEMPTIVE_BONUS,
                (true, _) => -PREEMPTIVE_BONUS,
                (false, std::cmp::Ordering::Greater) => PREEMPTIVE_BONUS,
                (false, _) => 0.0,
            }
        })
        .sum();
    total / n as f64
}

/// Penalises fraction changes in percentage points.
pub fn stability_term(phi: &[u8], prev_phi: &[u8]) -> f64 {
    -phi.iter().zip(prev_phi).map(|(a, b)| (*a as f64 - *b as f64).abs()).sum::<f64>() / STABILITY_SCALE
}

/// Forecast aggregate rate: one window of MTU-sized segments per SRTT.
pub fn quality_instant(cwnd_far: &[f64], srtt_far: &[f64]) -> f64 {
    QUALITY_SCALE * cwnd_far.iter().zip(srtt_far).map(|(w, t)| w / t.max(1.0) * MTU_BITS as f64).sum::<f64>()
}

/// -1 when every path sits at the lowest level.
pub fn idleness_term(phi: &[u8], min_level: u8) -> f64 {
    if phi.iter().all(|p| *p == min_level) {
        -1.0
    } else {
        0.0
    }
}

/// Exponential smoothing of the quality term, seeded with the first value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QualityEma {
    value: Option<f64>,
}

impl QualityEma {
    pub fn update(&mut self, x: f64) -> f64 {
        let v = match self.value {
            None => x,
            Some(prev) => QUALITY_EMA_KEEP * prev + (1.0 - QUALITY_EMA_KEEP) * x,
        };
        self.value = Some(v);
        v
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }
}

/// Inputs for one reward evaluation. `*_far` are forecasts at the far horizon.
#[derive(Debug, Clone, Copy)]
pub struct RewardInputs<'a> {
    pub cwnd: &'a [f64],
    pub srtt: &'a [f64],
    pub cwnd_far: &'a [f64],
    pub srtt_far: &'a [f64],
    pub phi: &'a [u8],
    pub prev_phi: &'a [u8],
    pub min_level: u8,
}

pub fn components(inp: &RewardInputs, ema: &mut QualityEma) -> Result<RewardComponents> {
    let n = inp.cwnd.len();
    let lens = [inp.srtt.len(), inp.cwnd_far.len(), inp.srtt_far.len(), inp.phi.len(), inp.prev_phi.len()];
    if lens.iter().any(|l| *l != n) {
        return Err(Error::Dimension(format!("reward inputs must all have {n} paths, got {lens:?}")));
    }
    Ok(RewardComponents {
        throughput: throughput_term(inp.cwnd, inp.cwnd_far),
        delay: delay_term(inp.srtt, inp.srtt_far),
        preemptive: preemptive_term(inp.cwnd, inp.cwnd_far, inp.phi, inp.prev_phi),
        stability: stability_term(inp.phi, inp.prev_phi),
        quality: ema.update(quality_instant(inp.cwnd_far, inp.srtt_far)),
        idleness: idleness_term(inp.phi, inp.min_level),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-9;

    #[test]
    fn throughput_examples() {
        assert!((throughput_term(&[100.0, 50.0], &[110.0, 45.0]) - 0.0).abs() < TOL);
        assert!((throughput_term(&[100.0], &[120.0]) - 0.2).abs() < TOL);
    }

    #[test]
    fn delay_examples() {
        assert!((delay_term(&[50.0], &[40.0]) - 0.2).abs() < TOL);
        assert!((delay_term(&[50.0], &[60.0]) + 0.2).abs() < TOL);
    }

    #[test]
    fn preemptive_examples() {
        assert!((preemptive_term(&[100.0, 50.0], &[80.0, 60.0], &[47, 82], &[65, 65]) - 0.5).abs() < TOL);
        assert!((preemptive_term(&[100.0, 50.0], &[80.0, 60.0], &[65, 65], &[65, 65]) + 0.25).abs() < TOL);
        // equal forecast counts as not falling
        assert_eq!(preemptive_term(&[50.0], &[50.0], &[65], &[65]), 0.0);
        assert_eq!(preemptive_term(&[50.0], &[50.0], &[82], &[65]), 0.5);
    }

    #[test]
    fn stability_examples() {
        assert!((stability_term(&[30, 100], &[100, 30]) + 1.4).abs() < TOL);
        assert_eq!(stability_term(&[65, 65], &[65, 65]), 0.0);
    }

    #[test]
    fn quality_examples() {
        // 100 segments / 50 ms * 12000 bits = 24000
        assert!((quality_instant(&[100.0], &[50.0]) - 0.024).abs() < TOL);
        // SRTT below one unit is floored
        assert!((quality_instant(&[1.0], &[0.5]) - 0.012).abs() < TOL);
    }

    #[test]
    fn idleness_examples() {
        assert_eq!(idleness_term(&[30, 30], 30), -1.0);
        assert_eq!(idleness_term(&[30, 47], 30), 0.0);
    }

    #[test]
    fn aggregate_example() {
        let c = RewardComponents::from_array([0.1, -0.1, 0.25, -0.35, 0.024, 0.0]);
        assert!((c.aggregate(&RewardWeights::default()) - 0.73807).abs() < TOL);
    }

    #[test]
    fn ema_seeds_with_first_value() {
        let mut e = QualityEma::default();
        assert_eq!(e.update(1.0), 1.0);
        assert!((e.update(2.0) - 1.1).abs() < TOL);
        assert!((e.update(2.0) - 1.19).abs() < TOL);
    }

    #[test]
    fn weight_validation() {
        assert!(RewardWeights::default().validate().is_ok());
        let mut w = RewardWeights::default();
        w.delay = 0.0;
        assert!(w.validate().is_err());
        w.delay = f64::NAN;
        assert!(w.validate().is_err());
    }

    #[test]
    fn component_dimensions_checked() {
        let inp = RewardInputs {
            cwnd: &[1.0, 2.0],
            srtt: &[1.0],
            cwnd_far: &[1.0, 2.0],
            srtt_far: &[1.0, 2.0],
            phi: &[30, 30],
            prev_phi: &[30, 30],
            min_level: 30,
        };
        assert!(components(&inp, &mut QualityEma::default()).is_err());
    }
}
