//! Packet-delivery traces.
//!
//! A trace is a list of millisecond timestamps, one per MTU-sized delivery
//! opportunity. When the simulation clock passes the end of the trace it
//! wraps around with period `loop_length_ms`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bytes carried by one delivery opportunity.
pub const MTU_BYTES: u64 = 1500;
/// Bits carried by one delivery opportunity.
pub const MTU_BITS: u64 = MTU_BYTES * 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryTrace {
    timestamps: Vec<u64>,
    loop_length_ms: u64,
}

impl DeliveryTrace {
    /// Builds a trace whose loop period is one past the last timestamp.
    pub fn new(timestamps: Vec<u64>) -> Result<Self> {
        let last = *timestamps.last().ok_or_else(|| Error::TraceParse {
            line: 0,
            reason: "empty trace".into(),
        })?;
        Self::with_loop(timestamps, last + 1)
    }

    pub fn with_loop(timestamps: Vec<u64>, loop_length_ms: u64) -> Result<Self> {
        if timestamps.is_empty() {
            return Err(Error::TraceParse { line: 0, reason: "empty trace".into() });
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::TraceParse { line: i + 2, reason: "decreasing timestamp".into() });
        }
        let last = timestamps[timestamps.len() - 1];
        if last >= loop_length_ms {
            return Err(Error::TraceParse {
                line: timestamps.len(),
                reason: format!("timestamp {last} not below loop length {loop_length_ms}"),
            });
        }
        Ok(Self { timestamps, loop_length_ms })
    }

    pub fn timestamps(&self) -> &[u64] {
        &self.timestamps
    }

    pub fn loop_length_ms(&self) -> u64 {
        self.loop_length_ms
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Mean capacity of one loop in bits per second.
    pub fn mean_rate_bps(&self) -> f64 {
        self.len() as f64 * MTU_BITS as f64 * 1000.0 / self.loop_length_ms as f64
    }

    /// Opportunities at absolute times in `[0, t)`.
    fn cumulative(&self, t: u64) -> u64 {
        let loops = t / self.loop_length_ms;
        let rem = t % self.loop_length_ms;
        let partial = self.timestamps.partition_point(|&ts| ts < rem) as u64;
        loops * self.timestamps.len() as u64 + partial
    }

    /// Number of opportunities with absolute timestamp in `[t0, t1)`.
    pub fn opportunities_in(&self, t0: u64, t1: u64) -> u64 {
        debug_assert!(t0 <= t1);
        self.cumulative(t1) - self.cumulative(t0)
    }

    /// Opportunities in the single millisecond starting at `t`.
    pub fn opportunities_at(&self, t: u64) -> u64 {
        self.opportunities_in(t, t + 1)
    }

    /// Serialises to the newline-separated millisecond format.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.timestamps.len() * 6);
        for ts in &self.timestamps {
            let _ = writeln!(out, "{ts}");
        }
        out
    }

    /// Per-bin throughput over one loop of the trace.
    pub fn throughput_histogram(&self, bin_ms: u64) -> Result<ThroughputHistogram> {
        if bin_ms == 0 {
            return Err(Error::Contract("bin_ms must be positive".into()));
        }
        let mut mbps = Vec::new();
        let mut start = 0;
        while start < self.loop_length_ms {
            let end = (start + bin_ms).min(self.loop_length_ms);
            let bits = self.opportunities_in(start, end) * MTU_BITS;
            mbps.push(bits as f64 / ((end - start) as f64 / 1000.0) / 1e6);
            start = end;
        }
        let n = mbps.len() as f64;
        let mean = mbps.iter().sum::<f64>() / n;
        let var = mbps.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Ok(ThroughputHistogram { bin_ms, mbps, mean, std: var.sqrt() })
    }
}

/// Parses the newline-separated millisecond trace format.
pub fn parse_trace(text: &str) -> Result<DeliveryTrace> {
    let mut timestamps = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let value: i64 = raw.trim().parse().map_err(|_| Error::TraceParse {
            line,
            reason: format!("not an integer: {raw:?}"),
        })?;
        if value < 0 {
            return Err(Error::TraceParse { line, reason: format!("negative value {value}") });
        }
        let value = value as u64;
        if let Some(&prev) = timestamps.last() {
            if value < prev {
                return Err(Error::TraceParse {
                    line,
                    reason: format!("decreasing timestamp {value} after {prev}"),
                });
            }
        }
        timestamps.push(value);
    }
    DeliveryTrace::new(timestamps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputHistogram {
    pub bin_ms: u64,
    pub mbps: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// On/off capacity envelope: `burst_rate_bps` for the first `burst_ms` of
/// every `cycle_ms`, `trough_rate_bps` for the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurstPattern {
    pub cycle_ms: u64,
    pub burst_ms: u64,
    pub burst_rate_bps: u64,
    pub trough_rate_bps: u64,
}

impl BurstPattern {
    pub fn new(cycle_ms: u64, burst_ms: u64, burst_rate_bps: u64, trough_rate_bps: u64) -> Result<Self> {
        let p = Self { cycle_ms, burst_ms, burst_rate_bps, trough_rate_bps };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.burst_ms >= self.cycle_ms {
            return Err(Error::Config(format!(
                "burst_ms {} must be below cycle_ms {}",
                self.burst_ms, self.cycle_ms
            )));
        }
        if self.burst_rate_bps == 0 || self.trough_rate_bps == 0 {
            return Err(Error::Config("rates must be positive".into()));
        }
        Ok(())
    }

    /// 2.5 s cycle, 700 ms at 10 Mbps, 0.2 Mbps otherwise.
    pub fn asymmetric_burst() -> Self {
        Self { cycle_ms: 2500, burst_ms: 700, burst_rate_bps: 10_000_000, trough_rate_bps: 200_000 }
    }

    /// Constant-rate pattern with a one-second cycle.
    pub fn stable(rate_bps: u64) -> Self {
        Self { cycle_ms: 1000, burst_ms: 0, burst_rate_bps: rate_bps, trough_rate_bps: rate_bps }
    }
}

fn phase_count(rate_bps: u64, duration_ms: u64) -> u64 {
    // floor(rate * duration / MTU bits), in integer arithmetic
    (rate_bps as u128 * duration_ms as u128 / (1000 * MTU_BITS as u128)) as u64
}

fn push_phase(out: &mut Vec<u64>, start: u64, duration_ms: u64, rate_bps: u64) {
    let count = phase_count(rate_bps, duration_ms);
    // each opportunity sits at the end of its equal-width slot, so the last
    // one of a phase lands on the phase's final millisecond
    for i in 0..count {
        out.push(start + (i + 1) * duration_ms / count - 1);
    }
}

/// Generates an evenly spaced trace following `pattern` for `total_ms`.
///
/// The seed is accepted for interface stability; even spacing is fully
/// deterministic.
pub fn generate_burst_trace(pattern: &BurstPattern, total_ms: u64, _seed: u64) -> Result<DeliveryTrace> {
    pattern.validate()?;
    if total_ms < pattern.cycle_ms {
        return Err(Error::Config(format!(
            "total_ms {total_ms} shorter than cycle_ms {}",
            pattern.cycle_ms
        )));
    }
    let mut ts = Vec::new();
    let mut cycle_start = 0;
    while cycle_start < total_ms {
        let burst_end = (cycle_start + pattern.burst_ms).min(total_ms);
        push_phase(&mut ts, cycle_start, burst_end - cycle_start, pattern.burst_rate_bps);
        let cycle_end = (cycle_start + pattern.cycle_ms).min(total_ms);
        push_phase(&mut ts, burst_end, cycle_end - burst_end, pattern.trough_rate_bps);
        cycle_start += pattern.cycle_ms;
    }
    DeliveryTrace::with_loop(ts, total_ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_simple_trace() {
        let t = parse_trace("1\n2\n2\n5\n").unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.loop_length_ms(), 6);
    }

    #[test]
    fn rejects_empty() {
        assert!(matches!(parse_trace(""), Err(Error::TraceParse { .. })));
    }

    #[test]
    fn rejects_decreasing_with_line() {
        match parse_trace("3\n1\n") {
            Err(Error::TraceParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_and_garbage() {
        assert!(matches!(parse_trace("1\n-4\n"), Err(Error::TraceParse { line: 2, .. })));
        assert!(matches!(parse_trace("1\nabc\n"), Err(Error::TraceParse { line: 2, .. })));
    }

    #[test]
    fn loop_windows() {
        let t = parse_trace("1\n2\n5\n").unwrap();
        assert_eq!(t.opportunities_in(0, 6), 3);
        assert_eq!(t.opportunities_in(6, 12), 3);
        assert_eq!(t.opportunities_in(5, 8), 2);
    }

    /// Enumerates the looped trace explicitly.
    fn brute_count(t: &DeliveryTrace, t0: u64, t1: u64) -> u64 {
        let mut n = 0;
        let mut base = 0;
        while base < t1 {
            for &ts in t.timestamps() {
                let abs = base + ts;
                if abs >= t0 && abs < t1 {
                    n += 1;
                }
            }
            base += t.loop_length_ms();
        }
        n
    }

    #[test]
    fn burst_counts() {
        let t = generate_burst_trace(&BurstPattern::asymmetric_burst(), 2500, 0).unwrap();
        assert_eq!(t.opportunities_in(0, 700), 583);
        assert_eq!(t.opportunities_in(700, 2500), 30);
        assert_eq!(t.len(), 613);
        let stable = generate_burst_trace(&BurstPattern::stable(1_800_000), 1000, 0).unwrap();
        assert_eq!(stable.len(), 150);
    }

    #[test]
    fn zero_burst_is_pure_trough() {
        let p = BurstPattern::new(1000, 0, 5_000_000, 1_200_000).unwrap();
        let t = generate_burst_trace(&p, 3000, 1).unwrap();
        assert_eq!(t.len(), 300);
        for s in (0..3000).step_by(1000) {
            assert_eq!(t.opportunities_in(s, s + 1000), 100);
        }
    }

    #[test]
    fn histogram_mean_and_flat_rate() {
        let t = generate_burst_trace(&BurstPattern::asymmetric_burst(), 2500, 0).unwrap();
        let h = t.throughput_histogram(100).unwrap();
        assert_eq!(h.mbps.len(), 25);
        let expected = 613.0 * 12000.0 / 2.5 / 1e6;
        assert!((h.mean - expected).abs() < 1e-12);
        assert!(h.mbps[..7].iter().all(|&x| x > 9.0));
        assert!(h.mbps[7..].iter().all(|&x| x < 0.25));

        let flat = generate_burst_trace(&BurstPattern::stable(1_200_000), 1000, 0).unwrap();
        for bin in [10, 50, 100, 250] {
            let h = flat.throughput_histogram(bin).unwrap();
            assert!(h.std / h.mean < 0.05, "bin {bin}: {h:?}");
        }
    }

    #[test]
    fn histogram_keeps_empty_bins() {
        let t = DeliveryTrace::with_loop(vec![0, 1, 2], 400).unwrap();
        let h = t.throughput_histogram(100).unwrap();
        assert_eq!(h.mbps.len(), 4);
        assert_eq!(&h.mbps[1..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn generator_is_deterministic() {
        let p = BurstPattern::asymmetric_burst();
        assert_eq!(generate_burst_trace(&p, 5000, 1).unwrap(), generate_burst_trace(&p, 5000, 99).unwrap());
    }

    fn arb_trace() -> impl Strategy<Value = DeliveryTrace> {
        prop::collection::vec(0u64..50, 1..40).prop_map(|mut v| {
            v.sort_unstable();
            DeliveryTrace::new(v).unwrap()
        })
    }

    proptest! {
        #[test]
        fn text_round_trip(t in arb_trace()) {
            prop_assert_eq!(parse_trace(&t.to_text()).unwrap(), t);
        }

        #[test]
        fn windows_are_additive(t in arb_trace(), a in 0u64..200, b in 0u64..200, c in 0u64..200) {
            let mut v = [a, b, c];
            v.sort_unstable();
            let [x, y, z] = v;
            prop_assert_eq!(t.opportunities_in(x, y) + t.opportunities_in(y, z), t.opportunities_in(x, z));
            prop_assert_eq!(t.opportunities_in(x, z), brute_count(&t, x, z));
        }
    }
}
