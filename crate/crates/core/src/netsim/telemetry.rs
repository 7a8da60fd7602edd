//! Per-path congestion telemetry and its 100 ms binning.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Metrics per path, in feature order.
pub const METRICS_PER_PATH: usize = 8;
pub const METRIC_NAMES: [&str; METRICS_PER_PATH] =
    ["cwnd", "avail_frac", "in_flight", "srtt", "sub_q", "meta_q", "lost", "delivered"];
pub const CWND_METRIC: usize = 0;
pub const SRTT_METRIC: usize = 3;

/// One millisecond sample of a subflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubflowTelemetry {
    pub cwnd_segments: u32,
    pub srtt_ms: f64,
    pub bytes_in_flight: u64,
    pub subflow_queue_depth: usize,
    pub meta_queue_depth: usize,
    /// Cumulative.
    pub lost_packets: u64,
    /// Cumulative.
    pub delivered_packets: u64,
    pub avail_cwnd_fraction: f64,
}

/// Binned telemetry for one path: gauges are averaged, counters are the
/// increment over the bin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PathBin {
    pub cwnd: f64,
    pub avail_frac: f64,
    pub in_flight: f64,
    pub srtt: f64,
    pub sub_q: f64,
    pub meta_q: f64,
    pub lost: f64,
    pub delivered: f64,
}

impl PathBin {
    pub fn features(&self) -> [f64; METRICS_PER_PATH] {
        [
            self.cwnd,
            self.avail_frac,
            self.in_flight,
            self.srtt,
            self.sub_q,
            self.meta_q,
            self.lost,
            self.delivered,
        ]
    }

    pub fn from_features(f: &[f64]) -> Self {
        Self {
            cwnd: f[0],
            avail_frac: f[1],
            in_flight: f[2],
            srtt: f[3],
            sub_q: f[4],
            meta_q: f[5],
            lost: f[6],
            delivered: f[7],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryBin {
    /// Start of the bin.
    pub t_ms: u64,
    pub paths: Vec<PathBin>,
}

impl TelemetryBin {
    /// Flattened features, path-major.
    pub fn features(&self) -> Vec<f64> {
        self.paths.iter().flat_map(|p| p.features()).collect()
    }
}

#[derive(Debug, Clone, Default)]
struct PathAccumulator {
    gauges: [f64; 6],
    lost_at_start: u64,
    delivered_at_start: u64,
    last_lost: u64,
    last_delivered: u64,
}

/// Streams 1 ms samples into fixed-width bins.
#[derive(Debug, Clone)]
pub struct BinAccumulator {
    bin_ms: u64,
    bin_start: u64,
    count: u64,
    paths: Vec<PathAccumulator>,
}

impl BinAccumulator {
    pub fn new(n_paths: usize, bin_ms: u64, start_ms: u64) -> Self {
        assert!(bin_ms > 0);
        Self { bin_ms, bin_start: start_ms, count: 0, paths: vec![PathAccumulator::default(); n_paths] }
    }

    pub fn bin_ms(&self) -> u64 {
        self.bin_ms
    }

    /// Adds one sample per path; returns a finished bin when this sample
    /// completes one.
    pub fn push(&mut self, samples: &[SubflowTelemetry]) -> Option<TelemetryBin> {
        for (acc, s) in self.paths.iter_mut().zip(samples) {
            acc.gauges[0] += s.cwnd_segments as f64;
            acc.gauges[1] += s.avail_cwnd_fraction;
            acc.gauges[2] += s.bytes_in_flight as f64;
            acc.gauges[3] += s.srtt_ms;
            acc.gauges[4] += s.subflow_queue_depth as f64;
            acc.gauges[5] += s.meta_queue_depth as f64;
            acc.last_lost = s.lost_packets;
            acc.last_delivered = s.delivered_packets;
        }
        self.count += 1;
        if self.count < self.bin_ms {
            return None;
        }
        let n = self.count as f64;
        let paths = self
            .paths
            .iter_mut()
            .map(|acc| {
                let g = acc.gauges.map(|v| v / n);
                let bin = PathBin {
                    cwnd: g[0],
                    avail_frac: g[1],
                    in_flight: g[2],
                    srtt: g[3],
                    sub_q: g[4],
                    meta_q: g[5],
                    lost: (acc.last_lost - acc.lost_at_start) as f64,
                    delivered: (acc.last_delivered - acc.delivered_at_start) as f64,
                };
                acc.gauges = [0.0; 6];
                acc.lost_at_start = acc.last_lost;
                acc.delivered_at_start = acc.last_delivered;
                bin
            })
            .collect();
        let out = TelemetryBin { t_ms: self.bin_start, paths };
        self.bin_start += self.bin_ms;
        self.count = 0;
        Some(out)
    }
}

/// Bins a complete series of per-path samples (`samples[t][path]`). A partial
/// trailing bin is dropped.
pub fn bin_samples(samples: &[Vec<SubflowTelemetry>], bin_ms: u64) -> Vec<TelemetryBin> {
    let n_paths = samples.first().map_or(0, Vec::len);
    let mut acc = BinAccumulator::new(n_paths, bin_ms, 0);
    samples.iter().filter_map(|s| acc.push(s)).collect()
}

pub const CSV_HEADER: &str = "t_ms,path,cwnd,srtt,in_flight,sub_q,meta_q,lost,delivered,avail_frac";

/// Writes binned telemetry as CSV, one row per (bin, path).
pub fn write_csv<W: Write>(mut w: W, bins: &[TelemetryBin], header_comment: Option<&str>) -> Result<()> {
    if let Some(c) = header_comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{CSV_HEADER}")?;
    for bin in bins {
        for (p, b) in bin.paths.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                bin.t_ms, p, b.cwnd, b.srtt, b.in_flight, b.sub_q, b.meta_q, b.lost, b.delivered, b.avail_frac
            )?;
        }
    }
    Ok(())
}

/// Reads CSV written by [`write_csv`]. Lines starting with `#` are skipped.
pub fn read_csv(text: &str) -> Result<Vec<TelemetryBin>> {
    let mut bins: Vec<TelemetryBin> = Vec::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(Error::Csv(format!("expected header {CSV_HEADER:?}, got {:?}", other.map(|x| x.1))))
        }
    }
    for (idx, line) in lines {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 10 {
            return Err(Error::Csv(format!("line {}: expected 10 columns, got {}", idx + 1, cols.len())));
        }
        let num = |i: usize| -> Result<f64> {
            cols[i].trim().parse().map_err(|_| Error::Csv(format!("line {}: bad number {:?}", idx + 1, cols[i])))
        };
        let t_ms = num(0)? as u64;
        let path = num(1)? as usize;
        let pb = PathBin {
            cwnd: num(2)?,
            srtt: num(3)?,
            in_flight: num(4)?,
            sub_q: num(5)?,
            meta_q: num(6)?,
            lost: num(7)?,
            delivered: num(8)?,
            avail_frac: num(9)?,
        };
        match bins.last_mut() {
            Some(b) if b.t_ms == t_ms && b.paths.len() == path => b.paths.push(pb),
            _ if path == 0 => bins.push(TelemetryBin { t_ms, paths: vec![pb] }),
            _ => return Err(Error::Csv(format!("line {}: path {path} out of order", idx + 1))),
        }
    }
    if let Some(n) = bins.first().map(|b| b.paths.len()) {
        if bins.iter().any(|b| b.paths.len() != n) {
            return Err(Error::Csv("inconsistent path count across bins".into()));
        }
    }
    Ok(bins)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(cwnd: u32, srtt: f64, delivered: u64) -> SubflowTelemetry {
        SubflowTelemetry {
            cwnd_segments: cwnd,
            srtt_ms: srtt,
            bytes_in_flight: 0,
            subflow_queue_depth: 0,
            meta_queue_depth: 0,
            lost_packets: 0,
            delivered_packets: delivered,
            avail_cwnd_fraction: 1.0,
        }
    }

    #[test]
    fn constant_gauge() {
        let s: Vec<_> = (0..100).map(|_| vec![sample(100, 40.0, 0)]).collect();
        let bins = bin_samples(&s, 100);
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].paths[0].cwnd, 100.0);
    }

    #[test]
    fn counters_sum_increments() {
        let mut s: Vec<_> = (0..100).map(|_| vec![sample(10, 40.0, 0)]).collect();
        for (t, row) in s.iter_mut().enumerate() {
            row[0].delivered_packets = if t >= 60 { 8 } else if t >= 20 { 5 } else { 0 };
        }
        let bins = bin_samples(&s, 100);
        assert_eq!(bins[0].paths[0].delivered, 8.0);
    }

    #[test]
    fn linear_srtt_mean() {
        let s: Vec<_> = (0..100).map(|i| vec![sample(10, 50.0 + i as f64 / 10.0, 0)]).collect();
        let bins = bin_samples(&s, 100);
        // oracle: arithmetic mean of 50.0, 50.1, ..., 59.9
        let oracle = (0..100).map(|i| 50.0 + i as f64 / 10.0).sum::<f64>() / 100.0;
        assert!((oracle - 54.95).abs() < 1e-12);
        assert!((bins[0].paths[0].srtt - oracle).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let s: Vec<_> = (0..300).map(|i| vec![sample(10 + i / 50, 40.0, i as u64), sample(7, 60.5, 0)]).collect();
        let bins = bin_samples(&s, 100);
        let mut buf = Vec::new();
        write_csv(&mut buf, &bins, Some("seed=1")).unwrap();
        let back = read_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, bins);
    }

    #[test]
    fn csv_rejects_bad_header() {
        assert!(read_csv("a,b\n1,2\n").is_err());
    }
}
