//! Multipath link setups built from traces.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::netsim::{PathConfig, DEFAULT_PROP_DELAY_MS, DEFAULT_QUEUE_CAPACITY};
use crate::trace::{generate_burst_trace, BurstPattern, DeliveryTrace};

/// Stable-path rate in the burst scenario.
pub const STABLE_RATE_BPS: u64 = 1_800_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PathSetup {
    pub trace: Arc<DeliveryTrace>,
    pub prop_delay_ms: u64,
    pub queue_capacity_pkts: usize,
    pub priority: u32,
}

impl PathSetup {
    pub fn new(trace: DeliveryTrace) -> Self {
        Self {
            trace: Arc::new(trace),
            prop_delay_ms: DEFAULT_PROP_DELAY_MS,
            queue_capacity_pkts: DEFAULT_QUEUE_CAPACITY,
            priority: 0,
        }
    }

    /// One cycle of `pattern`, looped.
    pub fn from_pattern(pattern: &BurstPattern) -> Result<Self> {
        Ok(Self::new(generate_burst_trace(pattern, pattern.cycle_ms, 0)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub paths: Vec<PathSetup>,
    /// Start each run at a seed-dependent point of every trace loop.
    pub random_phase: bool,
}

impl Scenario {
    pub fn new(paths: Vec<PathSetup>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::Config("scenario needs at least one path".into()));
        }
        Ok(Self { paths, random_phase: true })
    }

    /// Path 0 bursts to 10 Mbps for 700 ms every 2.5 s and idles at
    /// 0.2 Mbps; path 1 holds 1.8 Mbps.
    pub fn asymmetric_burst() -> Self {
        let burst = PathSetup::from_pattern(&BurstPattern::asymmetric_burst()).expect("static pattern");
        let stable = PathSetup::from_pattern(&BurstPattern::stable(STABLE_RATE_BPS)).expect("static pattern");
        Self { paths: vec![burst, stable], random_phase: true }
    }

    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    /// The same setup restricted to one path.
    pub fn single_path(&self, index: usize) -> Self {
        Self { paths: vec![self.paths[index].clone()], random_phase: self.random_phase }
    }

    /// Simulator path configs for a run seeded with `seed`.
    pub fn path_configs(&self, seed: u64) -> Vec<PathConfig> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0ff5e7);
        self.paths
            .iter()
            .map(|p| {
                let offset = if self.random_phase { rng.random_range(0..p.trace.loop_length_ms()) } else { 0 };
                PathConfig {
                    trace: p.trace.clone(),
                    prop_delay_ms: p.prop_delay_ms,
                    queue_capacity_pkts: p.queue_capacity_pkts,
                    priority: p.priority,
                    trace_offset_ms: offset,
                }
            })
            .collect()
    }

    /// Combined mean capacity in bits per second.
    pub fn capacity_bps(&self) -> f64 {
        self.paths.iter().map(|p| p.trace.mean_rate_bps()).sum()
    }
}
