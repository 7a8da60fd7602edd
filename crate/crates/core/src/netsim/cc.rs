//! BBR-like per-subflow congestion control.
//!
//! Bandwidth is the windowed max of per-ACK delivery-rate samples over the
//! last ten smoothed RTTs, min RTT is a ten-second windowed min, and the
//! window is two bandwidth-delay products. There is no ProbeRTT or gain
//! cycling, and loss never collapses the window.

use std::collections::VecDeque;

use crate::trace::MTU_BYTES;

pub const INITIAL_CWND: u32 = 10;
pub const MIN_CWND: u32 = 4;
pub const SRTT_GAIN: f64 = 1.0 / 8.0;
pub const BW_WINDOW_SRTTS: f64 = 10.0;
pub const MIN_RTT_WINDOW_MS: u64 = 10_000;

/// EWMA smoothing of RTT samples. `None` means no sample has been seen yet.
pub fn update_srtt(old_srtt_ms: Option<f64>, rtt_sample_ms: f64) -> f64 {
    match old_srtt_ms {
        None => rtt_sample_ms,
        Some(old) => (1.0 - SRTT_GAIN) * old + SRTT_GAIN * rtt_sample_ms,
    }
}

/// `max(4, round(2 * bw * min_rtt / MTU))` in segments.
pub fn target_cwnd(bw_bytes_per_s: f64, min_rtt_ms: f64) -> u32 {
    let segs = (2.0 * bw_bytes_per_s * (min_rtt_ms / 1000.0) / MTU_BYTES as f64).round();
    (segs.max(0.0) as u32).max(MIN_CWND)
}

/// Sliding-window extremum over timestamped samples.
#[derive(Debug, Clone)]
struct WindowedExtremum {
    samples: VecDeque<(u64, f64)>,
    keep_max: bool,
}

impl WindowedExtremum {
    fn new(keep_max: bool) -> Self {
        Self { samples: VecDeque::new(), keep_max }
    }

    fn dominated(&self, old: f64, new: f64) -> bool {
        if self.keep_max {
            old <= new
        } else {
            old >= new
        }
    }

    fn push(&mut self, t: u64, v: f64) {
        while let Some(&(_, back)) = self.samples.back() {
            if self.dominated(back, v) {
                self.samples.pop_back();
            } else {
                break;
            }
        }
        self.samples.push_back((t, v));
    }

    fn expire(&mut self, now: u64, window_ms: f64) {
        while self.samples.len() > 1 {
            let (t, _) = self.samples[0];
            if (now - t) as f64 > window_ms {
                self.samples.pop_front();
            } else {
                break;
            }
        }
    }

    fn get(&self) -> Option<f64> {
        self.samples.front().map(|&(_, v)| v)
    }
}

/// What an ACK tells the sender about one packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckInfo {
    pub now_ms: u64,
    pub rtt_sample_ms: f64,
    /// Sender's delivered count when the packet left.
    pub delivered_at_send: u64,
    /// Time of the last delivery before the packet left.
    pub delivered_time_at_send: u64,
}

#[derive(Debug, Clone)]
pub struct BbrLike {
    cwnd: u32,
    srtt: Option<f64>,
    bw: WindowedExtremum,
    min_rtt: WindowedExtremum,
    delivered: u64,
    delivered_time: u64,
}

impl Default for BbrLike {
    fn default() -> Self {
        Self::new()
    }
}

impl BbrLike {
    pub fn new() -> Self {
        Self {
            cwnd: INITIAL_CWND,
            srtt: None,
            bw: WindowedExtremum::new(true),
            min_rtt: WindowedExtremum::new(false),
            delivered: 0,
            delivered_time: 0,
        }
    }

    pub fn cwnd(&self) -> u32 {
        self.cwnd
    }

    pub fn srtt_ms(&self) -> Option<f64> {
        self.srtt
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn delivered_time(&self) -> u64 {
        self.delivered_time
    }

    /// Current bandwidth estimate in bytes per second.
    pub fn bw_estimate(&self) -> Option<f64> {
        self.bw.get()
    }

    pub fn min_rtt_ms(&self) -> Option<f64> {
        self.min_rtt.get()
    }

    pub fn on_ack(&mut self, ack: &AckInfo) {
        let now = ack.now_ms;
        self.srtt = Some(update_srtt(self.srtt, ack.rtt_sample_ms));
        self.delivered += 1;
        self.delivered_time = now;

        let interval_ms = now.saturating_sub(ack.delivered_time_at_send);
        if interval_ms > 0 {
            let pkts = (self.delivered - ack.delivered_at_send) as f64;
            let rate = pkts * MTU_BYTES as f64 * 1000.0 / interval_ms as f64;
            self.bw.push(now, rate);
        }
        self.min_rtt.push(now, ack.rtt_sample_ms);

        let srtt = self.srtt.unwrap_or(ack.rtt_sample_ms);
        self.bw.expire(now, BW_WINDOW_SRTTS * srtt);
        self.min_rtt.expire(now, MIN_RTT_WINDOW_MS as f64);

        if let (Some(bw), Some(rtt)) = (self.bw.get(), self.min_rtt.get()) {
            self.cwnd = target_cwnd(bw, rtt);
        }
    }
}
