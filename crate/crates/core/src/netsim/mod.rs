//! Deterministic 1 ms-step multipath simulator.
//!
//! Each path has a bottleneck queue drained by its delivery trace, a fixed
//! one-way propagation delay in both directions and its own [`BbrLike`]
//! controller. A saturating bulk sender feeds a connection-level queue; the
//! packet scheduler moves segments onto paths whose in-flight count is below
//! `floor(phi / 100 * cwnd)`. The receiver releases segments in sequence
//! order through a reorder buffer.

pub mod cc;
pub mod receiver;
pub mod telemetry;

use std::collections::VecDeque;
use std::sync::Arc;

pub use cc::{update_srtt, AckInfo, BbrLike};
pub use receiver::{ReceiverState, Released};
pub use telemetry::{BinAccumulator, PathBin, SubflowTelemetry, TelemetryBin};

use crate::agent::ActionSpace;
use crate::error::{Error, Result};
use crate::schedulers::{Decision, PacketScheduler, PathView};
use crate::trace::{DeliveryTrace, MTU_BYTES};

pub const DEFAULT_PROP_DELAY_MS: u64 = 20;
pub const DEFAULT_QUEUE_CAPACITY: usize = 100;
pub const DEFAULT_BIN_MS: u64 = 100;
/// Segments the bulk sender keeps queued at connection level.
pub const META_BACKLOG: usize = 256;

#[derive(Debug, Clone)]
pub struct PathConfig {
    pub trace: Arc<DeliveryTrace>,
    pub prop_delay_ms: u64,
    pub queue_capacity_pkts: usize,
    /// CPF rank; lower is preferred.
    pub priority: u32,
    /// Phase of the trace at simulation time zero.
    pub trace_offset_ms: u64,
}

impl PathConfig {
    pub fn new(trace: Arc<DeliveryTrace>) -> Self {
        Self {
            trace,
            prop_delay_ms: DEFAULT_PROP_DELAY_MS,
            queue_capacity_pkts: DEFAULT_QUEUE_CAPACITY,
            priority: 0,
            trace_offset_ms: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.queue_capacity_pkts == 0 {
            return Err(Error::Config("queue_capacity_pkts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub seq: u64,
    pub size_bytes: u32,
    pub enqueue_time_ms: u64,
    pub path_id: usize,
    pub deliver_time_ms: Option<u64>,
    delivered_at_send: u64,
    delivered_time_at_send: u64,
}

#[derive(Debug, Clone)]
struct PathState {
    cfg: PathConfig,
    cc: BbrLike,
    queue: VecDeque<Packet>,
    /// Dequeued, travelling to the receiver; ordered by arrival time.
    propagating: VecDeque<Packet>,
    /// ACKs travelling back: (arrival at sender, packet).
    acks: VecDeque<(u64, Packet)>,
    /// Loss signals reaching the sender.
    sender_loss: VecDeque<u64>,
    /// Loss signals reaching the receiver: (time, seq).
    receiver_loss: VecDeque<(u64, u64)>,
    in_flight: u64,
    fraction: u8,
    sent: u64,
    lost: u64,
    arrived: u64,
    arrived_in_bin: u64,
}

impl PathState {
    fn cap(&self) -> u64 {
        self.fraction as u64 * self.cc.cwnd() as u64 / 100
    }

    fn srtt_or_initial(&self) -> f64 {
        self.cc.srtt_ms().unwrap_or((2 * self.cfg.prop_delay_ms).max(1) as f64)
    }
}

/// Conservation terms: `sent == delivered + lost + propagating + queued`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PacketLedger {
    pub sent: u64,
    pub delivered: u64,
    pub lost: u64,
    pub propagating: u64,
    pub queued: u64,
}

impl PacketLedger {
    pub fn balanced(&self) -> bool {
        self.sent == self.delivered + self.lost + self.propagating + self.queued
    }
}

#[derive(Debug, Clone)]
pub struct Simulator {
    now: u64,
    paths: Vec<PathState>,
    scheduler: PacketScheduler,
    receiver: ReceiverState,
    next_seq: u64,
    meta_queue: usize,
    bins: BinAccumulator,
    telemetry: Vec<TelemetryBin>,
    /// In-order bytes released per completed bin.
    goodput_bins: Vec<u64>,
    /// Per path, packets arriving at the receiver per completed bin.
    path_arrival_bins: Vec<Vec<u64>>,
    released_in_bin: u64,
    released_total: u64,
    record_delays: bool,
    delays: Vec<u32>,
    /// Largest `in_flight - cap` seen right after a dispatch.
    max_dispatch_excess: i64,
    scratch: Vec<Released>,
}

impl Simulator {
    pub fn new(paths: Vec<PathConfig>, scheduler: PacketScheduler) -> Result<Self> {
        Self::with_bin(paths, scheduler, DEFAULT_BIN_MS)
    }

    pub fn with_bin(paths: Vec<PathConfig>, scheduler: PacketScheduler, bin_ms: u64) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::Config("simulator needs at least one path".into()));
        }
        if bin_ms == 0 {
            return Err(Error::Config("bin_ms must be positive".into()));
        }
        for p in &paths {
            p.validate()?;
        }
        let n = paths.len();
        let paths = paths
            .into_iter()
            .map(|cfg| PathState {
                cfg,
                cc: BbrLike::new(),
                queue: VecDeque::new(),
                propagating: VecDeque::new(),
                acks: VecDeque::new(),
                sender_loss: VecDeque::new(),
                receiver_loss: VecDeque::new(),
                in_flight: 0,
                fraction: 100,
                sent: 0,
                lost: 0,
                arrived: 0,
                arrived_in_bin: 0,
            })
            .collect();
        Ok(Self {
            now: 0,
            paths,
            scheduler,
            receiver: ReceiverState::new(),
            next_seq: 0,
            meta_queue: 0,
            bins: BinAccumulator::new(n, bin_ms, 0),
            telemetry: Vec::new(),
            goodput_bins: Vec::new(),
            path_arrival_bins: vec![Vec::new(); n],
            released_in_bin: 0,
            released_total: 0,
            record_delays: false,
            delays: Vec::new(),
            max_dispatch_excess: i64::MIN,
            scratch: Vec::new(),
        })
    }

    /// Keep per-packet end-to-end delays (dispatch to in-order release).
    pub fn record_delays(mut self, on: bool) -> Self {
        self.record_delays = on;
        self
    }

    pub fn now_ms(&self) -> u64 {
        self.now
    }

    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn bin_ms(&self) -> u64 {
        self.bins.bin_ms()
    }

    pub fn receiver(&self) -> &ReceiverState {
        &self.receiver
    }

    pub fn cwnd(&self, path: usize) -> u32 {
        self.paths[path].cc.cwnd()
    }

    pub fn srtt_ms(&self, path: usize) -> f64 {
        self.paths[path].srtt_or_initial()
    }

    pub fn in_flight(&self, path: usize) -> u64 {
        self.paths[path].in_flight
    }

    pub fn fractions(&self) -> Vec<u8> {
        self.paths.iter().map(|p| p.fraction).collect()
    }

    /// Effective in-flight cap in segments.
    pub fn effective_cap(&self, path: usize) -> u64 {
        self.paths[path].cap()
    }

    pub fn max_dispatch_excess(&self) -> i64 {
        self.max_dispatch_excess
    }

    pub fn released_packets(&self) -> u64 {
        self.released_total
    }

    pub fn delays_ms(&self) -> &[u32] {
        &self.delays
    }

    pub fn goodput_bins(&self) -> &[u64] {
        &self.goodput_bins
    }

    pub fn path_arrival_bins(&self) -> &[Vec<u64>] {
        &self.path_arrival_bins
    }

    /// Caps admission on each path at `floor(phi / 100 * cwnd)` from the next
    /// dispatch on.
    pub fn apply_cwnd_fractions(&mut self, phis: &[u8], space: &ActionSpace) -> Result<()> {
        if phis.len() != self.paths.len() {
            return Err(Error::Contract(format!("expected {} fractions, got {}", self.paths.len(), phis.len())));
        }
        space.check(phis)?;
        for (p, &phi) in self.paths.iter_mut().zip(phis) {
            p.fraction = phi;
        }
        Ok(())
    }

    pub fn ledger(&self) -> PacketLedger {
        let mut l = PacketLedger::default();
        for p in &self.paths {
            l.sent += p.sent;
            l.delivered += p.arrived;
            l.lost += p.lost;
            l.propagating += p.propagating.len() as u64;
            l.queued += p.queue.len() as u64;
        }
        l
    }

    pub fn sample(&self, path: usize) -> SubflowTelemetry {
        let p = &self.paths[path];
        SubflowTelemetry {
            cwnd_segments: p.cc.cwnd(),
            srtt_ms: p.srtt_or_initial(),
            bytes_in_flight: p.in_flight * MTU_BYTES,
            subflow_queue_depth: p.queue.len(),
            meta_queue_depth: self.meta_queue,
            lost_packets: p.lost,
            delivered_packets: p.cc.delivered(),
            avail_cwnd_fraction: p.fraction as f64 / 100.0,
        }
    }

    /// Completed telemetry bins since construction or the last drain.
    pub fn telemetry(&self) -> &[TelemetryBin] {
        &self.telemetry
    }

    pub fn drain_telemetry(&mut self) -> Vec<TelemetryBin> {
        std::mem::take(&mut self.telemetry)
    }

    pub fn run(&mut self, ms: u64) {
        for _ in 0..ms {
            self.step();
        }
    }

    /// Advances the clock by one millisecond.
    pub fn step(&mut self) {
        let now = self.now;
        self.process_feedback(now);
        self.process_arrivals(now);
        self.dispatch(now);
        self.transmit(now);
        self.record_sample();
        self.now += 1;
    }

    fn process_feedback(&mut self, now: u64) {
        for p in &mut self.paths {
            while p.acks.front().is_some_and(|(t, _)| *t <= now) {
                let (_, pkt) = p.acks.pop_front().unwrap();
                p.in_flight -= 1;
                p.cc.on_ack(&AckInfo {
                    now_ms: now,
                    rtt_sample_ms: (now - pkt.enqueue_time_ms) as f64,
                    delivered_at_send: pkt.delivered_at_send,
                    delivered_time_at_send: pkt.delivered_time_at_send,
                });
            }
            while p.sender_loss.front().is_some_and(|t| *t <= now) {
                p.sender_loss.pop_front();
                p.in_flight -= 1;
            }
        }
    }

    fn process_arrivals(&mut self, now: u64) {
        let mut released = std::mem::take(&mut self.scratch);
        released.clear();
        for p in &mut self.paths {
            let prop = p.cfg.prop_delay_ms;
            while p.propagating.front().is_some_and(|pkt| pkt.deliver_time_ms.unwrap() <= now) {
                let pkt = p.propagating.pop_front().unwrap();
                p.arrived += 1;
                p.arrived_in_bin += 1;
                self.receiver.ingest_into(pkt.seq, pkt.enqueue_time_ms, now, &mut released);
                p.acks.push_back((now + prop, pkt));
            }
            while p.receiver_loss.front().is_some_and(|(t, _)| *t <= now) {
                let (_, seq) = p.receiver_loss.pop_front().unwrap();
                self.receiver.mark_lost(seq, now, &mut released);
            }
        }
        self.released_total += released.len() as u64;
        self.released_in_bin += released.len() as u64;
        if self.record_delays {
            self.delays.extend(released.iter().map(|r| (r.release_ms - r.sent_ms) as u32));
        }
        self.scratch = released;
    }

    fn dispatch(&mut self, now: u64) {
        self.meta_queue = META_BACKLOG;
        let mut views: Vec<PathView> = Vec::with_capacity(self.paths.len());
        while self.meta_queue > 0 {
            views.clear();
            views.extend(self.paths.iter().map(|p| PathView {
                has_room: p.in_flight < p.cap(),
                srtt_ms: p.srtt_or_initial(),
                priority: p.cfg.priority,
            }));
            let path = match self.scheduler.next(&views) {
                Decision::Path(i) => i,
                Decision::Wait => break,
            };
            self.meta_queue -= 1;
            let seq = self.next_seq;
            self.next_seq += 1;
            let p = &mut self.paths[path];
            let pkt = Packet {
                seq,
                size_bytes: MTU_BYTES as u32,
                enqueue_time_ms: now,
                path_id: path,
                deliver_time_ms: None,
                delivered_at_send: p.cc.delivered(),
                delivered_time_at_send: p.cc.delivered_time(),
            };
            p.sent += 1;
            p.in_flight += 1;
            self.max_dispatch_excess = self.max_dispatch_excess.max(p.in_flight as i64 - p.cap() as i64);
            if p.queue.len() >= p.cfg.queue_capacity_pkts {
                p.lost += 1;
                let prop = p.cfg.prop_delay_ms;
                p.receiver_loss.push_back((now + prop, seq));
                p.sender_loss.push_back(now + 2 * prop);
            } else {
                p.queue.push_back(pkt);
            }
        }
    }

    fn transmit(&mut self, now: u64) {
        for p in &mut self.paths {
            let opp = p.cfg.trace.opportunities_at(now + p.cfg.trace_offset_ms);
            let n = (opp as usize).min(p.queue.len());
            for _ in 0..n {
                let mut pkt = p.queue.pop_front().unwrap();
                pkt.deliver_time_ms = Some(now + p.cfg.prop_delay_ms);
                p.propagating.push_back(pkt);
            }
        }
    }

    fn record_sample(&mut self) {
        let samples: Vec<SubflowTelemetry> = (0..self.paths.len()).map(|i| self.sample(i)).collect();
        if let Some(bin) = self.bins.push(&samples) {
            self.telemetry.push(bin);
            self.goodput_bins.push(self.released_in_bin * MTU_BYTES);
            self.released_in_bin = 0;
            for (p, series) in self.paths.iter_mut().zip(&mut self.path_arrival_bins) {
                series.push(p.arrived_in_bin);
                p.arrived_in_bin = 0;
            }
        }
    }
}
