//! Connection-level reorder buffer.

use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Held {
    Data { arrival_ms: u64, sent_ms: u64 },
    Lost,
}

/// A packet handed to the application in sequence order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Released {
    pub seq: u64,
    pub sent_ms: u64,
    pub arrival_ms: u64,
    pub release_ms: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ReceiverState {
    next_expected: u64,
    held: BTreeMap<u64, Held>,
    ofo_count: u64,
    hol_delay_sum_ms: u64,
    duplicates: u64,
    released: u64,
    skipped: u64,
}

impl ReceiverState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_expected(&self) -> u64 {
        self.next_expected
    }

    pub fn ofo_count(&self) -> u64 {
        self.ofo_count
    }

    pub fn hol_delay_sum_ms(&self) -> u64 {
        self.hol_delay_sum_ms
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    pub fn released(&self) -> u64 {
        self.released
    }

    /// Sequence numbers declared lost and skipped over.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    pub fn held_len(&self) -> usize {
        self.held.values().filter(|h| matches!(h, Held::Data { .. })).count()
    }

    /// Accepts one arriving packet and returns whatever becomes deliverable.
    pub fn ingest(&mut self, seq: u64, sent_ms: u64, now_ms: u64) -> Vec<Released> {
        let mut out = Vec::new();
        self.ingest_into(seq, sent_ms, now_ms, &mut out);
        out
    }

    pub fn ingest_into(&mut self, seq: u64, sent_ms: u64, now_ms: u64, out: &mut Vec<Released>) {
        if seq < self.next_expected || self.held.contains_key(&seq) {
            self.duplicates += 1;
            return;
        }
        if seq > self.next_expected {
            self.ofo_count += 1;
            self.held.insert(seq, Held::Data { arrival_ms: now_ms, sent_ms });
            return;
        }
        out.push(Released { seq, sent_ms, arrival_ms: now_ms, release_ms: now_ms });
        self.released += 1;
        self.next_expected += 1;
        self.drain(now_ms, out);
    }

    /// Marks `seq` as never arriving so the buffer can move past it.
    pub fn mark_lost(&mut self, seq: u64, now_ms: u64, out: &mut Vec<Released>) {
        if seq < self.next_expected || self.held.contains_key(&seq) {
            return;
        }
        if seq > self.next_expected {
            self.held.insert(seq, Held::Lost);
            return;
        }
        self.skipped += 1;
        self.next_expected += 1;
        self.drain(now_ms, out);
    }

    fn drain(&mut self, now_ms: u64, out: &mut Vec<Released>) {
        while let Some(entry) = self.held.first_entry() {
            if *entry.key() != self.next_expected {
                break;
            }
            let seq = *entry.key();
            match entry.remove() {
                Held::Data { arrival_ms, sent_ms } => {
                    self.hol_delay_sum_ms += now_ms - arrival_ms;
                    self.released += 1;
                    out.push(Released { seq, sent_ms, arrival_ms, release_ms: now_ms });
                }
                Held::Lost => self.skipped += 1,
            }
            self.next_expected += 1;
        }
    }
}
