//! Baseline schedulers.
//!
//! Per-packet schedulers (round-robin, CPF, minRTT) pick the path for the
//! next segment. Rate-allocation schedulers emit a CWND-fraction vector once
//! per control cycle.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::ActionSpace;

/// What a per-packet scheduler sees of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathView {
    /// Spare effective window (in-flight below the fraction cap).
    pub has_room: bool,
    pub srtt_ms: f64,
    /// Lower value is preferred.
    pub priority: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Path(usize),
    Wait,
}

/// Strict alternation among paths with room.
pub fn rr_next(last: Option<usize>, paths: &[PathView]) -> Decision {
    let n = paths.len();
    let start = last.map_or(0, |l| l + 1);
    (0..n)
        .map(|k| (start + k) % n)
        .find(|&p| paths[p].has_room)
        .map_or(Decision::Wait, Decision::Path)
}

/// Lowest SRTT among paths with room; ties go to the lowest index.
pub fn minrtt_next(paths: &[PathView]) -> Decision {
    paths
        .iter()
        .enumerate()
        .filter(|(_, v)| v.has_room)
        .min_by(|(i, a), (j, b)| a.srtt_ms.partial_cmp(&b.srtt_ms).unwrap_or(Ordering::Equal).then(i.cmp(j)))
        .map_or(Decision::Wait, |(i, _)| Decision::Path(i))
}

/// Cheapest pipe first: best priority with room, then lowest SRTT.
pub fn cpf_next(paths: &[PathView]) -> Decision {
    paths
        .iter()
        .enumerate()
        .filter(|(_, v)| v.has_room)
        .min_by(|(i, a), (j, b)| {
            a.priority
                .cmp(&b.priority)
                .then(a.srtt_ms.partial_cmp(&b.srtt_ms).unwrap_or(Ordering::Equal))
                .then(i.cmp(j))
        })
        .map_or(Decision::Wait, |(i, _)| Decision::Path(i))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PacketScheduler {
    RoundRobin { last: Option<usize> },
    Cpf,
    MinRtt,
}

impl PacketScheduler {
    pub fn round_robin() -> Self {
        Self::RoundRobin { last: None }
    }

    pub fn next(&mut self, paths: &[PathView]) -> Decision {
        match self {
            Self::RoundRobin { last } => {
                let d = rr_next(*last, paths);
                if let Decision::Path(p) = d {
                    *last = Some(p);
                }
                d
            }
            Self::Cpf => cpf_next(paths),
            Self::MinRtt => minrtt_next(paths),
        }
    }
}

/// Same fraction on every path.
pub fn static_phi(level: u8, n_paths: usize) -> Vec<u8> {
    vec![level; n_paths]
}

/// Moves each path's fraction one 10-point step along its CWND trend, clamps
/// to [30, 100] and snaps to the grid. A flat trend holds the fraction.
pub fn reactive_phi(prev: &[u8], trend: &[Ordering], space: &ActionSpace) -> Vec<u8> {
    prev.iter()
        .zip(trend)
        .map(|(&p, t)| {
            let raw = match t {
                Ordering::Greater => p as i32 + 10,
                Ordering::Less => p as i32 - 10,
                Ordering::Equal => return p,
            };
            let clamped = raw.clamp(space.min_level() as i32, space.max_level() as i32);
            space.snap(clamped, *t == Ordering::Greater)
        })
        .collect()
}

/// Uniform over the joint action set.
pub fn random_phi<R: Rng + ?Sized>(rng: &mut R, space: &ActionSpace) -> Vec<u8> {
    space.decode(rng.random_range(0..space.joint_count()))
}

/// Sign of the per-path CWND change between two control cycles.
pub fn cwnd_trend(prev: &[f64], now: &[f64]) -> Vec<Ordering> {
    prev.iter().zip(now).map(|(a, b)| b.partial_cmp(a).unwrap_or(Ordering::Equal)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn view(has_room: bool, srtt_ms: f64, priority: u32) -> PathView {
        PathView { has_room, srtt_ms, priority }
    }

    #[test]
    fn round_robin() {
        let both = [view(true, 1.0, 0), view(true, 1.0, 0)];
        assert_eq!(rr_next(Some(0), &both), Decision::Path(1));
        let second_full = [view(true, 1.0, 0), view(false, 1.0, 0)];
        let mut s = PacketScheduler::round_robin();
        assert_eq!(s.next(&second_full), Decision::Path(0));
        assert_eq!(s.next(&second_full), Decision::Path(0));
        assert_eq!(rr_next(Some(1), &[view(false, 1.0, 0), view(false, 1.0, 0)]), Decision::Wait);
    }

    #[test]
    fn cheapest_pipe_first() {
        let p = [view(true, 80.0, 1), view(true, 40.0, 2)];
        assert_eq!(cpf_next(&p), Decision::Path(0));
        let exhausted = [view(false, 80.0, 1), view(true, 40.0, 2)];
        assert_eq!(cpf_next(&exhausted), Decision::Path(1));
        let equal = [view(true, 80.0, 1), view(true, 40.0, 1)];
        assert_eq!(cpf_next(&equal), Decision::Path(1));
        assert_eq!(cpf_next(&[view(false, 1.0, 1), view(false, 1.0, 2)]), Decision::Wait);
    }

    #[test]
    fn min_rtt() {
        assert_eq!(minrtt_next(&[view(true, 50.0, 0), view(true, 30.0, 0)]), Decision::Path(1));
        assert_eq!(minrtt_next(&[view(true, 50.0, 0), view(false, 30.0, 0)]), Decision::Path(0));
        assert_eq!(minrtt_next(&[view(true, 30.0, 0), view(true, 30.0, 0)]), Decision::Path(0));
        assert_eq!(minrtt_next(&[view(false, 30.0, 0), view(false, 30.0, 0)]), Decision::Wait);
    }

    #[test]
    fn static_levels() {
        assert_eq!(static_phi(30, 2), vec![30, 30]);
        assert_eq!(static_phi(65, 2), vec![65, 65]);
        assert_eq!(static_phi(100, 2), vec![100, 100]);
    }

    /// Nearest grid level by exhaustive distance comparison.
    fn nearest(levels: &[u8], v: i32) -> u8 {
        let mut best = levels[0];
        for &l in levels {
            if (l as i32 - v).abs() < (best as i32 - v).abs() {
                best = l;
            }
        }
        best
    }

    #[test]
    fn reactive_steps() {
        let a = ActionSpace::five_level(2);
        assert_eq!(nearest(a.levels(), 75), 82);
        assert_eq!(reactive_phi(&[65, 100], &[Ordering::Greater, Ordering::Greater], &a), vec![82, 100]);
        assert_eq!(reactive_phi(&[30, 47], &[Ordering::Less, Ordering::Equal], &a), vec![30, 47]);
        // every reactive move lands one grid level away (or clamps)
        for (i, &l) in a.levels().iter().enumerate() {
            let up = reactive_phi(&[l], &[Ordering::Greater], &ActionSpace::five_level(1))[0];
            let down = reactive_phi(&[l], &[Ordering::Less], &ActionSpace::five_level(1))[0];
            assert_eq!(up, a.levels()[(i + 1).min(4)]);
            assert_eq!(down, a.levels()[i.saturating_sub(1)]);
        }
    }

    #[test]
    fn random_is_seeded_and_on_grid() {
        let a = ActionSpace::five_level(2);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| random_phi(&mut rng, &a)).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert!(draw(4).iter().all(|v| a.check(v).is_ok()));
    }

    #[test]
    fn random_is_uniform() {
        let a = ActionSpace::five_level(2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut counts = vec![0usize; 25];
        for _ in 0..n {
            counts[a.encode(&random_phi(&mut rng, &a)).unwrap()] += 1;
        }
        let expected = n as f64 / 25.0;
        for c in &counts {
            assert!(((*c as f64) - expected).abs() / expected < 0.10, "{counts:?}");
        }
        // chi-square with 24 dof; 99.9th percentile is 51.2
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 51.2, "chi2 {chi2}");
    }

    #[test]
    fn cpf_with_equal_priorities_matches_minrtt() {
        let srtts = [10.0, 20.0, 20.0, 35.5];
        for &a in &srtts {
            for &b in &srtts {
                for room in 0..4u8 {
                    let p = [view(room & 1 != 0, a, 3), view(room & 2 != 0, b, 3)];
                    assert_eq!(cpf_next(&p), minrtt_next(&p));
                }
            }
        }
    }
}
