use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete CWND-fraction levels (percent) shared by every path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    levels: Vec<u8>,
    n_paths: usize,
}

impl ActionSpace {
    pub fn new(levels: Vec<u8>, n_paths: usize) -> Result<Self> {
        if levels.len() < 2 || levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("levels must be strictly ascending: {levels:?}")));
        }
        if levels[0] != 30 || *levels.last().unwrap() != 100 {
            return Err(Error::Config(format!("levels must span 30..=100: {levels:?}")));
        }
        if n_paths == 0 {
            return Err(Error::Config("need at least one path".into()));
        }
        Ok(Self { levels, n_paths })
    }

    /// The standard 2-, 3-, 5- and 7-level grids.
    pub fn with_granularity(k: usize, n_paths: usize) -> Result<Self> {
        let levels = match k {
            2 => vec![30, 100],
            3 => vec![30, 65, 100],
            5 => vec![30, 47, 65, 82, 100],
            7 => vec![30, 42, 53, 65, 77, 88, 100],
            _ => return Err(Error::Config(format!("unsupported granularity {k}; expected 2, 3, 5 or 7"))),
        };
        Self::new(levels, n_paths)
    }

    pub fn five_level(n_paths: usize) -> Self {
        Self::with_granularity(5, n_paths).expect("static grid")
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn min_level(&self) -> u8 {
        self.levels[0]
    }

    pub fn max_level(&self) -> u8 {
        *self.levels.last().unwrap()
    }

    /// K^N.
    pub fn joint_count(&self) -> usize {
        self.levels.len().pow(self.n_paths as u32)
    }

    pub fn contains(&self, phi: u8) -> bool {
        self.levels.contains(&phi)
    }

    /// Row-major decoding: path 0 is the most significant digit.
    pub fn decode(&self, index: usize) -> Vec<u8> {
        let k = self.levels.len();
        let mut rem = index;
        let mut out = vec![0; self.n_paths];
        for slot in out.iter_mut().rev() {
            *slot = self.levels[rem % k];
            rem /= k;
        }
        out
    }

    pub fn encode(&self, phis: &[u8]) -> Result<usize> {
        self.check(phis)?;
        let k = self.levels.len();
        Ok(phis.iter().fold(0, |acc, &p| acc * k + self.levels.iter().position(|&l| l == p).unwrap()))
    }

    pub fn check(&self, phis: &[u8]) -> Result<()> {
        if phis.len() != self.n_paths {
            return Err(Error::Contract(format!("expected {} fractions, got {}", self.n_paths, phis.len())));
        }
        if let Some(bad) = phis.iter().find(|p| !self.contains(**p)) {
            return Err(Error::Contract(format!("fraction {bad} not in {:?}", self.levels)));
        }
        Ok(())
    }

    /// Nearest level; ties resolve toward `prefer_up`.
    pub fn snap(&self, value: i32, prefer_up: bool) -> u8 {
        let mut best = self.levels[0];
        let mut best_d = i32::MAX;
        for &l in &self.levels {
            let d = (l as i32 - value).abs();
            if d < best_d || (d == best_d && prefer_up) {
                best = l;
                best_d = d;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_mapping() {
        let a = ActionSpace::five_level(2);
        assert_eq!(a.joint_count(), 25);
        // divmod oracle: 7 = 1 * 5 + 2
        assert_eq!(a.decode(7), vec![47, 65]);
        for i in 0..25 {
            let (hi, lo) = (i / 5, i % 5);
            assert_eq!(a.decode(i), vec![a.levels()[hi], a.levels()[lo]]);
            assert_eq!(a.encode(&a.decode(i)).unwrap(), i);
        }
    }

    #[test]
    fn granularities() {
        for (k, n) in [(2, 4), (3, 9), (5, 25), (7, 49)] {
            assert_eq!(ActionSpace::with_granularity(k, 2).unwrap().joint_count(), n);
        }
        assert!(ActionSpace::with_granularity(4, 2).is_err());
        assert!(ActionSpace::new(vec![30, 20, 100], 2).is_err());
        assert!(ActionSpace::new(vec![40, 100], 2).is_err());
    }

    #[test]
    fn snapping() {
        let a = ActionSpace::five_level(2);
        assert_eq!(a.snap(75, true), 82);
        assert_eq!(a.snap(90, false), 82);
        assert_eq!(a.snap(72, false), 65);
        assert_eq!(a.snap(110, true), 100);
    }

    #[test]
    fn rejects_off_grid() {
        let a = ActionSpace::five_level(2);
        assert!(matches!(a.check(&[30, 50]), Err(Error::Contract(_))));
        assert!(a.check(&[30, 100]).is_ok());
    }
}
