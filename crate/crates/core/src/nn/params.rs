use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One named tensor inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// All trainable values of a model in one contiguous buffer, so optimisers,
/// soft updates and checkpoints work on a single slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Params {
    pub specs: Vec<ParamSpec>,
    pub data: Vec<f64>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its offset.
    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, mut init: impl FnMut() -> f64) -> usize {
        let offset = self.data.len();
        self.data.extend((0..rows * cols).map(|_| init()));
        self.specs.push(ParamSpec { name: name.into(), offset, rows, cols });
        offset
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn add_uniform<R: Rng>(&mut self, name: impl Into<String>, rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> usize {
        let bound = 1.0 / (fan_in as f64).sqrt();
        self.add(name, rows, cols, || rng.random_range(-bound..bound))
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.specs.iter().find(|s| s.name == name).map(|s| &self.data[s.range()])
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    /// Loads values from another set with identical layout.
    pub fn copy_from(&mut self, other: &Params) -> Result<()> {
        self.check_layout(other)?;
        self.data.copy_from_slice(&other.data);
        Ok(())
    }

    pub fn check_layout(&self, other: &Params) -> Result<()> {
        if self.specs != other.specs {
            return Err(Error::Checkpoint("parameter layout mismatch".into()));
        }
        Ok(())
    }

    /// `self <- tau * online + (1 - tau) * self`.
    pub fn soft_update(&mut self, online: &Params, tau: f64) -> Result<()> {
        self.check_layout(online)?;
        for (t, o) in self.data.iter_mut().zip(&online.data) {
            *t = tau * o + (1.0 - tau) * *t;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
