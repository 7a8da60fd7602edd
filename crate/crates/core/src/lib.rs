//! Trace-driven multipath scheduling lab.
//!
//! A deterministic two-path simulator, baseline schedulers, congestion
//! forecasters (linear and transformer), a DQN agent that picks per-path
//! CWND fractions, reward-weight calibration and the statistics used to
//! compare ablation variants.

pub mod agent;
pub mod calibrate;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod experiment;
pub mod netsim;
pub mod nn;
pub mod par;
pub mod predictor;
pub mod scenario;
pub mod schedulers;
pub mod stats;
pub mod trace;

pub use error::{Error, Result};
