//! Random search over the six reward weights.
//!
//! Each candidate trains a short-budget agent with its own weights and is
//! scored by its mean episode reward plus ten times its preemptive rate. The
//! reference weights always enter as candidate 0.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{preemptive_rate, train_agent, ActionSpace, AgentTrainConfig, Env, EnvConfig, ForecastSource, RewardWeights};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::predictor::Predictor;
use crate::scenario::Scenario;

pub const PREEMPTIVE_SCORE_WEIGHT: f64 = 10.0;

/// Inclusive sampling bounds, in [`RewardWeights::NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSearchSpace {
    pub ranges: [(f64, f64); 6],
}

impl Default for WeightSearchSpace {
    fn default() -> Self {
        Self { ranges: [(0.1, 5.0), (0.1, 5.0), (0.01, 3.0), (0.01, 2.0), (0.01, 3.0), (0.01, 1.0)] }
    }
}

impl WeightSearchSpace {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RewardWeights {
        RewardWeights::from_array(self.ranges.map(|(lo, hi)| rng.random_range(lo..=hi)))
    }

    pub fn contains(&self, w: &RewardWeights) -> bool {
        w.as_array().iter().zip(&self.ranges).all(|(v, (lo, hi))| (lo..=hi).contains(&v))
    }
}

pub fn score(mean_reward: f64, preemptive_rate: f64) -> f64 {
    mean_reward + PREEMPTIVE_SCORE_WEIGHT * preemptive_rate
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub index: usize,
    pub weights: RewardWeights,
    pub mean_reward: f64,
    pub preemptive_rate: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub iterations: usize,
    pub episodes_per_candidate: usize,
    pub seed: u64,
    pub space: WeightSearchSpace,
    pub env: EnvConfig,
    pub train: AgentTrainConfig,
    pub exec: Execution,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            iterations: 50,
            episodes_per_candidate: 30,
            seed: 0,
            space: WeightSearchSpace::default(),
            env: EnvConfig::default(),
            train: AgentTrainConfig::default(),
            exec: Execution::Parallel,
        }
    }
}

/// Sorts by descending score; ties keep the lower index first.
pub fn sort_leaderboard(c: &mut [Candidate]) {
    c.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
}

/// The candidate weight vectors: the reference weights, then uniform draws.
pub fn candidate_weights(cfg: &CalibrationConfig) -> Vec<RewardWeights> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    std::iter::once(RewardWeights::default())
        .chain((1..cfg.iterations).map(|_| cfg.space.sample(&mut rng)))
        .collect()
}

/// Scores every candidate and returns the best weights with the sorted
/// leaderboard. Candidates share environment and agent seeds so that only
/// the weights differ between them.
pub fn random_search(
    scenario: &Scenario,
    predictor: Arc<Predictor>,
    space: &ActionSpace,
    cfg: &CalibrationConfig,
) -> Result<(RewardWeights, Vec<Candidate>)> {
    if cfg.iterations == 0 {
        return Err(Error::Config("calibration needs at least one iteration".into()));
    }
    let weights = candidate_weights(cfg);
    let jobs: Vec<(usize, RewardWeights)> = weights.into_iter().enumerate().collect();
    let results = par::map(cfg.exec, jobs, |(index, w)| -> Result<Candidate> {
        let mut env =
            Env::new(scenario.clone(), predictor.clone(), space.clone(), w, ForecastSource::Predictor, cfg.env.clone(), cfg.seed)?;
        let train = AgentTrainConfig { episodes: cfg.episodes_per_candidate, seed: cfg.seed, ..cfg.train.clone() };
        let (_, logs) = train_agent(&mut env, &train, |_| {})?;
        let mean_reward = logs.iter().map(|l| l.total_reward).sum::<f64>() / logs.len().max(1) as f64;
        let p = preemptive_rate(&logs);
        Ok(Candidate { index, weights: w, mean_reward, preemptive_rate: p, score: score(mean_reward, p) })
    });
    let mut board = results.into_iter().collect::<Result<Vec<_>>>()?;
    sort_leaderboard(&mut board);
    Ok((board[0].weights, board))
}

pub const LEADERBOARD_CSV_HEADER: &str =
    "index,throughput,delay,preemptive,stability,quality,idleness,mean_reward,preemptive_rate,score";

pub fn write_leaderboard_csv<W: Write>(mut w: W, board: &[Candidate], header_comment: Option<&str>) -> Result<()> {
    if let Some(c) = header_comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{LEADERBOARD_CSV_HEADER}")?;
    for c in board {
        let a = c.weights.as_array();
        writeln!(
            w,
            "{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.6},{:.4},{:.6}",
            c.index, a[0], a[1], a[2], a[3], a[4], a[5], c.mean_reward, c.preemptive_rate, c.score
        )?;
    }
    Ok(())
}
