//! Training loop, evaluation episodes and episode logs.

use std::cmp::Ordering;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dqn::{DqnAgent, DqnConfig};
use super::env::Env;
use super::replay::{ReplayBuffer, Transition};
use super::reward::RewardComponents;
use crate::error::Result;
use crate::schedulers::{cwnd_trend, random_phi, reactive_phi, static_phi};

/// Per-episode summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub total_reward: f64,
    /// Per-cycle mean of each component.
    pub components: RewardComponents,
    pub preemptive_events: usize,
    pub preemptive_handled: usize,
    pub goodput_bps: f64,
    pub epsilon: f64,
    /// Mean TD loss over the episode's updates; NaN when none ran.
    pub mean_loss: f64,
    pub cycles: usize,
}

impl EpisodeLog {
    /// Share of flagged cycles where the agent cut a flagged path. Zero when
    /// nothing was flagged.
    pub fn preemptive_rate(&self) -> f64 {
        if self.preemptive_events == 0 {
            0.0
        } else {
            self.preemptive_handled as f64 / self.preemptive_events as f64
        }
    }
}

/// Pooled preemptive rate over several episodes.
pub fn preemptive_rate(logs: &[EpisodeLog]) -> f64 {
    let events: usize = logs.iter().map(|l| l.preemptive_events).sum();
    let handled: usize = logs.iter().map(|l| l.preemptive_handled).sum();
    if events == 0 {
        0.0
    } else {
        handled as f64 / events as f64
    }
}

pub const EPISODE_CSV_HEADER: &str = "episode,total_reward,throughput,delay,preemptive,stability,quality,idleness,preemptive_rate,goodput_mbps,epsilon,mean_loss";

pub fn write_episode_csv<W: Write>(mut w: W, logs: &[EpisodeLog], header_comment: Option<&str>) -> Result<()> {
    if let Some(c) = header_comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{EPISODE_CSV_HEADER}")?;
    for l in logs {
        let c = l.components.as_array();
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4},{:.6}",
            l.episode,
            l.total_reward,
            c[0],
            c[1],
            c[2],
            c[3],
            c[4],
            c[5],
            l.preemptive_rate(),
            l.goodput_bps / 1e6,
            l.epsilon,
            l.mean_loss
        )?;
    }
    Ok(())
}

/// One control cycle of a training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub episode: usize,
    pub cycle: usize,
    /// State the action was chosen from.
    pub state: Vec<f64>,
    pub action: usize,
    pub phi: Vec<u8>,
    pub components: RewardComponents,
    pub reward: f64,
}

/// Writes the column header of a per-cycle log for a `state_dim`-entry state
/// over `n_paths` paths.
pub fn write_cycle_csv_header<W: Write>(mut w: W, state_dim: usize, n_paths: usize, header_comment: Option<&str>) -> Result<()> {
    if let Some(c) = header_comment {
        writeln!(w, "# {c}")?;
    }
    let mut cols: Vec<String> = vec!["episode".into(), "cycle".into()];
    cols.extend((0..state_dim).map(|i| format!("s{i}")));
    cols.push("action".into());
    cols.extend((0..n_paths).map(|p| format!("phi{p}")));
    cols.extend(super::reward::RewardWeights::NAMES.iter().map(|n| n.to_string()));
    cols.push("reward".into());
    writeln!(w, "{}", cols.join(","))?;
    Ok(())
}

pub fn write_cycle_csv_row<W: Write>(mut w: W, r: &CycleRecord) -> Result<()> {
    let mut row = format!("{},{}", r.episode, r.cycle);
    for v in &r.state {
        row.push_str(&format!(",{v:.6}"));
    }
    row.push_str(&format!(",{}", r.action));
    for p in &r.phi {
        row.push_str(&format!(",{p}"));
    }
    for c in r.components.as_array() {
        row.push_str(&format!(",{c:.6}"));
    }
    writeln!(w, "{row},{:.6}", r.reward)?;
    Ok(())
}

/// A fraction-vector policy run once per control cycle.
#[derive(Debug, Clone)]
pub enum Policy {
    Greedy(Box<DqnAgent>),
    Static(u8),
    Reactive,
    Random,
}

#[derive(Debug, Default)]
struct Accumulator {
    total: f64,
    comps: [f64; 6],
    events: usize,
    handled: usize,
    loss_sum: f64,
    loss_n: usize,
    cycles: usize,
}

impl Accumulator {
    fn add(&mut self, out: &super::env::StepOutcome) {
        self.total += out.reward;
        for (s, c) in self.comps.iter_mut().zip(out.components.as_array()) {
            *s += c;
        }
        if let Some(h) = out.preemptive {
            self.events += 1;
            self.handled += h as usize;
        }
        self.cycles += 1;
    }

    fn finish(self, episode: usize, env: &Env, epsilon: f64) -> EpisodeLog {
        let n = self.cycles.max(1) as f64;
        EpisodeLog {
            episode,
            total_reward: self.total,
            components: RewardComponents::from_array(self.comps.map(|c| c / n)),
            preemptive_events: self.events,
            preemptive_handled: self.handled,
            goodput_bps: env.goodput_bps(),
            epsilon,
            mean_loss: if self.loss_n == 0 { f64::NAN } else { self.loss_sum / self.loss_n as f64 },
            cycles: self.cycles,
        }
    }
}

/// Seed of episode `episode` in a run seeded with `run_seed`.
pub fn episode_seed(run_seed: u64, episode: usize) -> u64 {
    run_seed.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(episode as u64 + 1)
}

/// Plays one full episode with a fixed policy.
pub fn run_episode<R: Rng>(env: &mut Env, policy: &Policy, seed: u64, episode: usize, rng: &mut R) -> Result<EpisodeLog> {
    env.reset(seed)?;
    let space = env.space().clone();
    let n = space.n_paths();
    let mut acc = Accumulator::default();
    let mut prev_cwnd = env.observation().cwnd.clone();
    loop {
        let phi = match policy {
            Policy::Greedy(agent) => space.decode(agent.greedy(&env.state().values)?),
            Policy::Static(level) => static_phi(*level, n),
            Policy::Reactive => {
                let now = &env.observation().cwnd;
                let trend = if acc.cycles == 0 { vec![Ordering::Equal; n] } else { cwnd_trend(&prev_cwnd, now) };
                prev_cwnd = now.clone();
                reactive_phi(env.fractions(), &trend, &space)
            }
            Policy::Random => random_phi(rng, &space),
        };
        let mut out = env.step(&phi)?;
        if !matches!(policy, Policy::Greedy(_)) {
            // baselines never read the forecast flags, so nothing counts as anticipated
            out.preemptive = None;
        }
        acc.add(&out);
        if out.done {
            break;
        }
    }
    Ok(acc.finish(episode, env, 0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrainConfig {
    pub episodes: usize,
    pub seed: u64,
    pub dqn: DqnConfig,
}

impl Default for AgentTrainConfig {
    fn default() -> Self {
        Self { episodes: 300, seed: 0, dqn: DqnConfig::default() }
    }
}

/// Epsilon-greedy training with experience replay. One minibatch update and
/// one soft target update per environment step once the memory holds a batch.
pub fn train_agent(
    env: &mut Env,
    cfg: &AgentTrainConfig,
    on_episode: impl FnMut(&EpisodeLog),
) -> Result<(DqnAgent, Vec<EpisodeLog>)> {
    train_agent_traced(env, cfg, on_episode, |_| Ok(()))
}

/// [`train_agent`] with a callback for every control cycle.
pub fn train_agent_traced(
    env: &mut Env,
    cfg: &AgentTrainConfig,
    mut on_episode: impl FnMut(&EpisodeLog),
    mut on_cycle: impl FnMut(&CycleRecord) -> Result<()>,
) -> Result<(DqnAgent, Vec<EpisodeLog>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = env.state().values.len();
    let mut agent = DqnAgent::new(dim, env.space().joint_count(), cfg.dqn.clone(), &mut rng)?;
    let mut memory = ReplayBuffer::new(cfg.dqn.memory);
    let mut step: u64 = 0;
    let mut logs = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        env.reset(episode_seed(cfg.seed, episode))?;
        let mut acc = Accumulator::default();
        // logged value is the rate at the episode's first step
        let eps = cfg.dqn.epsilon(step);
        loop {
            let state = env.state().values.clone();
            let action = agent.select_action(&state, cfg.dqn.epsilon(step), &mut rng)?;
            let phi = env.space().decode(action);
            let out = env.step(&phi)?;
            on_cycle(&CycleRecord {
                episode,
                cycle: acc.cycles,
                state: state.clone(),
                action,
                phi,
                components: out.components,
                reward: out.reward,
            })?;
            acc.add(&out);
            memory.push(Transition {
                state,
                action,
                reward: out.reward,
                next_state: env.state().values.clone(),
                done: out.done,
            });
            if let Some(batch) = memory.sample(cfg.dqn.batch, &mut rng) {
                acc.loss_sum += agent.train_step(&batch)?;
                acc.loss_n += 1;
            }
            step += 1;
            if out.done {
                break;
            }
        }
        let log = acc.finish(episode, env, eps);
        log::debug!("episode {episode}: reward {:.3} eps {:.3}", log.total_reward, eps);
        on_episode(&log);
        logs.push(log);
    }
    Ok((agent, logs))
}
