//! Method comparisons on a scenario: simulation metrics for one policy and
//! the repeated-run ablation across baselines and agent variants.

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{
    episode_seed, preemptive_rate, run_episode, train_agent, ActionSpace, AgentTrainConfig, DqnAgent, DqnConfig, Env,
    EnvConfig, EpisodeLog, ForecastSource, Policy, RewardWeights,
};
use crate::error::{Error, Result};
use crate::netsim::Simulator;
use crate::par::{self, Execution};
use crate::predictor::{Predictor, WINDOW};
use crate::scenario::Scenario;
use crate::schedulers::{cwnd_trend, random_phi, reactive_phi, PacketScheduler};
use crate::stats::{self, Comparison};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Random,
    Reactive,
    Static30,
    Static65,
    Static100,
    NoTransformer,
    GroundTruth,
    Dara,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Random,
        Method::Reactive,
        Method::Static30,
        Method::Static65,
        Method::Static100,
        Method::NoTransformer,
        Method::GroundTruth,
        Method::Dara,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Reactive => "reactive",
            Method::Static30 => "static-30",
            Method::Static65 => "static-65",
            Method::Static100 => "static-100",
            Method::NoTransformer => "no-transformer",
            Method::GroundTruth => "ground-truth",
            Method::Dara => "dara",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }

    /// Forecast source for the learned variants.
    pub fn source(self) -> Option<ForecastSource> {
        match self {
            Method::Dara => Some(ForecastSource::Predictor),
            Method::NoTransformer => Some(ForecastSource::Hidden),
            Method::GroundTruth => Some(ForecastSource::Oracle),
            _ => None,
        }
    }

    fn baseline(self) -> Option<Policy> {
        match self {
            Method::Random => Some(Policy::Random),
            Method::Reactive => Some(Policy::Reactive),
            Method::Static30 => Some(Policy::Static(30)),
            Method::Static65 => Some(Policy::Static(65)),
            Method::Static100 => Some(Policy::Static(100)),
            _ => None,
        }
    }
}

/// How a simulated connection is scheduled.
#[derive(Debug, Clone)]
pub enum SimPolicy {
    /// Per-packet scheduler with full windows.
    Packet(PacketScheduler),
    /// Per-cycle fraction policy over minRTT.
    Fractions(Policy),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationMetrics {
    pub duration_ms: u64,
    pub goodput_mbps: f64,
    pub mean_delay_ms: f64,
    pub median_delay_ms: f64,
    /// Mean absolute difference between consecutive packet delays.
    pub jitter_ms: f64,
    pub ofo_count: u64,
    pub hol_delay_ms: u64,
    /// In-order throughput per 100 ms window.
    pub throughput_mbps: Vec<f64>,
}

fn metrics(sim: &Simulator, from_bin: usize, from_delay: usize) -> SimulationMetrics {
    let bins = &sim.goodput_bins()[from_bin.min(sim.goodput_bins().len())..];
    let bin_s = sim.bin_ms() as f64 / 1000.0;
    let throughput_mbps: Vec<f64> = bins.iter().map(|b| *b as f64 * 8.0 / bin_s / 1e6).collect();
    let duration_ms = bins.len() as u64 * sim.bin_ms();
    let goodput_mbps = if bins.is_empty() { 0.0 } else { throughput_mbps.iter().sum::<f64>() / bins.len() as f64 };
    let d: Vec<f64> = sim.delays_ms()[from_delay.min(sim.delays_ms().len())..].iter().map(|v| *v as f64).collect();
    let (mean_delay_ms, median_delay_ms, jitter_ms) = if d.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let mut s = d.clone();
        s.sort_by(f64::total_cmp);
        let med = if s.len() % 2 == 1 { s[s.len() / 2] } else { (s[s.len() / 2 - 1] + s[s.len() / 2]) / 2.0 };
        let jit = if d.len() < 2 { 0.0 } else { d.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (d.len() - 1) as f64 };
        (stats::mean(&d), med, jit)
    };
    SimulationMetrics {
        duration_ms,
        goodput_mbps,
        mean_delay_ms,
        median_delay_ms,
        jitter_ms,
        ofo_count: sim.receiver().ofo_count(),
        hol_delay_ms: sim.receiver().hol_delay_sum_ms(),
        throughput_mbps,
    }
}

/// Runs `scenario` for a warm-up of one forecast window at full fractions,
/// then `duration_ms` under `policy`. Metrics cover the second part only.
/// A greedy agent policy needs the predictor it was trained with.
pub fn simulate(
    scenario: &Scenario,
    policy: &SimPolicy,
    predictor: Option<Arc<Predictor>>,
    space: &ActionSpace,
    duration_ms: u64,
    seed: u64,
) -> Result<SimulationMetrics> {
    let cycles = (duration_ms / crate::netsim::DEFAULT_BIN_MS) as usize;
    if cycles == 0 {
        return Err(Error::Config("duration shorter than one control cycle".into()));
    }
    let n = scenario.n_paths();
    if let SimPolicy::Fractions(Policy::Greedy(agent)) = policy {
        let predictor = predictor.ok_or_else(|| Error::Config("agent policy needs its predictor".into()))?;
        let cfg = EnvConfig { cycles, record_delays: true, ..Default::default() };
        let mut env = Env::new(
            scenario.clone(),
            predictor,
            space.clone(),
            RewardWeights::default(),
            ForecastSource::Predictor,
            cfg,
            seed,
        )?;
        let (from_bin, from_delay) = (env.simulator().goodput_bins().len(), env.simulator().delays_ms().len());
        loop {
            let phi = space.decode(agent.greedy(&env.state().values)?);
            if env.step(&phi)?.done {
                break;
            }
        }
        return Ok(metrics(env.simulator(), from_bin, from_delay));
    }
    let scheduler = match policy {
        SimPolicy::Packet(s) => *s,
        SimPolicy::Fractions(_) => PacketScheduler::MinRtt,
    };
    let mut sim = Simulator::new(scenario.path_configs(seed), scheduler)?.record_delays(true);
    let bin = sim.bin_ms();
    sim.run(bin * WINDOW as u64);
    let (from_bin, from_delay) = (sim.goodput_bins().len(), sim.delays_ms().len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phi = vec![space.max_level(); n];
    let mut last_cwnd: Option<Vec<f64>> = None;
    for _ in 0..cycles {
        if let SimPolicy::Fractions(p) = policy {
            let cwnd: Vec<f64> = sim.telemetry().last().map(|b| b.paths.iter().map(|p| p.cwnd).collect()).unwrap_or_default();
            phi = match p {
                Policy::Static(level) => vec![*level; n],
                Policy::Random => random_phi(&mut rng, space),
                Policy::Reactive => match &last_cwnd {
                    Some(prev) => reactive_phi(&phi, &cwnd_trend(prev, &cwnd), space),
                    None => phi,
                },
                Policy::Greedy(_) => unreachable!("handled above"),
            };
            last_cwnd = Some(cwnd);
            sim.apply_cwnd_fractions(&phi, space)?;
        }
        sim.run(bin);
    }
    Ok(metrics(&sim, from_bin, from_delay))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub runs: usize,
    /// Training episodes for the learned variants.
    pub episodes: usize,
    /// Greedy evaluation episodes per run, shared by every method.
    pub eval_episodes: usize,
    pub seed: u64,
    pub granularity: usize,
    pub methods: Vec<Method>,
    pub env: EnvConfig,
    pub dqn: DqnConfig,
    pub weights: RewardWeights,
    pub exec: Execution,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            runs: 10,
            episodes: 300,
            eval_episodes: 5,
            seed: 0,
            granularity: 5,
            methods: Method::ALL.to_vec(),
            env: EnvConfig::default(),
            dqn: DqnConfig::default(),
            weights: RewardWeights::default(),
            exec: Execution::Parallel,
        }
    }
}

/// One (method, run) cell of the ablation.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub method: Method,
    pub run: usize,
    pub eval: Vec<EpisodeLog>,
    /// Empty for baselines.
    pub training: Vec<EpisodeLog>,
    pub agent: Option<DqnAgent>,
}

impl RunResult {
    pub fn mean_reward(&self) -> f64 {
        self.eval.iter().map(|l| l.total_reward).sum::<f64>() / self.eval.len().max(1) as f64
    }

    pub fn preemptive_rate(&self) -> f64 {
        preemptive_rate(&self.eval)
    }

    pub fn goodput_bps(&self) -> f64 {
        self.eval.iter().map(|l| l.goodput_bps).sum::<f64>() / self.eval.len().max(1) as f64
    }
}

fn run_seed(base: u64, run: usize) -> u64 {
    base.wrapping_add(run as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0xab1a
}

/// Evaluation episode seeds for one run.
pub fn eval_seeds(cfg: &AblationConfig, run: usize) -> Vec<u64> {
    (0..cfg.eval_episodes).map(|e| episode_seed(run_seed(cfg.seed, run) ^ 0xe7a1, e)).collect()
}

/// Trains (where applicable) and evaluates every configured method `runs`
/// times. Within a run, all methods see the same evaluation episodes and the
/// learned variants share their training seed.
pub fn run_ablation(
    scenario: &Scenario,
    predictor: Arc<Predictor>,
    cfg: &AblationConfig,
    progress: impl Fn(&RunResult) + Sync + Send,
) -> Result<Vec<RunResult>> {
    if cfg.runs == 0 || cfg.eval_episodes == 0 || cfg.methods.is_empty() {
        return Err(Error::Config("ablation needs runs, evaluation episodes and methods".into()));
    }
    let space = ActionSpace::with_granularity(cfg.granularity, scenario.n_paths())?;
    let jobs: Vec<(Method, usize)> =
        (0..cfg.runs).flat_map(|r| cfg.methods.iter().map(move |m| (*m, r))).collect();
    let out = par::map(cfg.exec, jobs, |(method, run)| -> Result<RunResult> {
        let seed = run_seed(cfg.seed, run);
        let source = method.source().unwrap_or(ForecastSource::Predictor);
        let mut env =
            Env::new(scenario.clone(), predictor.clone(), space.clone(), cfg.weights, source, cfg.env.clone(), seed)?;
        let (policy, training, agent) = match method.baseline() {
            Some(p) => (p, Vec::new(), None),
            None => {
                let train = AgentTrainConfig { episodes: cfg.episodes, seed, dqn: cfg.dqn.clone() };
                let (agent, logs) = train_agent(&mut env, &train, |_| {})?;
                (Policy::Greedy(Box::new(agent.clone())), logs, Some(agent))
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0ddb_a11);
        let eval = eval_seeds(cfg, run)
            .into_iter()
            .enumerate()
            .map(|(i, s)| run_episode(&mut env, &policy, s, i, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let r = RunResult { method, run, eval, training, agent };
        progress(&r);
        Ok(r)
    });
    out.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Mean evaluation-episode reward of each run.
    pub rewards: Vec<f64>,
    pub mean_reward: f64,
    pub sd_reward: f64,
    pub preemptive_rate: f64,
    pub goodput_mbps: f64,
}

pub fn summarise(results: &[RunResult]) -> Vec<MethodSummary> {
    let mut methods: Vec<Method> = Vec::new();
    for r in results {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let runs: Vec<&RunResult> = results.iter().filter(|r| r.method == m).collect();
            let rewards: Vec<f64> = runs.iter().map(|r| r.mean_reward()).collect();
            let k = runs.len() as f64;
            MethodSummary {
                method: m,
                mean_reward: stats::mean(&rewards),
                sd_reward: if rewards.len() > 1 { stats::variance(&rewards).sqrt() } else { 0.0 },
                preemptive_rate: runs.iter().map(|r| r.preemptive_rate()).sum::<f64>() / k,
                goodput_mbps: runs.iter().map(|r| r.goodput_bps()).sum::<f64>() / k / 1e6,
                rewards,
            }
        })
        .collect()
}

/// The learned scheduler against every other method.
pub fn comparisons(summaries: &[MethodSummary], seed: u64) -> Result<Vec<Comparison>> {
    let Some(dara) = summaries.iter().find(|s| s.method == Method::Dara) else {
        return Ok(Vec::new());
    };
    summaries
        .iter()
        .filter(|s| s.method != Method::Dara)
        .map(|s| stats::compare(&format!("dara vs {}", s.method.name()), &dara.rewards, &s.rewards, seed))
        .collect()
}

pub const SUMMARY_CSV_HEADER: &str = "method,mean_reward,sd_reward,preemptive_rate,goodput_mbps,runs";

pub fn write_summary_csv<W: Write>(mut w: W, rows: &[MethodSummary], header_comment: Option<&str>) -> Result<()> {
    if let Some(c) = header_comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{SUMMARY_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.4},{:.4},{}",
            r.method.name(),
            r.mean_reward,
            r.sd_reward,
            r.preemptive_rate,
            r.goodput_mbps,
            r.rewards.len()
        )?;
    }
    Ok(())
}

/// Goodput of `scenario` with every path held at `phi`, measured after the
/// same warm-up the agent environment uses.
pub fn static_goodput_bps(scenario: &Scenario, phi: u8, duration_ms: u64, seed: u64) -> Result<f64> {
    let space = ActionSpace::five_level(scenario.n_paths());
    let m = simulate(scenario, &SimPolicy::Fractions(Policy::Static(phi)), None, &space, duration_ms, seed)?;
    Ok(m.goodput_mbps * 1e6)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()).unwrap(), m);
        }
        assert!(Method::parse("nope").is_err());
    }

    #[test]
    fn packet_schedulers_simulate() {
        let s = Scenario::asymmetric_burst();
        let space = ActionSpace::five_level(2);
        for sched in [PacketScheduler::round_robin(), PacketScheduler::Cpf, PacketScheduler::MinRtt] {
            let m = simulate(&s, &SimPolicy::Packet(sched), None, &space, 2000, 1).unwrap();
            assert_eq!(m.throughput_mbps.len(), 20);
            assert!(m.goodput_mbps > 0.0 && m.mean_delay_ms > 0.0);
            assert!(m.median_delay_ms.is_finite() && m.jitter_ms >= 0.0);
        }
    }

    #[test]
    fn fraction_baselines_simulate_deterministically() {
        let s = Scenario::asymmetric_burst();
        let space = ActionSpace::five_level(2);
        for p in [Policy::Static(65), Policy::Reactive, Policy::Random] {
            let a = simulate(&s, &SimPolicy::Fractions(p.clone()), None, &space, 1500, 4).unwrap();
            let b = simulate(&s, &SimPolicy::Fractions(p), None, &space, 1500, 4).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn agent_simulation_requires_predictor() {
        let s = Scenario::asymmetric_burst();
        let space = ActionSpace::five_level(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let agent = DqnAgent::new(18, 25, DqnConfig::default(), &mut rng).unwrap();
        let p = SimPolicy::Fractions(Policy::Greedy(Box::new(agent)));
        assert!(simulate(&s, &p, None, &space, 1000, 0).is_err());
    }

    #[test]
    fn summary_and_comparisons() {
        let log = |r| EpisodeLog {
            episode: 0,
            total_reward: r,
            components: Default::default(),
            preemptive_events: 2,
            preemptive_handled: 1,
            goodput_bps: 2e6,
            epsilon: 0.0,
            mean_loss: f64::NAN,
            cycles: 10,
        };
        let mk = |method, run, r: f64| RunResult { method, run, eval: vec![log(r), log(r + 1.0)], training: vec![], agent: None };
        let results = vec![
            mk(Method::Dara, 0, 10.0),
            mk(Method::Dara, 1, 12.0),
            mk(Method::Reactive, 0, 1.0),
            mk(Method::Reactive, 1, 2.0),
        ];
        let s = summarise(&results);
        assert_eq!(s[0].rewards, vec![10.5, 12.5]);
        assert!((s[0].mean_reward - 11.5).abs() < 1e-12);
        assert_eq!(s[1].preemptive_rate, 0.5);
        assert!((s[1].goodput_mbps - 2.0).abs() < 1e-12);
        let c = comparisons(&s, 0).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].delta_reward - 9.5).abs() < 1e-12);
    }
}
