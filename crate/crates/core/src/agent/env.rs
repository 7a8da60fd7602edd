//! One control cycle per telemetry bin on top of the packet simulator.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::reward::{components, QualityEma, RewardComponents, RewardInputs, RewardWeights};
use super::state::{build_state, AgentState, Observation};
use super::ActionSpace;
use crate::error::{Error, Result};
use crate::netsim::{Simulator, TelemetryBin};
use crate::predictor::{PredictionSet, Predictor, FAR, HORIZONS, WINDOW};
use crate::scenario::Scenario;
use crate::schedulers::PacketScheduler;
use crate::trace::MTU_BITS;

/// Where the forecast part of the state and reward comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastSource {
    /// The trained predictor.
    Predictor,
    /// The predictor drives the reward; the agent sees no forecast.
    Hidden,
    /// The realised future, from a rollout of a copy of the simulator that
    /// holds the current fractions.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub cycles: usize,
    pub initial_phi: u8,
    pub scheduler: PacketScheduler,
    /// Keep per-packet delays in the simulator (needed for delay metrics).
    pub record_delays: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { cycles: 600, initial_phi: 100, scheduler: PacketScheduler::MinRtt, record_delays: false }
    }
}

#[derive(Debug, Clone)]
struct CycleView {
    obs: Observation,
    forecast: PredictionSet,
    state: AgentState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub components: RewardComponents,
    pub done: bool,
    /// `Some(handled)` when the pre-action state flagged a forecast CWND drop
    /// on some path; handled means a flagged path's fraction went down.
    pub preemptive: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct Env {
    scenario: Scenario,
    predictor: Arc<Predictor>,
    space: ActionSpace,
    weights: RewardWeights,
    source: ForecastSource,
    config: EnvConfig,
    sim: Simulator,
    history: Vec<TelemetryBin>,
    phi: Vec<u8>,
    ema: QualityEma,
    cycle: usize,
    released_at_start: u64,
    view: CycleView,
}

impl Env {
    pub fn new(
        scenario: Scenario,
        predictor: Arc<Predictor>,
        space: ActionSpace,
        weights: RewardWeights,
        source: ForecastSource,
        config: EnvConfig,
        seed: u64,
    ) -> Result<Self> {
        weights.validate()?;
        if predictor.n_paths != scenario.n_paths() || space.n_paths() != scenario.n_paths() {
            return Err(Error::Dimension(format!(
                "scenario has {} paths, predictor {}, action space {}",
                scenario.n_paths(),
                predictor.n_paths,
                space.n_paths()
            )));
        }
        if !space.contains(config.initial_phi) {
            return Err(Error::Config(format!("initial fraction {} is not an action level", config.initial_phi)));
        }
        if config.cycles == 0 {
            return Err(Error::Config("episode needs at least one cycle".into()));
        }
        let sim = Simulator::new(scenario.path_configs(seed), config.scheduler)?;
        let n = scenario.n_paths();
        let placeholder = CycleView {
            obs: Observation { cwnd: vec![], srtt: vec![] },
            forecast: PredictionSet::flat(&[], &[]),
            state: AgentState::default(),
        };
        let mut env = Self {
            phi: vec![config.initial_phi; n],
            scenario,
            predictor,
            space,
            weights,
            source,
            config,
            sim,
            history: Vec::new(),
            ema: QualityEma::default(),
            cycle: 0,
            released_at_start: 0,
            view: placeholder,
        };
        env.reset(seed)?;
        Ok(env)
    }

    /// Starts a fresh episode: a new simulator whose trace phases depend on
    /// `seed`, run for one forecast window before the first decision.
    pub fn reset(&mut self, seed: u64) -> Result<&AgentState> {
        self.sim = Simulator::new(self.scenario.path_configs(seed), self.config.scheduler)?.record_delays(self.config.record_delays);
        self.phi = vec![self.config.initial_phi; self.scenario.n_paths()];
        self.sim.apply_cwnd_fractions(&self.phi, &self.space)?;
        self.ema = QualityEma::default();
        self.cycle = 0;
        self.history.clear();
        let bin = self.sim.bin_ms();
        self.sim.run(bin * WINDOW as u64);
        self.history.extend(self.sim.drain_telemetry());
        self.released_at_start = self.sim.released_packets();
        self.observe()?;
        Ok(&self.view.state)
    }

    fn observe(&mut self) -> Result<()> {
        let last = self.history.last().ok_or_else(|| Error::Contract("no telemetry yet".into()))?;
        let obs = Observation {
            cwnd: last.paths.iter().map(|p| p.cwnd).collect(),
            srtt: last.paths.iter().map(|p| p.srtt).collect(),
        };
        let forecast = match self.source {
            ForecastSource::Oracle => self.rollout()?,
            _ => self.predictor.predict(&self.history)?,
        };
        let mut state = build_state(&obs, &forecast, &self.phi, &self.predictor.scaler)?;
        if self.source == ForecastSource::Hidden {
            state = state.without_forecast();
        }
        self.view = CycleView { obs, forecast, state };
        Ok(())
    }

    fn rollout(&self) -> Result<PredictionSet> {
        let mut sim = self.sim.clone();
        sim.run(sim.bin_ms() * HORIZONS as u64);
        PredictionSet::from_future(&sim.drain_telemetry())
    }

    pub fn state(&self) -> &AgentState {
        &self.view.state
    }

    pub fn observation(&self) -> &Observation {
        &self.view.obs
    }

    pub fn forecast(&self) -> &PredictionSet {
        &self.view.forecast
    }

    pub fn fractions(&self) -> &[u8] {
        &self.phi
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }

    pub fn cycles(&self) -> usize {
        self.config.cycles
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    /// Simulated time at which the current episode's first decision was made.
    pub fn episode_start_ms(&self) -> u64 {
        self.sim.bin_ms() * WINDOW as u64
    }

    /// In-order goodput since the episode started, in bits per second.
    pub fn goodput_bps(&self) -> f64 {
        let ms = (self.cycle as u64 * self.sim.bin_ms()).max(1);
        (self.sim.released_packets() - self.released_at_start) as f64 * MTU_BITS as f64 * 1000.0 / ms as f64
    }

    /// Scores `phi`, applies it for one cycle and observes the next state.
    pub fn step(&mut self, phi: &[u8]) -> Result<StepOutcome> {
        if self.cycle >= self.config.cycles {
            return Err(Error::Contract("episode already finished; call reset".into()));
        }
        self.space.check(phi)?;
        let n = phi.len();
        let v = &self.view;
        let cwnd_far: Vec<f64> = v.forecast.cwnd.iter().map(|h| h[FAR]).collect();
        let srtt_far: Vec<f64> = v.forecast.srtt.iter().map(|h| h[FAR]).collect();
        let comps = components(
            &RewardInputs {
                cwnd: &v.obs.cwnd,
                srtt: &v.obs.srtt,
                cwnd_far: &cwnd_far,
                srtt_far: &srtt_far,
                phi,
                prev_phi: &self.phi,
                min_level: self.space.min_level(),
            },
            &mut self.ema,
        )?;
        let flagged: Vec<usize> = (0..n).filter(|&p| v.state.cwnd_flag(p)).collect();
        let preemptive = (!flagged.is_empty()).then(|| flagged.iter().any(|&p| phi[p] < self.phi[p]));

        self.sim.apply_cwnd_fractions(phi, &self.space)?;
        let bin = self.sim.bin_ms();
        self.sim.run(bin);
        self.history.extend(self.sim.drain_telemetry());
        if self.history.len() > WINDOW {
            self.history.drain(..self.history.len() - WINDOW);
        }
        self.phi = phi.to_vec();
        self.cycle += 1;
        self.observe()?;
        Ok(StepOutcome {
            reward: comps.aggregate(&self.weights),
            components: comps,
            done: self.cycle == self.config.cycles,
            preemptive,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Transformer, TransformerConfig};
    use crate::predictor::{collect_telemetry, fit_scaler, Model};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn predictor() -> Arc<Predictor> {
        let s = Scenario::asymmetric_burst();
        let runs = collect_telemetry(&s, 2, 40, 0.3, 1, crate::par::Execution::Sequential).unwrap();
        let scaler = fit_scaler(&runs).unwrap();
        let cfg = TransformerConfig { model_dim: 10, heads: 2, ff_dim: 20, ..TransformerConfig::with_depth(1) };
        let t = Transformer::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        Arc::new(Predictor::new(2, scaler, Model::Transformer(t)).unwrap())
    }

    fn env(source: ForecastSource, cycles: usize) -> Env {
        let cfg = EnvConfig { cycles, ..Default::default() };
        let s = Scenario::asymmetric_burst();
        Env::new(s, predictor(), ActionSpace::five_level(2), RewardWeights::default(), source, cfg, 7).unwrap()
    }

    #[test]
    fn episode_runs_to_completion() {
        let mut e = env(ForecastSource::Predictor, 5);
        assert_eq!(e.state().values.len(), 18);
        for i in 0..5 {
            let out = e.step(&[65, 100]).unwrap();
            assert!(out.reward.is_finite());
            assert_eq!(out.done, i == 4);
        }
        assert!(e.step(&[65, 100]).is_err());
        assert!(e.goodput_bps() > 0.0);
        e.reset(8).unwrap();
        assert_eq!(e.cycle(), 0);
    }

    #[test]
    fn hidden_forecast_state_has_no_flags() {
        let mut e = env(ForecastSource::Hidden, 20);
        for _ in 0..20 {
            assert!(e.state().values[4..12].iter().chain(&e.state().values[14..]).all(|v| *v == 0.0));
            assert_eq!(e.step(&[30, 47]).unwrap().preemptive, None);
        }
    }

    #[test]
    fn oracle_matches_realised_future_when_fractions_hold() {
        let mut e = env(ForecastSource::Oracle, 10);
        let forecast = e.forecast().clone();
        let phi = e.fractions().to_vec();
        let mut realised = Vec::new();
        for _ in 0..HORIZONS {
            e.step(&phi).unwrap();
            realised.push(e.observation().cwnd.clone());
        }
        for (h, w) in realised.iter().enumerate() {
            for p in 0..2 {
                assert_eq!(forecast.cwnd[p][h], w[p]);
            }
        }
    }

    #[test]
    fn rejects_off_grid_actions() {
        let mut e = env(ForecastSource::Predictor, 3);
        assert!(matches!(e.step(&[50, 100]), Err(Error::Contract(_))));
    }

    #[test]
    fn same_seed_same_trajectory() {
        let run = || {
            let mut e = env(ForecastSource::Predictor, 6);
            (0..6).map(|i| e.step(&[[30, 100], [100, 65]][i % 2]).unwrap().reward).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
