//! Deep Q-learning scheduler: state construction, reward, network and the
//! environment loop.

mod action;
pub mod dqn;
pub mod env;
pub mod replay;
pub mod reward;
pub mod state;
pub mod train;

pub use action::ActionSpace;
pub use dqn::{argmax, DqnAgent, DqnConfig};
pub use env::{Env, EnvConfig, ForecastSource, StepOutcome};
pub use replay::{ReplayBuffer, Transition};
pub use reward::{QualityEma, RewardComponents, RewardInputs, RewardWeights};
pub use state::{build_state, state_dim, AgentState, Observation};
pub use train::{
    episode_seed, preemptive_rate, run_episode, train_agent, train_agent_traced, write_cycle_csv_header,
    write_cycle_csv_row, write_episode_csv, AgentTrainConfig, CycleRecord, EpisodeLog, Policy,
};
