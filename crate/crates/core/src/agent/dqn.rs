//! Deep Q-network over the joint action set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::replay::Transition;
use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub lr: f64,
    pub gamma: f64,
    /// Soft target update rate.
    pub tau: f64,
    pub batch: usize,
    pub memory: usize,
    pub hidden: Vec<usize>,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Decay constant of the exploration schedule, in steps.
    pub eps_decay: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            lr: 1.25e-4,
            gamma: 0.966,
            tau: 0.006,
            batch: 128,
            memory: 15_000,
            hidden: vec![256, 256],
            eps_start: 0.7,
            eps_end: 0.1,
            eps_decay: 900.0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("discount must lie in [0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("target update rate must lie in (0, 1]");
        }
        if self.batch == 0 || self.memory < self.batch {
            return bad("replay memory must hold at least one batch");
        }
        if !(0.0..=1.0).contains(&self.eps_end) || !(0.0..=1.0).contains(&self.eps_start) || self.eps_decay <= 0.0 {
            return bad("bad exploration schedule");
        }
        Ok(())
    }

    /// Exploration rate after `step` environment steps.
    pub fn epsilon(&self, step: u64) -> f64 {
        self.eps_end + (self.eps_start - self.eps_end) * (-(step as f64) / self.eps_decay).exp()
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate() {
        if *v > q[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DqnAgent {
    pub config: DqnConfig,
    pub online: Mlp,
    pub target: Mlp,
    opt: Adam,
    updates: u64,
}

impl DqnAgent {
    pub fn new<R: Rng>(state_dim: usize, n_actions: usize, config: DqnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if state_dim == 0 || n_actions < 2 {
            return Err(Error::Config(format!("need a state and at least two actions, got {state_dim} and {n_actions}")));
        }
        let sizes: Vec<usize> = std::iter::once(state_dim).chain(config.hidden.iter().copied()).chain([n_actions]).collect();
        let online = Mlp::new(&sizes, rng);
        let target = online.clone();
        let opt = Adam::new(config.lr, online.params.len());
        Ok(Self { config, online, target, opt, updates: 0 })
    }

    pub fn state_dim(&self) -> usize {
        self.online.input_dim()
    }

    pub fn n_actions(&self) -> usize {
        self.online.output_dim()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.state_dim() {
            return Err(Error::Shape { expected: self.state_dim().to_string(), got: state.len().to_string() });
        }
        Ok(self.online.forward(state, 1))
    }

    pub fn greedy(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax(&self.q_values(state)?))
    }

    /// Epsilon-greedy selection.
    pub fn select_action<R: Rng + ?Sized>(&self, state: &[f64], eps: f64, rng: &mut R) -> Result<usize> {
        if rng.random::<f64>() < eps {
            Ok(rng.random_range(0..self.n_actions()))
        } else {
            self.greedy(state)
        }
    }

    /// Bootstrapped targets from the target network; terminal transitions
    /// keep only the reward.
    pub fn td_targets(&self, batch: &[&Transition]) -> Vec<f64> {
        let dim = self.state_dim();
        let k = self.n_actions();
        let next: Vec<f64> = batch.iter().flat_map(|t| t.next_state.iter().copied()).collect();
        debug_assert_eq!(next.len(), batch.len() * dim);
        let q_next = self.target.forward(&next, batch.len());
        batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if t.done {
                    t.reward
                } else {
                    let row = &q_next[i * k..(i + 1) * k];
                    t.reward + self.config.gamma * row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect()
    }

    /// Mean squared TD error at the taken actions and its gradient.
    pub fn loss_and_grad(&self, params: &[f64], batch: &[&Transition], targets: &[f64]) -> (f64, Vec<f64>) {
        let k = self.n_actions();
        let rows = batch.len();
        let states: Vec<f64> = batch.iter().flat_map(|t| t.state.iter().copied()).collect();
        let (q, cache) = self.online.forward_with(params, &states, rows);
        let mut dout = vec![0.0; q.len()];
        let mut loss = 0.0;
        for (i, t) in batch.iter().enumerate() {
            let err = q[i * k + t.action] - targets[i];
            loss += err * err;
            dout[i * k + t.action] = 2.0 * err / rows as f64;
        }
        (loss / rows as f64, self.online.backward_with(params, &cache, &dout))
    }

    /// One optimiser step on a minibatch followed by a soft target update.
    pub fn train_step(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Config("empty minibatch".into()));
        }
        if let Some(t) = batch.iter().find(|t| t.state.len() != self.state_dim() || t.next_state.len() != self.state_dim()) {
            return Err(Error::Shape { expected: self.state_dim().to_string(), got: format!("{} -> {}", t.state.len(), t.next_state.len()) });
        }
        if let Some(t) = batch.iter().find(|t| t.action >= self.n_actions()) {
            return Err(Error::Contract(format!("action {} out of range", t.action)));
        }
        let targets = self.td_targets(batch);
        let (loss, grad) = self.loss_and_grad(&self.online.params.data, batch, &targets);
        if !loss.is_finite() {
            return Err(Error::NonFinite { loss, context: format!("Q update {}", self.updates) });
        }
        self.opt.step(&mut self.online.params.data, &grad);
        if !self.online.params.all_finite() {
            return Err(Error::NonFinite { loss, context: format!("Q parameters after update {}", self.updates) });
        }
        self.target.params.soft_update(&self.online.params, self.config.tau)?;
        self.updates += 1;
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn agent(seed: u64) -> DqnAgent {
        let cfg = DqnConfig { hidden: vec![16, 16], batch: 4, memory: 8, ..Default::default() };
        DqnAgent::new(6, 4, cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn tr(state: Vec<f64>, action: usize, reward: f64, done: bool) -> Transition {
        Transition { next_state: state.iter().map(|v| v * 0.5).collect(), state, action, reward, done }
    }

    #[test]
    fn epsilon_schedule() {
        let c = DqnConfig::default();
        assert!((c.epsilon(0) - 0.7).abs() < 1e-12);
        assert!((c.epsilon(900) - (0.1 + 0.6 / std::f64::consts::E)).abs() < 1e-12);
        assert!((c.epsilon(1_000_000) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0]), 0);
    }

    #[test]
    fn terminal_target_is_reward() {
        let a = agent(1);
        let batch = [tr(vec![1.0; 6], 0, 0.7, true)];
        let refs: Vec<_> = batch.iter().collect();
        assert_eq!(a.td_targets(&refs), vec![0.7]);
    }

    #[test]
    fn bootstrap_uses_target_max() {
        let a = agent(2);
        let t = tr(vec![0.3; 6], 1, 0.2, false);
        let q = a.target.forward(&t.next_state, 1);
        let want = 0.2 + 0.966 * q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((a.td_targets(&[&t])[0] - want).abs() < 1e-12);
    }

    #[test]
    fn zero_error_leaves_params_unchanged() {
        let mut a = agent(3);
        let t = tr(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6], 2, 0.0, true);
        // make the reward equal the current estimate
        let q = a.q_values(&t.state).unwrap()[2];
        let t = Transition { reward: q, ..t };
        let before = a.online.params.data.clone();
        let loss = a.train_step(&[&t]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(a.online.params.data, before);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let a = agent(4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let batch: Vec<_> = (0..5)
            .map(|i| tr((0..6).map(|_| rng.random_range(-1.0..1.0)).collect(), i % 4, rng.random(), i == 4))
            .collect();
        let refs: Vec<_> = batch.iter().collect();
        let targets = a.td_targets(&refs);
        let (_, grad) = a.loss_and_grad(&a.online.params.data, &refs, &targets);
        let report = crate::nn::gradient_check(
            &a.online.params,
            &grad,
            |p| {
                let states: Vec<f64> = refs.iter().flat_map(|t| t.state.iter().copied()).collect();
                let (_, cache) = a.online.forward_with(p, &states, refs.len());
                (a.loss_and_grad(p, &refs, &targets).0, a.online.activation_signature(&cache))
            },
            8,
            1e-6,
            &mut rng,
        );
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }

    #[test]
    fn learns_a_bandit() {
        // action 3 always pays 1, the rest pay 0; one-step episodes
        let mut a = agent(5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = vec![0.5; 6];
        for _ in 0..400 {
            let batch: Vec<_> = (0..4)
                .map(|_| {
                    let act = rng.random_range(0..4);
                    tr(s.clone(), act, (act == 3) as u8 as f64, true)
                })
                .collect();
            let refs: Vec<_> = batch.iter().collect();
            a.train_step(&refs).unwrap();
        }
        assert_eq!(a.greedy(&s).unwrap(), 3);
    }

    #[test]
    fn loss_falls_on_a_fixed_batch() {
        // terminal transitions, so the targets stay put
        let cfg = DqnConfig { hidden: vec![16, 16], batch: 4, memory: 8, lr: 1e-2, ..Default::default() };
        let mut a = DqnAgent::new(6, 4, cfg, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let batch: Vec<_> = (0..16)
            .map(|i| {
                let s: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
                tr(s, i % 4, rng.random_range(-1.0..1.0), true)
            })
            .collect();
        let refs: Vec<_> = batch.iter().collect();
        let losses: Vec<f64> = (0..200).map(|_| a.train_step(&refs).unwrap()).collect();
        assert!(losses[199] < 0.1 * losses[0], "{} -> {}", losses[0], losses[199]);
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut a = agent(6);
        let t = tr(vec![0.0; 5], 0, 0.0, true);
        assert!(a.train_step(&[&t]).is_err());
        assert!(a.q_values(&[0.0; 7]).is_err());
    }
}
