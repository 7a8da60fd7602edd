//! JSON checkpoints for trained forecasters and policies.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{state_dim, ActionSpace, DqnAgent, ForecastSource, RewardWeights};
use crate::error::{Error, Result};
use crate::predictor::Predictor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorCheckpoint {
    pub version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub predictor: Predictor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub source: ForecastSource,
    pub levels: Vec<u8>,
    pub weights: RewardWeights,
    pub agent: DqnAgent,
    /// The forecaster the policy was trained against.
    pub predictor: Predictor,
}

fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("format version {v}, expected {FORMAT_VERSION}")));
    }
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(f, value)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    serde_json::from_reader(f).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

impl PredictorCheckpoint {
    pub fn new(predictor: Predictor, seed: u64, config_hash: String) -> Self {
        Self { version: FORMAT_VERSION, seed, config_hash, predictor }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Self = read_json(path)?;
        check_version(c.version)?;
        Ok(Self { predictor: c.predictor.restore()?, ..c })
    }
}

impl PolicyCheckpoint {
    pub fn space(&self) -> Result<ActionSpace> {
        ActionSpace::new(self.levels.clone(), self.predictor.n_paths)
    }

    /// Checks that the network, action grid and forecaster agree.
    pub fn validate(&self) -> Result<()> {
        let space = self.space()?;
        let want = (state_dim(self.predictor.n_paths), space.joint_count());
        let got = (self.agent.state_dim(), self.agent.n_actions());
        if want != got {
            return Err(Error::Checkpoint(format!(
                "policy maps {} -> {} but {} paths with {} levels need {} -> {}",
                got.0,
                got.1,
                self.predictor.n_paths,
                self.levels.len(),
                want.0,
                want.1
            )));
        }
        self.weights.validate()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        write_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Self = read_json(path)?;
        check_version(c.version)?;
        let c = Self { predictor: c.predictor.restore()?, ..c };
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::DqnConfig;
    use crate::predictor::{LinearPredictor, LogMinMaxScaler, Model};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn predictor() -> Predictor {
        let scaler = LogMinMaxScaler::fit(&[[0.0; 16], [9.0; 16]].concat(), 16).unwrap();
        let lin = LinearPredictor { n_inputs: 128, n_outputs: 20, weights: vec![0.01; 129 * 20], ridge_used: false };
        Predictor::new(2, scaler, Model::Linear(lin)).unwrap()
    }

    fn policy(n_actions: usize) -> PolicyCheckpoint {
        let cfg = DqnConfig { hidden: vec![8], ..Default::default() };
        let agent = DqnAgent::new(18, n_actions, cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        PolicyCheckpoint {
            version: FORMAT_VERSION,
            seed: 3,
            config_hash: "abc".into(),
            source: ForecastSource::Predictor,
            levels: vec![30, 47, 65, 82, 100],
            weights: RewardWeights::default(),
            agent,
            predictor: predictor(),
        }
    }

    #[test]
    fn policy_round_trip() {
        let dir = std::env::temp_dir().join(format!("ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("policy.json");
        let p = policy(25);
        p.save(&path).unwrap();
        let back = PolicyCheckpoint::load(&path).unwrap();
        assert_eq!(back.agent.online, p.agent.online);
        assert_eq!(back.predictor, p.predictor);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        assert!(matches!(policy(9).validate(), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn predictor_version_checked() {
        let dir = std::env::temp_dir().join(format!("ckpt-v-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("p.json");
        let mut c = PredictorCheckpoint::new(predictor(), 1, "h".into());
        c.version = 99;
        c.save(&path).unwrap();
        assert!(PredictorCheckpoint::load(&path).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
