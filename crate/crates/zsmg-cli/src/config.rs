//! Versioned experiment configuration: one JSON schema, flags override
//! file values, and the canonical serialization is what gets hashed into
//! every artifact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use zsmg::game::{builtin_game, generate_random_game, MarkovGame};
use zsmg::learner::{Hyperparams, LearnerVariant, N0Mode};

use crate::{CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameSource {
    Builtin { name: String },
    File { path: String },
    Random {
        seed: u64,
        #[serde(rename = "S")]
        num_states: usize,
        #[serde(rename = "A")]
        num_actions_max: usize,
        #[serde(rename = "B")]
        num_actions_min: usize,
        #[serde(rename = "H")]
        horizon: usize,
        #[serde(default = "full_density")]
        reward_density: f64,
    },
}

fn full_density() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    #[default]
    Full,
    Baseline,
}

impl Algo {
    pub fn variant(self) -> LearnerVariant {
        match self {
            Algo::Full => LearnerVariant::Full,
            Algo::Baseline => LearnerVariant::HoeffdingBaseline,
        }
    }
}

/// Optional hyperparameter overrides; anything absent falls back to the
/// game-derived defaults. Setting delta without iota recomputes
/// iota = log(2/delta).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparamsConfig {
    pub delta: Option<f64>,
    pub iota: Option<f64>,
    pub beta: Option<f64>,
    pub n0: Option<u64>,
    pub n0_mode: Option<N0Mode>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
    pub clamp_values: Option<bool>,
}

impl HyperparamsConfig {
    pub fn resolve(&self, game: &MarkovGame) -> Hyperparams {
        let mut hp = Hyperparams::defaults(game);
        if let Some(delta) = self.delta {
            hp.delta = delta;
            hp.iota = (2.0 / delta).ln();
        }
        if let Some(iota) = self.iota {
            hp.iota = iota;
        }
        if let Some(beta) = self.beta {
            hp.beta = beta;
        }
        if let Some(n0) = self.n0 {
            hp.n0 = n0;
        }
        if let Some(mode) = self.n0_mode {
            hp.n0_mode = mode;
        }
        if let Some(c) = self.c1 {
            hp.c1 = c;
        }
        if let Some(c) = self.c2 {
            hp.c2 = c;
        }
        if let Some(c) = self.c3 {
            hp.c3 = c;
        }
        if let Some(c) = self.c4 {
            hp.c4 = c;
        }
        if let Some(clamp) = self.clamp_values {
            hp.clamp_values = clamp;
        }
        hp
    }
}

fn default_epsilon_grid() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}

fn default_stride() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub game: GameSource,
    pub episodes: u64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub algo: Algo,
    #[serde(default)]
    pub hyperparams: HyperparamsConfig,
    #[serde(default = "default_epsilon_grid")]
    pub epsilon_grid: Vec<f64>,
    #[serde(default = "default_stride")]
    pub metrics_stride: u64,
    /// Solve the game exactly up front; enables sandwich diagnostics in
    /// the metrics and saves the solution next to the game file.
    #[serde(default)]
    pub compute_exact: bool,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

fn default_out_dir() -> String {
    "runs".into()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::Validation(format!(
                "config version {} unsupported, expected {CONFIG_VERSION}",
                self.version
            )));
        }
        if self.episodes == 0 {
            return Err(CliError::Validation("episodes must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Validation("seeds list must be non-empty".into()));
        }
        if self.metrics_stride == 0 {
            return Err(CliError::Validation("metrics_stride must be at least 1".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(CliError::Validation("seeds must be distinct".into()));
        }
        if !self.epsilon_grid.iter().all(|e| e.is_finite() && *e > 0.0) {
            return Err(CliError::Validation("epsilon grid entries must be positive".into()));
        }
        if let GameSource::Random { num_states, num_actions_max, num_actions_min, horizon, reward_density, .. } =
            &self.game
        {
            if *num_states == 0 || *num_actions_max == 0 || *num_actions_min == 0 || *horizon == 0 {
                return Err(CliError::Validation("random game dimensions must be at least 1".into()));
            }
            if !(*reward_density > 0.0 && *reward_density <= 1.0) {
                return Err(CliError::Validation(format!(
                    "reward_density {reward_density} outside (0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Materializes the game, resolving builtins, files (relative to the
    /// config's directory when given), and the seeded generator.
    pub fn resolve_game(&self, config_dir: Option<&Path>) -> CliResult<MarkovGame> {
        match &self.game {
            GameSource::Builtin { name } => Ok(builtin_game(name)?),
            GameSource::File { path } => {
                let p = Path::new(path);
                let full = match (p.is_relative(), config_dir) {
                    (true, Some(dir)) => dir.join(p),
                    _ => p.to_path_buf(),
                };
                if !full.exists() {
                    return Err(CliError::Validation(format!(
                        "game file {} does not exist",
                        full.display()
                    )));
                }
                Ok(MarkovGame::load(&full)?)
            }
            GameSource::Random {
                seed,
                num_states,
                num_actions_max,
                num_actions_min,
                horizon,
                reward_density,
            } => Ok(generate_random_game(
                *seed,
                *num_states,
                *num_actions_max,
                *num_actions_min,
                *horizon,
                *reward_density,
            )?),
        }
    }

    /// Canonical serialization: serde field order, 17-significant-digit
    /// floats. Hashing this string is what ties artifacts to configs.
    pub fn canonical_json(&self) -> String {
        zsmg::jsonfmt::to_string(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> ExperimentConfig {
        ExperimentConfig {
            version: 1,
            game: GameSource::Builtin { name: "matching_pennies".into() },
            episodes: 10,
            seeds: vec![1],
            algo: Algo::Full,
            hyperparams: HyperparamsConfig::default(),
            epsilon_grid: default_epsilon_grid(),
            metrics_stride: 1,
            compute_exact: false,
            out_dir: "runs".into(),
        }
    }

    #[test]
    fn round_trips_and_validates() {
        let cfg = minimal();
        cfg.validate().unwrap();
        let text = cfg.canonical_json();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(text, back.canonical_json());
    }

    #[test]
    fn rejects_bad_fields() {
        let mut cfg = minimal();
        cfg.version = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = minimal();
        cfg.episodes = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = minimal();
        cfg.seeds = vec![3, 3];
        assert!(cfg.validate().is_err());
        let mut cfg = minimal();
        cfg.game = GameSource::Random {
            seed: 1,
            num_states: 0,
            num_actions_max: 2,
            num_actions_min: 2,
            horizon: 2,
            reward_density: 1.0,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hyperparam_overrides_apply() {
        let game = builtin_game("matching_pennies_chain(3)").unwrap();
        let mut over = HyperparamsConfig::default();
        over.delta = Some(0.1);
        over.n0 = Some(77);
        over.clamp_values = Some(false);
        let hp = over.resolve(&game);
        assert_eq!(hp.delta, 0.1);
        assert!((hp.iota - (2.0f64 / 0.1).ln()).abs() < 1e-12);
        assert_eq!(hp.n0, 77);
        assert!(!hp.clamp_values);
        assert_eq!(hp.c3, 0.5);
    }
}
