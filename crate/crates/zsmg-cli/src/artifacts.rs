//! On-disk run layout and integrity hashes.
//!
//! A run directory holds the as-run config, the resolved game, the optional
//! exact solution, and one subdirectory per seed:
//!
//! ```text
//! out_dir/
//!   config.json            canonical config actually used
//!   game.json              resolved game
//!   exact.json             present when compute_exact was set
//!   seed-<N>/
//!     manifest.json        seed, algo, hashes, resolved hyperparameters
//!     metrics.csv          per-episode diagnostics
//!     episodes.csv         (k, h, s, a, b) step log
//!     policy_events.jsonl  one policy change per line
//!     learner.json         final learner state
//! ```
//!
//! Every manifest carries sha256 hashes of the config and game bytes, so
//! `eval` can refuse to score a run against the wrong inputs.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zsmg::exact::ExactSolution;
use zsmg::game::MarkovGame;
use zsmg::learner::{Hyperparams, Learner, TrainingRun};
use zsmg::metrics::{EpisodeLog, MetricsStream};

use crate::config::Algo;
use crate::{CliError, CliResult};

pub const MANIFEST_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Per-seed provenance record. No timestamps: two runs of the same config
/// produce byte-identical trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub seed: u64,
    pub algo: Algo,
    pub episodes: u64,
    pub config_hash: String,
    pub game_hash: String,
    pub hyperparams: Hyperparams,
    pub n0_threshold: u64,
    pub epsilon_grid: Vec<f64>,
    pub metrics_stride: u64,
    pub exact_provided: bool,
}

pub fn seed_dir(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("seed-{seed}"))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    f.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Writes the shared (per-run) artifacts. Returns the config and game
/// hashes that seed manifests must embed.
pub fn write_run_header(
    out_dir: &Path,
    canonical_config: &str,
    game: &MarkovGame,
    exact: Option<&ExactSolution>,
) -> CliResult<(String, String)> {
    fs::create_dir_all(out_dir)?;
    let game_json = game.to_json_string();
    write_text(&out_dir.join("config.json"), canonical_config)?;
    write_text(&out_dir.join("game.json"), &game_json)?;
    if let Some(exact) = exact {
        write_text(&out_dir.join("exact.json"), &exact.to_json_string())?;
    }
    Ok((sha256_hex(canonical_config.as_bytes()), sha256_hex(game_json.as_bytes())))
}

pub fn write_seed_run(
    out_dir: &Path,
    manifest: &RunManifest,
    run: &TrainingRun,
) -> CliResult<PathBuf> {
    let dir = seed_dir(out_dir, manifest.seed);
    fs::create_dir_all(&dir)?;
    write_text(&dir.join("manifest.json"), &zsmg::jsonfmt::to_string(manifest))?;

    let metrics = BufWriter::new(fs::File::create(dir.join("metrics.csv"))?);
    run.metrics.write_csv(metrics, manifest.metrics_stride)?;

    let steps = BufWriter::new(fs::File::create(dir.join("episodes.csv"))?);
    run.log.write_steps_csv(steps)?;

    let events = BufWriter::new(fs::File::create(dir.join("policy_events.jsonl"))?);
    run.log.write_events_jsonl(events)?;

    write_text(&dir.join("learner.json"), &zsmg::jsonfmt::to_string(&run.learner))?;
    Ok(dir)
}

/// A run directory read back from disk.
#[derive(Debug)]
pub struct StoredRun {
    pub out_dir: PathBuf,
    pub seed_dir: PathBuf,
    pub manifest: RunManifest,
    pub game: MarkovGame,
    pub exact: Option<ExactSolution>,
    pub metrics: MetricsStream,
    pub log: EpisodeLog,
    pub learner: Learner,
}

pub fn list_seed_dirs(out_dir: &Path) -> CliResult<Vec<u64>> {
    let mut seeds = Vec::new();
    for entry in fs::read_dir(out_dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(rest) = name.strip_prefix("seed-") {
            if let Ok(seed) = rest.parse::<u64>() {
                seeds.push(seed);
            }
        }
    }
    seeds.sort_unstable();
    if seeds.is_empty() {
        return Err(CliError::Validation(format!(
            "no seed-<N> directories under {}",
            out_dir.display()
        )));
    }
    Ok(seeds)
}

/// Loads one seed's artifacts and re-verifies the manifest hashes against
/// the bytes actually on disk. Tampered or mismatched inputs are a
/// validation error, not a silent rescore.
pub fn read_run(out_dir: &Path, seed: u64) -> CliResult<StoredRun> {
    let dir = seed_dir(out_dir, seed);
    if !dir.is_dir() {
        return Err(CliError::Validation(format!("run directory {} not found", dir.display())));
    }
    let manifest_text = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: RunManifest = serde_json::from_str(&manifest_text)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(CliError::Validation(format!(
            "manifest version {} unsupported",
            manifest.version
        )));
    }

    let config_text = fs::read_to_string(out_dir.join("config.json"))?;
    let config_hash = sha256_hex(trim_trailing_newline(&config_text).as_bytes());
    if config_hash != manifest.config_hash {
        return Err(CliError::Validation(format!(
            "config.json hash {config_hash} does not match manifest {}",
            manifest.config_hash
        )));
    }

    let game_text = fs::read_to_string(out_dir.join("game.json"))?;
    let game_hash = sha256_hex(trim_trailing_newline(&game_text).as_bytes());
    if game_hash != manifest.game_hash {
        return Err(CliError::Validation(format!(
            "game.json hash {game_hash} does not match manifest {}",
            manifest.game_hash
        )));
    }
    let game = MarkovGame::from_json_str(trim_trailing_newline(&game_text))?;

    let exact_path = out_dir.join("exact.json");
    let exact = if exact_path.exists() {
        Some(ExactSolution::load(&exact_path)?)
    } else {
        None
    };
    if manifest.exact_provided && exact.is_none() {
        return Err(CliError::Validation(
            "manifest says exact solution was provided but exact.json is missing".into(),
        ));
    }

    let metrics_file = BufReader::new(fs::File::open(dir.join("metrics.csv"))?);
    let metrics = MetricsStream::read_csv(metrics_file, game.horizon())?;

    let steps_file = BufReader::new(fs::File::open(dir.join("episodes.csv"))?);
    let steps = EpisodeLog::read_steps_csv(steps_file)?;
    let events_file = BufReader::new(fs::File::open(dir.join("policy_events.jsonl"))?);
    let policy_events = EpisodeLog::read_events_jsonl(events_file)?;
    let episodes = steps.len() as u64 / game.horizon() as u64;
    if episodes != manifest.episodes {
        return Err(CliError::Validation(format!(
            "episodes.csv holds {episodes} episodes, manifest says {}",
            manifest.episodes
        )));
    }
    let log = EpisodeLog {
        horizon: game.horizon(),
        num_states: game.num_states(),
        num_actions_max: game.num_actions_max(),
        num_actions_min: game.num_actions_min(),
        episodes,
        steps,
        policy_events,
    };

    let learner_text = fs::read_to_string(dir.join("learner.json"))?;
    let learner: Learner = serde_json::from_str(&learner_text)?;

    Ok(StoredRun {
        out_dir: out_dir.to_path_buf(),
        seed_dir: dir,
        manifest,
        game,
        exact,
        metrics,
        log,
        learner,
    })
}

fn trim_trailing_newline(text: &str) -> &str {
    text.strip_suffix('\n').unwrap_or(text)
}
