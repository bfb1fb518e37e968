//! The four subcommands. Machine-readable results go to stdout (one JSON
//! value per line); human summaries go to stderr. Exit codes: 0 success,
//! 2 usage, 3 validation, 4 runtime.

use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args};
use serde::Serialize;
use zsmg::exact::{nash_backward_induction, Side};
use zsmg::exec::map_range;
use zsmg::game::{builtin_game, generate_random_game};
use zsmg::learner::{run_baseline_hoeffding, run_training, TrainingConfig, TrainingRun};
use zsmg::metrics::MetricsStream;
use zsmg::replay::{
    build_replay, exploitability_upper, gap_bound, monte_carlo_value, McEstimate, ReplayStore,
};
use zsmg::rng::SeededRng;

use crate::artifacts::{
    read_run, sha256_hex, write_run_header, write_seed_run, RunManifest, StoredRun,
    MANIFEST_VERSION,
};
use crate::config::{Algo, ExperimentConfig};
use crate::suite::{self, DP_BUDGET_DEFAULT};
use crate::{CliError, CliResult};

fn emit<T: Serialize>(value: &T) -> CliResult<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

#[derive(Debug, Args)]
#[command(group = ArgGroup::new("source").required(true).args(["builtin", "random"]))]
pub struct GenArgs {
    /// Built-in game spec, e.g. `matching_pennies`, `matching_pennies_chain(4)`,
    /// `single_state_matrix([[1,0],[0,1]])`, `benchmark`
    #[arg(long)]
    pub builtin: Option<String>,
    /// Generate a seeded random game from the dimension flags instead
    #[arg(long)]
    pub random: bool,
    /// Generator seed (with --random)
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Number of states
    #[arg(short = 'S', long, default_value_t = 3)]
    pub states: usize,
    /// Max player's action count
    #[arg(short = 'A', long, default_value_t = 2)]
    pub max_actions: usize,
    /// Min player's action count
    #[arg(short = 'B', long, default_value_t = 2)]
    pub min_actions: usize,
    /// Horizon
    #[arg(short = 'H', long, default_value_t = 3)]
    pub horizon: usize,
    /// Fraction of nonzero rewards (with --random)
    #[arg(long, default_value_t = 1.0)]
    pub density: f64,
    /// Output path for the game JSON
    #[arg(long, default_value = "game.json")]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct GenReport {
    path: String,
    game_hash: String,
    horizon: usize,
    num_states: usize,
    num_actions_max: usize,
    num_actions_min: usize,
}

pub fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    let game = if let Some(name) = &args.builtin {
        builtin_game(name)?
    } else {
        if args.states == 0 || args.max_actions == 0 || args.min_actions == 0 || args.horizon == 0 {
            return Err(CliError::Usage(
                "game dimensions must all be at least 1".into(),
            ));
        }
        if !(args.density > 0.0 && args.density <= 1.0) {
            return Err(CliError::Usage(format!(
                "--density {} outside (0, 1]",
                args.density
            )));
        }
        generate_random_game(
            args.seed,
            args.states,
            args.max_actions,
            args.min_actions,
            args.horizon,
            args.density,
        )?
    };
    game.save(&args.out)?;
    let (hh, ss, aa, bb) = game.dims();
    let report = GenReport {
        path: args.out.display().to_string(),
        game_hash: sha256_hex(game.to_json_string().as_bytes()),
        horizon: hh,
        num_states: ss,
        num_actions_max: aa,
        num_actions_min: bb,
    };
    eprintln!(
        "wrote {} (H={hh}, S={ss}, A={aa}, B={bb}), validates clean",
        args.out.display()
    );
    emit(&report)
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Experiment config JSON (see README for the schema)
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config's episode count
    #[arg(long)]
    pub episodes: Option<u64>,
    /// Override the config's seed list (comma separated)
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Override the learner variant
    #[arg(long, value_enum)]
    pub algo: Option<AlgoFlag>,
    /// Override the output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the metrics stride
    #[arg(long)]
    pub stride: Option<u64>,
    /// Solve the game exactly and record sandwich diagnostics
    #[arg(long)]
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum AlgoFlag {
    Full,
    Baseline,
}

impl From<AlgoFlag> for Algo {
    fn from(flag: AlgoFlag) -> Algo {
        match flag {
            AlgoFlag::Full => Algo::Full,
            AlgoFlag::Baseline => Algo::Baseline,
        }
    }
}

#[derive(Debug, Serialize)]
struct SeedSummary {
    seed: u64,
    dir: String,
    gap_bound: f64,
    stage_updates: u64,
    references_triggered: u64,
}

#[derive(Debug, Serialize)]
struct TrainReport {
    out_dir: String,
    config_hash: String,
    game_hash: String,
    algo: Algo,
    episodes: u64,
    runs: Vec<SeedSummary>,
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(episodes) = args.episodes {
        cfg.episodes = episodes;
    }
    if let Some(seeds) = &args.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(algo) = args.algo {
        cfg.algo = algo.into();
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.display().to_string();
    }
    if let Some(stride) = args.stride {
        cfg.metrics_stride = stride;
    }
    if args.exact {
        cfg.compute_exact = true;
    }
    cfg.validate()?;

    let config_dir = args.config.parent().map(Path::to_path_buf);
    let game = cfg.resolve_game(config_dir.as_deref())?;
    let exact = if cfg.compute_exact {
        Some(nash_backward_induction(&game)?)
    } else {
        None
    };

    let out_dir = PathBuf::from(&cfg.out_dir);
    let canonical = cfg.canonical_json();
    let (config_hash, game_hash) = write_run_header(&out_dir, &canonical, &game, exact.as_ref())?;

    let hp = cfg.hyperparams.resolve(&game);
    hp.validate()?;
    let train_cfg = TrainingConfig {
        hp: hp.clone(),
        episodes: cfg.episodes,
        epsilon_grid: cfg.epsilon_grid.clone(),
        exact: exact.as_ref(),
    };
    let n0_threshold = match hp.n0_mode {
        zsmg::learner::N0Mode::Explicit => hp.n0,
        zsmg::learner::N0Mode::PaperFormula => hp.resolve_n0(&game),
    };

    let results: Vec<CliResult<SeedSummary>> = map_range(cfg.seeds.len(), |i| {
        let seed = cfg.seeds[i];
        let rng = SeededRng::new(seed);
        let run: TrainingRun = match cfg.algo {
            Algo::Full => run_training(&game, &train_cfg, &rng)?,
            Algo::Baseline => run_baseline_hoeffding(&game, &train_cfg, &rng)?,
        };
        let manifest = RunManifest {
            version: MANIFEST_VERSION,
            seed,
            algo: cfg.algo,
            episodes: cfg.episodes,
            config_hash: config_hash.clone(),
            game_hash: game_hash.clone(),
            hyperparams: hp.clone(),
            n0_threshold,
            epsilon_grid: cfg.epsilon_grid.clone(),
            metrics_stride: cfg.metrics_stride,
            exact_provided: exact.is_some(),
        };
        let dir = write_seed_run(&out_dir, &manifest, &run)?;
        Ok(SeedSummary {
            seed,
            dir: dir.display().to_string(),
            gap_bound: gap_bound(&run.metrics)?,
            stage_updates: run.learner.counters.stage_updates,
            references_triggered: run.learner.counters.reference_updates,
        })
    });
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        runs.push(r?);
    }
    for r in &runs {
        eprintln!(
            "seed {}: gap_bound {:.4}, {} stage updates, {} references -> {}",
            r.seed, r.gap_bound, r.stage_updates, r.references_triggered, r.dir
        );
    }
    emit(&TrainReport {
        out_dir: out_dir.display().to_string(),
        config_hash,
        game_hash,
        algo: cfg.algo,
        episodes: cfg.episodes,
        runs,
    })
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory written by `train`
    #[arg(long)]
    pub run: PathBuf,
    /// Evaluate a single seed instead of every seed-<N> subdirectory
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo rollout count for the certified policies (0 = skip)
    #[arg(long, default_value_t = 0)]
    pub mc_episodes: u64,
    /// Work budget for the exploitability dynamic program
    #[arg(long, default_value_t = DP_BUDGET_DEFAULT)]
    pub dp_budget: u64,
}

#[derive(Debug, Serialize)]
struct ConvergencePoint {
    prefix_k: u64,
    gap_bound: f64,
    exploitability_upper_max: f64,
    exploitability_upper_min: f64,
}

#[derive(Debug, Serialize)]
struct McReport {
    episodes: u64,
    max_policy_value: McEstimate,
    min_policy_value: McEstimate,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    version: u32,
    seed: u64,
    episodes: u64,
    algo: Algo,
    config_hash: String,
    game_hash: String,
    game_value: f64,
    gap_bound: f64,
    exploitability_upper_max: f64,
    exploitability_upper_min: f64,
    monte_carlo: Option<McReport>,
    convergence: Vec<ConvergencePoint>,
}

/// Prefix lengths K/64, K/16, K/4, K, clamped to at least one episode and
/// deduplicated for small K.
fn log_grid(k: u64) -> Vec<u64> {
    let mut grid: Vec<u64> = [k / 64, k / 16, k / 4, k].iter().map(|&p| p.max(1)).collect();
    grid.dedup();
    grid
}

fn eval_one(stored: &StoredRun, args: &EvalArgs) -> CliResult<EvalReport> {
    if stored.manifest.metrics_stride != 1 {
        return Err(CliError::Validation(format!(
            "evaluation needs metrics_stride 1 to recompute gap bounds, run used {}",
            stored.manifest.metrics_stride
        )));
    }
    let game = &stored.game;
    let exact = match &stored.exact {
        Some(exact) => exact.clone(),
        None => nash_backward_induction(game)?,
    };
    let mut convergence = Vec::new();
    for prefix_k in log_grid(stored.manifest.episodes) {
        let metrics: MetricsStream = stored.metrics.prefix(prefix_k, game.horizon());
        let log = stored.log.prefix(prefix_k);
        let store = build_replay(&log)?;
        convergence.push(ConvergencePoint {
            prefix_k,
            gap_bound: gap_bound(&metrics)?,
            exploitability_upper_max: exploitability_upper(
                game,
                &store,
                &exact,
                Side::Max,
                args.dp_budget,
            )?,
            exploitability_upper_min: exploitability_upper(
                game,
                &store,
                &exact,
                Side::Min,
                args.dp_budget,
            )?,
        });
    }
    let last = convergence.last().expect("log grid is non-empty");

    let monte_carlo = if args.mc_episodes > 0 {
        let store: ReplayStore = build_replay(&stored.log)?;
        // Different master seed than training, so evaluation rollouts do
        // not replay the training episodes' draws.
        let rng = SeededRng::new(stored.manifest.seed ^ 0x4556_414c);
        let max_policy_value = monte_carlo_value(
            game,
            &store,
            &exact.min_policy(),
            Side::Max,
            args.mc_episodes,
            &rng,
        )?;
        let min_policy_value = monte_carlo_value(
            game,
            &store,
            &exact.max_policy(),
            Side::Min,
            args.mc_episodes,
            &rng,
        )?;
        Some(McReport { episodes: args.mc_episodes, max_policy_value, min_policy_value })
    } else {
        None
    };

    Ok(EvalReport {
        version: 1,
        seed: stored.manifest.seed,
        episodes: stored.manifest.episodes,
        algo: stored.manifest.algo,
        config_hash: stored.manifest.config_hash.clone(),
        game_hash: stored.manifest.game_hash.clone(),
        game_value: exact.value_at_initial(game),
        gap_bound: last.gap_bound,
        exploitability_upper_max: last.exploitability_upper_max,
        exploitability_upper_min: last.exploitability_upper_min,
        monte_carlo,
        convergence,
    })
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let seeds = match args.seed {
        Some(seed) => vec![seed],
        None => crate::artifacts::list_seed_dirs(&args.run)?,
    };
    for seed in seeds {
        let stored = read_run(&args.run, seed)?;
        let report = eval_one(&stored, args)?;

        let mut csv = String::from(
            "prefix_k,gap_bound,exploitability_upper_max,exploitability_upper_min\n",
        );
        for p in &report.convergence {
            csv.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e}\n",
                p.prefix_k, p.gap_bound, p.exploitability_upper_max, p.exploitability_upper_min
            ));
        }
        std::fs::write(stored.seed_dir.join("convergence.csv"), csv)?;
        std::fs::write(
            stored.seed_dir.join("report.json"),
            zsmg::jsonfmt::to_string(&report) + "\n",
        )?;

        eprintln!(
            "seed {}: gap_bound {:.4}, exploitability upper bounds {:.4} (max) / {:.4} (min), game value {:.4}",
            report.seed,
            report.gap_bound,
            report.exploitability_upper_max,
            report.exploitability_upper_min,
            report.game_value
        );
        emit(&report)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Run only criteria whose name contains this substring
    #[arg(long)]
    pub only: Option<String>,
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult<()> {
    let outcomes = suite::run_all(args.only.as_deref());
    if outcomes.is_empty() {
        return Err(CliError::Usage(format!(
            "--only {:?} matches no acceptance criterion (known: {})",
            args.only.as_deref().unwrap_or(""),
            suite::criterion_names().join(", ")
        )));
    }
    let mut failures = 0;
    for outcome in &outcomes {
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        eprintln!("{tag} {} ({:.1}s): {}", outcome.name, outcome.seconds, outcome.detail);
        emit(outcome)?;
        if !outcome.pass {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(CliError::Runtime(format!(
            "{failures} of {} acceptance criteria failed",
            outcomes.len()
        )));
    }
    Ok(())
}
