//! The acceptance suite behind `zsmg bench`: nine criteria covering oracle
//! exactness, CCE feasibility under load, learner invariants, the sandwich
//! property, convergence and plateau trends, certified-policy degeneracies,
//! reference quality, and the variance-reduction benefit.
//!
//! Training fixtures are shared: the ten 20k-episode runs and the paired
//! 50k-episode full/baseline runs are built once (seeds in parallel) and
//! reused by every criterion that needs them. Criteria never mutate
//! fixtures, so order only affects which criterion pays the build time;
//! the two runtime-budgeted criteria are ordered to be the builders.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use zsmg::exact::{nash_backward_induction, ExactSolution, Side};
use zsmg::exec::map_range;
use zsmg::game::{benchmark_game, generate_random_game, MarkovGame};
use zsmg::learner::{
    run_baseline_hoeffding, run_training, Hyperparams, TrainingConfig, TrainingRun,
};
use zsmg::lp::matrix_game_solve;
use zsmg::replay::{
    build_replay, exploitability_upper, gap_bound, markov_exploitability_side,
    uniform_markov_policy,
};
use zsmg::rng::SeededRng;

/// Ample DP budget for desk-scale exploitability evaluations.
pub const DP_BUDGET_DEFAULT: u64 = 1_000_000_000_000;

const FIXTURE_SEEDS: u64 = 10;
const TWENTY_K: u64 = 20_000;
const FIFTY_K: u64 = 50_000;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

/// Lazily built shared training runs on the fixed benchmark game.
pub struct Fixtures {
    game: MarkovGame,
    exact: OnceLock<ExactSolution>,
    twenty: OnceLock<Vec<TrainingRun>>,
    fifty_full: OnceLock<Vec<TrainingRun>>,
    fifty_base: OnceLock<Vec<TrainingRun>>,
}

impl Fixtures {
    fn new() -> Fixtures {
        Fixtures {
            game: benchmark_game(),
            exact: OnceLock::new(),
            twenty: OnceLock::new(),
            fifty_full: OnceLock::new(),
            fifty_base: OnceLock::new(),
        }
    }

    fn exact(&self) -> &ExactSolution {
        self.exact
            .get_or_init(|| nash_backward_induction(&self.game).expect("benchmark game solves"))
    }

    fn runs(&self, episodes: u64, exact: Option<&ExactSolution>, baseline: bool) -> Vec<TrainingRun> {
        let cfg = TrainingConfig {
            hp: Hyperparams::defaults(&self.game),
            episodes,
            epsilon_grid: vec![],
            exact,
        };
        map_range(FIXTURE_SEEDS as usize, |i| {
            let rng = SeededRng::new(i as u64 + 1);
            let run = if baseline {
                run_baseline_hoeffding(&self.game, &cfg, &rng)
            } else {
                run_training(&self.game, &cfg, &rng)
            };
            run.expect("benchmark training run")
        })
    }

    /// Ten 20k-episode full runs with the exact solution supplied, so the
    /// metrics carry sandwich violation counts.
    fn twenty(&self) -> &[TrainingRun] {
        self.twenty.get_or_init(|| {
            let exact = self.exact().clone();
            self.runs(TWENTY_K, Some(&exact), false)
        })
    }

    fn fifty_full(&self) -> &[TrainingRun] {
        self.fifty_full.get_or_init(|| self.runs(FIFTY_K, None, false))
    }

    fn fifty_base(&self) -> &[TrainingRun] {
        self.fifty_base.get_or_init(|| self.runs(FIFTY_K, None, true))
    }
}

type Criterion = fn(&Fixtures) -> (bool, String);

const CRITERIA: [(&str, Criterion); 9] = [
    ("oracle-exactness", oracle_exactness),
    ("cce-feasibility", cce_feasibility),
    ("structural-invariants", structural_invariants),
    ("sandwich", sandwich),
    ("convergence-trend", convergence_trend),
    ("degenerate-certified", degenerate_certified),
    ("large-gap-plateau", large_gap_plateau),
    ("reference-accuracy", reference_accuracy),
    ("variance-reduction", variance_reduction),
];

pub fn criterion_names() -> Vec<&'static str> {
    CRITERIA.iter().map(|(name, _)| *name).collect()
}

/// Runs the acceptance criteria, optionally filtered to names containing
/// `only`. Criteria report pass/fail plus a human-readable measurement;
/// they never panic on a failed threshold, only on broken plumbing.
pub fn run_all(only: Option<&str>) -> Vec<SuiteOutcome> {
    let fixtures = Fixtures::new();
    CRITERIA
        .iter()
        .filter(|(name, _)| only.is_none_or(|pat| name.contains(pat)))
        .map(|&(name, f)| {
            let t0 = Instant::now();
            let (pass, detail) = f(&fixtures);
            SuiteOutcome { name, pass, detail, seconds: t0.elapsed().as_secs_f64() }
        })
        .collect()
}

fn fallible(f: impl FnOnce() -> zsmg::Result<(bool, String)>) -> (bool, String) {
    match f() {
        Ok(out) => out,
        Err(e) => (false, format!("errored: {e}")),
    }
}

/// Game value of a 2x2 zero-sum game by pure saddle check, then the
/// mixed-equilibrium closed form (ad - bc) / (a + d - b - c). Returns None
/// when the denominator degenerates.
fn two_by_two_value(q: &[f64]) -> Option<f64> {
    for i in 0..2 {
        for j in 0..2 {
            let v = q[i * 2 + j];
            if v >= q[(1 - i) * 2 + j] && v <= q[i * 2 + (1 - j)] {
                return Some(v);
            }
        }
    }
    let den = q[0] + q[3] - q[1] - q[2];
    if den.abs() < 1e-12 {
        return None;
    }
    Some((q[0] * q[3] - q[1] * q[2]) / den)
}

/// Brute-force value of a 2x2 matrix game: scan the row player's mixing
/// probability on a fine grid and take the best worst-case column.
fn grid_value_2x2(m: &[f64; 4]) -> f64 {
    let n = 20_000u32;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=n {
        let p = f64::from(i) / f64::from(n);
        let col0 = p * m[0] + (1.0 - p) * m[2];
        let col1 = p * m[1] + (1.0 - p) * m[3];
        best = best.max(col0.min(col1));
    }
    best
}

/// Layer-by-layer brute force for an H=2, S=2, A=B=2 game; independent of
/// the LP solver entirely.
fn grid_game_values(game: &MarkovGame) -> [f64; 2] {
    let stage_matrix = |h: usize, s: usize, vnext: &[f64; 2]| {
        let mut m = [0f64; 4];
        for a in 0..2 {
            for b in 0..2 {
                let row = game.transition_row(h, s, a, b);
                let cont: f64 = row.iter().zip(vnext).map(|(p, v)| p * v).sum();
                m[a * 2 + b] = game.reward(h, s, a, b) + cont;
            }
        }
        m
    };
    let zero = [0f64; 2];
    let v2 = [
        grid_value_2x2(&stage_matrix(1, 0, &zero)),
        grid_value_2x2(&stage_matrix(1, 1, &zero)),
    ];
    [
        grid_value_2x2(&stage_matrix(0, 0, &v2)),
        grid_value_2x2(&stage_matrix(0, 1, &v2)),
    ]
}

fn oracle_exactness(_fx: &Fixtures) -> (bool, String) {
    fallible(|| {
        let t0 = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut max_duality = 0f64;
        let mut max_closed = 0f64;
        let mut closed_cases = 0u32;
        for _ in 0..100 {
            let nrows = rng.random_range(1..=4usize);
            let ncols = rng.random_range(1..=4usize);
            let q: Vec<f64> = (0..nrows * ncols).map(|_| rng.random_range(-1.0..1.0)).collect();
            let sol = matrix_game_solve(&q, nrows, ncols)?;
            let x_guarantee = (0..ncols)
                .map(|j| (0..nrows).map(|i| sol.max_strategy[i] * q[i * ncols + j]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            let y_guarantee = (0..nrows)
                .map(|i| (0..ncols).map(|j| q[i * ncols + j] * sol.min_strategy[j]).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            max_duality = max_duality
                .max((sol.value - x_guarantee).abs())
                .max((sol.value - y_guarantee).abs());
            if nrows == 2 && ncols == 2 {
                if let Some(closed) = two_by_two_value(&q) {
                    closed_cases += 1;
                    max_closed = max_closed.max((sol.value - closed).abs());
                }
            }
        }
        let mut max_bi = 0f64;
        for seed in [3, 14, 159, 2653, 58979] {
            let game = generate_random_game(seed, 2, 2, 2, 2, 1.0)?;
            let exact = nash_backward_induction(&game)?;
            let grid = grid_game_values(&game);
            for s in 0..2 {
                max_bi = max_bi.max((exact.v(0, s) - grid[s]).abs());
            }
        }
        let secs = t0.elapsed().as_secs_f64();
        let pass = max_duality <= 1e-8 && max_closed <= 1e-8 && max_bi <= 2e-3 && secs < 10.0;
        Ok((pass, format!(
            "100 matrices: duality residual {max_duality:.2e}; {closed_cases} closed-form 2x2 cases, max diff {max_closed:.2e}; backward induction vs grid on 5 games, max diff {max_bi:.2e}; {secs:.1}s (budget 10s)"
        )))
    })
}

fn cce_feasibility(_fx: &Fixtures) -> (bool, String) {
    fallible(|| {
        let game = generate_random_game(77, 2500, 2, 2, 4, 1.0)?;
        let cfg = TrainingConfig {
            hp: Hyperparams::defaults(&game),
            episodes: 1_200_000,
            epsilon_grid: vec![],
            exact: None,
        };
        let run = run_training(&game, &cfg, &SeededRng::new(2))?;
        let c = &run.learner.counters;
        let pass = c.cce_calls >= 100_000 && c.cce_violations == 0;
        Ok((pass, format!(
            "{} CCE calls across one 1.2M-episode run on a 2500-state 2x2 horizon-4 game (need >= 100000), {} residual violations",
            c.cce_calls, c.cce_violations
        )))
    })
}

fn structural_invariants(fx: &Fixtures) -> (bool, String) {
    let t0 = Instant::now();
    let runs = fx.twenty();
    let (hh, ss, _, _) = fx.game.dims();
    let mut total_updates = 0u64;
    let mut clean = true;
    let mut detail = String::new();
    for (i, run) in runs.iter().enumerate() {
        let c = &run.learner.counters;
        let triggered = (0..hh)
            .flat_map(|h| (0..ss).map(move |s| (h, s)))
            .filter(|&(h, s)| run.learner.reference_triggered(h, s))
            .count() as u64;
        let ok = c.monotonicity_violations == 0
            && c.range_violations == 0
            && c.negative_gap_events == 0
            && c.stage_accounting_errors == 0
            && c.cce_violations == 0
            && c.reference_updates == triggered;
        if !ok && clean {
            clean = false;
            detail = format!("seed {} counters {:?}", i + 1, c);
        }
        total_updates += c.stage_updates;
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = clean && secs < 120.0;
    if clean {
        detail = format!(
            "10 runs x 20k episodes: all violation counters zero, references latch at most once, {total_updates} stage updates; {secs:.1}s (budget 120s)"
        );
    }
    (pass, detail)
}

fn sandwich(fx: &Fixtures) -> (bool, String) {
    let runs = fx.twenty();
    let (hh, ss, _, _) = fx.game.dims();
    let mut violations = 0u64;
    let mut triples = 0u64;
    for run in runs {
        for row in &run.metrics.rows {
            violations += row.sandwich_violations;
        }
        triples += run.metrics.episodes() * (hh as u64) * (ss as u64);
    }
    let frac = violations as f64 / triples as f64;
    let pass = frac <= 0.01;
    (pass, format!(
        "{violations} of {triples} recorded (k,h,s) triples violate Vlow <= V* <= Vbar beyond 1e-9 ({:.4}%, limit 1%)",
        frac * 100.0
    ))
}

fn convergence_trend(fx: &Fixtures) -> (bool, String) {
    fallible(|| {
        let t0 = Instant::now();
        let runs = fx.fifty_full();
        let hh = fx.game.horizon();
        let mut wins = 0u32;
        let mut ratios = Vec::new();
        for run in runs {
            let full = gap_bound(&run.metrics)?;
            let quarter = gap_bound(&run.metrics.prefix(FIFTY_K / 4, hh))?;
            ratios.push(full / quarter);
            if full <= 0.6 * quarter {
                wins += 1;
            }
        }
        let secs = t0.elapsed().as_secs_f64();
        let worst = ratios.iter().cloned().fold(0f64, f64::max);
        let pass = wins >= 8 && secs < 600.0;
        Ok((pass, format!(
            "gap_bound(50k) <= 0.6 x gap_bound(12.5k) in {wins}/10 seeds (need 8); worst ratio {worst:.3}; {secs:.1}s (budget 600s)"
        )))
    })
}

fn degenerate_certified(fx: &Fixtures) -> (bool, String) {
    fallible(|| {
        let game = &fx.game;
        let exact = fx.exact();
        let mut max_diff = 0f64;
        let mut eventless_ok = true;
        for episodes in [1u64, 2] {
            let cfg = TrainingConfig {
                hp: Hyperparams::defaults(game),
                episodes,
                epsilon_grid: vec![],
                exact: None,
            };
            let run = run_training(game, &cfg, &SeededRng::new(1))?;
            if !run.log.policy_events.is_empty() {
                eventless_ok = false;
                continue;
            }
            let store = build_replay(&run.log)?;
            for side in [Side::Max, Side::Min] {
                let certified = exploitability_upper(game, &store, exact, side, DP_BUDGET_DEFAULT)?;
                let uniform = uniform_markov_policy(game, side);
                let markov = markov_exploitability_side(game, exact, &uniform, side)?;
                max_diff = max_diff.max((certified - markov).abs());
            }
        }
        let pass = eventless_ok && max_diff <= 1e-9;
        Ok((pass, format!(
            "K=1 and eventless K=2 certified exploitability match Markov evaluation within {max_diff:.2e} (limit 1e-9), both sides"
        )))
    })
}

fn large_gap_plateau(fx: &Fixtures) -> (bool, String) {
    let runs = fx.fifty_full();
    let half = FIFTY_K / 2;
    let mut wins = 0u32;
    let mut counts = Vec::new();
    for run in runs {
        let early = run.metrics.rows.iter().filter(|r| r.k <= half && r.gap >= 1.0).count();
        let late = run.metrics.rows.iter().filter(|r| r.k >= half && r.gap >= 1.0).count();
        counts.push((early, late));
        if late <= early {
            wins += 1;
        }
    }
    let (e0, l0) = counts[0];
    let pass = wins >= 8;
    (pass, format!(
        "episodes with duality gap >= 1 in [K/2,K] vs [1,K/2]: plateau holds in {wins}/10 seeds (need 8); seed 1 counts {l0} vs {e0}"
    ))
}

fn reference_accuracy(fx: &Fixtures) -> (bool, String) {
    let runs = fx.twenty();
    let (hh, ss, _, _) = fx.game.dims();
    let mut spreads = Vec::new();
    let mut strict = 0u32;
    for run in runs {
        for h in 0..hh {
            for s in 0..ss {
                if !run.learner.reference_triggered(h, s) {
                    continue;
                }
                let spread = run.learner.v_ref_up(h, s) - run.learner.v_ref_lo(h, s);
                let tighter = match run.learner.first_stage_gap(h, s) {
                    Some(first) => spread < first,
                    None => false,
                };
                spreads.push(spread);
                if tighter {
                    strict += 1;
                }
            }
        }
    }
    if spreads.is_empty() {
        return (false, "no reference ever triggered across 10 runs x 20k episodes".into());
    }
    spreads.sort_by(f64::total_cmp);
    let median = if spreads.len() % 2 == 1 {
        spreads[spreads.len() / 2]
    } else {
        0.5 * (spreads[spreads.len() / 2 - 1] + spreads[spreads.len() / 2])
    };
    let frac = f64::from(strict) / spreads.len() as f64;
    let pass = median <= hh as f64 && frac >= 0.9;
    (pass, format!(
        "{} triggered (h,s) pairs: median Vref spread {median:.3} (limit H={hh}); tighter than the first-stage gap for {:.1}% (need 90%)",
        spreads.len(),
        frac * 100.0
    ))
}

fn variance_reduction(fx: &Fixtures) -> (bool, String) {
    fallible(|| {
        let full_runs = fx.fifty_full();
        let base_runs = fx.fifty_base();
        let mut wins = 0u32;
        let mut full_mean = 0f64;
        let mut base_mean = 0f64;
        for (full, base) in full_runs.iter().zip(base_runs) {
            let gf = gap_bound(&full.metrics)?;
            let gb = gap_bound(&base.metrics)?;
            full_mean += gf / full_runs.len() as f64;
            base_mean += gb / base_runs.len() as f64;
            if gf <= gb {
                wins += 1;
            }
        }
        let pass = wins >= 7;
        Ok((pass, format!(
            "full learner beats the Hoeffding baseline on final gap_bound in {wins}/10 paired seeds (need 7); mean {full_mean:.3} vs {base_mean:.3}"
        )))
    })
}
