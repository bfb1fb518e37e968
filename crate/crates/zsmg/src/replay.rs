//! Certified output policies reconstructed from training logs.
//!
//! Training emits a step log (which cell each episode visited at each
//! step) and a policy-event log (every stage update's new joint policy,
//! stamped with the episode it takes effect from). Those two files pin
//! down the whole history π_h^k, which is what the certified policy
//! samples from: draw an episode cursor k uniformly, act from the
//! episode-k marginal, and after each step jump the cursor uniformly into
//! the last completed stage of the visited cell. All cursor jumps move to
//! strictly earlier episodes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{best_response_markov, ExactSolution, MarkovPolicy, Side};
use crate::exec::{map_range, map_range_sequential};
use crate::game::MarkovGame;
use crate::metrics::{EpisodeLog, MetricsStream};
use crate::rng::{sample_index, SeededRng, StreamKind};
use crate::stage::StageSchedule;

/// Indexed view of one training run's history: per-cell visit episodes
/// and per-(h, s) policy timelines.
#[derive(Debug, Clone)]
pub struct ReplayStore {
    horizon: usize,
    num_states: usize,
    num_actions_max: usize,
    num_actions_min: usize,
    episodes: u64,
    /// Per (h, s, a, b): episodes that visited the cell, ascending.
    visit_episodes: Vec<Vec<u64>>,
    /// Per (h, s): (effective_from, joint probs), strictly ascending.
    policy_events: Vec<Vec<(u64, Vec<f64>)>>,
    schedule: StageSchedule,
    uniform: Vec<f64>,
}

impl ReplayStore {
    #[inline]
    fn cell(&self, h: usize, s: usize, a: usize, b: usize) -> usize {
        ((h * self.num_states + s) * self.num_actions_max + a) * self.num_actions_min + b
    }

    #[inline]
    fn state(&self, h: usize, s: usize) -> usize {
        h * self.num_states + s
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    /// (H, S, A, B).
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.horizon, self.num_states, self.num_actions_max, self.num_actions_min)
    }

    /// The joint policy π_h^k(s): the last stage update effective by
    /// episode k, or uniform if the state was never updated before k.
    pub fn joint_policy_at(&self, h: usize, s: usize, k: u64) -> &[f64] {
        let events = &self.policy_events[self.state(h, s)];
        let idx = events.partition_point(|(from, _)| *from <= k);
        if idx == 0 {
            &self.uniform
        } else {
            &events[idx - 1].1
        }
    }

    /// Number of visits to (h, s, a, b) in episodes strictly before k.
    pub fn visits_before(&self, h: usize, s: usize, a: usize, b: usize, k: u64) -> u64 {
        let v = &self.visit_episodes[self.cell(h, s, a, b)];
        v.partition_point(|&e| e < k) as u64
    }

    /// Episode cursor for a fresh certified rollout, uniform on [1, K].
    pub fn initial_cursor(&self, side: Side, rng: &SeededRng, episode: u64) -> Result<CertifiedCursor> {
        if self.episodes == 0 {
            return Err(Error::Contract("cannot certify a run with zero episodes".into()));
        }
        let k = rng.stream(StreamKind::CertifiedInit, episode, 0).random_range(1..=self.episodes);
        Ok(CertifiedCursor { side, k })
    }

    /// One step of the certified policy: sample the own action from the
    /// cursor-episode marginal, then jump the cursor uniformly into the
    /// visited cell's last completed stage (staying put when no stage has
    /// completed before the cursor). The own action is drawn before the
    /// opponent's action enters, preserving simultaneous play.
    pub fn certified_step(
        &self,
        cursor: &mut CertifiedCursor,
        h: usize,
        s: usize,
        opp_action: usize,
        action_rng: &mut impl Rng,
        jump_rng: &mut impl Rng,
    ) -> Result<usize> {
        if h >= self.horizon || s >= self.num_states {
            return Err(Error::Contract(format!("certified_step at (h={h}, s={s}) out of range")));
        }
        let probs = self.joint_policy_at(h, s, cursor.k);
        let (aa, bb) = (self.num_actions_max, self.num_actions_min);
        let own = match cursor.side {
            Side::Max => {
                let mut marg = vec![0.0; aa];
                for a in 0..aa {
                    for b in 0..bb {
                        marg[a] += probs[a * bb + b];
                    }
                }
                sample_index(action_rng, &marg)
            }
            Side::Min => {
                let mut marg = vec![0.0; bb];
                for a in 0..aa {
                    for b in 0..bb {
                        marg[b] += probs[a * bb + b];
                    }
                }
                sample_index(action_rng, &marg)
            }
        };
        let (a, b) = match cursor.side {
            Side::Max => (own, opp_action),
            Side::Min => (opp_action, own),
        };
        if a >= aa || b >= bb {
            return Err(Error::Contract(format!("action pair ({a}, {b}) out of range")));
        }
        let n = self.visits_before(h, s, a, b, cursor.k);
        let completed = self.schedule.completed_stages(n);
        if completed > 0 {
            let (start, end) = self.schedule.stage_span(completed - 1);
            let pos = jump_rng.random_range(start..end);
            cursor.k = self.visit_episodes[self.cell(h, s, a, b)][pos as usize];
        }
        Ok(own)
    }
}

/// Where a certified rollout currently reads history from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CertifiedCursor {
    pub side: Side,
    pub k: u64,
}

/// Validates and indexes a training log. Rejects structurally broken
/// logs: ragged episodes, out-of-range indices, events effective before
/// episode 2, unordered events, or invalid event distributions.
pub fn build_replay(log: &EpisodeLog) -> Result<ReplayStore> {
    let (hh, ss, aa, bb) = (log.horizon, log.num_states, log.num_actions_max, log.num_actions_min);
    if hh == 0 || ss == 0 || aa == 0 || bb == 0 {
        return Err(Error::MalformedLog("zero dimension in episode log".into()));
    }
    let expected = (log.episodes as usize).checked_mul(hh).ok_or_else(|| {
        Error::MalformedLog("episode count overflows step total".into())
    })?;
    if log.steps.len() != expected {
        return Err(Error::MalformedLog(format!(
            "{} steps logged, expected {} for {} episodes of horizon {}",
            log.steps.len(),
            expected,
            log.episodes,
            hh
        )));
    }
    let mut visit_episodes = vec![Vec::new(); hh * ss * aa * bb];
    for (i, step) in log.steps.iter().enumerate() {
        let k = (i / hh) as u64 + 1;
        let h = i % hh;
        if step.k != k || step.h != h {
            return Err(Error::MalformedLog(format!(
                "step {i} is (k={}, h={}), expected (k={k}, h={h})",
                step.k, step.h
            )));
        }
        if step.s >= ss || step.a >= aa || step.b >= bb {
            return Err(Error::MalformedLog(format!(
                "step {i} indices (s={}, a={}, b={}) out of range",
                step.s, step.a, step.b
            )));
        }
        let cell = ((h * ss + step.s) * aa + step.a) * bb + step.b;
        visit_episodes[cell].push(k);
    }
    let mut policy_events = vec![Vec::new(); hh * ss];
    for (i, event) in log.policy_events.iter().enumerate() {
        if event.h >= hh || event.s >= ss {
            return Err(Error::MalformedLog(format!(
                "policy event {i} at (h={}, s={}) out of range",
                event.h, event.s
            )));
        }
        if event.effective_from < 2 {
            return Err(Error::MalformedLog(format!(
                "policy event {i} effective from episode {}; the first update can act from episode 2",
                event.effective_from
            )));
        }
        if event.probs.len() != aa * bb {
            return Err(Error::MalformedLog(format!(
                "policy event {i} has {} probabilities, expected {}",
                event.probs.len(),
                aa * bb
            )));
        }
        let mut mass = 0.0;
        for &p in &event.probs {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::MalformedLog(format!("policy event {i} has probability {p}")));
            }
            mass += p;
        }
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::MalformedLog(format!("policy event {i} mass {mass} is not 1")));
        }
        let timeline = &mut policy_events[event.h * ss + event.s];
        if let Some((last, _)) = timeline.last() {
            if *last >= event.effective_from {
                return Err(Error::MalformedLog(format!(
                    "policy events at (h={}, s={}) not strictly ascending ({} then {})",
                    event.h, event.s, last, event.effective_from
                )));
            }
        }
        timeline.push((event.effective_from, event.probs.clone()));
    }
    let mut schedule = StageSchedule::new(hh);
    let max_visits = visit_episodes.iter().map(Vec::len).max().unwrap_or(0) as u64;
    schedule.ensure(max_visits);
    Ok(ReplayStore {
        horizon: hh,
        num_states: ss,
        num_actions_max: aa,
        num_actions_min: bb,
        episodes: log.episodes,
        visit_episodes,
        policy_events,
        schedule,
        uniform: vec![1.0 / (aa * bb) as f64; aa * bb],
    })
}

/// Average final duality gap (1/K)Σ_k (V̄₁−V̲₁)(s₁): the certified bound
/// on the output policy pair's distance from equilibrium. Needs the
/// complete stride-1 metrics history; refuses subsampled streams.
pub fn gap_bound(metrics: &MetricsStream) -> Result<f64> {
    if metrics.rows.is_empty() {
        return Err(Error::Metrics("gap_bound needs at least one episode".into()));
    }
    if metrics.stride != 1 || metrics.rows[0].k != 1 {
        return Err(Error::Metrics(format!(
            "gap_bound needs the full stride-1 metrics stream, got stride {} starting at k={}",
            metrics.stride, metrics.rows[0].k
        )));
    }
    Ok(metrics.rows.iter().map(|r| r.gap).sum::<f64>() / metrics.rows.len() as f64)
}

fn exploitability_work(store: &ReplayStore) -> u64 {
    let (hh, ss, aa, bb) = store.dims();
    let kk = store.episodes;
    let lookup = ss as u64 + 20;
    (hh * ss * aa * bb) as u64 * kk * lookup + (hh * ss) as u64 * kk
}

/// Exact exploitability upper bound for one side's certified policy via
/// dynamic programming against a best responder that observes the
/// episode cursor: V*₁(s₁) − (1/K)Σ_k W₁(s₁, k) for the max player,
/// mirrored for the min player. The responder seeing the cursor can only
/// do better than one that does not, so this dominates the true
/// exploitability of the certified policy.
///
/// Work scales as H·S·K·A·B·(S+log), guarded by `budget`; evaluate a
/// shorter episode prefix when it trips.
pub fn exploitability_upper(
    game: &MarkovGame,
    store: &ReplayStore,
    exact: &ExactSolution,
    side: Side,
    budget: u64,
) -> Result<f64> {
    exploitability_upper_impl(game, store, exact, side, budget, true)
}

pub fn exploitability_upper_sequential(
    game: &MarkovGame,
    store: &ReplayStore,
    exact: &ExactSolution,
    side: Side,
    budget: u64,
) -> Result<f64> {
    exploitability_upper_impl(game, store, exact, side, budget, false)
}

fn exploitability_upper_impl(
    game: &MarkovGame,
    store: &ReplayStore,
    exact: &ExactSolution,
    side: Side,
    budget: u64,
    parallel: bool,
) -> Result<f64> {
    if game.dims() != store.dims() {
        return Err(Error::Contract("replay store dims disagree with game".into()));
    }
    if exact.horizon != game.horizon() || exact.num_states != game.num_states() {
        return Err(Error::Contract("exact solution dims disagree with game".into()));
    }
    if store.episodes == 0 {
        return Err(Error::Contract("cannot evaluate a run with zero episodes".into()));
    }
    let work = exploitability_work(store);
    if work > budget {
        return Err(Error::BudgetExceeded {
            work,
            budget,
            hint: "evaluate a shorter episode prefix or raise the DP budget".into(),
        });
    }
    let (hh, ss, aa, bb) = store.dims();
    let kk = store.episodes as usize;
    fn run<U, F>(parallel: bool, n: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        if parallel {
            map_range(n, f)
        } else {
            map_range_sequential(n, f)
        }
    }
    // w[s*K + (k-1)] = W_{h+1}(s, k); terminal layer is all zeros.
    let mut w_next = vec![0.0; ss * kk];
    for h in (0..hh).rev() {
        // Cursor jumps land uniformly in a completed stage of a cell, so
        // the continuation after a jump depends only on (cell, stage).
        // Average W_{h+1} over each stage's visit episodes once per layer.
        let stage_means: Vec<Vec<f64>> = run(parallel, ss * aa * bb, |ci| {
            let visits = &store.visit_episodes[h * ss * aa * bb + ci];
            let complete = store.schedule.completed_stages(visits.len() as u64);
            let mut means = vec![0.0; complete * ss];
            for j in 0..complete {
                let (start, end) = store.schedule.stage_span(j);
                let span = &visits[start as usize..end as usize];
                for s_next in 0..ss {
                    let mut total = 0.0;
                    for &e in span {
                        total += w_next[s_next * kk + (e - 1) as usize];
                    }
                    means[j * ss + s_next] = total / span.len() as f64;
                }
            }
            means
        });
        let w_cur = run(parallel, ss * kk, |idx| {
            let s = idx / kk;
            let k = (idx % kk) as u64 + 1;
            let probs = store.joint_policy_at(h, s, k);
            let continuation = |a: usize, b: usize| -> f64 {
                let ci = (s * aa + a) * bb + b;
                let n = store.visits_before(h, s, a, b, k);
                let completed = store.schedule.completed_stages(n);
                let row = game.transition_row(h, s, a, b);
                let mut ev = 0.0;
                if completed == 0 {
                    for (s_next, &p) in row.iter().enumerate() {
                        ev += p * w_next[s_next * kk + (k - 1) as usize];
                    }
                } else {
                    let means = &stage_means[ci][(completed - 1) * ss..completed * ss];
                    for (s_next, &p) in row.iter().enumerate() {
                        ev += p * means[s_next];
                    }
                }
                ev
            };
            match side {
                Side::Max => {
                    let mut marg = vec![0.0; aa];
                    for a in 0..aa {
                        for b in 0..bb {
                            marg[a] += probs[a * bb + b];
                        }
                    }
                    let mut best = f64::INFINITY;
                    for b in 0..bb {
                        let mut value = 0.0;
                        for (a, &w) in marg.iter().enumerate() {
                            if w == 0.0 {
                                continue;
                            }
                            value += w * (game.reward(h, s, a, b) + continuation(a, b));
                        }
                        best = best.min(value);
                    }
                    best
                }
                Side::Min => {
                    let mut marg = vec![0.0; bb];
                    for a in 0..aa {
                        for b in 0..bb {
                            marg[b] += probs[a * bb + b];
                        }
                    }
                    let mut best = f64::NEG_INFINITY;
                    for a in 0..aa {
                        let mut value = 0.0;
                        for (b, &w) in marg.iter().enumerate() {
                            if w == 0.0 {
                                continue;
                            }
                            value += w * (game.reward(h, s, a, b) + continuation(a, b));
                        }
                        best = best.max(value);
                    }
                    best
                }
            }
        });
        w_next = w_cur;
    }
    let s1 = game.initial_state();
    let mean = w_next[s1 * kk..(s1 + 1) * kk].iter().sum::<f64>() / kk as f64;
    let star = exact.value_at_initial(game);
    Ok(match side {
        Side::Max => star - mean,
        Side::Min => mean - star,
    })
}

/// Sample mean and standard error of a Monte Carlo return estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub episodes: u64,
}

/// Rolls out the certified policy for `side` against a fixed Markov
/// opponent and averages the max player's return. Deterministic given
/// the seed; episodes are independent streams, so the parallel and
/// sequential paths agree exactly.
pub fn monte_carlo_value(
    game: &MarkovGame,
    store: &ReplayStore,
    opponent: &MarkovPolicy,
    side: Side,
    episodes: u64,
    rng: &SeededRng,
) -> Result<McEstimate> {
    monte_carlo_impl(game, store, opponent, side, episodes, rng, true)
}

pub fn monte_carlo_value_sequential(
    game: &MarkovGame,
    store: &ReplayStore,
    opponent: &MarkovPolicy,
    side: Side,
    episodes: u64,
    rng: &SeededRng,
) -> Result<McEstimate> {
    monte_carlo_impl(game, store, opponent, side, episodes, rng, false)
}

fn monte_carlo_impl(
    game: &MarkovGame,
    store: &ReplayStore,
    opponent: &MarkovPolicy,
    side: Side,
    episodes: u64,
    rng: &SeededRng,
    parallel: bool,
) -> Result<McEstimate> {
    if episodes == 0 {
        return Err(Error::Contract("monte carlo evaluation needs at least one episode".into()));
    }
    if game.dims() != store.dims() {
        return Err(Error::Contract("replay store dims disagree with game".into()));
    }
    let (hh, ss, aa, bb) = game.dims();
    let opp_actions = match side {
        Side::Max => bb,
        Side::Min => aa,
    };
    if opponent.horizon != hh || opponent.num_states != ss || opponent.num_actions != opp_actions {
        return Err(Error::Contract("opponent policy shape mismatch".into()));
    }
    if !opponent.is_valid() {
        return Err(Error::Contract("opponent policy is not a valid distribution".into()));
    }
    let rollout = |e: usize| -> Result<f64> {
        let e = e as u64;
        let mut cursor = store.initial_cursor(side, rng, e)?;
        let mut s = game.initial_state();
        let mut ret = 0.0;
        for h in 0..hh {
            let mut action_rng = rng.stream(StreamKind::PolicyAction, e, h as u64);
            let mut jump_rng = rng.stream(StreamKind::CertifiedJump, e, h as u64);
            let opp = sample_index(
                &mut rng.stream(StreamKind::OpponentAction, e, h as u64),
                opponent.row(h, s),
            );
            let own = store.certified_step(&mut cursor, h, s, opp, &mut action_rng, &mut jump_rng)?;
            let (a, b) = match side {
                Side::Max => (own, opp),
                Side::Min => (opp, own),
            };
            ret += game.reward(h, s, a, b);
            s = sample_index(
                &mut rng.stream(StreamKind::EnvTransition, e, h as u64),
                game.transition_row(h, s, a, b),
            );
        }
        Ok(ret)
    };
    let returns = if parallel {
        map_range(episodes as usize, rollout)
    } else {
        map_range_sequential(episodes as usize, rollout)
    };
    let mut total = 0.0;
    for r in &returns {
        match r {
            Ok(v) => total += v,
            Err(e) => return Err(Error::Contract(format!("rollout failed: {e}"))),
        }
    }
    let n = episodes as f64;
    let mean = total / n;
    let stderr = if episodes > 1 {
        let ss_dev: f64 = returns
            .iter()
            .map(|r| {
                let d = r.as_ref().unwrap() - mean;
                d * d
            })
            .sum();
        (ss_dev / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    Ok(McEstimate { mean, stderr, episodes })
}

/// Certified-policy equality at K=1: nothing has ever been learned, so
/// the certified policy is uniform and the cursor never moves. Used by
/// tests and the acceptance suite.
pub fn uniform_markov_policy(game: &MarkovGame, side: Side) -> MarkovPolicy {
    let (hh, ss, aa, bb) = game.dims();
    let actions = match side {
        Side::Max => aa,
        Side::Min => bb,
    };
    MarkovPolicy::uniform(hh, ss, actions)
}

/// Markov exploitability side for a fixed max/min policy, in the same
/// orientation as [`exploitability_upper`]: V*₁ − V₁^{μ,†} for max,
/// V₁^{†,ν} − V*₁ for min.
pub fn markov_exploitability_side(
    game: &MarkovGame,
    exact: &ExactSolution,
    policy: &MarkovPolicy,
    side: Side,
) -> Result<f64> {
    let star = exact.value_at_initial(game);
    match side {
        Side::Max => {
            let (value, _) = best_response_markov(game, policy, Side::Min)?;
            Ok(star - value)
        }
        Side::Min => {
            let (value, _) = best_response_markov(game, policy, Side::Max)?;
            Ok(value - star)
        }
    }
}
