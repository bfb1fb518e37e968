//! Tabular episodic two-player zero-sum Markov games.
//!
//! A game is a horizon `H`, state set `{0..S}`, action sets `{0..A}` (max
//! player) and `{0..B}` (min player), a transition tensor `P_h(s'|s,a,b)`,
//! a deterministic reward tensor `r_h(s,a,b) in [0,1]`, and a fixed initial
//! state. Tensors are stored dense and row-major; at desk scale sparsity
//! buys nothing and dense layout is cache-friendly.

use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{sample_index, SeededRng, StreamKind};

/// Raw tensors before validation. `transitions` is flattened in
/// (h, s, a, b, s') order, `rewards` in (h, s, a, b) order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameData {
    pub version: u32,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions_max: usize,
    #[serde(rename = "B")]
    pub num_actions_min: usize,
    pub initial_state: usize,
    pub transitions: Vec<f64>,
    pub rewards: Vec<f64>,
}

pub const GAME_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Tensor length disagrees with the shape fields.
    BadShape {
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    ZeroDimension {
        field: &'static str,
    },
    TransitionNotFinite {
        h: usize,
        s: usize,
        a: usize,
        b: usize,
        next: usize,
    },
    TransitionNegative {
        h: usize,
        s: usize,
        a: usize,
        b: usize,
        next: usize,
        value: f64,
    },
    TransitionRowSum {
        h: usize,
        s: usize,
        a: usize,
        b: usize,
        sum: f64,
    },
    RewardNotFinite {
        h: usize,
        s: usize,
        a: usize,
        b: usize,
    },
    RewardOutOfRange {
        h: usize,
        s: usize,
        a: usize,
        b: usize,
        value: f64,
    },
    InitialStateOutOfRange {
        initial_state: usize,
        num_states: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::BadShape { field, expected, actual } => {
                write!(f, "{field} has length {actual}, shape fields imply {expected}")
            }
            Violation::ZeroDimension { field } => write!(f, "{field} must be at least 1"),
            Violation::TransitionNotFinite { h, s, a, b, next } => {
                write!(f, "transition ({h},{s},{a},{b} -> {next}) is not finite")
            }
            Violation::TransitionNegative { h, s, a, b, next, value } => {
                write!(f, "transition ({h},{s},{a},{b} -> {next}) = {value} is negative")
            }
            Violation::TransitionRowSum { h, s, a, b, sum } => {
                write!(f, "transition row ({h},{s},{a},{b}) sums to {sum}, expected 1")
            }
            Violation::RewardNotFinite { h, s, a, b } => {
                write!(f, "reward ({h},{s},{a},{b}) is not finite")
            }
            Violation::RewardOutOfRange { h, s, a, b, value } => {
                write!(f, "reward ({h},{s},{a},{b}) = {value} outside [0,1]")
            }
            Violation::InitialStateOutOfRange { initial_state, num_states } => {
                write!(f, "initial_state {initial_state} >= S = {num_states}")
            }
        }
    }
}

const ROW_SUM_TOL: f64 = 1e-12;

/// Checks every game invariant and reports all failures. Total: malformed
/// numeric input (NaN/Inf) becomes a violation, never a panic.
pub fn validate_game(data: &GameData) -> Vec<Violation> {
    let mut out = Vec::new();
    for (field, dim) in [
        ("H", data.horizon),
        ("S", data.num_states),
        ("A", data.num_actions_max),
        ("B", data.num_actions_min),
    ] {
        if dim == 0 {
            out.push(Violation::ZeroDimension { field });
        }
    }
    if !out.is_empty() {
        return out;
    }
    let (hh, ss, aa, bb) = (data.horizon, data.num_states, data.num_actions_max, data.num_actions_min);
    let cells = hh * ss * aa * bb;
    if data.transitions.len() != cells * ss {
        out.push(Violation::BadShape {
            field: "transitions",
            expected: cells * ss,
            actual: data.transitions.len(),
        });
    }
    if data.rewards.len() != cells {
        out.push(Violation::BadShape {
            field: "rewards",
            expected: cells,
            actual: data.rewards.len(),
        });
    }
    if !out.is_empty() {
        return out;
    }
    let mut cell = 0usize;
    for h in 0..hh {
        for s in 0..ss {
            for a in 0..aa {
                for b in 0..bb {
                    let row = &data.transitions[cell * ss..(cell + 1) * ss];
                    let mut finite = true;
                    for (next, &p) in row.iter().enumerate() {
                        if !p.is_finite() {
                            out.push(Violation::TransitionNotFinite { h, s, a, b, next });
                            finite = false;
                        } else if p < 0.0 {
                            out.push(Violation::TransitionNegative { h, s, a, b, next, value: p });
                        }
                    }
                    if finite {
                        let sum: f64 = row.iter().sum();
                        if (sum - 1.0).abs() > ROW_SUM_TOL {
                            out.push(Violation::TransitionRowSum { h, s, a, b, sum });
                        }
                    }
                    let r = data.rewards[cell];
                    if !r.is_finite() {
                        out.push(Violation::RewardNotFinite { h, s, a, b });
                    } else if !(0.0..=1.0).contains(&r) {
                        out.push(Violation::RewardOutOfRange { h, s, a, b, value: r });
                    }
                    cell += 1;
                }
            }
        }
    }
    if data.initial_state >= ss {
        out.push(Violation::InitialStateOutOfRange {
            initial_state: data.initial_state,
            num_states: ss,
        });
    }
    out
}

/// A validated game. Immutable after construction, safe to share across
/// threads; the only way in is through [`validate_game`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GameData", into = "GameData")]
pub struct MarkovGame {
    data: GameData,
}

impl TryFrom<GameData> for MarkovGame {
    type Error = Error;

    fn try_from(data: GameData) -> Result<Self> {
        let violations = validate_game(&data);
        if !violations.is_empty() {
            return Err(Error::InvalidGame { violations });
        }
        Ok(MarkovGame { data })
    }
}

impl From<MarkovGame> for GameData {
    fn from(game: MarkovGame) -> GameData {
        game.data
    }
}

impl MarkovGame {
    pub fn horizon(&self) -> usize {
        self.data.horizon
    }

    pub fn num_states(&self) -> usize {
        self.data.num_states
    }

    pub fn num_actions_max(&self) -> usize {
        self.data.num_actions_max
    }

    pub fn num_actions_min(&self) -> usize {
        self.data.num_actions_min
    }

    pub fn initial_state(&self) -> usize {
        self.data.initial_state
    }

    /// (H, S, A, B).
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (
            self.data.horizon,
            self.data.num_states,
            self.data.num_actions_max,
            self.data.num_actions_min,
        )
    }

    pub fn data(&self) -> &GameData {
        &self.data
    }

    #[inline]
    pub fn cell_index(&self, h: usize, s: usize, a: usize, b: usize) -> usize {
        debug_assert!(h < self.data.horizon && s < self.data.num_states);
        debug_assert!(a < self.data.num_actions_max && b < self.data.num_actions_min);
        ((h * self.data.num_states + s) * self.data.num_actions_max + a) * self.data.num_actions_min
            + b
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize, b: usize) -> f64 {
        self.data.rewards[self.cell_index(h, s, a, b)]
    }

    /// Probability row over next states for (h, s, a, b).
    #[inline]
    pub fn transition_row(&self, h: usize, s: usize, a: usize, b: usize) -> &[f64] {
        let cell = self.cell_index(h, s, a, b);
        let ss = self.data.num_states;
        &self.data.transitions[cell * ss..(cell + 1) * ss]
    }

    pub fn to_json_string(&self) -> String {
        crate::jsonfmt::to_string(&self.data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<MarkovGame> {
        let text = std::fs::read_to_string(path)?;
        MarkovGame::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<MarkovGame> {
        let data: GameData = serde_json::from_str(text)?;
        if data.version != GAME_FILE_VERSION {
            return Err(Error::Contract(format!(
                "unsupported game file version {} (expected {})",
                data.version, GAME_FILE_VERSION
            )));
        }
        MarkovGame::try_from(data)
    }
}

/// Joint distribution over action pairs, row-major A x B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    pub num_actions_max: usize,
    pub num_actions_min: usize,
    /// probs[a * B + b] = pi(a, b).
    pub probs: Vec<f64>,
}

pub const DISTRIBUTION_SUM_TOL: f64 = 1e-9;

impl JointDistribution {
    pub fn uniform(num_actions_max: usize, num_actions_min: usize) -> Self {
        let n = num_actions_max * num_actions_min;
        JointDistribution {
            num_actions_max,
            num_actions_min,
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn from_probs(num_actions_max: usize, num_actions_min: usize, probs: Vec<f64>) -> Self {
        JointDistribution { num_actions_max, num_actions_min, probs }
    }

    #[inline]
    pub fn prob(&self, a: usize, b: usize) -> f64 {
        self.probs[a * self.num_actions_min + b]
    }

    pub fn is_valid(&self) -> bool {
        if self.probs.len() != self.num_actions_max * self.num_actions_min {
            return false;
        }
        let mut sum = 0.0;
        for &p in &self.probs {
            if !p.is_finite() || p < 0.0 {
                return false;
            }
            sum += p;
        }
        (sum - 1.0).abs() <= DISTRIBUTION_SUM_TOL
    }

    /// Max-player marginal pi(a) = sum_b pi(a, b).
    pub fn marginal_max(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_actions_max];
        for a in 0..self.num_actions_max {
            for b in 0..self.num_actions_min {
                out[a] += self.prob(a, b);
            }
        }
        out
    }

    /// Min-player marginal pi(b) = sum_a pi(a, b).
    pub fn marginal_min(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_actions_min];
        for a in 0..self.num_actions_max {
            for b in 0..self.num_actions_min {
                out[b] += self.prob(a, b);
            }
        }
        out
    }

    /// Expected value of an A x B payoff table under this distribution.
    pub fn expectation(&self, payoff: &[f64]) -> f64 {
        debug_assert_eq!(payoff.len(), self.probs.len());
        self.probs.iter().zip(payoff).map(|(p, q)| p * q).sum()
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> (usize, usize) {
        let flat = sample_index(rng, &self.probs);
        (flat / self.num_actions_min, flat % self.num_actions_min)
    }
}

/// One environment step: actions (a, b) taken in state s at step h, the
/// realized reward, and the sampled next state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajStep {
    pub h: usize,
    pub s: usize,
    pub a: usize,
    pub b: usize,
    pub r: f64,
    pub s_next: usize,
}

/// One full episode. Steps run h = 0..H in order; steps[0].s is the
/// initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub episode: u64,
    pub steps: Vec<TrajStep>,
}

/// Plays one episode under per-(h, s) joint policies. Action pairs draw
/// from the `PolicyAction` stream and next states from `EnvTransition`,
/// each keyed by (episode, step), so the sampled path is a pure function
/// of (game, master seed, episode, policies).
pub fn play_episode<F>(
    game: &MarkovGame,
    mut policy_provider: F,
    rng: &SeededRng,
    episode: u64,
) -> Result<Trajectory>
where
    F: FnMut(usize, usize) -> JointDistribution,
{
    let (hh, _, aa, bb) = game.dims();
    let mut steps = Vec::with_capacity(hh);
    let mut s = game.initial_state();
    for h in 0..hh {
        let policy = policy_provider(h, s);
        if policy.num_actions_max != aa || policy.num_actions_min != bb || !policy.is_valid() {
            return Err(Error::Contract(format!(
                "policy provider returned an invalid distribution at (h={h}, s={s})"
            )));
        }
        let (a, b) = policy.sample(&mut rng.stream(StreamKind::PolicyAction, episode, h as u64));
        let s_next = sample_index(
            &mut rng.stream(StreamKind::EnvTransition, episode, h as u64),
            game.transition_row(h, s, a, b),
        );
        steps.push(TrajStep { h, s, a, b, r: game.reward(h, s, a, b), s_next });
        s = s_next;
    }
    Ok(Trajectory { episode, steps })
}

/// Seed of the fixed benchmark instance shared by tests, the acceptance
/// suite, and the criterion benches.
pub const BENCHMARK_SEED: u64 = 1302;

/// The fixed small benchmark: S=3, A=B=2, H=3, dense rewards.
pub fn benchmark_game() -> MarkovGame {
    generate_random_game(BENCHMARK_SEED, 3, 2, 2, 3, 1.0)
        .expect("benchmark dimensions are valid")
}

/// Random game: transition rows are symmetric Dirichlet(1) draws, rewards
/// are Uniform[0,1] kept with probability `reward_density` (else 0).
pub fn generate_random_game(
    seed: u64,
    num_states: usize,
    num_actions_max: usize,
    num_actions_min: usize,
    horizon: usize,
    reward_density: f64,
) -> Result<MarkovGame> {
    if num_states == 0 || num_actions_max == 0 || num_actions_min == 0 || horizon == 0 {
        return Err(Error::Contract("game dimensions must be at least 1".into()));
    }
    if !(reward_density > 0.0 && reward_density <= 1.0) {
        return Err(Error::Contract(format!(
            "reward_density {reward_density} outside (0, 1]"
        )));
    }
    let rng = SeededRng::new(seed);
    let cells = horizon * num_states * num_actions_max * num_actions_min;
    let mut transitions = Vec::with_capacity(cells * num_states);
    {
        // Dirichlet(1) row = normalized unit exponentials.
        let mut trng = rng.stream(StreamKind::GenTransitions, 0, 0);
        let mut row = vec![0.0; num_states];
        for _ in 0..cells {
            let mut sum = 0.0;
            for slot in row.iter_mut() {
                let u: f64 = trng.random();
                *slot = -(1.0f64 - u).ln();
                sum += *slot;
            }
            for &weight in &row {
                transitions.push(weight / sum);
            }
        }
    }
    let mut rewards = Vec::with_capacity(cells);
    {
        let mut rrng = rng.stream(StreamKind::GenRewards, 0, 0);
        for _ in 0..cells {
            let keep: f64 = rrng.random();
            let value: f64 = rrng.random();
            rewards.push(if keep < reward_density { value } else { 0.0 });
        }
    }
    // Renormalize away the 1e-12 drift from summing in arbitrary dimension.
    for row in transitions.chunks_mut(num_states) {
        let sum: f64 = row.iter().sum();
        for p in row.iter_mut() {
            *p /= sum;
        }
    }
    MarkovGame::try_from(GameData {
        version: GAME_FILE_VERSION,
        horizon,
        num_states,
        num_actions_max,
        num_actions_min,
        initial_state: 0,
        transitions,
        rewards,
    })
}

/// Parses builtin specs: `matching_pennies`, `matching_pennies_chain(H)`,
/// `single_state_matrix([[..],..])`, `benchmark`.
pub fn builtin_game(name: &str) -> Result<MarkovGame> {
    let name = name.trim();
    if name == "matching_pennies" {
        return single_state_matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    }
    if name == "benchmark" {
        return Ok(benchmark_game());
    }
    if let Some(arg) = call_arg(name, "matching_pennies_chain") {
        let horizon: usize = arg
            .trim()
            .parse()
            .map_err(|_| Error::UnknownBuiltin(name.to_string()))?;
        if horizon == 0 {
            return Err(Error::UnknownBuiltin(name.to_string()));
        }
        return matching_pennies_chain(horizon);
    }
    if let Some(arg) = call_arg(name, "single_state_matrix") {
        let matrix: Vec<Vec<f64>> =
            serde_json::from_str(arg).map_err(|_| Error::UnknownBuiltin(name.to_string()))?;
        if matrix.is_empty() || matrix[0].is_empty() {
            return Err(Error::UnknownBuiltin(name.to_string()));
        }
        return single_state_matrix(&matrix);
    }
    Err(Error::UnknownBuiltin(name.to_string()))
}

fn call_arg<'a>(name: &'a str, callee: &str) -> Option<&'a str> {
    name.strip_prefix(callee)?
        .trim()
        .strip_prefix('(')?
        .strip_suffix(')')
}

/// H=1, S=1 game with the given payoff matrix (entries must be in [0,1]).
pub fn single_state_matrix(matrix: &[Vec<f64>]) -> Result<MarkovGame> {
    let aa = matrix.len();
    let bb = matrix[0].len();
    let mut rewards = Vec::with_capacity(aa * bb);
    for row in matrix {
        if row.len() != bb {
            return Err(Error::Contract("payoff matrix rows have unequal lengths".into()));
        }
        rewards.extend_from_slice(row);
    }
    MarkovGame::try_from(GameData {
        version: GAME_FILE_VERSION,
        horizon: 1,
        num_states: 1,
        num_actions_max: aa,
        num_actions_min: bb,
        initial_state: 0,
        transitions: vec![1.0; aa * bb],
        rewards,
    })
}

/// H-step chain of matching pennies: S=H states, the state advances
/// deterministically min(s+1, S-1), every (h, s) plays the same 2x2 game.
pub fn matching_pennies_chain(horizon: usize) -> Result<MarkovGame> {
    let ss = horizon;
    let cells = horizon * ss * 4;
    let mut transitions = vec![0.0; cells * ss];
    let mut rewards = Vec::with_capacity(cells);
    let pennies = [1.0, 0.0, 0.0, 1.0];
    let mut cell = 0usize;
    for _h in 0..horizon {
        for s in 0..ss {
            for ab in 0..4 {
                transitions[cell * ss + (s + 1).min(ss - 1)] = 1.0;
                rewards.push(pennies[ab]);
                cell += 1;
            }
        }
    }
    MarkovGame::try_from(GameData {
        version: GAME_FILE_VERSION,
        horizon,
        num_states: ss,
        num_actions_max: 2,
        num_actions_min: 2,
        initial_state: 0,
        transitions,
        rewards,
    })
}
