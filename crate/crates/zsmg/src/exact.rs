//! Ground-truth Nash values by backward induction, best responses to
//! Markov policies, and exploitability.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_range, map_range_sequential};
use crate::game::MarkovGame;
use crate::lp::{matrix_game_solve, MatrixGameSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Max,
    Min,
}

/// Per-(h, s) mixed strategy for one player, probs flat in (h, s, action)
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovPolicy {
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub probs: Vec<f64>,
}

impl MarkovPolicy {
    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        MarkovPolicy {
            horizon,
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; horizon * num_states * num_actions],
        }
    }

    #[inline]
    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        let base = (h * self.num_states + s) * self.num_actions;
        &self.probs[base..base + self.num_actions]
    }

    pub fn row_mut(&mut self, h: usize, s: usize) -> &mut [f64] {
        let base = (h * self.num_states + s) * self.num_actions;
        &mut self.probs[base..base + self.num_actions]
    }

    pub fn is_valid(&self) -> bool {
        if self.probs.len() != self.horizon * self.num_states * self.num_actions {
            return false;
        }
        self.probs.chunks(self.num_actions).all(|row| {
            row.iter().all(|p| p.is_finite() && *p >= 0.0)
                && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9
        })
    }
}

/// Q*, V*, and a Nash strategy pair for every (h, s). Serializes like the
/// game file: shape fields plus row-major flattened tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactSolution {
    pub version: u32,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions_max: usize,
    #[serde(rename = "B")]
    pub num_actions_min: usize,
    /// (h, s, a, b) order.
    pub q_star: Vec<f64>,
    /// (h, s) order.
    pub v_star: Vec<f64>,
    /// (h, s, a) order.
    pub ne_max: Vec<f64>,
    /// (h, s, b) order.
    pub ne_min: Vec<f64>,
}

impl ExactSolution {
    #[inline]
    pub fn q(&self, h: usize, s: usize, a: usize, b: usize) -> f64 {
        let idx = ((h * self.num_states + s) * self.num_actions_max + a) * self.num_actions_min + b;
        self.q_star[idx]
    }

    /// V*_h(s), with the terminal convention V*_H = 0.
    #[inline]
    pub fn v(&self, h: usize, s: usize) -> f64 {
        if h == self.horizon {
            0.0
        } else {
            self.v_star[h * self.num_states + s]
        }
    }

    pub fn value_at_initial(&self, game: &MarkovGame) -> f64 {
        self.v(0, game.initial_state())
    }

    pub fn max_policy(&self) -> MarkovPolicy {
        MarkovPolicy {
            horizon: self.horizon,
            num_states: self.num_states,
            num_actions: self.num_actions_max,
            probs: self.ne_max.clone(),
        }
    }

    pub fn min_policy(&self) -> MarkovPolicy {
        MarkovPolicy {
            horizon: self.horizon,
            num_states: self.num_states,
            num_actions: self.num_actions_min,
            probs: self.ne_min.clone(),
        }
    }

    pub fn to_json_string(&self) -> String {
        crate::jsonfmt::to_string(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ExactSolution> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Solves the game exactly: for h = H-1 down to 0,
/// Q*_h = r_h + P_h V*_{h+1} and (V*_h, NE strategies) from the matrix
/// game Q*_h(s, ., .). States within a layer solve in parallel; results
/// are merged in state order, so parallelism never changes the output.
pub fn nash_backward_induction(game: &MarkovGame) -> Result<ExactSolution> {
    backward_induction_impl(game, true)
}

/// Sequential twin of [`nash_backward_induction`], for benchmarks.
pub fn nash_backward_induction_sequential(game: &MarkovGame) -> Result<ExactSolution> {
    backward_induction_impl(game, false)
}

fn backward_induction_impl(game: &MarkovGame, parallel: bool) -> Result<ExactSolution> {
    let (hh, ss, aa, bb) = game.dims();
    let mut sol = ExactSolution {
        version: 1,
        horizon: hh,
        num_states: ss,
        num_actions_max: aa,
        num_actions_min: bb,
        q_star: vec![0.0; hh * ss * aa * bb],
        v_star: vec![0.0; hh * ss],
        ne_max: vec![0.0; hh * ss * aa],
        ne_min: vec![0.0; hh * ss * bb],
    };
    for h in (0..hh).rev() {
        let v_next: Vec<f64> = (0..ss).map(|s| sol.v(h + 1, s)).collect();
        let solve_state = |s: usize| -> Result<(Vec<f64>, MatrixGameSolution)> {
            let mut q = vec![0.0; aa * bb];
            for a in 0..aa {
                for b in 0..bb {
                    let row = game.transition_row(h, s, a, b);
                    let mut ev = 0.0;
                    for (next, &p) in row.iter().enumerate() {
                        ev += p * v_next[next];
                    }
                    q[a * bb + b] = game.reward(h, s, a, b) + ev;
                }
            }
            let mg = matrix_game_solve(&q, aa, bb)?;
            Ok((q, mg))
        };
        let layer = if parallel {
            map_range(ss, solve_state)
        } else {
            map_range_sequential(ss, solve_state)
        };
        for (s, cell) in layer.into_iter().enumerate() {
            let (q, mg) = cell?;
            let bound = (hh - h) as f64;
            debug_assert!(mg.value >= -1e-9 && mg.value <= bound + 1e-9);
            let qbase = (h * ss + s) * aa * bb;
            sol.q_star[qbase..qbase + aa * bb].copy_from_slice(&q);
            sol.v_star[h * ss + s] = mg.value;
            let abase = (h * ss + s) * aa;
            sol.ne_max[abase..abase + aa].copy_from_slice(&mg.max_strategy);
            let bbase = (h * ss + s) * bb;
            sol.ne_min[bbase..bbase + bb].copy_from_slice(&mg.min_strategy);
        }
    }
    Ok(sol)
}

/// Best response of `side` against a fixed opponent policy: single-agent
/// backward induction over the induced MDP, breaking action ties toward
/// the lowest index. Returns the responder's value at the initial state
/// and the (deterministic) responding policy.
pub fn best_response_markov(
    game: &MarkovGame,
    opponent: &MarkovPolicy,
    side: Side,
) -> Result<(f64, MarkovPolicy)> {
    let (hh, ss, aa, bb) = game.dims();
    let (own_actions, opp_actions) = match side {
        Side::Max => (aa, bb),
        Side::Min => (bb, aa),
    };
    if opponent.horizon != hh || opponent.num_states != ss || opponent.num_actions != opp_actions {
        return Err(Error::Contract("opponent policy shape mismatch".into()));
    }
    if !opponent.is_valid() {
        return Err(Error::Contract("opponent policy is not a valid distribution".into()));
    }
    let mut policy = MarkovPolicy {
        horizon: hh,
        num_states: ss,
        num_actions: own_actions,
        probs: vec![0.0; hh * ss * own_actions],
    };
    let mut v_next = vec![0.0; ss];
    let mut v_cur = vec![0.0; ss];
    for h in (0..hh).rev() {
        for s in 0..ss {
            let opp_row = opponent.row(h, s);
            let mut best = f64::NAN;
            let mut best_action = 0usize;
            for own in 0..own_actions {
                let mut q_own = 0.0;
                for (opp, &w) in opp_row.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let (a, b) = match side {
                        Side::Max => (own, opp),
                        Side::Min => (opp, own),
                    };
                    let row = game.transition_row(h, s, a, b);
                    let mut ev = 0.0;
                    for (next, &p) in row.iter().enumerate() {
                        ev += p * v_next[next];
                    }
                    q_own += w * (game.reward(h, s, a, b) + ev);
                }
                let improves = match side {
                    Side::Max => q_own > best,
                    Side::Min => q_own < best,
                };
                if best.is_nan() || improves {
                    best = q_own;
                    best_action = own;
                }
            }
            v_cur[s] = best;
            policy.row_mut(h, s)[best_action] = 1.0;
        }
        std::mem::swap(&mut v_next, &mut v_cur);
    }
    Ok((v_next[game.initial_state()], policy))
}

/// V_1^{dagger, nu}(s_1) - V_1^{mu, dagger}(s_1): how much either player
/// can gain by deviating unilaterally. Nonnegative up to LP tolerance for
/// every policy pair; 0 exactly at a Nash equilibrium.
pub fn exploitability(game: &MarkovGame, mu: &MarkovPolicy, nu: &MarkovPolicy) -> Result<f64> {
    let (attack_vs_nu, _) = best_response_markov(game, nu, Side::Max)?;
    let (attack_vs_mu, _) = best_response_markov(game, mu, Side::Min)?;
    Ok(attack_vs_nu - attack_vs_mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::builtin_game;

    #[test]
    fn matching_pennies_value() {
        let game = builtin_game("matching_pennies").unwrap();
        let sol = nash_backward_induction(&game).unwrap();
        assert!((sol.value_at_initial(&game) - 0.5).abs() <= 1e-9);
    }

    #[test]
    fn pennies_chain_accumulates_half_per_step() {
        let game = builtin_game("matching_pennies_chain(3)").unwrap();
        let sol = nash_backward_induction(&game).unwrap();
        assert!((sol.value_at_initial(&game) - 1.5).abs() <= 1e-9);
        let seq = nash_backward_induction_sequential(&game).unwrap();
        assert_eq!(sol.v_star, seq.v_star);
        assert_eq!(sol.ne_max, seq.ne_max);
    }

    #[test]
    fn degenerate_single_action_game() {
        let game = builtin_game("single_state_matrix([[1]])").unwrap();
        let sol = nash_backward_induction(&game).unwrap();
        assert_eq!(sol.v_star, vec![1.0]);
    }

    #[test]
    fn uniform_opponent_in_pennies_is_unexploitable() {
        let game = builtin_game("matching_pennies").unwrap();
        let uniform = MarkovPolicy::uniform(1, 1, 2);
        let (v_max, _) = best_response_markov(&game, &uniform, Side::Max).unwrap();
        let (v_min, _) = best_response_markov(&game, &uniform, Side::Min).unwrap();
        assert!((v_max - 0.5).abs() <= 1e-12);
        assert!((v_min - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn point_mass_opponent_is_exploited() {
        let game = builtin_game("matching_pennies").unwrap();
        let mut point = MarkovPolicy::uniform(1, 1, 2);
        point.probs = vec![1.0, 0.0];
        // Min best response vs max playing action 0: pick b=1, payoff 0.
        let (v, br) = best_response_markov(&game, &point, Side::Min).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(br.row(0, 0), &[0.0, 1.0]);
        // Max best response vs min playing action 0: pick a=0, payoff 1.
        let (v, _) = best_response_markov(&game, &point, Side::Max).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn exact_solution_json_roundtrip() {
        let game = builtin_game("matching_pennies_chain(2)").unwrap();
        let sol = nash_backward_induction(&game).unwrap();
        let text = sol.to_json_string();
        let back: ExactSolution = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_json_string(), text);
    }
}
