//! Dense primal simplex and the two game-theoretic oracles built on it:
//! minimax solutions of matrix games and coarse correlated equilibria of
//! bimatrix pairs.
//!
//! Problem sizes here are tiny (tens of variables), so the solver favors
//! safety and determinism over speed: dense tableau arithmetic, Bland's
//! anti-cycling rule, equalities expanded into inequality pairs, and an
//! explicit pivot cap that turns any stall into an error instead of a
//! silent wrong answer. Optimal solutions are recomputed from the final
//! basis against the original constraint data, so accumulated pivot drift
//! never reaches the caller.

use crate::error::{Error, Result};
use crate::game::JointDistribution;

/// maximize objective . x  subject to
///   ineq_matrix . x <= ineq_rhs,
///   eq_matrix . x == eq_rhs,
///   x >= lower_bounds (empty means 0).
#[derive(Debug, Clone, Default)]
pub struct DenseLp {
    pub objective: Vec<f64>,
    pub ineq_matrix: Vec<Vec<f64>>,
    pub ineq_rhs: Vec<f64>,
    pub eq_matrix: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub lower_bounds: Vec<f64>,
}

impl DenseLp {
    pub fn maximize(objective: Vec<f64>) -> Self {
        DenseLp { objective, ..Default::default() }
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.ineq_matrix.push(row);
        self.ineq_rhs.push(rhs);
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.eq_matrix.push(row);
        self.eq_rhs.push(rhs);
    }

    fn check(&self) -> Result<()> {
        let n = self.objective.len();
        if n == 0 {
            return Err(Error::Contract("lp has no variables".into()));
        }
        if !self.lower_bounds.is_empty() && self.lower_bounds.len() != n {
            return Err(Error::Contract("lower_bounds length mismatch".into()));
        }
        if self.ineq_matrix.len() != self.ineq_rhs.len() || self.eq_matrix.len() != self.eq_rhs.len()
        {
            return Err(Error::Contract("constraint row/rhs count mismatch".into()));
        }
        let rows = self.ineq_matrix.iter().chain(&self.eq_matrix);
        for row in rows {
            if row.len() != n {
                return Err(Error::Contract("constraint row length mismatch".into()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract("constraint coefficient not finite".into()));
            }
        }
        let scalars = self
            .objective
            .iter()
            .chain(&self.ineq_rhs)
            .chain(&self.eq_rhs)
            .chain(&self.lower_bounds);
        for v in scalars {
            if !v.is_finite() {
                return Err(Error::Contract("lp datum not finite".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// `x`, `objective` and `max_residual` are meaningful only when `status`
/// is `Optimal`.
#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub max_residual: f64,
    pub pivots: u64,
}

pub const PIVOT_TOL: f64 = 1e-9;
pub const RESIDUAL_TOL: f64 = 1e-8;
pub const MAX_PIVOTS: u64 = 1_000_000;

/// Standard-form image of a [`DenseLp`]: lower bounds shifted out,
/// equalities expanded into inequality pairs, every row normalized to a
/// nonnegative rhs. Rows that had to be negated carry a surplus column
/// plus a phase-1 artificial.
struct Standard {
    n: usize,
    m: usize,
    ncols: usize,
    art_start: usize,
    norm_rows: Vec<Vec<f64>>,
    norm_rhs: Vec<f64>,
    flipped: Vec<bool>,
    /// Row owning each artificial column, in column order.
    art_owner: Vec<usize>,
    lb: Vec<f64>,
}

impl Standard {
    /// Coefficient of standard-form column `j` in row `i`, reconstructed
    /// from the original data rather than the pivoted tableau.
    fn column_coef(&self, i: usize, j: usize) -> f64 {
        if j < self.n {
            self.norm_rows[i][j]
        } else if j < self.art_start {
            if j - self.n == i {
                if self.flipped[i] {
                    -1.0
                } else {
                    1.0
                }
            } else {
                0.0
            }
        } else if self.art_owner[j - self.art_start] == i {
            1.0
        } else {
            0.0
        }
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    /// Columns at or beyond this index are phase-1 artificials.
    art_start: usize,
    pivots: u64,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize, trace: &mut Option<&mut Vec<(usize, usize)>>) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c];
            if f != 0.0 {
                for j in 0..self.rows[i].len() {
                    self.rows[i][j] -= f * self.rows[r][j];
                }
                self.rows[i][c] = 0.0;
                self.rhs[i] -= f * self.rhs[r];
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for j in 0..self.obj.len() {
                self.obj[j] -= f * self.rows[r][j];
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
        if let Some(t) = trace {
            t.push((r, c));
        }
    }

    /// Bland's rule: entering column is the lowest-index improving one
    /// (skipping `banned` columns), leaving row breaks ratio ties by lowest
    /// basis index. Returns false on unboundedness, true at optimum.
    fn run(
        &mut self,
        limit: usize,
        banned: Option<&[bool]>,
        trace: &mut Option<&mut Vec<(usize, usize)>>,
    ) -> Result<bool> {
        loop {
            let mut entering = None;
            for c in 0..limit {
                if self.obj[c] > PIVOT_TOL && banned.is_none_or(|b| !b[c]) {
                    entering = Some(c);
                    break;
                }
            }
            let Some(c) = entering else { return Ok(true) };
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let coef = self.rows[i][c];
                if coef > PIVOT_TOL {
                    let ratio = self.rhs[i] / coef;
                    match leaving {
                        None => leaving = Some((i, ratio)),
                        Some((best_i, best)) => {
                            if ratio < best
                                || (ratio == best && self.basis[i] < self.basis[best_i])
                            {
                                leaving = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, _)) = leaving else { return Ok(false) };
            if self.pivots >= MAX_PIVOTS {
                return Err(Error::LpStalled { pivots: self.pivots });
            }
            self.pivot(r, c, trace);
        }
    }

    /// Installs `raw` (over the original variables) as the objective,
    /// reduced through the current basis.
    fn set_objective(&mut self, raw: &[f64]) {
        self.obj.iter_mut().for_each(|v| *v = 0.0);
        self.obj[..raw.len()].copy_from_slice(raw);
        for i in 0..self.rows.len() {
            let f = self.obj[self.basis[i]];
            if f != 0.0 {
                for j in 0..self.obj.len() {
                    self.obj[j] -= f * self.rows[i][j];
                }
                self.obj[self.basis[i]] = 0.0;
            }
        }
    }

    /// Marks every non-banned column whose reduced cost is strictly
    /// negative: entering one would leave the current objective's optimal
    /// face.
    fn ban_off_face(&self, banned: &mut [bool]) {
        for (j, flag) in banned.iter_mut().enumerate().take(self.art_start) {
            if self.obj[j] < -PIVOT_TOL {
                *flag = true;
            }
        }
    }
}

pub fn simplex_solve(lp: &DenseLp) -> Result<LpResult> {
    solve_inner(lp, 0, &mut None)
}

/// Like [`simplex_solve`] but records every (row, column) pivot, for
/// determinism checks.
pub fn simplex_solve_traced(lp: &DenseLp, trace: &mut Vec<(usize, usize)>) -> Result<LpResult> {
    let mut t = Some(trace);
    solve_inner(lp, 0, &mut t)
}

/// Solves the LP, then refines to the optimal-face vertex that
/// lexicographically minimizes (x_0, ..., x_{lex_vars-1}): each coordinate
/// is minimized in turn while columns that would move any previously
/// optimized objective off its optimum are barred from entering.
pub fn simplex_solve_lex(lp: &DenseLp, lex_vars: usize) -> Result<LpResult> {
    solve_inner(lp, lex_vars, &mut None)
}

fn standardize(lp: &DenseLp) -> (Standard, Tableau) {
    let n = lp.objective.len();
    let lb = if lp.lower_bounds.is_empty() { vec![0.0; n] } else { lp.lower_bounds.clone() };

    let mut norm_rows: Vec<Vec<f64>> = Vec::new();
    let mut norm_rhs: Vec<f64> = Vec::new();
    let mut flipped: Vec<bool> = Vec::new();
    let mut push_le = |row: &[f64], rhs: f64| {
        let shift: f64 = row.iter().zip(&lb).map(|(c, l)| c * l).sum();
        let rhs = rhs - shift;
        if rhs >= 0.0 {
            norm_rows.push(row.to_vec());
            norm_rhs.push(rhs);
            flipped.push(false);
        } else {
            norm_rows.push(row.iter().map(|c| -c).collect());
            norm_rhs.push(-rhs);
            flipped.push(true);
        }
    };
    for (row, &rhs) in lp.ineq_matrix.iter().zip(&lp.ineq_rhs) {
        push_le(row, rhs);
    }
    for (row, &rhs) in lp.eq_matrix.iter().zip(&lp.eq_rhs) {
        push_le(row, rhs);
        let neg: Vec<f64> = row.iter().map(|c| -c).collect();
        push_le(&neg, -rhs);
    }

    let m = norm_rows.len();
    let art_start = n + m;
    let num_art = flipped.iter().filter(|f| **f).count();
    let ncols = n + m + num_art;
    let mut rows = vec![vec![0.0; ncols]; m];
    let mut basis = vec![0usize; m];
    let mut art_owner = Vec::with_capacity(num_art);
    for i in 0..m {
        rows[i][..n].copy_from_slice(&norm_rows[i]);
        if flipped[i] {
            rows[i][n + i] = -1.0;
            rows[i][art_start + art_owner.len()] = 1.0;
            basis[i] = art_start + art_owner.len();
            art_owner.push(i);
        } else {
            rows[i][n + i] = 1.0;
            basis[i] = n + i;
        }
    }

    let tab = Tableau {
        rows,
        rhs: norm_rhs.clone(),
        obj: vec![0.0; ncols],
        basis,
        art_start,
        pivots: 0,
    };
    (Standard { n, m, ncols, art_start, norm_rows, norm_rhs, flipped, art_owner, lb }, tab)
}

/// Solves B x_B = rhs for the basic variables against the original
/// standard-form columns, by Gaussian elimination with partial pivoting.
/// Returns None when the basis matrix is numerically singular.
fn refactor_basic_solution(std_: &Standard, basis: &[usize]) -> Option<Vec<f64>> {
    let m = std_.m;
    let mut a = vec![vec![0.0f64; m + 1]; m];
    for (i, row) in a.iter_mut().enumerate() {
        for (r, &col) in basis.iter().enumerate() {
            row[r] = std_.column_coef(i, col);
        }
        row[m] = std_.norm_rhs[i];
    }
    for col in 0..m {
        let pivot_row = (col..m)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .expect("nonempty pivot range");
        if a[pivot_row][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot_row);
        for below in col + 1..m {
            let f = a[below][col] / a[col][col];
            if f != 0.0 {
                for j in col..=m {
                    a[below][j] -= f * a[col][j];
                }
            }
        }
    }
    let mut xb = vec![0.0f64; m];
    for row in (0..m).rev() {
        let mut acc = a[row][m];
        for j in row + 1..m {
            acc -= a[row][j] * xb[j];
        }
        xb[row] = acc / a[row][row];
    }
    Some(xb)
}

fn residual_against(lp: &DenseLp, x: &[f64]) -> f64 {
    let mut max_residual = 0.0f64;
    for (row, &rhs) in lp.ineq_matrix.iter().zip(&lp.ineq_rhs) {
        let lhs: f64 = row.iter().zip(x).map(|(c, v)| c * v).sum();
        max_residual = max_residual.max(lhs - rhs);
    }
    for (row, &rhs) in lp.eq_matrix.iter().zip(&lp.eq_rhs) {
        let lhs: f64 = row.iter().zip(x).map(|(c, v)| c * v).sum();
        max_residual = max_residual.max((lhs - rhs).abs());
    }
    for (v, l) in x.iter().zip(lp.lower_bounds.iter().chain(std::iter::repeat(&0.0))) {
        max_residual = max_residual.max(l - v);
    }
    max_residual
}

fn solve_inner(
    lp: &DenseLp,
    lex_vars: usize,
    trace: &mut Option<&mut Vec<(usize, usize)>>,
) -> Result<LpResult> {
    lp.check()?;
    if lex_vars > lp.objective.len() {
        return Err(Error::Contract("lex_vars exceeds variable count".into()));
    }
    let (std_, mut tab) = standardize(lp);
    let (n, m, ncols, art_start) = (std_.n, std_.m, std_.ncols, std_.art_start);

    if ncols > art_start {
        // Phase 1: maximize -(sum of artificials), reduced for the basic ones.
        for c in art_start..ncols {
            tab.obj[c] = -1.0;
        }
        for i in 0..m {
            if tab.basis[i] >= art_start {
                for j in 0..ncols {
                    tab.obj[j] += tab.rows[i][j];
                }
            }
        }
        if !tab.run(ncols, None, trace)? {
            return Err(Error::LpNumeric("phase 1 reported unbounded".into()));
        }
        let art_sum: f64 =
            (0..m).filter(|&i| tab.basis[i] >= art_start).map(|i| tab.rhs[i]).sum();
        if art_sum > RESIDUAL_TOL {
            return Ok(LpResult {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                objective: 0.0,
                max_residual: 0.0,
                pivots: tab.pivots,
            });
        }
        // Drive remaining artificials out of the basis; rows that offer no
        // pivot are linearly dependent and can be left inert.
        for i in 0..m {
            if tab.basis[i] >= art_start {
                if let Some(c) = (0..art_start).find(|&c| tab.rows[i][c].abs() > PIVOT_TOL) {
                    if tab.pivots >= MAX_PIVOTS {
                        return Err(Error::LpStalled { pivots: tab.pivots });
                    }
                    tab.pivot(i, c, trace);
                }
            }
        }
    }

    tab.set_objective(&lp.objective);
    if !tab.run(art_start, None, trace)? {
        return Ok(LpResult {
            status: LpStatus::Unbounded,
            x: Vec::new(),
            objective: 0.0,
            max_residual: 0.0,
            pivots: tab.pivots,
        });
    }

    if lex_vars > 0 {
        let mut banned = vec![false; ncols];
        tab.ban_off_face(&mut banned);
        let mut level = vec![0.0; n];
        for i in 0..lex_vars {
            level.iter_mut().for_each(|v| *v = 0.0);
            level[i] = -1.0;
            tab.set_objective(&level);
            if !tab.run(art_start, Some(&banned), trace)? {
                return Err(Error::LpNumeric(format!(
                    "lexicographic refinement of x_{i} reported unbounded on a bounded face"
                )));
            }
            tab.ban_off_face(&mut banned);
        }
    }

    let mut x = std_.lb.clone();
    for i in 0..m {
        if tab.basis[i] < n {
            x[tab.basis[i]] += tab.rhs[i];
        }
    }
    // Recompute the basic solution from original data; pivoting drift then
    // cannot leak into the answer unless the refactorization is worse.
    if let Some(xb) = refactor_basic_solution(&std_, &tab.basis) {
        let mut fresh = std_.lb.clone();
        for (r, &col) in tab.basis.iter().enumerate() {
            if col < n {
                fresh[col] += xb[r];
            }
        }
        if residual_against(lp, &fresh) <= residual_against(lp, &x) {
            x = fresh;
        }
    }

    let objective: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let max_residual = residual_against(lp, &x);
    if max_residual > RESIDUAL_TOL {
        return Err(Error::LpNumeric(format!(
            "optimal basis violates constraints by {max_residual:.3e}"
        )));
    }
    Ok(LpResult { status: LpStatus::Optimal, x, objective, max_residual, pivots: tab.pivots })
}

#[derive(Debug, Clone)]
pub struct MatrixGameSolution {
    pub value: f64,
    pub max_strategy: Vec<f64>,
    pub min_strategy: Vec<f64>,
}

fn clean_simplex_point(raw: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = raw.iter().map(|&p| p.max(0.0)).collect();
    let sum: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= sum;
    }
    out
}

/// Minimax solution of the zero-sum matrix game `q` (row player maximizes),
/// `q` row-major with `nrows x ncols` entries.
///
/// Solved as the standard pair of LPs over (mu, w) and (nu, u) after
/// shifting entries nonnegative (the shift moves the value, not the
/// strategies); primal and dual values are cross-checked.
pub fn matrix_game_solve(q: &[f64], nrows: usize, ncols: usize) -> Result<MatrixGameSolution> {
    if q.len() != nrows * ncols || nrows == 0 || ncols == 0 {
        return Err(Error::Contract("payoff matrix shape mismatch".into()));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("payoff matrix entry not finite".into()));
    }
    let shift = q.iter().cloned().fold(f64::INFINITY, f64::min).min(0.0);
    let qs: Vec<f64> = q.iter().map(|v| v - shift).collect();

    // Max player: variables (mu_0..mu_{A-1}, w), maximize w with
    // w <= sum_a mu_a q(a, b) for every column b.
    let mut obj = vec![0.0; nrows + 1];
    obj[nrows] = 1.0;
    let mut lp = DenseLp::maximize(obj);
    for b in 0..ncols {
        let mut row = vec![0.0; nrows + 1];
        for (a, slot) in row[..nrows].iter_mut().enumerate() {
            *slot = -qs[a * ncols + b];
        }
        row[nrows] = 1.0;
        lp.add_le(row, 0.0);
    }
    let mut simplex_row = vec![1.0; nrows + 1];
    simplex_row[nrows] = 0.0;
    lp.add_eq(simplex_row, 1.0);
    let max_side = simplex_solve(&lp)?;
    if max_side.status != LpStatus::Optimal {
        return Err(Error::LpNumeric(format!("max-side LP status {:?}", max_side.status)));
    }

    // Min player: variables (nu_0..nu_{B-1}, u), maximize -u with
    // sum_b nu_b q(a, b) <= u for every row a.
    let mut obj = vec![0.0; ncols + 1];
    obj[ncols] = -1.0;
    let mut lp = DenseLp::maximize(obj);
    for a in 0..nrows {
        let mut row = vec![0.0; ncols + 1];
        row[..ncols].copy_from_slice(&qs[a * ncols..(a + 1) * ncols]);
        row[ncols] = -1.0;
        lp.add_le(row, 0.0);
    }
    let mut simplex_row = vec![1.0; ncols + 1];
    simplex_row[ncols] = 0.0;
    lp.add_eq(simplex_row, 1.0);
    let min_side = simplex_solve(&lp)?;
    if min_side.status != LpStatus::Optimal {
        return Err(Error::LpNumeric(format!("min-side LP status {:?}", min_side.status)));
    }

    let v_max = max_side.x[nrows] + shift;
    let v_min = min_side.x[ncols] + shift;
    if (v_max - v_min).abs() > RESIDUAL_TOL {
        return Err(Error::LpNumeric(format!(
            "duality gap {:.3e} between primal {v_max} and dual {v_min}",
            (v_max - v_min).abs()
        )));
    }
    let max_strategy = clean_simplex_point(&max_side.x[..nrows]);
    let min_strategy = clean_simplex_point(&min_side.x[..ncols]);
    let mut cross = 0.0;
    for a in 0..nrows {
        for b in 0..ncols {
            cross += max_strategy[a] * min_strategy[b] * q[a * ncols + b];
        }
    }
    if (cross - v_max).abs() > RESIDUAL_TOL {
        return Err(Error::LpNumeric(format!(
            "equilibrium payoff {cross} disagrees with LP value {v_max}"
        )));
    }
    Ok(MatrixGameSolution { value: v_max, max_strategy, min_strategy })
}

/// Coarse correlated equilibrium of the bimatrix pair (q_up, -q_lo), both
/// row-major `nrows x ncols`: a joint distribution pi with
///   sum pi . q_up >= max_{a*} sum_{a,b} pi(a,b) q_up(a*,b) - 1e-8,
///   sum pi . q_lo <= min_{b*} sum_{a,b} pi(a,b) q_lo(a,b*) + 1e-8.
///
/// Among feasible points, maximizes sum pi . (q_up - q_lo); ties broken
/// deterministically by the lexicographically smallest vertex of the
/// optimal face (pi_0 minimized first, then pi_1, ...).
pub fn cce_solve(
    q_up: &[f64],
    q_lo: &[f64],
    nrows: usize,
    ncols: usize,
) -> Result<JointDistribution> {
    let n = nrows * ncols;
    if q_up.len() != n || q_lo.len() != n || n == 0 {
        return Err(Error::Contract("cce payoff shape mismatch".into()));
    }
    if q_up.iter().chain(q_lo).any(|v| !v.is_finite()) {
        return Err(Error::Contract("cce payoff entry not finite".into()));
    }
    if n == 1 {
        return Ok(JointDistribution::from_probs(1, 1, vec![1.0]));
    }

    let gap: Vec<f64> = q_up.iter().zip(q_lo).map(|(u, l)| u - l).collect();
    let mut lp = DenseLp::maximize(gap);
    // Max player cannot gain by deviating to any fixed a*:
    // sum_{a,b} pi(a,b) (q_up(a*,b) - q_up(a,b)) <= 0.
    for astar in 0..nrows {
        let mut row = vec![0.0; n];
        for a in 0..nrows {
            for b in 0..ncols {
                row[a * ncols + b] = q_up[astar * ncols + b] - q_up[a * ncols + b];
            }
        }
        lp.add_le(row, 0.0);
    }
    // Min player cannot lower q_lo by deviating to any fixed b*:
    // sum_{a,b} pi(a,b) (q_lo(a,b) - q_lo(a,b*)) <= 0.
    for bstar in 0..ncols {
        let mut row = vec![0.0; n];
        for a in 0..nrows {
            for b in 0..ncols {
                row[a * ncols + b] = q_lo[a * ncols + b] - q_lo[a * ncols + bstar];
            }
        }
        lp.add_le(row, 0.0);
    }
    lp.add_eq(vec![1.0; n], 1.0);

    let res = simplex_solve_lex(&lp, n)?;
    if res.status != LpStatus::Optimal {
        return Err(Error::CceInfeasible(format!(
            "cce LP status {:?} on a problem that always has an equilibrium",
            res.status
        )));
    }
    let probs = clean_simplex_point(&res.x);
    let dist = JointDistribution::from_probs(nrows, ncols, probs);
    debug_assert!(dist.is_valid());
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_box() {
        let mut lp = DenseLp::maximize(vec![1.0]);
        lp.add_le(vec![1.0], 3.0);
        let res = simplex_solve(&lp).unwrap();
        assert_eq!(res.status, LpStatus::Optimal);
        assert!((res.x[0] - 3.0).abs() <= 1e-12);
    }

    #[test]
    fn simplex_face() {
        let mut lp = DenseLp::maximize(vec![1.0, 1.0]);
        lp.add_le(vec![1.0, 1.0], 1.0);
        let res = simplex_solve(&lp).unwrap();
        assert_eq!(res.status, LpStatus::Optimal);
        assert!((res.objective - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = DenseLp::maximize(vec![1.0]);
        lp.add_le(vec![1.0], 1.0);
        lp.add_le(vec![-1.0], -2.0);
        assert_eq!(simplex_solve(&lp).unwrap().status, LpStatus::Infeasible);

        let lp = DenseLp::maximize(vec![1.0]);
        assert_eq!(simplex_solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn lower_bounds_shift() {
        let mut lp = DenseLp::maximize(vec![-1.0, -1.0]);
        lp.add_le(vec![1.0, 1.0], 10.0);
        lp.lower_bounds = vec![2.0, 3.0];
        let res = simplex_solve(&lp).unwrap();
        assert_eq!(res.status, LpStatus::Optimal);
        assert_eq!(res.x, vec![2.0, 3.0]);
    }

    #[test]
    fn lex_refinement_takes_the_smallest_vertex() {
        // Maximize x0 + x1 on the triangle x0 + x1 <= 1: the whole edge is
        // optimal; the lex-min vertex is (0, 1).
        let mut lp = DenseLp::maximize(vec![1.0, 1.0]);
        lp.add_le(vec![1.0, 1.0], 1.0);
        let res = simplex_solve_lex(&lp, 2).unwrap();
        assert_eq!(res.status, LpStatus::Optimal);
        assert!(res.x[0].abs() <= 1e-12, "x = {:?}", res.x);
        assert!((res.x[1] - 1.0).abs() <= 1e-12);
        assert!((res.objective - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn lex_refinement_keeps_the_objective_pinned() {
        // Unique optimum at (0, 2): refinement must not trade objective for
        // smaller coordinates.
        let mut lp = DenseLp::maximize(vec![1.0, 2.0]);
        lp.add_le(vec![1.0, 1.0], 2.0);
        lp.add_le(vec![1.0, 0.0], 1.0);
        let res = simplex_solve_lex(&lp, 2).unwrap();
        assert!((res.objective - 4.0).abs() <= 1e-12);
        assert!(res.x[0].abs() <= 1e-12);
        assert!((res.x[1] - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn matching_pennies_value() {
        let sol = matrix_game_solve(&[1.0, 0.0, 0.0, 1.0], 2, 2).unwrap();
        assert!((sol.value - 0.5).abs() <= 1e-9);
        assert!((sol.max_strategy[0] - 0.5).abs() <= 1e-9);
        assert!((sol.min_strategy[0] - 0.5).abs() <= 1e-9);
    }

    #[test]
    fn degenerate_one_by_one() {
        let sol = matrix_game_solve(&[0.3], 1, 1).unwrap();
        assert!((sol.value - 0.3).abs() <= 1e-12);
        assert_eq!(sol.max_strategy, vec![1.0]);
        assert_eq!(sol.min_strategy, vec![1.0]);
    }

    #[test]
    fn negative_entries_shift_cleanly() {
        // Matching pennies stretched to [-1, 1]: value 0.
        let sol = matrix_game_solve(&[1.0, -1.0, -1.0, 1.0], 2, 2).unwrap();
        assert!(sol.value.abs() <= 1e-9);
    }

    #[test]
    fn cce_single_action() {
        let dist = cce_solve(&[0.7], &[0.2], 1, 1).unwrap();
        assert_eq!(dist.probs, vec![1.0]);
    }

    #[test]
    fn cce_matching_pennies_is_uniform() {
        let q = [1.0, 0.0, 0.0, 1.0];
        let dist = cce_solve(&q, &q, 2, 2).unwrap();
        for &p in &dist.probs {
            assert!((p - 0.25).abs() <= 1e-8, "probs {:?}", dist.probs);
        }
    }

    #[test]
    fn pivot_sequences_are_deterministic() {
        let mut lp = DenseLp::maximize(vec![3.0, 2.0, 4.0]);
        lp.add_le(vec![1.0, 1.0, 2.0], 4.0);
        lp.add_le(vec![2.0, 0.0, 3.0], 5.0);
        lp.add_le(vec![2.0, 1.0, 3.0], 7.0);
        lp.add_eq(vec![0.0, 1.0, 1.0], 1.0);
        let mut t1 = Vec::new();
        let mut t2 = Vec::new();
        let r1 = simplex_solve_traced(&lp, &mut t1).unwrap();
        let r2 = simplex_solve_traced(&lp, &mut t2).unwrap();
        assert_eq!(t1, t2);
        assert!(!t1.is_empty());
        assert_eq!(r1.x, r2.x);
        assert_eq!(r1.pivots, r2.pivots);
    }
}
