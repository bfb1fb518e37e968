//! Exponentially growing stage schedule.
//!
//! Visits to a fixed (h, s, a, b) cell are grouped into stages whose lengths
//! grow geometrically: e_1 = H and e_{i+1} = floor((1 + 1/H) e_i). Estimates
//! update only when a cell's visit count reaches a stage end, i.e. a partial
//! sum L_j = e_1 + ... + e_j.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageSchedule {
    horizon: u64,
    /// Stage lengths e_1, e_2, ...
    lens: Vec<u64>,
    /// Cumulative ends L_1, L_2, ... (strictly increasing).
    ends: Vec<u64>,
}

impl StageSchedule {
    pub fn new(horizon: usize) -> Self {
        assert!(horizon >= 1, "horizon must be at least 1");
        let h = horizon as u64;
        StageSchedule {
            horizon: h,
            lens: vec![h],
            ends: vec![h],
        }
    }

    fn grow(&mut self) {
        let e = *self.lens.last().unwrap();
        // floor((1 + 1/H) e) computed in integers.
        let next = e * (self.horizon + 1) / self.horizon;
        self.lens.push(next);
        self.ends.push(self.ends.last().unwrap() + next);
    }

    /// Extends the schedule so every query up to visit count `n` is covered.
    pub fn ensure(&mut self, n: u64) {
        while *self.ends.last().unwrap() < n {
            self.grow();
        }
    }

    /// Exact membership test: is `n` a stage end? Lazily extends.
    pub fn is_stage_end(&mut self, n: u64) -> bool {
        self.ensure(n);
        self.ends.binary_search(&n).is_ok()
    }

    /// Number of stages fully completed after `n` visits. The schedule must
    /// already cover `n` (call [`ensure`](Self::ensure) first).
    pub fn completed_stages(&self, n: u64) -> usize {
        debug_assert!(*self.ends.last().unwrap() >= n);
        self.ends.partition_point(|&end| end <= n)
    }

    /// Cumulative end of stage `j` (0-based).
    pub fn end(&self, j: usize) -> u64 {
        self.ends[j]
    }

    /// Length of stage `j` (0-based).
    pub fn len_of(&self, j: usize) -> u64 {
        self.lens[j]
    }

    /// Half-open visit-position range (start, end] covered by stage `j`,
    /// as 1-based visit counts.
    pub fn stage_span(&self, j: usize) -> (u64, u64) {
        let start = if j == 0 { 0 } else { self.ends[j - 1] };
        (start, self.ends[j])
    }

    pub fn known_stages(&self) -> usize {
        self.ends.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_recurrence() {
        for h in 1..=8usize {
            let mut sched = StageSchedule::new(h);
            sched.ensure(100_000);
            // Rebuild independently with floats and compare.
            let mut e = h as f64;
            let mut cum = 0u64;
            let mut ends = Vec::new();
            while cum < 100_000 {
                cum += e as u64;
                ends.push(cum);
                e = ((1.0 + 1.0 / h as f64) * e).floor();
            }
            for (j, &end) in ends.iter().enumerate() {
                assert_eq!(sched.end(j), end, "h={h} stage {j}");
            }
        }
    }

    #[test]
    fn membership_is_exact() {
        let mut sched = StageSchedule::new(3);
        // Ends for H=3 start 3, 7, 12, 18, 26, 36, ...
        for n in 1..200u64 {
            let expected = [3, 7, 12, 18, 26, 36, 49, 66, 88, 117, 155].contains(&n);
            assert_eq!(sched.is_stage_end(n), expected, "n={n}");
        }
    }

    #[test]
    fn growth_increment_bounded() {
        for h in 1..=10usize {
            let mut sched = StageSchedule::new(h);
            sched.ensure(1_000_000);
            for j in 1..sched.known_stages() {
                let prev = sched.len_of(j - 1);
                let next = sched.len_of(j);
                assert!(next >= prev);
                assert!(next - prev <= prev / h as u64 + 1);
            }
        }
    }

    #[test]
    fn completed_stage_counts() {
        let mut sched = StageSchedule::new(3);
        sched.ensure(40);
        assert_eq!(sched.completed_stages(2), 0);
        assert_eq!(sched.completed_stages(3), 1);
        assert_eq!(sched.completed_stages(6), 1);
        assert_eq!(sched.completed_stages(7), 2);
        assert_eq!(sched.completed_stages(36), 6);
        assert_eq!(sched.stage_span(1), (3, 7));
    }
}
