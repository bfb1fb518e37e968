//! Per-episode training diagnostics and the episode log that certified
//! policies replay.
//!
//! File formats: metrics and step logs are plain CSV, policy-change events
//! are JSON lines. Floats print in shortest round-trip form, so written
//! files reload bit-exactly and golden files diff cleanly across
//! platforms.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Start-of-episode diagnostics for one episode `k` (1-based).
///
/// `gap` is V̄₁(s₁) − V̲₁(s₁) before the episode's updates;
/// `sandwich_violations` counts (h, s) cells where the exact value escapes
/// [V̲, V̄] by more than 1e-9 (0 when no exact solution was supplied);
/// `largegap[i]` counts steps h of this episode whose visited-state gap
/// was ≥ the i-th epsilon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub k: u64,
    pub vbar1: f64,
    pub vlow1: f64,
    pub gap: f64,
    pub sandwich_violations: u64,
    pub largegap: Vec<u64>,
}

/// Append-only per-episode metrics, indexed by k.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsStream {
    pub epsilon_grid: Vec<f64>,
    pub exact_provided: bool,
    /// Episode spacing between retained rows: 1 for freshly recorded
    /// streams, possibly larger after reading a subsampled CSV.
    pub stride: u64,
    /// T = (episodes played) x H.
    pub total_steps: u64,
    pub rows: Vec<MetricsRow>,
}

impl MetricsStream {
    pub fn new(epsilon_grid: Vec<f64>, exact_provided: bool) -> Self {
        MetricsStream { epsilon_grid, exact_provided, stride: 1, total_steps: 0, rows: Vec::new() }
    }

    pub fn push(&mut self, row: MetricsRow, horizon: usize) {
        debug_assert_eq!(row.largegap.len(), self.epsilon_grid.len());
        debug_assert!(self.rows.last().map_or(row.k == 1, |prev| row.k == prev.k + self.stride));
        self.rows.push(row);
        self.total_steps += horizon as u64;
    }

    pub fn episodes(&self) -> u64 {
        self.rows.last().map_or(0, |row| row.k)
    }

    /// Truncates to the first `k` episodes (only meaningful at stride 1).
    pub fn prefix(&self, k: u64, horizon: usize) -> MetricsStream {
        let rows: Vec<MetricsRow> =
            self.rows.iter().filter(|row| row.k <= k).cloned().collect();
        MetricsStream {
            epsilon_grid: self.epsilon_grid.clone(),
            exact_provided: self.exact_provided,
            stride: self.stride,
            total_steps: rows.len() as u64 * horizon as u64,
            rows,
        }
    }

    pub fn csv_header(&self) -> String {
        let mut header = String::from("k,vbar1,vlow1,gap,sandwich_violations");
        for eps in &self.epsilon_grid {
            header.push_str(&format!(",largegap_eps_{eps}"));
        }
        header
    }

    /// Writes rows with k ≡ 1 (mod `stride`). Stride 1 keeps everything.
    pub fn write_csv<W: Write>(&self, mut w: W, stride: u64) -> Result<()> {
        if stride == 0 {
            return Err(Error::Metrics("stride must be positive".into()));
        }
        writeln!(w, "{}", self.csv_header())?;
        for row in &self.rows {
            if (row.k - 1) % stride != 0 {
                continue;
            }
            write!(
                w,
                "{},{},{},{},{}",
                row.k, row.vbar1, row.vlow1, row.gap, row.sandwich_violations
            )?;
            for count in &row.largegap {
                write!(w, ",{count}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads a metrics CSV, recovering the epsilon grid from the header
    /// and the stride from row spacing. `exact_provided` is not recorded
    /// in the file (consult the run manifest) and reads back as false.
    pub fn read_csv<R: BufRead>(r: R, horizon: usize) -> Result<MetricsStream> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Metrics("empty metrics file".into()))??;
        let mut cols = header.split(',');
        for expected in ["k", "vbar1", "vlow1", "gap", "sandwich_violations"] {
            if cols.next() != Some(expected) {
                return Err(Error::Metrics(format!("bad metrics header: {header}")));
            }
        }
        let mut epsilon_grid = Vec::new();
        for col in cols {
            let eps = col
                .strip_prefix("largegap_eps_")
                .and_then(|tail| tail.parse::<f64>().ok())
                .ok_or_else(|| Error::Metrics(format!("bad metrics column: {col}")))?;
            epsilon_grid.push(eps);
        }
        let mut rows: Vec<MetricsRow> = Vec::new();
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 + epsilon_grid.len() {
                return Err(Error::Metrics(format!("bad metrics row: {line}")));
            }
            let parse_err = || Error::Metrics(format!("bad metrics row: {line}"));
            let row = MetricsRow {
                k: fields[0].parse().map_err(|_| parse_err())?,
                vbar1: fields[1].parse().map_err(|_| parse_err())?,
                vlow1: fields[2].parse().map_err(|_| parse_err())?,
                gap: fields[3].parse().map_err(|_| parse_err())?,
                sandwich_violations: fields[4].parse().map_err(|_| parse_err())?,
                largegap: fields[5..]
                    .iter()
                    .map(|f| f.parse().map_err(|_| parse_err()))
                    .collect::<Result<_>>()?,
            };
            rows.push(row);
        }
        let stride = match rows.as_slice() {
            [first, second, ..] => second.k - first.k,
            _ => 1,
        };
        for pair in rows.windows(2) {
            if pair[1].k != pair[0].k + stride {
                return Err(Error::Metrics("irregular episode spacing".into()));
            }
        }
        Ok(MetricsStream {
            epsilon_grid,
            exact_provided: false,
            stride,
            total_steps: rows.len() as u64 * horizon as u64,
            rows,
        })
    }
}

/// One environment step as logged: episode `k` (1-based), step `h`
/// (0-based), visited state and joint action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: u64,
    pub h: usize,
    pub s: usize,
    pub a: usize,
    pub b: usize,
}

/// A joint-policy change at (h, s): `probs` is the new A x B policy in
/// force from episode `effective_from` on, and (v_up, v_lo) are the
/// V̄_h(s), V̲_h(s) written by the same stage update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvent {
    pub h: usize,
    pub s: usize,
    pub effective_from: u64,
    pub probs: Vec<f64>,
    pub v_up: f64,
    pub v_lo: f64,
}

/// Everything certified-policy extraction needs to replay a training run:
/// the visited (h,s,a,b) per step and every joint-policy change.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions_max: usize,
    pub num_actions_min: usize,
    pub episodes: u64,
    pub steps: Vec<StepRecord>,
    pub policy_events: Vec<PolicyEvent>,
}

impl EpisodeLog {
    pub fn new(dims: (usize, usize, usize, usize)) -> Self {
        EpisodeLog {
            horizon: dims.0,
            num_states: dims.1,
            num_actions_max: dims.2,
            num_actions_min: dims.3,
            episodes: 0,
            steps: Vec::new(),
            policy_events: Vec::new(),
        }
    }

    /// The log as it stood after episode `k`: later steps and policies
    /// that only took effect afterwards are dropped.
    pub fn prefix(&self, k: u64) -> EpisodeLog {
        EpisodeLog {
            horizon: self.horizon,
            num_states: self.num_states,
            num_actions_max: self.num_actions_max,
            num_actions_min: self.num_actions_min,
            episodes: k.min(self.episodes),
            steps: self.steps.iter().filter(|step| step.k <= k).copied().collect(),
            policy_events: self
                .policy_events
                .iter()
                .filter(|event| event.effective_from <= k)
                .cloned()
                .collect(),
        }
    }

    pub fn write_steps_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,h,s,a,b")?;
        for step in &self.steps {
            writeln!(w, "{},{},{},{},{}", step.k, step.h, step.s, step.a, step.b)?;
        }
        Ok(())
    }

    pub fn read_steps_csv<R: BufRead>(r: R) -> Result<Vec<StepRecord>> {
        let mut lines = r.lines();
        match lines.next() {
            Some(Ok(header)) if header == "k,h,s,a,b" => {}
            _ => return Err(Error::MalformedLog("bad steps header".into())),
        }
        let mut steps = Vec::new();
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',').map(str::parse::<u64>);
            let mut next = || -> Result<u64> {
                fields
                    .next()
                    .and_then(|f| f.ok())
                    .ok_or_else(|| Error::MalformedLog(format!("bad step row: {line}")))
            };
            steps.push(StepRecord {
                k: next()?,
                h: next()? as usize,
                s: next()? as usize,
                a: next()? as usize,
                b: next()? as usize,
            });
        }
        Ok(steps)
    }

    pub fn write_events_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for event in &self.policy_events {
            serde_json::to_writer(&mut w, event)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_events_jsonl<R: BufRead>(r: R) -> Result<Vec<PolicyEvent>> {
        let mut events = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            events.push(serde_json::from_str(&line)?);
        }
        Ok(events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_stream() -> MetricsStream {
        let mut stream = MetricsStream::new(vec![0.25, 1.0], true);
        for k in 1..=5u64 {
            stream.push(
                MetricsRow {
                    k,
                    vbar1: 3.0 / k as f64,
                    vlow1: 0.125 * k as f64,
                    gap: 3.0 / k as f64 - 0.125 * k as f64,
                    sandwich_violations: 0,
                    largegap: vec![3, k.min(2)],
                },
                3,
            );
        }
        stream
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let stream = sample_stream();
        let mut buf = Vec::new();
        stream.write_csv(&mut buf, 1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,vbar1,vlow1,gap,sandwich_violations,largegap_eps_0.25,largegap_eps_1\n"));
        let back = MetricsStream::read_csv(text.as_bytes(), 3).unwrap();
        assert_eq!(back.rows, stream.rows);
        assert_eq!(back.epsilon_grid, stream.epsilon_grid);
        assert_eq!(back.stride, 1);
        assert_eq!(back.total_steps, 15);
    }

    #[test]
    fn subsampling_keeps_every_stride_th_row() {
        let stream = sample_stream();
        let mut buf = Vec::new();
        stream.write_csv(&mut buf, 2).unwrap();
        let back = MetricsStream::read_csv(buf.as_slice(), 3).unwrap();
        assert_eq!(back.rows.iter().map(|r| r.k).collect::<Vec<_>>(), vec![1, 3, 5]);
        assert_eq!(back.stride, 2);
    }

    #[test]
    fn prefix_truncates_rows_and_steps() {
        let stream = sample_stream();
        let pre = stream.prefix(2, 3);
        assert_eq!(pre.rows.len(), 2);
        assert_eq!(pre.total_steps, 6);

        let mut log = EpisodeLog::new((2, 1, 2, 2));
        log.episodes = 3;
        for k in 1..=3u64 {
            for h in 0..2 {
                log.steps.push(StepRecord { k, h, s: 0, a: 0, b: 1 });
            }
        }
        log.policy_events.push(PolicyEvent {
            h: 0,
            s: 0,
            effective_from: 2,
            probs: vec![0.25; 4],
            v_up: 2.0,
            v_lo: 0.5,
        });
        log.policy_events.push(PolicyEvent {
            h: 1,
            s: 0,
            effective_from: 3,
            probs: vec![0.25; 4],
            v_up: 1.0,
            v_lo: 0.25,
        });
        let pre = log.prefix(2);
        assert_eq!(pre.episodes, 2);
        assert_eq!(pre.steps.len(), 4);
        assert_eq!(pre.policy_events.len(), 1);
    }

    #[test]
    fn log_files_roundtrip() {
        let mut log = EpisodeLog::new((1, 1, 2, 2));
        log.episodes = 2;
        log.steps.push(StepRecord { k: 1, h: 0, s: 0, a: 1, b: 0 });
        log.steps.push(StepRecord { k: 2, h: 0, s: 0, a: 0, b: 1 });
        log.policy_events.push(PolicyEvent {
            h: 0,
            s: 0,
            effective_from: 2,
            probs: vec![0.5, 0.5, 0.0, 0.0],
            v_up: 0.875,
            v_lo: 0.125,
        });
        let mut steps_buf = Vec::new();
        log.write_steps_csv(&mut steps_buf).unwrap();
        assert_eq!(EpisodeLog::read_steps_csv(steps_buf.as_slice()).unwrap(), log.steps);
        let mut events_buf = Vec::new();
        log.write_events_jsonl(&mut events_buf).unwrap();
        assert_eq!(
            EpisodeLog::read_events_jsonl(events_buf.as_slice()).unwrap(),
            log.policy_events
        );
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(MetricsStream::read_csv("nope\n1,2".as_bytes(), 1).is_err());
        let bad_spacing = "k,vbar1,vlow1,gap,sandwich_violations\n1,0,0,0,0\n2,0,0,0,0\n4,0,0,0,0\n";
        assert!(MetricsStream::read_csv(bad_spacing.as_bytes(), 1).is_err());
        assert!(EpisodeLog::read_steps_csv("k,h,s,a\n".as_bytes()).is_err());
    }
}
