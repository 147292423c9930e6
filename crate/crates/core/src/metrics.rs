//! Per-step training metrics and their JSON-lines / CSV persistence.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One row of the metrics log.
///
/// Row 0 describes the initial policy and carries only `learning_rate` and
/// `true_accuracy`. Row `s >= 1` describes the `s`-th update: training fields
/// summarize the rollouts it consumed, `true_accuracy` (when present) is
/// measured on the policy after the update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub learning_rate: f64,
    pub true_accuracy: Option<f64>,
    pub mean_self_reward: Option<f64>,
    pub mean_policy_entropy: Option<f64>,
    pub filtered_fraction: Option<f64>,
    pub filtered_fraction_current: Option<f64>,
    pub filtered_fraction_momentum: Option<f64>,
    pub degenerate_group_fraction: Option<f64>,
    pub mean_kl: Option<f64>,
    pub objective_value: Option<f64>,
    /// Set when no rollout survived to be scored and the update was skipped.
    #[serde(default)]
    pub skipped: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<StepMetrics>,
}

/// Result of leniently parsing a JSON-lines log.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedLog {
    pub log: MetricsLog,
    /// 1-based line numbers that failed to parse.
    pub bad_lines: Vec<usize>,
}

impl MetricsLog {
    pub fn push(&mut self, row: StepMetrics) {
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&StepMetrics> {
        self.rows.last()
    }

    pub fn at_step(&self, step: usize) -> Option<&StepMetrics> {
        self.rows.iter().find(|r| r.step == step)
    }

    /// `(step, value)` pairs where `field` is present.
    pub fn series(&self, field: impl Fn(&StepMetrics) -> Option<f64>) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter_map(|r| field(r).map(|v| (r.step, v)))
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for row in &self.rows {
            write_jsonl_row(row, &mut out)?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for row in &self.rows {
            writer.serialize(row).map_err(std::io::Error::other)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<ParsedLog> {
        let mut parsed = ParsedLog::default();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<StepMetrics>(&line) {
                Ok(row) => parsed.log.push(row),
                Err(_) => parsed.bad_lines.push(i + 1),
            }
        }
        Ok(parsed)
    }
}

pub fn write_jsonl_row<W: Write>(row: &StepMetrics, mut out: W) -> Result<()> {
    serde_json::to_writer(&mut out, row)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_log() -> MetricsLog {
        MetricsLog {
            rows: vec![
                StepMetrics {
                    step: 0,
                    learning_rate: 0.0,
                    true_accuracy: Some(0.25),
                    ..StepMetrics::default()
                },
                StepMetrics {
                    step: 1,
                    learning_rate: 0.001,
                    mean_self_reward: Some(0.5),
                    mean_policy_entropy: Some(2.01),
                    filtered_fraction: Some(0.03125),
                    mean_kl: Some(0.0),
                    objective_value: Some(-0.1),
                    ..StepMetrics::default()
                },
            ],
        }
    }

    #[test]
    fn jsonl_round_trip_and_lenient_parse() {
        let log = sample_log();
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().next().unwrap().contains("\"mean_self_reward\":null"));

        let corrupted = format!("{}{{not json\n", text);
        let parsed = MetricsLog::read_jsonl(corrupted.as_bytes()).unwrap();
        assert_eq!(parsed.log, log);
        assert_eq!(parsed.bad_lines, vec![3]);
    }

    #[test]
    fn csv_has_header_and_blank_missing_values() {
        let mut buf = Vec::new();
        sample_log().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("step,learning_rate,true_accuracy"));
        assert!(lines.next().unwrap().starts_with("0,0.0,0.25,,"));
    }

    #[test]
    fn series_skips_missing_values() {
        let log = sample_log();
        assert_eq!(log.series(|r| r.true_accuracy), vec![(0, 0.25)]);
        assert_eq!(log.series(|r| r.mean_policy_entropy), vec![(1, 2.01)]);
    }
}
