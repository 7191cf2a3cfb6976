use std::io::{self, Write};

use serde::Serialize;

use super::Protocol;
use crate::timebase::Ticks;

pub const CSV_HEADER: &str = "scenario,protocol,seed,t_seconds,fraction_synced";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricRecord {
    pub t: Ticks,
    pub fraction: f64,
}

/// Fraction of Γ-synchronised clocks after every tick of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSeries {
    pub scenario: String,
    pub protocol: Protocol,
    pub seed: u64,
    pub records: Vec<MetricRecord>,
}

impl MetricsSeries {
    pub fn new(scenario: impl Into<String>, protocol: Protocol, seed: u64) -> Self {
        Self {
            scenario: scenario.into(),
            protocol,
            seed,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, t: Ticks, fraction: f64) {
        debug_assert!((0.0..=1.0).contains(&fraction));
        debug_assert!(self.records.last().is_none_or(|r| r.t < t));
        self.records.push(MetricRecord { t, fraction });
    }

    /// Mean fraction over the final third of the records.
    pub fn steady_state_fraction(&self) -> Option<f64> {
        let n = self.records.len();
        if n == 0 {
            return None;
        }
        let tail = &self.records[n - n.div_ceil(3)..];
        Some(tail.iter().map(|r| r.fraction).sum::<f64>() / tail.len() as f64)
    }

    /// Data rows only.
    pub fn write_rows<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.scenario,
                self.protocol,
                self.seed,
                r.t.as_secs_f64(),
                r.fraction
            )?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        self.write_rows(w)
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Steady-state statistics of one (scenario, protocol) across seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub scenario: String,
    pub protocol: Protocol,
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
}

impl Aggregate {
    pub const CSV_HEADER: &'static str = "scenario,protocol,runs,mean,stddev,min,max";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6}",
            self.scenario, self.protocol, self.runs, self.mean, self.stddev, self.min, self.max
        )
    }
}

/// Groups runs by (scenario, protocol) in first-seen order. Runs without
/// records are skipped.
pub fn summarize(series: &[MetricsSeries]) -> Vec<Aggregate> {
    let mut keys: Vec<(String, Protocol)> = Vec::new();
    for s in series {
        let k = (s.scenario.clone(), s.protocol);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .filter_map(|(scenario, protocol)| {
            let xs: Vec<f64> = series
                .iter()
                .filter(|s| s.scenario == scenario && s.protocol == protocol)
                .filter_map(MetricsSeries::steady_state_fraction)
                .collect();
            if xs.is_empty() {
                return None;
            }
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let stddev = if xs.len() > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            Some(Aggregate {
                scenario,
                protocol,
                runs: xs.len(),
                mean,
                stddev,
                min: xs.iter().copied().fold(f64::INFINITY, f64::min),
                max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            })
        })
        .collect()
}
