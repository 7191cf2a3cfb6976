use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use clocksync_core::agents::{
    run_scenario, summarize, Aggregate, MetricsSeries, Protocol, Scenario, CSV_HEADER,
};
use clocksync_core::collectives::{
    broadcast_schedule_recursive_doubling, gather_schedule_recursive_doubling,
    recursive_doubled_shift_copy, ring_shift_copy_all, run_sync, sequential_collection_schedule,
    sequential_distribution_schedule, CopyAll, MaxByKey, SyncConfig, SyncMethod, SyncReport,
};
use clocksync_core::netsim::{CommSchedule, Round};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::manifest::{OutputDir, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    Broadcast,
    Gather,
    /// Sequential collection then distribution by node 0.
    Leader,
    RingShiftCopy,
    RdShiftCopy,
    RdShiftMax,
}

impl Pattern {
    pub fn name(self) -> &'static str {
        match self {
            Pattern::Broadcast => "broadcast",
            Pattern::Gather => "gather",
            Pattern::Leader => "leader",
            Pattern::RingShiftCopy => "ring-shift-copy",
            Pattern::RdShiftCopy => "rd-shift-copy",
            Pattern::RdShiftMax => "rd-shift-max",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CollectiveSummary {
    pub pattern: Pattern,
    pub nodes: usize,
    pub rounds: usize,
    pub steps: usize,
    pub valid: bool,
}

impl CollectiveSummary {
    pub const CSV_HEADER: &'static str = "pattern,N,rounds,steps,valid";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.pattern.name(),
            self.nodes,
            self.rounds,
            self.steps,
            self.valid
        )
    }
}

/// Builds (and for the shift patterns, runs) one collective on `n` nodes.
pub fn collective(pattern: Pattern, n: usize) -> Result<(CollectiveSummary, CommSchedule)> {
    if n == 0 {
        bail!("a collective needs at least one node");
    }
    let ids: Vec<usize> = (0..n).collect();
    let (schedule, steps) = match pattern {
        Pattern::Broadcast => {
            let s = broadcast_schedule_recursive_doubling(n);
            let steps = s.len();
            (s, steps)
        }
        Pattern::Gather => {
            let s = gather_schedule_recursive_doubling(n);
            let steps = s.len();
            (s, steps)
        }
        Pattern::Leader => {
            let mut rounds: Vec<Round> = sequential_collection_schedule(n).rounds;
            rounds.extend(sequential_distribution_schedule(n).rounds);
            let s = CommSchedule::new(rounds);
            let steps = s.len();
            (s, steps)
        }
        Pattern::RingShiftCopy => {
            let out = ring_shift_copy_all(&ids);
            check(out.states.iter().all(|s| s.len() == n), pattern)?;
            (out.schedule, out.steps)
        }
        Pattern::RdShiftCopy => {
            let out = recursive_doubled_shift_copy(
                CopyAll::<usize>::initial(&ids),
                &mut CopyAll::default(),
            );
            check(out.states.iter().all(|s| s.len() == n), pattern)?;
            (out.schedule, out.steps)
        }
        Pattern::RdShiftMax => {
            // keys scrambled so the winner is not simply the last node
            let pairs = ids.iter().map(|&i| ((i * 7919) % n.max(1), i)).collect();
            let out =
                recursive_doubled_shift_copy(MaxByKey::initial(pairs), &mut MaxByKey::default());
            let best = (0..n).max_by_key(|&i| ((i * 7919) % n, std::cmp::Reverse(i)));
            check(out.states.iter().all(|s| Some(s.origin) == best), pattern)?;
            (out.schedule, out.steps)
        }
    };
    let summary = CollectiveSummary {
        pattern,
        nodes: n,
        rounds: schedule.len(),
        steps,
        valid: schedule.validate(n).is_ok(),
    };
    Ok((summary, schedule))
}

fn check(ok: bool, pattern: Pattern) -> Result<()> {
    if ok {
        Ok(())
    } else {
        bail!("{} produced an inconsistent result", pattern.name())
    }
}

/// Writes the schedule table and summary for each pattern.
pub fn run_collective(
    patterns: &[Pattern],
    n: usize,
    out: &Path,
) -> Result<(Vec<CollectiveSummary>, RunManifest)> {
    let mut dir = OutputDir::create(out)?;
    let mut summary = format!("{}\n", CollectiveSummary::CSV_HEADER);
    let mut all = Vec::new();
    for &p in patterns {
        let (s, schedule) = collective(p, n)?;
        dir.write(
            &format!("schedule_{}_n{}.csv", p.name(), n),
            schedule.to_csv_string().as_bytes(),
        )?;
        summary.push_str(&s.csv_row());
        summary.push('\n');
        all.push(s);
    }
    dir.write("summary.csv", summary.as_bytes())?;
    let manifest = dir.finish("collective", None, &[])?;
    Ok((all, manifest))
}

pub const SYNC_HEADER: &str =
    "method,nodes,seed,comm_rounds,pre_max_offset_ns,post_max_offset_ns,consensus_offset_ns,max_abs_residual_ns";

fn sync_row(r: &SyncReport, seed: u64) -> String {
    let max_res = r
        .residuals
        .iter()
        .map(|x| x.abs())
        .max()
        .unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{}",
        r.method,
        r.node_count,
        seed,
        r.comm_rounds,
        r.pre_max_pairwise_offset.0,
        r.post_max_pairwise_offset.0,
        r.consensus_offset.round().0,
        max_res.0
    )
}

/// One synchronisation per (method, seed), run in parallel.
pub fn run_sync_batch(
    base: &SyncConfig,
    methods: &[SyncMethod],
    seeds: &[u64],
    out: &Path,
    config_path: Option<&Path>,
) -> Result<(Vec<(u64, SyncReport)>, RunManifest)> {
    let jobs: Vec<(SyncMethod, u64)> = methods
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(method, seed)| {
            let cfg = SyncConfig {
                method,
                seed,
                ..base.clone()
            };
            run_sync(&cfg)
                .map(|r| (seed, r))
                .with_context(|| format!("{method} sync with seed {seed}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = format!("{SYNC_HEADER}\n");
    let mut residuals = String::from("method,nodes,seed,node,residual_ns\n");
    for (seed, r) in &reports {
        table.push_str(&sync_row(r, *seed));
        table.push('\n');
        for (i, x) in r.residuals.iter().enumerate() {
            writeln!(
                residuals,
                "{},{},{},{},{}",
                r.method, r.node_count, seed, i, x.0
            )?;
        }
    }
    let mut dir = OutputDir::create(out)?;
    dir.write("sync.csv", table.as_bytes())?;
    dir.write("sync_residuals.csv", residuals.as_bytes())?;
    let manifest = dir.finish("sync", config_path, seeds)?;
    Ok((reports, manifest))
}

pub struct ScenarioRun {
    pub series: Vec<MetricsSeries>,
    pub aggregates: Vec<Aggregate>,
    pub manifest: RunManifest,
}

/// Every (scenario, protocol, seed) combination, run in parallel. Each run
/// gets its own CSV; `metrics.csv` concatenates them in a fixed order.
pub fn run_scenarios(
    config: &ExperimentConfig,
    scenarios: &[Scenario],
    protocols: &[Protocol],
    seeds: &[u64],
    out: &Path,
    config_path: Option<&Path>,
) -> Result<ScenarioRun> {
    let mut jobs = Vec::new();
    for &s in scenarios {
        for &p in protocols {
            for &seed in seeds {
                jobs.push((s, p, seed));
            }
        }
    }
    let series = jobs
        .par_iter()
        .map(|&(s, p, seed)| {
            run_scenario(&config.scenarios[&s], &s.to_string(), p, seed)
                .with_context(|| format!("scenario {s}, {p}, seed {seed}"))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut dir = OutputDir::create(out)?;
    let mut merged = Vec::new();
    writeln!(merged, "{CSV_HEADER}")?;
    for s in &series {
        let mut one = Vec::new();
        s.write_csv(&mut one)?;
        dir.write(
            &format!("runs/{}_{}_seed{}.csv", s.scenario, s.protocol, s.seed),
            &one,
        )?;
        s.write_rows(&mut merged)?;
    }
    dir.write("metrics.csv", &merged)?;
    let aggregates = summarize(&series);
    let mut agg = format!("{}\n", Aggregate::CSV_HEADER);
    for a in &aggregates {
        agg.push_str(&a.csv_row());
        agg.push('\n');
    }
    dir.write("aggregate.csv", agg.as_bytes())?;
    let manifest = dir.finish("scenario", config_path, seeds)?;
    Ok(ScenarioRun {
        series,
        aggregates,
        manifest,
    })
}
