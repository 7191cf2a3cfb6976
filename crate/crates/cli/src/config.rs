//! TOML experiment files.
//!
//! ```toml
//! [common]            # applied to every scenario
//! agent_count = 80
//!
//! [scenario.B]        # applied to scenario B only, after [common]
//! authorized_fraction = 0.2
//! gamma = { x = 70.0, y = 30.0, radius = 15.0 }
//!
//! [sync]              # single-network runs
//! nodes = 16
//! method = "leader-recursive"
//! ```
//!
//! Any field of a scenario or sync config may appear; unknown keys are
//! rejected with their line.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use clocksync_core::agents::{Scenario, ScenarioConfig};
use clocksync_core::collectives::SyncConfig;
use serde::Deserialize;
use toml::{Table, Value};

/// Typed view used only to get precise diagnostics out of the parser.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct Strict {
    common: Option<ScenarioConfig>,
    #[serde(default)]
    scenario: BTreeMap<Scenario, ScenarioConfig>,
    sync: Option<SyncConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenarios: BTreeMap<Scenario, ScenarioConfig>,
    pub sync: SyncConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenarios: Scenario::ALL
                .into_iter()
                .map(|s| (s, ScenarioConfig::scenario(s)))
                .collect(),
            sync: SyncConfig::default(),
        }
    }
}

fn overlay(base: &mut Table, top: &Table) {
    for (k, v) in top {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => overlay(b, t),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn section<'a>(root: &'a Table, path: &[&str]) -> Option<&'a Table> {
    let mut t = root;
    for key in path {
        t = t.get(*key)?.as_table()?;
    }
    Some(t)
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str::<Strict>(text).map_err(|e| anyhow!("{origin}: {e}"))?;
        let root: Table = toml::from_str(text).map_err(|e| anyhow!("{origin}: {e}"))?;
        let empty = Table::new();
        let common = section(&root, &["common"]).unwrap_or(&empty);
        let mut scenarios = BTreeMap::new();
        for s in Scenario::ALL {
            let mut layered = match Value::try_from(ScenarioConfig::scenario(s))? {
                Value::Table(t) => t,
                _ => unreachable!("a struct serialises to a table"),
            };
            overlay(&mut layered, common);
            if let Some(own) = section(&root, &["scenario", &s.to_string()]) {
                overlay(&mut layered, own);
            }
            let cfg: ScenarioConfig = Value::Table(layered)
                .try_into()
                .map_err(|e| anyhow!("{origin}: [scenario.{s}]: {e}"))?;
            cfg.validate()
                .map_err(|e| anyhow!("{origin}: [scenario.{s}]: {e}"))?;
            scenarios.insert(s, cfg);
        }
        let sync = match root.get("sync") {
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|e| anyhow!("{origin}: [sync]: {e}"))?,
            None => SyncConfig::default(),
        };
        Ok(Self { scenarios, sync })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

/// A bare integer `n` means seeds `0..n`; anything with commas is a list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    if s.contains(',') {
        let seeds = s
            .split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(|x| x.parse::<u64>().with_context(|| format!("bad seed `{x}`")))
            .collect::<Result<Vec<_>>>()?;
        anyhow::ensure!(!seeds.is_empty(), "seed list is empty");
        Ok(seeds)
    } else {
        let n: u64 = s
            .parse()
            .with_context(|| format!("`{s}` is neither a seed count nor a comma-separated list"))?;
        anyhow::ensure!(n > 0, "seed count must be positive");
        Ok((0..n).collect())
    }
}
