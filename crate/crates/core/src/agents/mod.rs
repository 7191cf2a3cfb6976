//! Mobile clocks roaming a plane with a global clock Γ, disruption areas and
//! an optional fence, synchronised either by Γ modes plus ad hoc shift-max
//! groups or by word of mouth.

mod config;
mod geometry;
mod metrics;
mod protocol;
mod world;

use serde::{Deserialize, Serialize};

use crate::timebase::{SimulatedClock, Ticks};

pub use config::{ConfigError, LagModel, Protocol, Scenario, ScenarioConfig};
pub use geometry::{Circle, Point};
pub use metrics::{summarize, Aggregate, MetricRecord, MetricsSeries, CSV_HEADER};
pub use protocol::{
    baseline_contact_sync, form_adhoc_groups, fraction_synchronized, gamma_sync,
    in_gamma_aggressive, in_gamma_passive, out_gamma_sync, update_mode, word_of_mouth_chain,
    GroupLinks, GroupSyncOutcome,
};
pub use world::{run_scenario, World, WorldError, WorldStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Passive,
    Aggressive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ZoneState {
    InGamma,
    OutGamma,
}

/// Where a word-of-mouth time came from: the true time of the Γ sync at the
/// head of the chain and how many people passed it on since.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Lineage {
    pub origin: Ticks,
    pub hops: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentClock {
    pub id: usize,
    pub clock: SimulatedClock,
    /// ΓSR: true time of the freshest Γ sync this clock descends from.
    pub gamma_sync_record: Option<Ticks>,
    /// CSR: local time of the last peer sync. Recorded only.
    pub clock_sync_record: Option<Ticks>,
    pub position: Point,
    pub previous_position: Point,
    pub velocity: Point,
    pub waypoint: Point,
    pub mode: Mode,
    pub state: ZoneState,
    pub ranging_capable: bool,
    pub authorized: bool,
    pub broadcast_radius: f64,
    /// Inside a disruption area this tick.
    pub disrupted: bool,
    pub lineage: Option<Lineage>,
    /// Direct syncs with Γ so far.
    pub gamma_syncs: usize,
    /// Syncs that came from other agents so far.
    pub peer_syncs: usize,
}

impl AgentClock {
    pub fn new(id: usize, clock: SimulatedClock, position: Point) -> Self {
        Self {
            id,
            clock,
            gamma_sync_record: None,
            clock_sync_record: None,
            position,
            previous_position: position,
            velocity: Point::default(),
            waypoint: position,
            mode: Mode::Aggressive,
            state: ZoneState::OutGamma,
            ranging_capable: false,
            authorized: true,
            broadcast_radius: 8.0,
            disrupted: false,
            lineage: None,
            gamma_syncs: 0,
            peer_syncs: 0,
        }
    }

    /// `T_i - G`.
    pub fn offset(&self, g: Ticks) -> Ticks {
        self.clock.read() - g
    }

    pub fn is_synchronized(&self, g: Ticks, threshold: Ticks) -> bool {
        self.offset(g).abs() <= threshold
    }
}
