//! Leader averaging, recursive-doubling gather/broadcast and circular
//! shift-copy collectives.

mod leader;
mod schedules;
mod shift;
mod sync;

use thiserror::Error;

pub use leader::{
    distribution_value, leader_average, leader_average_per_peer, leader_average_rtt,
    leader_distribute_values, LeaderCollection, PeerRecord, TickMean,
};
pub use schedules::{
    broadcast_schedule_recursive_doubling, ceil_log2, circular_shift_steps,
    gather_schedule_recursive_doubling, recursive_doubling_jumps, ring_shift_schedule,
    sequential_collection_schedule, sequential_distribution_schedule, shift_round,
};
pub use shift::{
    recursive_doubled_shift_copy, ring_shift, ring_shift_copy_all, CopyAll, Keyed, MaxByKey,
    Reduction, ReductionKind, RunningSum, ShiftOutcome, ShiftStrategy, SumState,
};
pub use sync::{
    distributed_average, leader_recursive_sync, leader_sync, run_sync, sync_network,
    DistributedOutcome, LeaderOutcome, SyncConfig, SyncError, SyncMethod, SyncReport,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CollectiveError {
    #[error("peer {peer} has no round-trip estimate")]
    MissingRtt { peer: usize },
    #[error("no circular shift by {q} on {n} nodes")]
    InvalidShift { n: usize, q: usize },
}
