//! Schedule builders. Node 0 is the leader wherever one is needed.

use super::CollectiveError;
use crate::netsim::{CirculantTopology, CommSchedule, NodeId, Round, Transfer, READING_BITS};

/// `ceil(log2 n)`, with `n <= 1` mapping to 0.
pub fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

/// One edge of the halving tree: `parent` hands `child` responsibility for
/// `span` nodes (the child included).
#[derive(Debug, Clone, Copy)]
struct TreeEdge {
    parent: NodeId,
    child: NodeId,
    span: usize,
}

/// Rounds of the range-halving tree rooted at 0. A node owning `[lo, lo+len)`
/// passes `[lo + len/2, lo + len)` to node `lo + len/2`.
fn halving_tree(n: usize) -> Vec<Vec<TreeEdge>> {
    let mut ranges = vec![(0usize, n)];
    let mut rounds = Vec::new();
    while ranges.iter().any(|&(_, len)| len > 1) {
        let mut edges = Vec::new();
        let mut next = Vec::with_capacity(ranges.len() * 2);
        for &(lo, len) in &ranges {
            if len > 1 {
                let half = len / 2;
                let child = lo + half;
                edges.push(TreeEdge {
                    parent: lo,
                    child,
                    span: len - half,
                });
                next.push((lo, half));
                next.push((child, len - half));
            } else {
                next.push((lo, len));
            }
        }
        ranges = next;
        rounds.push(edges);
    }
    rounds
}

/// Leader-rooted broadcast in `ceil(log2 N)` rounds. Round 1 is
/// `0 -> floor(N/2)`; afterwards every node holding the datum forwards it.
pub fn broadcast_schedule_recursive_doubling(n: usize) -> CommSchedule {
    CommSchedule::new(
        halving_tree(n)
            .into_iter()
            .map(|edges| {
                Round::new(
                    edges
                        .iter()
                        .map(|e| Transfer::new(e.parent, e.child, READING_BITS))
                        .collect(),
                )
            })
            .collect(),
    )
}

/// The broadcast run backwards: readings flow towards node 0 and every
/// sender forwards everything it has gathered so far.
pub fn gather_schedule_recursive_doubling(n: usize) -> CommSchedule {
    CommSchedule::new(
        halving_tree(n)
            .into_iter()
            .rev()
            .map(|edges| {
                Round::new(
                    edges
                        .iter()
                        .map(|e| Transfer::new(e.child, e.parent, READING_BITS * e.span as u64))
                        .collect(),
                )
            })
            .collect(),
    )
}

/// Leader fetches peers one at a time: round `i` is `i -> 0`.
pub fn sequential_collection_schedule(n: usize) -> CommSchedule {
    CommSchedule::new(
        (1..n)
            .map(|i| Round::new(vec![Transfer::new(i, 0, READING_BITS)]))
            .collect(),
    )
}

/// Leader sends to peers one at a time: round `i` is `0 -> i`.
pub fn sequential_distribution_schedule(n: usize) -> CommSchedule {
    CommSchedule::new(
        (1..n)
            .map(|i| Round::new(vec![Transfer::new(0, i, READING_BITS)]))
            .collect(),
    )
}

/// Optimal step count of a circular `q`-shift on `C_N^q`: `min(q, N - q)`.
pub fn circular_shift_steps(n: usize, q: usize) -> Result<usize, CollectiveError> {
    let topology =
        CirculantTopology::new(n, q).map_err(|_| CollectiveError::InvalidShift { n, q })?;
    Ok(topology.jump().min(n - topology.jump()))
}

/// One circular shift on `C_N^q`: every node sends to `(i + q) mod N`.
pub fn shift_round(n: usize, q: usize, payload_bits: u64) -> Round {
    Round::new(
        (0..n)
            .map(|i| Transfer::new(i, (i + q) % n, payload_bits))
            .collect(),
    )
}

/// Jumps `N/2, N/4, ..., 1` of the recursively doubled shift, or `None` when
/// `N` is not a power of two.
pub fn recursive_doubling_jumps(n: usize) -> Option<Vec<usize>> {
    if n == 0 || !n.is_power_of_two() {
        return None;
    }
    let mut jumps = Vec::new();
    let mut q = n / 2;
    while q >= 1 {
        jumps.push(q);
        q /= 2;
    }
    Some(jumps)
}

/// `N - 1` rounds of a 1-shift on the ring. `payload_bits` is per transfer.
pub fn ring_shift_schedule(n: usize, payload_bits: u64) -> CommSchedule {
    let rounds = if n < 2 { 0 } else { n - 1 };
    CommSchedule::new(
        (0..rounds)
            .map(|_| shift_round(n, 1, payload_bits))
            .collect(),
    )
}
