//! End-to-end synchronisation of a simulated network.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::leader::{
    distribution_value, leader_average_rtt, LeaderCollection, PeerRecord, TickMean,
};
use super::schedules::{
    broadcast_schedule_recursive_doubling, ceil_log2, gather_schedule_recursive_doubling,
    recursive_doubling_jumps,
};
use super::CollectiveError;
use crate::netsim::{LatencyModel, Network, NodeId, READING_BITS};
use crate::rtt::{estimate_with_reading, RttError, RttThresholds, TimeReading};
use crate::timebase::{ClockError, SimulatedClock, Ticks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyncMethod {
    /// Leader fetches and then sends to each peer in turn.
    Leader,
    /// Leader gathers and broadcasts along the halving tree.
    LeaderRecursive,
    /// Every node computes the average itself via the doubled shift.
    Distributed,
}

impl SyncMethod {
    pub const ALL: [SyncMethod; 3] = [
        SyncMethod::Leader,
        SyncMethod::LeaderRecursive,
        SyncMethod::Distributed,
    ];

    /// Communication rounds used for `n` nodes.
    pub fn comm_rounds(self, n: usize) -> usize {
        match self {
            SyncMethod::Leader => 2 * n.saturating_sub(1),
            SyncMethod::LeaderRecursive => 2 * ceil_log2(n),
            SyncMethod::Distributed => match recursive_doubling_jumps(n) {
                Some(j) => j.len(),
                None => n.saturating_sub(1),
            },
        }
    }
}

impl fmt::Display for SyncMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyncMethod::Leader => "leader",
            SyncMethod::LeaderRecursive => "leader-recursive",
            SyncMethod::Distributed => "distributed",
        })
    }
}

impl FromStr for SyncMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| format!("unknown sync method `{s}`"))
    }
}

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("synchronisation needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("node {node} could not read node {peer}")]
    Rtt {
        node: NodeId,
        peer: NodeId,
        #[source]
        source: RttError,
    },
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Collective(#[from] CollectiveError),
}

fn read_peer(
    net: &mut Network,
    node: NodeId,
    peer: NodeId,
    thresholds: &RttThresholds,
) -> Result<(TimeReading, Ticks), SyncError> {
    let mut link = net.link(node, peer);
    let reading = estimate_with_reading(&mut link, thresholds)
        .map_err(|source| SyncError::Rtt { node, peer, source })?;
    Ok((reading, link.elapsed()))
}

/// Sum of doubled offsets `2(T_k - T_self)` over the nodes a state covers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct OffsetSum {
    doubled: i128,
    count: i128,
}

impl OffsetSum {
    const SELF: OffsetSum = OffsetSum {
        doubled: 0,
        count: 1,
    };

    /// Re-expresses a state held by a peer whose doubled offset from us is
    /// `peer_offset`.
    fn rebased(self, peer_offset: i128) -> Self {
        Self {
            doubled: self.doubled + self.count * peer_offset,
            count: self.count,
        }
    }

    fn add(&mut self, other: OffsetSum) {
        self.doubled += other.doubled;
        self.count += other.count;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributedOutcome {
    /// Each node's estimate of the network average, on its own clock at
    /// `evaluated_at`.
    pub means: Vec<TickMean>,
    /// True time at which `means` hold.
    pub evaluated_at: Ticks,
    pub comm_rounds: usize,
    /// Readings taken by each receiver, one per round.
    pub readings: Vec<Vec<TimeReading>>,
}

impl DistributedOutcome {
    /// Each node's average expressed as an offset from true time.
    pub fn mean_offsets(&self) -> Vec<TickMean> {
        self.means
            .iter()
            .map(|m| m.shifted(-self.evaluated_at))
            .collect()
    }
}

/// Every node learns the average of all clocks. In each round of the doubled
/// shift node `r` reads the node `q` behind it, RTT corrected, and folds in
/// that node's running sum of offsets. Sizes that are not a power of two
/// use the ring, forwarding the last state received.
///
/// Clocks are not modified.
pub fn distributed_average(
    net: &mut Network,
    thresholds: &RttThresholds,
) -> Result<DistributedOutcome, SyncError> {
    let n = net.len();
    if n < 2 {
        return Err(SyncError::TooFewNodes(n));
    }
    let (jumps, ring) = match recursive_doubling_jumps(n) {
        Some(j) => (j, false),
        None => (vec![1; n - 1], true),
    };
    let mut acc = vec![OffsetSum::SELF; n];
    let mut forward = acc.clone();
    let mut readings = vec![Vec::with_capacity(jumps.len()); n];
    for &q in &jumps {
        let outgoing = if ring { forward.clone() } else { acc.clone() };
        let mut longest = Ticks::ZERO;
        for r in 0..n {
            let s = (r + n - q) % n;
            let (reading, elapsed) = read_peer(net, r, s, thresholds)?;
            longest = longest.max(elapsed);
            let incoming = outgoing[s].rebased(reading.doubled_offset());
            acc[r].add(incoming);
            forward[r] = incoming;
            readings[r].push(reading);
        }
        net.advance(longest)?;
    }
    let evaluated_at = net.now();
    let means = acc
        .iter()
        .zip(net.clocks())
        .map(|(a, c)| {
            debug_assert_eq!(a.count, n as i128);
            let two_n = 2 * n as i128;
            TickMean::new(two_n * c.read().0 as i128 + a.doubled, two_n)
        })
        .collect();
    Ok(DistributedOutcome {
        means,
        evaluated_at,
        comm_rounds: jumps.len(),
        readings,
    })
}

/// Result of a leader-driven synchronisation.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderOutcome {
    /// Average computed by the leader, on its clock at `evaluated_at`.
    pub mean: TickMean,
    pub evaluated_at: Ticks,
    pub collection: LeaderCollection,
    pub comm_rounds: usize,
}

/// Sequential leader synchronisation: node 0 reads each peer in turn,
/// computes the RTT-corrected average, then sends every peer its value.
///
/// Each value also carries half the peer's measured round trip so that it is
/// current on arrival.
pub fn leader_sync(
    net: &mut Network,
    thresholds: &RttThresholds,
    compute_cost: Ticks,
) -> Result<LeaderOutcome, SyncError> {
    let n = net.len();
    if n < 2 {
        return Err(SyncError::TooFewNodes(n));
    }
    let mut peers = Vec::with_capacity(n - 1);
    for i in 1..n {
        let (reading, elapsed) = read_peer(net, 0, i, thresholds)?;
        peers.push(PeerRecord::from(&reading));
        net.advance(elapsed)?;
    }
    let leader_time = net.clock(0).read();
    let evaluated_at = net.now();
    let mut collection = LeaderCollection::new(leader_time, peers);
    let mean = leader_average_rtt(&collection)?;

    net.advance(compute_cost)?;
    collection.compute_cost = net.clock(0).read() - leader_time;
    let rounded = mean.round();
    net.set_clock(0, rounded + collection.compute_cost);

    for i in 1..n {
        let sent_on_leader = net.clock(0).read();
        let value = distribution_value(rounded, &collection, i);
        let half_rtt = collection.peers[i - 1]
            .rtt_mean
            .map_or(Ticks::ZERO, |r| Ticks(r.0.div_euclid(2)));
        let transit = net.sample_latency(0, i, READING_BITS);
        net.advance(transit)?;
        net.set_clock(i, value + half_rtt);
        collection
            .send_delays
            .push(net.clock(0).read() - sent_on_leader);
    }
    Ok(LeaderOutcome {
        mean,
        evaluated_at,
        collection,
        comm_rounds: 2 * (n - 1),
    })
}

/// Leader synchronisation along the halving tree: offsets are gathered
/// towards node 0 in `ceil(log2 N)` rounds and the result is broadcast back
/// in as many.
pub fn leader_recursive_sync(
    net: &mut Network,
    thresholds: &RttThresholds,
    compute_cost: Ticks,
) -> Result<LeaderOutcome, SyncError> {
    let n = net.len();
    if n < 2 {
        return Err(SyncError::TooFewNodes(n));
    }
    let gather = gather_schedule_recursive_doubling(n);
    let mut acc = vec![OffsetSum::SELF; n];
    // Half round trip from each node to its tree parent.
    let mut half_rtt = vec![Ticks::ZERO; n];
    let mut peers = Vec::new();
    for round in &gather.rounds {
        let mut longest = Ticks::ZERO;
        let snapshot = acc.clone();
        for t in &round.transfers {
            let (reading, elapsed) = read_peer(net, t.receiver, t.sender, thresholds)?;
            longest = longest.max(elapsed);
            acc[t.receiver].add(snapshot[t.sender].rebased(reading.doubled_offset()));
            half_rtt[t.sender] = Ticks(reading.estimate.mean.0.div_euclid(2));
            if t.receiver == 0 {
                peers.push(PeerRecord::from(&reading));
            }
        }
        net.advance(longest)?;
    }
    debug_assert_eq!(acc[0].count, n as i128);
    let leader_time = net.clock(0).read();
    let evaluated_at = net.now();
    let two_n = 2 * n as i128;
    let mean = TickMean::new(two_n * leader_time.0 as i128 + acc[0].doubled, two_n);

    net.advance(compute_cost)?;
    let mut collection = LeaderCollection::new(leader_time, peers);
    collection.compute_cost = net.clock(0).read() - leader_time;
    net.set_clock(0, mean.round() + collection.compute_cost);

    for round in &broadcast_schedule_recursive_doubling(n).rounds {
        let mut sends = Vec::with_capacity(round.transfers.len());
        for t in &round.transfers {
            let value = net.clock(t.sender).read() + half_rtt[t.receiver];
            let transit = net.sample_latency(t.sender, t.receiver, READING_BITS);
            sends.push((t.receiver, value, transit));
        }
        let longest = sends.iter().map(|s| s.2).max().unwrap_or(Ticks::ZERO);
        net.advance(longest)?;
        for (receiver, value, transit) in sends {
            // The value arrived `longest - transit` before the barrier.
            let since = (longest - transit).scale(1.0 + net.clock(receiver).frequency_error());
            net.set_clock(receiver, value + since);
        }
    }
    Ok(LeaderOutcome {
        mean,
        evaluated_at,
        collection,
        comm_rounds: 2 * gather.len(),
    })
}

/// Parameters of one synchronisation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyncConfig {
    pub nodes: usize,
    pub method: SyncMethod,
    pub latency: LatencyModel,
    /// Initial offsets are uniform in `[-max_offset, max_offset]`.
    pub max_offset: Ticks,
    /// Frequency errors are uniform in `[-max_drift_ppm, max_drift_ppm]`.
    pub max_drift_ppm: f64,
    pub compute_cost: Ticks,
    pub thresholds: RttThresholds,
    pub seed: u64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            nodes: 8,
            method: SyncMethod::Distributed,
            latency: LatencyModel::constant(Ticks::from_millis(1)),
            max_offset: Ticks::from_secs(1),
            max_drift_ppm: 100.0,
            compute_cost: Ticks::ZERO,
            thresholds: RttThresholds::default(),
            seed: 0,
        }
    }
}

impl SyncConfig {
    /// Clocks drawn from the configured offset and drift ranges.
    pub fn clocks(&self) -> Result<Vec<SimulatedClock>, ClockError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let ppm = self.max_drift_ppm.abs();
        let span = self.max_offset.abs().0;
        (0..self.nodes)
            .map(|id| {
                let offset = Ticks(rng.random_range(-span..=span));
                let freq = if ppm > 0.0 {
                    rng.random_range(-ppm..=ppm) * 1e-6
                } else {
                    0.0
                };
                SimulatedClock::new(id, offset, freq, rng.random())
            })
            .collect()
    }

    pub fn network(&self) -> Result<Network, ClockError> {
        Ok(Network::new(
            self.clocks()?,
            self.latency,
            self.seed ^ 0x006e_6574_776f_726b,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncReport {
    pub method: SyncMethod,
    pub node_count: usize,
    pub comm_rounds: usize,
    pub pre_max_pairwise_offset: Ticks,
    pub post_max_pairwise_offset: Ticks,
    /// The agreed time as an offset from true time.
    pub consensus_offset: TickMean,
    /// Each clock's final offset minus the rounded consensus offset.
    pub residuals: Vec<Ticks>,
}

fn max_pairwise(offsets: &[Ticks]) -> Ticks {
    match (offsets.iter().max(), offsets.iter().min()) {
        (Some(&hi), Some(&lo)) => hi - lo,
        _ => Ticks::ZERO,
    }
}

/// Synchronises `net` in place with `method`.
pub fn sync_network(
    net: &mut Network,
    method: SyncMethod,
    thresholds: &RttThresholds,
    compute_cost: Ticks,
) -> Result<SyncReport, SyncError> {
    let pre = max_pairwise(&net.offsets());
    let (consensus_offset, comm_rounds) = match method {
        SyncMethod::Distributed => {
            let out = distributed_average(net, thresholds)?;
            for (i, m) in out.means.iter().enumerate() {
                net.set_clock(i, m.round());
            }
            (out.mean_offsets()[0], out.comm_rounds)
        }
        SyncMethod::Leader | SyncMethod::LeaderRecursive => {
            let out = if method == SyncMethod::Leader {
                leader_sync(net, thresholds, compute_cost)?
            } else {
                leader_recursive_sync(net, thresholds, compute_cost)?
            };
            (out.mean.shifted(-out.evaluated_at), out.comm_rounds)
        }
    };
    let post = net.offsets();
    let target = consensus_offset.round();
    Ok(SyncReport {
        method,
        node_count: net.len(),
        comm_rounds,
        pre_max_pairwise_offset: pre,
        post_max_pairwise_offset: max_pairwise(&post),
        consensus_offset,
        residuals: post.iter().map(|&o| o - target).collect(),
    })
}

/// Builds the network described by `config` and synchronises it.
pub fn run_sync(config: &SyncConfig) -> Result<SyncReport, SyncError> {
    if config.nodes < 2 {
        return Err(SyncError::TooFewNodes(config.nodes));
    }
    let mut net = config.network()?;
    sync_network(
        &mut net,
        config.method,
        &config.thresholds,
        config.compute_cost,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phase_net(offsets: &[i64], latency: LatencyModel) -> Network {
        let clocks = offsets
            .iter()
            .enumerate()
            .map(|(i, &o)| SimulatedClock::ideal(i, Ticks(o)))
            .collect();
        Network::new(clocks, latency, 7)
    }

    #[test]
    fn equal_clocks_zero_latency() {
        let mut net = phase_net(&[500; 4], LatencyModel::zero());
        let out = distributed_average(&mut net, &RttThresholds::default()).unwrap();
        assert!(out.mean_offsets().iter().all(
            |m| *m == TickMean::whole(Ticks(500)) || m.same_value(&TickMean::whole(Ticks(500)))
        ));
    }

    #[test]
    fn four_offsets_average_to_six() {
        let mut net = phase_net(
            &[0, 4, 8, 12],
            LatencyModel::constant(Ticks::from_millis(3)),
        );
        let out = distributed_average(&mut net, &RttThresholds::default()).unwrap();
        assert_eq!(out.comm_rounds, 2);
        for m in out.mean_offsets() {
            assert!(m.same_value(&TickMean::whole(Ticks(6))), "{m:?}");
        }
    }

    #[test]
    fn ring_fallback_for_six_nodes() {
        let offs = [5, -3, 11, 0, 7, 22];
        let mut net = phase_net(&offs, LatencyModel::constant(Ticks::from_micros(40)));
        let out = distributed_average(&mut net, &RttThresholds::default()).unwrap();
        assert_eq!(out.comm_rounds, 5);
        let expect = TickMean::new(offs.iter().sum::<i64>() as i128, 6);
        for m in out.mean_offsets() {
            assert!(m.same_value(&expect));
        }
    }

    #[test]
    fn leader_methods_agree_with_distributed() {
        let offs: Vec<i64> = (0..8).map(|k| k * 1_000_003).collect();
        let expect = TickMean::new(offs.iter().sum::<i64>() as i128, 8);
        let lat = LatencyModel::constant(Ticks::from_millis(2));
        for method in SyncMethod::ALL {
            let mut net = phase_net(&offs, lat);
            let r = sync_network(&mut net, method, &RttThresholds::default(), Ticks::ZERO).unwrap();
            assert!(
                r.consensus_offset.same_value(&expect),
                "{method}: {:?}",
                r.consensus_offset
            );
            assert!(
                r.residuals.iter().all(|&x| x.abs() <= Ticks(1)),
                "{method}: {:?}",
                r.residuals
            );
            assert_eq!(r.comm_rounds, method.comm_rounds(8));
        }
    }

    #[test]
    fn compute_cost_is_carried_forward() {
        let offs = [0, 10_000, 20_000];
        let mut net = phase_net(&offs, LatencyModel::constant(Ticks::from_millis(1)));
        let out = leader_sync(&mut net, &RttThresholds::default(), Ticks::from_millis(7)).unwrap();
        assert_eq!(out.collection.compute_cost, Ticks::from_millis(7));
        assert_eq!(out.collection.send_delays, vec![Ticks::from_millis(1); 2]);
        assert!(
            net.offsets().iter().all(|&o| o == Ticks(10_000)),
            "{:?}",
            net.offsets()
        );
    }

    #[test]
    fn round_counts() {
        assert_eq!(SyncMethod::Distributed.comm_rounds(8), 3);
        assert_eq!(SyncMethod::Leader.comm_rounds(8), 14);
        assert_eq!(SyncMethod::LeaderRecursive.comm_rounds(8), 6);
        assert_eq!(SyncMethod::Distributed.comm_rounds(6), 5);
    }

    #[test]
    fn too_few_nodes() {
        let cfg = SyncConfig {
            nodes: 1,
            ..SyncConfig::default()
        };
        assert!(matches!(run_sync(&cfg), Err(SyncError::TooFewNodes(1))));
    }

    #[test]
    fn unstable_channel_names_nodes() {
        let lat = LatencyModel::constant(Ticks::from_micros(10)).with_jitter(
            crate::netsim::Jitter::uniform(Ticks::ZERO, Ticks::from_millis(10)),
        );
        let mut net = phase_net(&[0, 0], lat);
        let tight = RttThresholds {
            max_attempts: 2,
            ..RttThresholds::default()
        };
        match distributed_average(&mut net, &tight) {
            Err(SyncError::Rtt { node, peer, .. }) => assert_eq!((node, peer), (0, 1)),
            other => panic!("expected rtt failure, got {other:?}"),
        }
    }

    #[test]
    fn drifting_run_shrinks_spread() {
        let cfg = SyncConfig {
            nodes: 16,
            latency: LatencyModel::constant(Ticks::from_millis(1)).with_jitter(
                crate::netsim::Jitter::uniform(Ticks::ZERO, Ticks::from_micros(20)),
            ),
            ..SyncConfig::default()
        };
        for method in SyncMethod::ALL {
            let r = run_sync(&SyncConfig {
                method,
                ..cfg.clone()
            })
            .unwrap();
            assert!(r.pre_max_pairwise_offset > Ticks::from_millis(500));
            assert!(
                r.post_max_pairwise_offset < Ticks::from_micros(200),
                "{method}: {r:?}"
            );
        }
    }

    #[test]
    fn same_seed_same_report() {
        let cfg = SyncConfig::default();
        assert_eq!(run_sync(&cfg).unwrap(), run_sync(&cfg).unwrap());
    }
}
