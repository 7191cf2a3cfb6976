//! Per-agent protocol steps. The world decides who is eligible; these
//! functions only apply the rules.

use std::collections::BTreeSet;

use petgraph::unionfind::UnionFind;
use rand::Rng;
use serde::Serialize;

use super::{AgentClock, LagModel, Lineage, Mode, Point};
use crate::collectives::{
    recursive_doubled_shift_copy, Keyed, Reduction, ReductionKind, ShiftStrategy,
};
use crate::netsim::{LatencyModel, Network, NodeId};
use crate::rtt::{estimate_with_reading, RttThresholds};
use crate::timebase::{SimulatedClock, Ticks};

/// Sets `T_i := G` and records the sync.
pub fn gamma_sync(agent: &mut AgentClock, g: Ticks) {
    agent.clock.set(g);
    agent.gamma_sync_record = Some(g);
    agent.lineage = Some(Lineage { origin: g, hops: 0 });
    agent.gamma_syncs += 1;
}

/// Passive mode: resync only once the clock has wandered past `threshold`.
/// Returns whether a sync happened.
pub fn in_gamma_passive(agent: &mut AgentClock, g: Ticks, threshold: Ticks) -> bool {
    if agent.offset(g).abs() > threshold {
        gamma_sync(agent, g);
        true
    } else {
        false
    }
}

/// Aggressive mode: always resync.
pub fn in_gamma_aggressive(agent: &mut AgentClock, g: Ticks) {
    gamma_sync(agent, g);
}

/// Ranging agents go aggressive while moving away from Γ and passive while
/// approaching; agents without ranging are always aggressive.
pub fn update_mode(agent: &mut AgentClock, gamma: Point) {
    if !agent.ranging_capable {
        agent.mode = Mode::Aggressive;
        return;
    }
    let now = agent.position.distance(gamma);
    let before = agent.previous_position.distance(gamma);
    if now > before {
        agent.mode = Mode::Aggressive;
    } else if now < before {
        agent.mode = Mode::Passive;
    }
}

fn receding(a: &AgentClock, b: &AgentClock) -> bool {
    a.position.distance(b.position) > a.previous_position.distance(b.previous_position)
}

/// Splits `candidates` into groups: connected components of the graph whose
/// edges join agents within each other's broadcast radius, after dropping
/// edges a ranging-capable endpoint sees as receding. Singletons are left
/// out. Groups are sorted and listed by their smallest member.
pub fn form_adhoc_groups(agents: &[AgentClock], candidates: &[usize]) -> Vec<Vec<usize>> {
    let n = candidates.len();
    let mut uf = UnionFind::<usize>::new(n);
    for (x, &i) in candidates.iter().enumerate() {
        for (y, &j) in candidates.iter().enumerate().skip(x + 1) {
            let (a, b) = (&agents[i], &agents[j]);
            let reach = a.broadcast_radius.min(b.broadcast_radius);
            if a.position.distance(b.position) > reach {
                continue;
            }
            if (a.ranging_capable || b.ranging_capable) && receding(a, b) {
                continue;
            }
            uf.union(x, y);
        }
    }
    let labels = uf.into_labeling();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for (x, &label) in labels.iter().enumerate() {
        if slot[label] == usize::MAX {
            slot[label] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[label]].push(candidates[x]);
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.retain(|g| g.len() > 1);
    groups.sort_unstable();
    groups
}

/// Radio links used inside a group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupLinks {
    pub latency: LatencyModel,
    pub thresholds: RttThresholds,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupSyncOutcome {
    /// Agent whose time was adopted.
    pub winner: Option<usize>,
    pub key: Option<Ticks>,
    pub comm_rounds: usize,
    pub strategy: Option<ShiftStrategy>,
    pub adopted: Vec<usize>,
    pub failed_links: usize,
}

/// `(ΓSR, twice the origin's clock minus the holder's)`.
type Freshest = Keyed<Option<Ticks>, i128>;

/// Shift-max over ΓSR. Each receiver measures its sender with an RTT
/// estimate and re-expresses the carried offset relative to itself.
struct FreshestClock<'a> {
    net: &'a mut Network,
    thresholds: &'a RttThresholds,
    failed: usize,
}

impl Reduction for FreshestClock<'_> {
    type State = Freshest;

    fn kind(&self) -> ReductionKind {
        ReductionKind::RunningMaxKeyed
    }

    fn receive(&mut self, at: NodeId, from: NodeId, incoming: &Freshest) -> Freshest {
        let mut link = self.net.link(at, from);
        match estimate_with_reading(&mut link, self.thresholds) {
            Ok(r) => Keyed {
                key: incoming.key,
                origin: incoming.origin,
                payload: incoming.payload + r.doubled_offset(),
            },
            Err(_) => {
                self.failed += 1;
                // loses to everything
                Keyed {
                    key: None,
                    origin: usize::MAX,
                    payload: 0,
                }
            }
        }
    }

    fn merge(&mut self, local: &mut Freshest, incoming: &Freshest) {
        if incoming.beats(local) {
            *local = *incoming;
        }
    }

    fn payload_bits(&self, _: usize) -> u64 {
        // ΓSR and a time reading
        64
    }
}

/// Synchronises an ad hoc group to the member with the freshest ΓSR. Every
/// member except the winner and any in `departed` sets its clock to the
/// winner's, takes the winner's ΓSR and records the sync in CSR.
///
/// Does nothing when no member has ever seen Γ.
pub fn out_gamma_sync(
    agents: &mut [AgentClock],
    group: &[usize],
    departed: &BTreeSet<usize>,
    links: &GroupLinks,
) -> GroupSyncOutcome {
    let mut outcome = GroupSyncOutcome {
        winner: None,
        key: None,
        comm_rounds: 0,
        strategy: None,
        adopted: Vec::new(),
        failed_links: 0,
    };
    if group.len() < 2 || group.iter().all(|&i| agents[i].gamma_sync_record.is_none()) {
        return outcome;
    }
    let clocks: Vec<SimulatedClock> = group.iter().map(|&i| agents[i].clock.clone()).collect();
    let mut net = Network::new(clocks, links.latency, links.seed);
    let initial = group
        .iter()
        .enumerate()
        .map(|(k, &i)| Keyed {
            key: agents[i].gamma_sync_record,
            origin: k,
            payload: 0,
        })
        .collect();
    let mut reduction = FreshestClock {
        net: &mut net,
        thresholds: &links.thresholds,
        failed: 0,
    };
    let shifted = recursive_doubled_shift_copy(initial, &mut reduction);
    outcome.failed_links = reduction.failed;
    outcome.comm_rounds = shifted.comm_rounds;
    outcome.strategy = Some(shifted.strategy);
    if let Some(best) = shifted.states.iter().max_by(|a, b| {
        if a.beats(b) {
            std::cmp::Ordering::Greater
        } else if b.beats(a) {
            std::cmp::Ordering::Less
        } else {
            std::cmp::Ordering::Equal
        }
    }) {
        if best.key.is_some() {
            outcome.winner = Some(group[best.origin]);
            outcome.key = best.key;
        }
    }
    for (k, state) in shifted.states.iter().enumerate() {
        let id = group[k];
        if state.key.is_none() || state.origin == k || departed.contains(&id) {
            continue;
        }
        let agent = &mut agents[id];
        let t = agent.clock.read() + Ticks((state.payload + 1).div_euclid(2) as i64);
        agent.clock.set(t);
        agent.gamma_sync_record = state.key.max(agent.gamma_sync_record);
        agent.clock_sync_record = Some(t);
        agent.peer_syncs += 1;
        outcome.adopted.push(id);
    }
    outcome
}

fn draw<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Word of mouth: `target` reads `source` and sets its own clock, falling
/// behind by the query and reset lags. A source that never descended from
/// a Γ sync has nothing to share.
pub fn baseline_contact_sync<R: Rng + ?Sized>(
    source: &AgentClock,
    target: &mut AgentClock,
    lag: &LagModel,
    rng: &mut R,
) -> bool {
    let Some(lineage) = source.lineage else {
        return false;
    };
    let behind = draw(lag.query_min, lag.query_max, rng) + draw(lag.reset_min, lag.reset_max, rng);
    let t = source.clock.read() - Ticks::from_secs_f64(behind);
    target.clock.set(t);
    target.lineage = Some(Lineage {
        origin: lineage.origin,
        hops: lineage.hops + 1,
    });
    target.clock_sync_record = Some(t);
    target.peer_syncs += 1;
    true
}

/// Offsets from true time along a chain of `n` people: the first reads Γ,
/// each later one copies the one before.
pub fn word_of_mouth_chain<R: Rng + ?Sized>(
    n: usize,
    lag: &LagModel,
    g: Ticks,
    rng: &mut R,
) -> Vec<Ticks> {
    let mut chain: Vec<AgentClock> = (0..n)
        .map(|i| {
            let start = g + Ticks::from_secs(rng.random_range(-60..=60));
            AgentClock::new(i, SimulatedClock::ideal(i, start), Point::default())
        })
        .collect();
    if let Some(first) = chain.first_mut() {
        gamma_sync(first, g);
    }
    for k in 1..n {
        let (done, rest) = chain.split_at_mut(k);
        baseline_contact_sync(&done[k - 1], &mut rest[0], lag, rng);
    }
    chain.iter().map(|a| a.offset(g)).collect()
}

/// Share of agents within `threshold` of true time.
pub fn fraction_synchronized(agents: &[AgentClock], g: Ticks, threshold: Ticks) -> f64 {
    if agents.is_empty() {
        return 0.0;
    }
    let synced = agents
        .iter()
        .filter(|a| a.is_synchronized(g, threshold))
        .count();
    synced as f64 / agents.len() as f64
}
