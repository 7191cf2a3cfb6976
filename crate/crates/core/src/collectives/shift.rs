//! Circular shift-copy on the ring and its recursively doubled variant.
//!
//! Both run on the zero-latency round executor from `netsim`; what a receiver
//! does with an incoming state is up to the [`Reduction`].

use std::cmp::Reverse;
use std::convert::Infallible;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schedules::{recursive_doubling_jumps, ring_shift_schedule, shift_round};
use crate::netsim::{self, CommSchedule, LatencyModel, Message, NodeId, RoundHandler, Transfer};
use crate::timebase::Ticks;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionKind {
    /// Receivers keep every value shifted to them.
    CopyAll,
    /// Receivers keep only the sum of what they have seen.
    RunningSum,
    /// Receivers keep the `(key, payload)` pair with the larger key.
    RunningMaxKeyed,
}

impl ReductionKind {
    pub const ALL: [ReductionKind; 3] = [
        ReductionKind::CopyAll,
        ReductionKind::RunningSum,
        ReductionKind::RunningMaxKeyed,
    ];
}

impl fmt::Display for ReductionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReductionKind::CopyAll => "copy-all",
            ReductionKind::RunningSum => "running-sum",
            ReductionKind::RunningMaxKeyed => "running-max-keyed",
        })
    }
}

impl FromStr for ReductionKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| format!("unknown reduction `{s}`"))
    }
}

/// How a node folds a neighbour's state into its own.
pub trait Reduction {
    type State: Clone;

    fn kind(&self) -> ReductionKind;

    /// Brings a state received by `at` from `from` into `at`'s frame. Ring
    /// shifts forward the result unchanged.
    fn receive(&mut self, _at: NodeId, _from: NodeId, incoming: &Self::State) -> Self::State {
        incoming.clone()
    }

    /// Folds a received state into `local`.
    fn merge(&mut self, local: &mut Self::State, incoming: &Self::State);

    /// Wire size of a state summarising `values` original values.
    fn payload_bits(&self, values: usize) -> u64;
}

/// Keeps `(origin, value)` for every value seen, in arrival order.
#[derive(Debug, Clone, Copy)]
pub struct CopyAll<T> {
    pub value_bits: u64,
    _marker: std::marker::PhantomData<fn() -> T>,
}

impl<T: Clone> CopyAll<T> {
    pub fn initial(values: &[T]) -> Vec<Vec<(NodeId, T)>> {
        values
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, v)| vec![(i, v)])
            .collect()
    }
}

impl<T> Default for CopyAll<T> {
    fn default() -> Self {
        Self {
            value_bits: 32,
            _marker: std::marker::PhantomData,
        }
    }
}

impl<T: Clone> Reduction for CopyAll<T> {
    type State = Vec<(NodeId, T)>;

    fn kind(&self) -> ReductionKind {
        ReductionKind::CopyAll
    }

    fn merge(&mut self, local: &mut Self::State, incoming: &Self::State) {
        local.extend(incoming.iter().cloned());
    }

    fn payload_bits(&self, values: usize) -> u64 {
        self.value_bits * values as u64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SumState {
    pub total: i128,
    pub count: usize,
}

impl SumState {
    pub fn of(value: i64) -> Self {
        Self {
            total: value as i128,
            count: 1,
        }
    }
}

/// Keeps a running total and how many values went into it.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningSum;

impl Reduction for RunningSum {
    type State = SumState;

    fn kind(&self) -> ReductionKind {
        ReductionKind::RunningSum
    }

    fn merge(&mut self, local: &mut SumState, incoming: &SumState) {
        local.total += incoming.total;
        local.count += incoming.count;
    }

    fn payload_bits(&self, _: usize) -> u64 {
        64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keyed<K, P> {
    pub key: K,
    pub origin: NodeId,
    pub payload: P,
}

impl<K: Ord, P> Keyed<K, P> {
    /// Larger key wins; on equal keys the lower origin wins so that every
    /// node settles on the same pair.
    pub fn beats(&self, other: &Self) -> bool {
        (&self.key, Reverse(self.origin)) > (&other.key, Reverse(other.origin))
    }
}

/// Keeps the pair with the largest key.
#[derive(Debug, Clone, Copy)]
pub struct MaxByKey<K, P> {
    _marker: std::marker::PhantomData<fn() -> (K, P)>,
}

impl<K, P> Default for MaxByKey<K, P> {
    fn default() -> Self {
        Self {
            _marker: std::marker::PhantomData,
        }
    }
}

impl<K, P> MaxByKey<K, P> {
    pub fn initial(pairs: Vec<(K, P)>) -> Vec<Keyed<K, P>> {
        pairs
            .into_iter()
            .enumerate()
            .map(|(origin, (key, payload))| Keyed {
                key,
                origin,
                payload,
            })
            .collect()
    }
}

impl<K: Ord + Clone, P: Clone> Reduction for MaxByKey<K, P> {
    type State = Keyed<K, P>;

    fn kind(&self) -> ReductionKind {
        ReductionKind::RunningMaxKeyed
    }

    fn merge(&mut self, local: &mut Self::State, incoming: &Self::State) {
        if incoming.beats(local) {
            *local = incoming.clone();
        }
    }

    fn payload_bits(&self, _: usize) -> u64 {
        64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftStrategy {
    Ring,
    RecursiveDoubling,
}

#[derive(Debug, Clone)]
pub struct ShiftOutcome<S> {
    pub states: Vec<S>,
    pub schedule: CommSchedule,
    pub strategy: ShiftStrategy,
    /// Jump used in each round.
    pub jumps: Vec<usize>,
    /// Communication rounds.
    pub comm_rounds: usize,
    /// Rounds plus one local copy per ring round, the way the ring is
    /// usually costed (`2(N-1)`).
    pub steps: usize,
    /// Number of original values each node covers after each round.
    pub coverage: Vec<Vec<usize>>,
}

struct ShiftHandler<'r, R: Reduction> {
    reduction: &'r mut R,
    acc: Vec<R::State>,
    covered: Vec<usize>,
    /// Ring mode forwards only the last value received.
    forward: Option<Vec<(R::State, usize)>>,
}

impl<R: Reduction> RoundHandler for ShiftHandler<'_, R> {
    type Payload = (R::State, usize);
    type Error = Infallible;

    fn outgoing(&mut self, _: usize, t: &Transfer) -> Result<Self::Payload, Infallible> {
        Ok(match &self.forward {
            Some(f) => f[t.sender].clone(),
            None => (self.acc[t.sender].clone(), self.covered[t.sender]),
        })
    }

    fn incoming(&mut self, _: usize, m: &Message, p: &Self::Payload) -> Result<(), Infallible> {
        let state = self.reduction.receive(m.dst, m.src, &p.0);
        self.reduction.merge(&mut self.acc[m.dst], &state);
        self.covered[m.dst] += p.1;
        if let Some(f) = &mut self.forward {
            f[m.dst] = (state, p.1);
        }
        Ok(())
    }
}

fn run_rounds<R: Reduction>(
    schedule: CommSchedule,
    initial: Vec<R::State>,
    reduction: &mut R,
    ring: bool,
) -> (Vec<R::State>, Vec<Vec<usize>>, CommSchedule) {
    let n = initial.len();
    let forward = ring.then(|| initial.iter().cloned().map(|s| (s, 1)).collect());
    let mut handler = ShiftHandler {
        reduction,
        acc: initial,
        covered: vec![1; n],
        forward,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let zero = LatencyModel::zero();
    let mut coverage = Vec::with_capacity(schedule.len());
    for round in &schedule.rounds {
        let single = CommSchedule::new(vec![round.clone()]);
        match netsim::execute(&single, n, &zero, &mut rng, Ticks::ZERO, &mut handler) {
            Ok(_) => {}
            Err(netsim::ExecError::InvalidSchedule(v)) => {
                unreachable!("generated shift schedule is single-port: {v}")
            }
            Err(netsim::ExecError::Handler { source, .. }) => match source {},
        }
        coverage.push(handler.covered.clone());
    }
    (handler.acc, coverage, schedule)
}

/// `N - 1` alternating 1-shifts and copies on `C_N^1`. Each round every
/// node forwards the value it received last.
pub fn ring_shift<R: Reduction>(
    initial: Vec<R::State>,
    reduction: &mut R,
) -> ShiftOutcome<R::State> {
    let n = initial.len();
    let schedule = ring_shift_schedule(n, reduction.payload_bits(1));
    let comm_rounds = schedule.len();
    let (states, coverage, schedule) = run_rounds(schedule, initial, reduction, true);
    ShiftOutcome {
        states,
        schedule,
        strategy: ShiftStrategy::Ring,
        jumps: vec![1; comm_rounds],
        comm_rounds,
        steps: 2 * comm_rounds,
        coverage,
    }
}

/// Circular `(N-1)`-shift-copy on the ring: every node ends up with every
/// value, newest last, in `2(N-1)` steps.
pub fn ring_shift_copy_all<T: Clone>(values: &[T]) -> ShiftOutcome<Vec<(NodeId, T)>> {
    ring_shift(CopyAll::<T>::initial(values), &mut CopyAll::<T>::default())
}

/// Recursively doubled circular `(N-1)`-shift: round `k` shifts by
/// `N / 2^k`, so `log2 N` rounds suffice. Sizes that are not a power of two
/// fall back to [`ring_shift`].
pub fn recursive_doubled_shift_copy<R: Reduction>(
    initial: Vec<R::State>,
    reduction: &mut R,
) -> ShiftOutcome<R::State> {
    let n = initial.len();
    let Some(jumps) = recursive_doubling_jumps(n) else {
        return ring_shift(initial, reduction);
    };
    let schedule = CommSchedule::new(
        jumps
            .iter()
            .enumerate()
            .map(|(k, &q)| shift_round(n, q, reduction.payload_bits(1 << k)))
            .collect(),
    );
    let comm_rounds = schedule.len();
    let (states, coverage, schedule) = run_rounds(schedule, initial, reduction, false);
    ShiftOutcome {
        states,
        schedule,
        strategy: ShiftStrategy::RecursiveDoubling,
        jumps,
        comm_rounds,
        steps: comm_rounds,
        coverage,
    }
}
