use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schedule::{CommSchedule, ScheduleViolation, Transfer};
use super::NodeId;
use crate::timebase::{ClockError, GlobalClock, SimulatedClock, Ticks};

/// Size of a request bit in the time query exchange.
pub const REQUEST_BITS: u64 = 1;
/// Size of a time reading on the wire.
pub const READING_BITS: u64 = 32;

/// Uniform jitter on `[min, max]`, inclusive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Jitter {
    pub min: Ticks,
    pub max: Ticks,
}

impl Jitter {
    pub const NONE: Jitter = Jitter {
        min: Ticks::ZERO,
        max: Ticks::ZERO,
    };

    pub fn uniform(min: Ticks, max: Ticks) -> Self {
        Self {
            min: min.min(max),
            max: min.max(max),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Ticks {
        if self.min == self.max {
            self.min
        } else {
            Ticks(rng.random_range(self.min.0..=self.max.0))
        }
    }
}

/// Direction-dependent scale on the deterministic part of the latency.
/// Messages to a higher node index use `ascending`, the rest `descending`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Asymmetry {
    pub ascending: f64,
    pub descending: f64,
}

/// One-way latency: `scale * (base + per_bit * bits) + jitter`, floored at 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    pub base_latency: Ticks,
    /// Propagation cost of a single payload bit.
    pub per_bit_cost: Ticks,
    pub jitter: Jitter,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub asymmetry: Option<Asymmetry>,
}

impl LatencyModel {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Fixed latency independent of payload and direction.
    pub fn constant(base: Ticks) -> Self {
        Self {
            base_latency: base,
            ..Self::default()
        }
    }

    pub fn with_jitter(mut self, jitter: Jitter) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn with_per_bit(mut self, per_bit: Ticks) -> Self {
        self.per_bit_cost = per_bit;
        self
    }

    /// The deterministic part, before jitter.
    pub fn nominal(&self, src: NodeId, dst: NodeId, payload_bits: u64) -> Ticks {
        let raw = self.base_latency + Ticks(self.per_bit_cost.0 * payload_bits as i64);
        match self.asymmetry {
            Some(a) if dst > src => raw.scale(a.ascending),
            Some(a) => raw.scale(a.descending),
            None => raw,
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        src: NodeId,
        dst: NodeId,
        payload_bits: u64,
        rng: &mut R,
    ) -> Ticks {
        (self.nominal(src, dst, payload_bits) + self.jitter.sample(rng)).max(Ticks::ZERO)
    }

    /// Upper bound on how far a symmetric exchange can be off: the jitter
    /// width, in ticks.
    pub fn jitter_span(&self) -> Ticks {
        self.jitter.max - self.jitter.min
    }
}

/// A delivered point-to-point message. Times are true time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub src: NodeId,
    pub dst: NodeId,
    pub payload_bits: u64,
    pub send_time: Ticks,
    pub deliver_time: Ticks,
}

/// What the requester learns from one request/response: both timestamps on
/// its own clock and the peer's reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exchange {
    /// `s_{0,i}`: requester clock when the request left.
    pub sent_at: Ticks,
    /// The peer's clock when it answered.
    pub peer_reading: Ticks,
    /// `T_{0,i}`: requester clock when the answer arrived.
    pub received_at: Ticks,
}

impl Exchange {
    pub fn round_trip(&self) -> Ticks {
        self.received_at - self.sent_at
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestKind {
    /// A `1` bit answered with a dummy 32-bit word.
    Probe,
    /// A `0` bit answered with the peer's 32-bit time reading.
    ReadTime,
}

/// Request/response access to one peer.
pub trait Channel {
    fn exchange(&mut self, kind: RequestKind) -> Exchange;

    /// Called before every estimation attempt. Simulated links restart their
    /// noise stream here so each attempt sees the same draws regardless of
    /// what earlier attempts consumed.
    fn begin_attempt(&mut self, _attempt: usize) {}
}

/// `N` drifting clocks on a complete graph, plus true time.
#[derive(Debug, Clone)]
pub struct Network {
    clocks: Vec<SimulatedClock>,
    global: GlobalClock,
    latency: LatencyModel,
    rng: ChaCha8Rng,
}

impl Network {
    pub fn new(clocks: Vec<SimulatedClock>, latency: LatencyModel, seed: u64) -> Self {
        Self {
            clocks,
            global: GlobalClock::new(),
            latency,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.clocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clocks.is_empty()
    }

    pub fn clock(&self, node: NodeId) -> &SimulatedClock {
        &self.clocks[node]
    }

    pub fn clocks(&self) -> &[SimulatedClock] {
        &self.clocks
    }

    pub fn latency(&self) -> &LatencyModel {
        &self.latency
    }

    pub fn now(&self) -> Ticks {
        self.global.now()
    }

    /// Offsets `T_i - G` of every clock right now.
    pub fn offsets(&self) -> Vec<Ticks> {
        let g = self.now();
        self.clocks.iter().map(|c| c.read() - g).collect()
    }

    /// Moves true time and every clock forward.
    pub fn advance(&mut self, dt: Ticks) -> Result<(), ClockError> {
        self.global.advance(dt)?;
        for c in &mut self.clocks {
            c.advance(dt)?;
        }
        Ok(())
    }

    pub fn set_clock(&mut self, node: NodeId, local_time: Ticks) {
        self.clocks[node].set(local_time);
    }

    /// Samples a one-way latency from the network's own stream.
    pub fn sample_latency(&mut self, src: NodeId, dst: NodeId, payload_bits: u64) -> Ticks {
        self.latency.sample(src, dst, payload_bits, &mut self.rng)
    }

    /// Opens a request/response link. The link reads clocks ahead of the
    /// network without moving them; call [`Link::elapsed`] and advance the
    /// network afterwards.
    pub fn link(&mut self, requester: NodeId, responder: NodeId) -> Link<'_> {
        let seed = self.rng.random();
        Link {
            net: self,
            requester,
            responder,
            elapsed: Ticks::ZERO,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// A live connection between two nodes of a [`Network`].
pub struct Link<'a> {
    net: &'a Network,
    requester: NodeId,
    responder: NodeId,
    elapsed: Ticks,
    seed: u64,
    rng: ChaCha8Rng,
}

impl Link<'_> {
    /// True time consumed by this link so far.
    pub fn elapsed(&self) -> Ticks {
        self.elapsed
    }
}

impl Channel for Link<'_> {
    fn exchange(&mut self, _kind: RequestKind) -> Exchange {
        let req = &self.net.clocks[self.requester];
        let resp = &self.net.clocks[self.responder];
        let sent_at = req.read_after(self.elapsed);
        self.elapsed +=
            self.net
                .latency
                .sample(self.requester, self.responder, REQUEST_BITS, &mut self.rng);
        let peer_reading = resp.read_after(self.elapsed);
        self.elapsed +=
            self.net
                .latency
                .sample(self.responder, self.requester, READING_BITS, &mut self.rng);
        Exchange {
            sent_at,
            peer_reading,
            received_at: req.read_after(self.elapsed),
        }
    }

    fn begin_attempt(&mut self, attempt: usize) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.rng.set_stream(attempt as u64);
    }
}

/// Supplies payloads and consumes deliveries while a schedule executes.
pub trait RoundHandler {
    type Payload: Clone;
    type Error: std::error::Error + 'static;

    /// Payload for `transfer` in `round` (numbered from 1). Called for every
    /// transfer of a round before any of that round's deliveries.
    fn outgoing(&mut self, round: usize, transfer: &Transfer)
        -> Result<Self::Payload, Self::Error>;

    fn incoming(
        &mut self,
        round: usize,
        message: &Message,
        payload: &Self::Payload,
    ) -> Result<(), Self::Error>;
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError<E: std::error::Error + 'static> {
    #[error("schedule rejected")]
    InvalidSchedule(#[from] ScheduleViolation),
    #[error("handler failed in round {round} at node {node}")]
    Handler {
        round: usize,
        node: NodeId,
        #[source]
        source: E,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivery<P> {
    pub round: usize,
    pub message: Message,
    pub payload: P,
}

/// Per-node inboxes in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<P> {
    pub inboxes: Vec<Vec<Delivery<P>>>,
    pub started_at: Ticks,
    pub finished_at: Ticks,
}

impl<P> Trace<P> {
    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        self.inboxes.iter().flatten().map(|d| &d.message)
    }
}

/// Runs `schedule` round by round. Every round starts once the previous
/// round's last message has landed.
pub fn execute<H, R>(
    schedule: &CommSchedule,
    node_count: usize,
    latency: &LatencyModel,
    rng: &mut R,
    start: Ticks,
    handler: &mut H,
) -> Result<Trace<H::Payload>, ExecError<H::Error>>
where
    H: RoundHandler,
    R: Rng + ?Sized,
{
    schedule.validate(node_count)?;
    let mut inboxes: Vec<Vec<Delivery<H::Payload>>> = vec![Vec::new(); node_count];
    let mut now = start;
    for (r, round) in schedule.rounds.iter().enumerate() {
        let round_no = r + 1;
        let mut in_flight = Vec::with_capacity(round.transfers.len());
        for t in &round.transfers {
            let payload = handler
                .outgoing(round_no, t)
                .map_err(|source| ExecError::Handler {
                    round: round_no,
                    node: t.sender,
                    source,
                })?;
            let delay = latency.sample(t.sender, t.receiver, t.payload_bits, rng);
            let message = Message {
                src: t.sender,
                dst: t.receiver,
                payload_bits: t.payload_bits,
                send_time: now,
                deliver_time: now + delay,
            };
            in_flight.push((message, payload));
        }
        let mut barrier = now;
        for (message, payload) in in_flight {
            handler
                .incoming(round_no, &message, &payload)
                .map_err(|source| ExecError::Handler {
                    round: round_no,
                    node: message.dst,
                    source,
                })?;
            barrier = barrier.max(message.deliver_time);
            inboxes[message.dst].push(Delivery {
                round: round_no,
                message,
                payload,
            });
        }
        now = barrier;
    }
    Ok(Trace {
        inboxes,
        started_at: start,
        finished_at: now,
    })
}
