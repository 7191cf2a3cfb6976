use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::NodeId;

/// One directed point-to-point transfer inside a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transfer {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub payload_bits: u64,
}

impl Transfer {
    pub fn new(sender: NodeId, receiver: NodeId, payload_bits: u64) -> Self {
        Self {
            sender,
            receiver,
            payload_bits,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub transfers: Vec<Transfer>,
}

impl Round {
    pub fn new(transfers: Vec<Transfer>) -> Self {
        Self { transfers }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.transfers.iter().map(|t| (t.sender, t.receiver))
    }
}

/// Synchronous rounds of transfers. Rounds are barriers: everything sent in
/// round `r` arrives before round `r + 1` starts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommSchedule {
    pub rounds: Vec<Round>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    SendsTwice,
    ReceivesTwice,
    OutOfRange,
    SelfLoop,
}

/// The first place a schedule breaks the single-port duplex rule. Rounds are
/// numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleViolation {
    pub round: usize,
    pub node: NodeId,
    pub kind: ViolationKind,
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ViolationKind::SendsTwice => "sends more than once",
            ViolationKind::ReceivesTwice => "receives more than once",
            ViolationKind::OutOfRange => "is out of range",
            ViolationKind::SelfLoop => "sends to itself",
        };
        write!(f, "round {}: node {} {}", self.round, self.node, what)
    }
}

impl std::error::Error for ScheduleViolation {}

impl CommSchedule {
    pub fn new(rounds: Vec<Round>) -> Self {
        Self { rounds }
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn transfer_count(&self) -> usize {
        self.rounds.iter().map(|r| r.transfers.len()).sum()
    }

    /// The same transfers with every direction flipped and the round order
    /// reversed.
    pub fn reversed(&self) -> Self {
        let rounds = self
            .rounds
            .iter()
            .rev()
            .map(|r| {
                Round::new(
                    r.transfers
                        .iter()
                        .map(|t| Transfer::new(t.receiver, t.sender, t.payload_bits))
                        .collect(),
                )
            })
            .collect();
        Self { rounds }
    }

    /// Checks the single-port duplex rule: within one round every node sends
    /// at most once and receives at most once. A node may send and receive in
    /// the same round.
    pub fn validate(&self, node_count: usize) -> Result<(), ScheduleViolation> {
        let mut sending = vec![usize::MAX; node_count];
        let mut receiving = vec![usize::MAX; node_count];
        for (r, round) in self.rounds.iter().enumerate() {
            let round_no = r + 1;
            let fail = |node, kind| ScheduleViolation {
                round: round_no,
                node,
                kind,
            };
            for t in &round.transfers {
                if t.sender >= node_count {
                    return Err(fail(t.sender, ViolationKind::OutOfRange));
                }
                if t.receiver >= node_count {
                    return Err(fail(t.receiver, ViolationKind::OutOfRange));
                }
                if t.sender == t.receiver {
                    return Err(fail(t.sender, ViolationKind::SelfLoop));
                }
                if sending[t.sender] == r {
                    return Err(fail(t.sender, ViolationKind::SendsTwice));
                }
                sending[t.sender] = r;
                if receiving[t.receiver] == r {
                    return Err(fail(t.receiver, ViolationKind::ReceivesTwice));
                }
                receiving[t.receiver] = r;
            }
        }
        Ok(())
    }

    /// Writes `round,sender,receiver,payload_bits` rows, rounds numbered
    /// from 1, with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "round,sender,receiver,payload_bits")?;
        for (r, round) in self.rounds.iter().enumerate() {
            for t in &round.transfers {
                writeln!(
                    out,
                    "{},{},{},{}",
                    r + 1,
                    t.sender,
                    t.receiver,
                    t.payload_bits
                )?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}
