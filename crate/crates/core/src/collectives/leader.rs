use std::fmt;

use serde::{Deserialize, Serialize};

use super::CollectiveError;
use crate::rtt::TimeReading;
use crate::timebase::{Ticks, TICKS_PER_SECOND};

/// An exact rational number of ticks.
///
/// Averages are kept as `numerator / denominator` so that different
/// summation orders can be compared bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TickMean {
    numerator: i128,
    denominator: i128,
}

impl TickMean {
    pub fn new(numerator: i128, denominator: i128) -> Self {
        assert!(denominator > 0, "mean needs a positive denominator");
        Self {
            numerator,
            denominator,
        }
    }

    pub fn whole(t: Ticks) -> Self {
        Self::new(t.0 as i128, 1)
    }

    pub fn numerator(&self) -> i128 {
        self.numerator
    }

    pub fn denominator(&self) -> i128 {
        self.denominator
    }

    pub fn floor(&self) -> Ticks {
        Ticks(self.numerator.div_euclid(self.denominator) as i64)
    }

    /// Nearest tick, halves rounded up. Shifting by a whole number of ticks
    /// commutes with this rounding.
    pub fn round(&self) -> Ticks {
        Ticks((2 * self.numerator + self.denominator).div_euclid(2 * self.denominator) as i64)
    }

    /// Remainder of the floor division, in `[0, denominator)`.
    pub fn remainder(&self) -> i128 {
        self.numerator.rem_euclid(self.denominator)
    }

    pub fn as_secs_f64(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64 / TICKS_PER_SECOND as f64
    }

    pub fn shifted(&self, by: Ticks) -> Self {
        Self::new(
            self.numerator + by.0 as i128 * self.denominator,
            self.denominator,
        )
    }

    /// Value equality across different denominators.
    pub fn same_value(&self, other: &TickMean) -> bool {
        self.numerator * other.denominator == other.numerator * self.denominator
    }

    /// `|self - other|` in (fractional) ticks.
    pub fn distance(&self, other: &TickMean) -> f64 {
        let num = self.numerator * other.denominator - other.numerator * self.denominator;
        (num as f64 / (self.denominator * other.denominator) as f64).abs()
    }
}

impl fmt::Display for TickMean {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}s", self.as_secs_f64())
    }
}

/// What the leader knows about one peer after collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerRecord {
    /// `T_i` as sent by the peer.
    pub reading: Ticks,
    /// `T_{0,i}`: leader clock when the reading arrived.
    pub received_at: Ticks,
    /// `s_{0,i}`: leader clock when the request left.
    pub requested_at: Ticks,
    /// `<RTT_{0,i}>`, when it was measured.
    pub rtt_mean: Option<Ticks>,
}

impl From<&TimeReading> for PeerRecord {
    fn from(r: &TimeReading) -> Self {
        Self {
            reading: r.reading,
            received_at: r.received_at,
            requested_at: r.requested_at,
            rtt_mean: Some(r.estimate.mean),
        }
    }
}

/// Everything the leader (node 0) holds when it computes the average. All
/// timestamps are on the leader's clock. Peer `i` lives at `peers[i - 1]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderCollection {
    /// `T_0`, read when the average is computed.
    pub leader_time: Ticks,
    pub peers: Vec<PeerRecord>,
    /// `T_{0,c}`: time spent computing the average.
    pub compute_cost: Ticks,
    /// `D_{0,j}`: elapsed time of distribution hop `j`, at `send_delays[j - 1]`.
    pub send_delays: Vec<Ticks>,
}

impl LeaderCollection {
    pub fn new(leader_time: Ticks, peers: Vec<PeerRecord>) -> Self {
        Self {
            leader_time,
            peers,
            ..Self::default()
        }
    }

    /// `N`, the leader included.
    pub fn node_count(&self) -> usize {
        self.peers.len() + 1
    }
}

/// `(1/N)(N T_0 + sum T_i - sum T_{0,i})`, accumulated as two running sums.
pub fn leader_average(c: &LeaderCollection) -> TickMean {
    let n = c.node_count() as i128;
    let mut readings: i128 = 0;
    let mut stamps: i128 = 0;
    for p in &c.peers {
        readings += p.reading.0 as i128;
        stamps += p.received_at.0 as i128;
    }
    TickMean::new(n * c.leader_time.0 as i128 + readings - stamps, n)
}

/// Same average, one aged reading `T_0 + (T_i - T_{0,i})` at a time.
pub fn leader_average_per_peer(c: &LeaderCollection) -> TickMean {
    let n = c.node_count() as i128;
    let t0 = c.leader_time.0 as i128;
    let total = c.peers.iter().fold(t0, |acc, p| {
        acc + t0 + (p.reading.0 as i128 - p.received_at.0 as i128)
    });
    TickMean::new(total, n)
}

/// The average with every reading advanced by half its round trip:
/// `(1/N)(N T_0 + sum T_i + 1/2 sum <RTT_{0,i}> - sum T_{0,i})`.
pub fn leader_average_rtt(c: &LeaderCollection) -> Result<TickMean, CollectiveError> {
    let n = c.node_count() as i128;
    let mut readings: i128 = 0;
    let mut stamps: i128 = 0;
    let mut rtts: i128 = 0;
    for (i, p) in c.peers.iter().enumerate() {
        let rtt = p
            .rtt_mean
            .ok_or(CollectiveError::MissingRtt { peer: i + 1 })?;
        readings += p.reading.0 as i128;
        stamps += p.received_at.0 as i128;
        rtts += rtt.0 as i128;
    }
    let whole = n * c.leader_time.0 as i128 + readings - stamps;
    Ok(TickMean::new(2 * whole + rtts, 2 * n))
}

/// Value sent to peer `i` (1-based): the mean plus computation time plus the
/// delays of every hop completed before it. Missing delays count as zero.
pub fn distribution_value(mean: Ticks, c: &LeaderCollection, peer: usize) -> Ticks {
    let earlier: Ticks = c
        .send_delays
        .iter()
        .take(peer.saturating_sub(1))
        .copied()
        .sum();
    mean + c.compute_cost + earlier
}

pub fn leader_distribute_values(mean: Ticks, c: &LeaderCollection) -> Vec<Ticks> {
    (1..c.node_count())
        .map(|i| distribution_value(mean, c, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peer(reading: i64, received_at: i64) -> PeerRecord {
        PeerRecord {
            reading: Ticks(reading),
            received_at: Ticks(received_at),
            requested_at: Ticks(received_at),
            rtt_mean: None,
        }
    }

    fn three_clocks() -> LeaderCollection {
        LeaderCollection::new(Ticks(100), vec![peer(90, 98), peer(110, 99)])
    }

    #[test]
    fn three_clock_average() {
        let m = leader_average(&three_clocks());
        // (1/3)(300 + (90 - 98) + (110 - 99)) = 303 / 3
        assert_eq!(m, TickMean::new(303, 3));
        assert_eq!(m.round(), Ticks(101));
        assert_eq!(m.remainder(), 0);
        assert_eq!(leader_average_per_peer(&three_clocks()), m);
    }

    #[test]
    fn synchronized_clocks_average_to_leader_time() {
        let c = LeaderCollection::new(Ticks(500), vec![peer(500, 500); 6]);
        assert_eq!(leader_average(&c).round(), Ticks(500));
    }

    #[test]
    fn lone_leader() {
        let c = LeaderCollection::new(Ticks(42), vec![]);
        assert_eq!(leader_average(&c), TickMean::new(42, 1));
        assert_eq!(leader_average_rtt(&c).unwrap().round(), Ticks(42));
        assert!(leader_distribute_values(Ticks(42), &c).is_empty());
    }

    #[test]
    fn rtt_corrected_average() {
        let mut c = three_clocks();
        for p in &mut c.peers {
            p.rtt_mean = Some(Ticks(2));
        }
        let m = leader_average_rtt(&c).unwrap();
        // (1/3)(303 + 0.5 * 4) = 305 / 3
        assert!(m.same_value(&TickMean::new(305, 3)));
        assert!((m.numerator() as f64 / m.denominator() as f64 - 101.666_666).abs() < 1e-5);
    }

    #[test]
    fn zero_rtt_reduces_to_plain_average() {
        let mut c = three_clocks();
        for p in &mut c.peers {
            p.rtt_mean = Some(Ticks::ZERO);
        }
        assert!(leader_average_rtt(&c)
            .unwrap()
            .same_value(&leader_average(&c)));
    }

    #[test]
    fn missing_rtt_names_the_peer() {
        let mut c = three_clocks();
        c.peers[0].rtt_mean = Some(Ticks(1));
        assert_eq!(
            leader_average_rtt(&c),
            Err(CollectiveError::MissingRtt { peer: 2 })
        );
    }

    #[test]
    fn distribution_accumulates_hop_delays() {
        let mut c = LeaderCollection::new(Ticks::ZERO, vec![peer(0, 0); 3]);
        assert_eq!(leader_distribute_values(Ticks(10), &c), vec![Ticks(10); 3]);
        c.compute_cost = Ticks(1);
        c.send_delays = vec![Ticks(2), Ticks(4)];
        assert_eq!(
            leader_distribute_values(Ticks(10), &c),
            vec![Ticks(11), Ticks(13), Ticks(17)]
        );
        let pair = LeaderCollection {
            compute_cost: Ticks(3),
            ..LeaderCollection::new(Ticks::ZERO, vec![peer(0, 0)])
        };
        assert_eq!(leader_distribute_values(Ticks(10), &pair), vec![Ticks(13)]);
    }

    #[test]
    fn rounding_is_shift_invariant() {
        for num in -20i128..20 {
            let m = TickMean::new(num, 4);
            assert_eq!(m.shifted(Ticks(7)).round(), m.round() + Ticks(7));
        }
        assert_eq!(TickMean::new(5, 2).round(), Ticks(3));
        assert_eq!(TickMean::new(-5, 2).round(), Ticks(-2));
    }
}
