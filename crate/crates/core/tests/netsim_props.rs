use std::collections::BTreeSet;
use std::convert::Infallible;

use clocksync_core::netsim::{
    execute, CommSchedule, Jitter, LatencyModel, Message, Round, RoundHandler, Transfer,
};
use clocksync_core::timebase::Ticks;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Arbitrary transfers, valid or not.
fn any_schedule() -> impl Strategy<Value = (usize, CommSchedule)> {
    (1usize..10).prop_flat_map(|n| {
        let t = (0..n + 1, 0..n + 1, 0u64..64).prop_map(|(s, r, b)| Transfer::new(s, r, b));
        let round = prop::collection::vec(t, 0..6).prop_map(Round::new);
        (
            Just(n),
            prop::collection::vec(round, 0..5).prop_map(CommSchedule::new),
        )
    })
}

/// Random perfect-ish matchings: each round pairs a permutation prefix.
fn valid_schedule() -> impl Strategy<Value = (usize, CommSchedule)> {
    (2usize..16).prop_flat_map(|n| {
        let round = (
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
            0..=n,
        )
            .prop_map(|(senders, receivers, k)| {
                Round::new(
                    senders
                        .into_iter()
                        .zip(receivers)
                        .take(k)
                        .filter(|(s, r)| s != r)
                        .map(|(s, r)| Transfer::new(s, r, 32))
                        .collect(),
                )
            });
        (
            Just(n),
            prop::collection::vec(round, 0..6).prop_map(CommSchedule::new),
        )
    })
}

fn single_port_oracle(n: usize, s: &CommSchedule) -> bool {
    s.rounds.iter().all(|round| {
        let senders: Vec<usize> = round.transfers.iter().map(|t| t.sender).collect();
        let receivers: Vec<usize> = round.transfers.iter().map(|t| t.receiver).collect();
        let distinct = |v: &[usize]| v.iter().collect::<BTreeSet<_>>().len() == v.len();
        round
            .transfers
            .iter()
            .all(|t| t.sender < n && t.receiver < n && t.sender != t.receiver)
            && distinct(&senders)
            && distinct(&receivers)
    })
}

#[derive(Default)]
struct Log {
    /// `(outgoing, round)` for every handler call, in order.
    events: Vec<(bool, usize)>,
}

impl RoundHandler for Log {
    type Payload = ();
    type Error = Infallible;

    fn outgoing(&mut self, round: usize, _: &Transfer) -> Result<(), Infallible> {
        self.events.push((true, round));
        Ok(())
    }

    fn incoming(&mut self, round: usize, _: &Message, _: &()) -> Result<(), Infallible> {
        self.events.push((false, round));
        Ok(())
    }
}

proptest! {
    #[test]
    fn validation_matches_the_rule((n, s) in any_schedule()) {
        prop_assert_eq!(s.validate(n).is_ok(), single_port_oracle(n, &s));
    }

    #[test]
    fn generated_matchings_validate((n, s) in valid_schedule()) {
        prop_assert!(single_port_oracle(n, &s));
        prop_assert!(s.validate(n).is_ok());
    }

    #[test]
    fn deliveries_respect_causality_and_barriers(
        (n, s) in valid_schedule(),
        base in 0i64..5_000_000,
        jitter in 0i64..5_000_000,
        seed in any::<u64>(),
    ) {
        let latency = LatencyModel::constant(Ticks(base)).with_jitter(Jitter::uniform(Ticks::ZERO, Ticks(jitter)));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut log = Log::default();
        let trace = execute(&s, n, &latency, &mut rng, Ticks(1000), &mut log).unwrap();

        for m in trace.messages() {
            prop_assert!(m.deliver_time >= m.send_time);
        }
        // every delivery of round r lands no later than any send of round r + 1
        let mut last_delivery = Ticks(1000);
        for r in 1..=s.len() {
            let round: Vec<&Message> = trace
                .inboxes
                .iter()
                .flatten()
                .filter(|d| d.round == r)
                .map(|d| &d.message)
                .collect();
            prop_assert_eq!(round.len(), s.rounds[r - 1].transfers.len());
            for m in &round {
                prop_assert!(m.send_time >= last_delivery);
            }
            if let Some(max) = round.iter().map(|m| m.deliver_time).max() {
                last_delivery = last_delivery.max(max);
            }
        }
        prop_assert_eq!(trace.finished_at, last_delivery);

        // the handler sees round r complete before anything of round r + 1
        let mut seen_incoming = vec![0usize; s.len() + 2];
        for &(out, r) in &log.events {
            if out {
                if r > 1 {
                    prop_assert_eq!(seen_incoming[r - 1], s.rounds[r - 2].transfers.len());
                }
                prop_assert_eq!(seen_incoming[r], 0);
            } else {
                seen_incoming[r] += 1;
            }
        }
    }
}

#[test]
fn invalid_schedule_is_not_executed() {
    let s = CommSchedule::new(vec![Round::new(vec![
        Transfer::new(0, 1, 1),
        Transfer::new(0, 2, 1),
    ])]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut log = Log::default();
    assert!(execute(
        &s,
        3,
        &LatencyModel::zero(),
        &mut rng,
        Ticks::ZERO,
        &mut log
    )
    .is_err());
    assert!(log.events.is_empty());
}
