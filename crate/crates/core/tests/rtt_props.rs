use clocksync_core::netsim::{Jitter, LatencyModel, Network};
use clocksync_core::rtt::{estimate_with_reading, RttThresholds, Threshold};
use clocksync_core::timebase::{SimulatedClock, Ticks};
use proptest::prelude::*;

fn pair(offset: i64, latency: LatencyModel, seed: u64) -> Network {
    let clocks = vec![
        SimulatedClock::ideal(0, Ticks::ZERO),
        SimulatedClock::ideal(1, Ticks(offset)),
    ];
    Network::new(clocks, latency, seed)
}

proptest! {
    #[test]
    fn symmetric_channel_is_exact(
        l in 0i64..100_000_000,
        offset in -1_000_000_000_000i64..1_000_000_000_000,
        seed in any::<u64>(),
    ) {
        let mut net = pair(offset, LatencyModel::constant(Ticks(l)), seed);
        let r = estimate_with_reading(&mut net.link(0, 1), &RttThresholds::default()).unwrap();
        prop_assert_eq!(r.estimate.mean, Ticks(2 * l));
        prop_assert_eq!(r.estimate.stddev, Ticks::ZERO);
        // the peer's clock at the moment the reading arrived
        prop_assert_eq!(r.corrected(), r.received_at + Ticks(offset));
    }

    #[test]
    fn round_trips_ignore_the_peer_clock(
        l in 1i64..10_000_000,
        jitter in 0i64..100_000,
        a in -1_000_000_000_000i64..1_000_000_000_000,
        b in -1_000_000_000_000i64..1_000_000_000_000,
        seed in any::<u64>(),
    ) {
        let latency = LatencyModel::constant(Ticks(l)).with_jitter(Jitter::uniform(Ticks::ZERO, Ticks(jitter)));
        let thresholds = RttThresholds::default().loosened(100.0);
        let ra = estimate_with_reading(&mut pair(a, latency, seed).link(0, 1), &thresholds).unwrap();
        let rb = estimate_with_reading(&mut pair(b, latency, seed).link(0, 1), &thresholds).unwrap();
        prop_assert_eq!(ra.estimate, rb.estimate);
        prop_assert_eq!(ra.received_at, rb.received_at);
        prop_assert_eq!(ra.reading - Ticks(a), rb.reading - Ticks(b));
    }

    #[test]
    fn loosening_never_rejects(
        l in 1i64..5_000_000,
        jitter in 0i64..5_000_000,
        ppm in -200.0f64..200.0,
        sigma in 0.01f64..0.5,
        diff in 0.005f64..0.2,
        factor in 1.0f64..10.0,
        samples in 2usize..20,
        attempts in 1usize..8,
        seed in any::<u64>(),
    ) {
        let clocks = vec![
            SimulatedClock::new(0, Ticks::ZERO, ppm * 1e-6, 1).unwrap(),
            SimulatedClock::new(1, Ticks(777), -ppm * 1e-6, 2).unwrap(),
        ];
        let latency = LatencyModel::constant(Ticks(l)).with_jitter(Jitter::uniform(Ticks::ZERO, Ticks(jitter)));
        let net = Network::new(clocks, latency, seed);
        let strict = RttThresholds {
            sigma_max: Threshold::RelativeToMean(sigma),
            mean_diff_max: Threshold::RelativeToMean(diff),
            sigma_diff_max: Threshold::RelativeToMean(diff),
            samples_per_phase: samples,
            max_attempts: attempts,
        };
        let loose = strict.loosened(factor);
        if let Ok(s) = estimate_with_reading(&mut net.clone().link(0, 1), &strict) {
            let l = estimate_with_reading(&mut net.clone().link(0, 1), &loose);
            prop_assert!(l.is_ok());
            prop_assert!(l.unwrap().attempts <= s.attempts);
        }
    }
}
