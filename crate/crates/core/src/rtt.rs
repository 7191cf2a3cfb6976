//! Statistically validated round-trip-time estimation around a time query.
//!
//! The requester measures a batch of probe round trips, reads the peer's time
//! only while the link looks stable, then measures a second batch and accepts
//! the reading if both batches agree. Every sample is a difference of two
//! readings of the requester's own clock.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::{Channel, Exchange, RequestKind};
use crate::timebase::Ticks;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RttEstimate {
    /// Mean round trip, rounded to the nearest tick.
    pub mean: Ticks,
    /// Sample standard deviation (`j - 1` denominator).
    pub stddev: Ticks,
    pub samples: usize,
}

/// A limit that is either fixed or a fraction of the first batch's mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Absolute(Ticks),
    RelativeToMean(f64),
}

impl Threshold {
    fn resolve(&self, mean_ns: f64) -> f64 {
        match *self {
            Threshold::Absolute(t) => t.0 as f64,
            Threshold::RelativeToMean(frac) => frac * mean_ns,
        }
    }

    fn is_positive(&self) -> bool {
        match *self {
            Threshold::Absolute(t) => t > Ticks::ZERO,
            Threshold::RelativeToMean(f) => f > 0.0 && f.is_finite(),
        }
    }

    fn scaled(&self, factor: f64) -> Threshold {
        match *self {
            Threshold::Absolute(t) => Threshold::Absolute(t.scale(factor)),
            Threshold::RelativeToMean(f) => Threshold::RelativeToMean(f * factor),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RttThresholds {
    /// Largest acceptable standard deviation of the first batch.
    pub sigma_max: Threshold,
    /// Largest acceptable gap between the two batch means.
    pub mean_diff_max: Threshold,
    /// Largest acceptable gap between the two batch deviations.
    pub sigma_diff_max: Threshold,
    pub samples_per_phase: usize,
    pub max_attempts: usize,
}

impl Default for RttThresholds {
    fn default() -> Self {
        Self {
            sigma_max: Threshold::RelativeToMean(0.10),
            mean_diff_max: Threshold::RelativeToMean(0.05),
            sigma_diff_max: Threshold::RelativeToMean(0.05),
            samples_per_phase: 30,
            max_attempts: 16,
        }
    }
}

impl RttThresholds {
    pub fn validate(&self) -> Result<(), RttError> {
        let ok = self.sigma_max.is_positive()
            && self.mean_diff_max.is_positive()
            && self.sigma_diff_max.is_positive()
            && self.samples_per_phase >= 1
            && self.max_attempts >= 1;
        if ok {
            Ok(())
        } else {
            Err(RttError::InvalidThresholds)
        }
    }

    /// Every limit multiplied by `factor`.
    pub fn loosened(&self, factor: f64) -> Self {
        Self {
            sigma_max: self.sigma_max.scaled(factor),
            mean_diff_max: self.mean_diff_max.scaled(factor),
            sigma_diff_max: self.sigma_diff_max.scaled(factor),
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RttError {
    #[error("rtt thresholds must be positive with at least one sample and one attempt")]
    InvalidThresholds,
    #[error("channel never stabilised in {attempts} attempts (last sigma {last_sigma})")]
    UnstableChannel { attempts: usize, last_sigma: Ticks },
}

/// A peer reading accepted by [`estimate_with_reading`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeReading {
    /// The peer's raw reading `T_i`.
    pub reading: Ticks,
    /// `s_{0,i}` on the requester's clock.
    pub requested_at: Ticks,
    /// `T_{0,i}` on the requester's clock.
    pub received_at: Ticks,
    /// Statistics of the first batch.
    pub estimate: RttEstimate,
    pub attempts: usize,
}

impl TimeReading {
    pub fn corrected(&self) -> Ticks {
        correct_reading(self.reading, &self.estimate)
    }

    /// Twice the peer's offset from the requester at receipt,
    /// `2 T_i + <RTT> - 2 T_{0,i}`. Doubling keeps the half-RTT exact.
    pub fn doubled_offset(&self) -> i128 {
        2 * self.reading.0 as i128 + self.estimate.mean.0 as i128 - 2 * self.received_at.0 as i128
    }
}

/// `reading + mean / 2`, with the half rounded toward negative infinity.
pub fn correct_reading(reading: Ticks, estimate: &RttEstimate) -> Ticks {
    reading + Ticks(estimate.mean.0.div_euclid(2))
}

struct Batch {
    mean_ns: f64,
    sigma_ns: f64,
    estimate: RttEstimate,
}

fn measure<C: Channel + ?Sized>(channel: &mut C, samples: usize) -> Batch {
    let rtts: Vec<i64> = (0..samples)
        .map(|_| channel.exchange(RequestKind::Probe).round_trip().0)
        .collect();
    summarize(&rtts)
}

fn summarize(rtts: &[i64]) -> Batch {
    let n = rtts.len() as i128;
    let total: i128 = rtts.iter().map(|&x| x as i128).sum();
    let mean_ns = total as f64 / n as f64;
    let sigma_ns = if rtts.len() > 1 {
        let ss: f64 = rtts.iter().map(|&x| (x as f64 - mean_ns).powi(2)).sum();
        (ss / (rtts.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Batch {
        mean_ns,
        sigma_ns,
        estimate: RttEstimate {
            mean: Ticks((2 * total + n).div_euclid(2 * n) as i64),
            stddev: Ticks(sigma_ns.round() as i64),
            samples: rtts.len(),
        },
    }
}

/// Reads the peer's time through `channel`, bracketed by two batches of RTT
/// probes. Returns the reading together with the first batch's statistics.
pub fn estimate_with_reading<C: Channel + ?Sized>(
    channel: &mut C,
    thresholds: &RttThresholds,
) -> Result<TimeReading, RttError> {
    thresholds.validate()?;
    let j = thresholds.samples_per_phase;
    let mut last_sigma = 0.0;
    for attempt in 1..=thresholds.max_attempts {
        channel.begin_attempt(attempt);
        let a = measure(channel, j);
        last_sigma = a.sigma_ns;
        if a.sigma_ns > thresholds.sigma_max.resolve(a.mean_ns) {
            continue;
        }
        let Exchange {
            sent_at,
            peer_reading,
            received_at,
        } = channel.exchange(RequestKind::ReadTime);
        let b = measure(channel, j);
        let mean_ok = (a.mean_ns - b.mean_ns).abs() <= thresholds.mean_diff_max.resolve(a.mean_ns);
        let sigma_ok =
            (a.sigma_ns - b.sigma_ns).abs() <= thresholds.sigma_diff_max.resolve(a.mean_ns);
        if mean_ok && sigma_ok {
            return Ok(TimeReading {
                reading: peer_reading,
                requested_at: sent_at,
                received_at,
                estimate: a.estimate,
                attempts: attempt,
            });
        }
    }
    Err(RttError::UnstableChannel {
        attempts: thresholds.max_attempts,
        last_sigma: Ticks(last_sigma.round() as i64),
    })
}
