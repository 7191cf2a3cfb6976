//! True time and drifting local clocks.
//!
//! All time is carried as integer nanosecond [`Ticks`]. A [`SimulatedClock`]
//! runs at a constant rate `1 + frequency_error` between perturbation events,
//! so its reading is a piecewise-linear function of true time.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TICKS_PER_SECOND: i64 = 1_000_000_000;

/// Lowest frequency error a perturbation may leave behind. Keeps the clock
/// strictly increasing.
const MIN_FREQUENCY_ERROR: f64 = -0.999_999;

/// A signed duration or instant in nanoseconds.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Ticks(pub i64);

impl Ticks {
    pub const ZERO: Ticks = Ticks(0);

    pub const fn from_secs(secs: i64) -> Self {
        Ticks(secs * TICKS_PER_SECOND)
    }

    pub const fn from_millis(ms: i64) -> Self {
        Ticks(ms * 1_000_000)
    }

    pub const fn from_micros(us: i64) -> Self {
        Ticks(us * 1_000)
    }

    /// Rounds to the nearest nanosecond.
    pub fn from_secs_f64(secs: f64) -> Self {
        Ticks((secs * TICKS_PER_SECOND as f64).round() as i64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / TICKS_PER_SECOND as f64
    }

    pub fn abs(self) -> Self {
        Ticks(self.0.abs())
    }

    /// `self * factor`, rounded to the nearest tick.
    pub fn scale(self, factor: f64) -> Self {
        Ticks((self.0 as f64 * factor).round() as i64)
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }
}

impl fmt::Display for Ticks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}s", self.as_secs_f64())
    }
}

impl Add for Ticks {
    type Output = Ticks;
    fn add(self, rhs: Ticks) -> Ticks {
        Ticks(self.0 + rhs.0)
    }
}

impl Sub for Ticks {
    type Output = Ticks;
    fn sub(self, rhs: Ticks) -> Ticks {
        Ticks(self.0 - rhs.0)
    }
}

impl Neg for Ticks {
    type Output = Ticks;
    fn neg(self) -> Ticks {
        Ticks(-self.0)
    }
}

impl AddAssign for Ticks {
    fn add_assign(&mut self, rhs: Ticks) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Ticks {
    fn sub_assign(&mut self, rhs: Ticks) {
        self.0 -= rhs.0;
    }
}

impl Sum for Ticks {
    fn sum<I: Iterator<Item = Ticks>>(iter: I) -> Ticks {
        Ticks(iter.map(|t| t.0).sum())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClockError {
    #[error("cannot advance a clock by a negative step ({0})")]
    NegativeStep(Ticks),
    #[error("frequency error {0} must be greater than -1")]
    InvalidFrequency(f64),
}

/// The authoritative time `G`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GlobalClock {
    true_time: Ticks,
}

impl GlobalClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(true_time: Ticks) -> Self {
        Self { true_time }
    }

    pub fn now(&self) -> Ticks {
        self.true_time
    }

    pub fn advance(&mut self, dt: Ticks) -> Result<(), ClockError> {
        if dt.is_negative() {
            return Err(ClockError::NegativeStep(dt));
        }
        self.true_time += dt;
        Ok(())
    }
}

/// Something that knocks a clock off its course.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Disturbance {
    /// Adds to the rate offset.
    FrequencyShift(f64),
    /// Jumps the reading.
    PhaseShift(Ticks),
    /// A short power glitch: both at once.
    Burst { frequency: f64, phase: Ticks },
}

/// Random disturbance arrivals, drawn from each clock's own seeded stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceModel {
    /// Mean disturbances per true second (Poisson arrivals).
    pub rate_hz: f64,
    /// Frequency shifts are uniform on `[-max, max]`.
    pub max_frequency_shift: f64,
    /// Phase shifts are uniform on `[-max, max]`.
    pub max_phase_shift: Ticks,
}

impl DisturbanceModel {
    pub const NONE: DisturbanceModel = DisturbanceModel {
        rate_hz: 0.0,
        max_frequency_shift: 0.0,
        max_phase_shift: Ticks::ZERO,
    };

    pub fn is_none(&self) -> bool {
        self.rate_hz <= 0.0
    }
}

impl Default for DisturbanceModel {
    fn default() -> Self {
        Self::NONE
    }
}

/// A local clock with frequency and phase error.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedClock {
    id: usize,
    /// Local reading when the current constant-rate segment began.
    segment_start: Ticks,
    /// True time elapsed since the segment began.
    segment_elapsed: Ticks,
    frequency_error: f64,
    phase_offset: Ticks,
    rng_seed: u64,
    rng: ChaCha8Rng,
    /// True time until the next random disturbance, once one has been drawn.
    next_disturbance: Option<Ticks>,
}

impl SimulatedClock {
    pub fn new(
        id: usize,
        local_time: Ticks,
        frequency_error: f64,
        rng_seed: u64,
    ) -> Result<Self, ClockError> {
        if !frequency_error.is_finite() || frequency_error <= -1.0 {
            return Err(ClockError::InvalidFrequency(frequency_error));
        }
        Ok(Self {
            id,
            segment_start: local_time,
            segment_elapsed: Ticks::ZERO,
            frequency_error,
            phase_offset: Ticks::ZERO,
            rng_seed,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            next_disturbance: None,
        })
    }

    /// A drift-free clock reading `local_time`.
    pub fn ideal(id: usize, local_time: Ticks) -> Self {
        Self::new(id, local_time, 0.0, id as u64).expect("zero frequency error is valid")
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn frequency_error(&self) -> f64 {
        self.frequency_error
    }

    /// Sum of all phase perturbations applied so far.
    pub fn phase_offset(&self) -> Ticks {
        self.phase_offset
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Current local reading `T_i`.
    pub fn read(&self) -> Ticks {
        self.reading_at(self.segment_elapsed)
    }

    /// The reading this clock will show after `dt` more true time, without
    /// advancing it. Perturbations that would fire in between are ignored.
    pub fn read_after(&self, dt: Ticks) -> Ticks {
        self.reading_at(self.segment_elapsed + dt)
    }

    fn reading_at(&self, elapsed: Ticks) -> Ticks {
        self.segment_start + elapsed + elapsed.scale(self.frequency_error)
    }

    pub fn advance(&mut self, dt: Ticks) -> Result<(), ClockError> {
        if dt.is_negative() {
            return Err(ClockError::NegativeStep(dt));
        }
        self.segment_elapsed += dt;
        Ok(())
    }

    /// Advances by `dt`, applying random disturbances from `model` as they
    /// arrive.
    pub fn advance_disturbed(
        &mut self,
        dt: Ticks,
        model: &DisturbanceModel,
    ) -> Result<(), ClockError> {
        if model.is_none() {
            return self.advance(dt);
        }
        if dt.is_negative() {
            return Err(ClockError::NegativeStep(dt));
        }
        let mut remaining = dt;
        loop {
            let until_next = match self.next_disturbance {
                Some(t) => t,
                None => {
                    let t = self.draw_interarrival(model.rate_hz);
                    self.next_disturbance = Some(t);
                    t
                }
            };
            if until_next > remaining {
                self.next_disturbance = Some(until_next - remaining);
                self.segment_elapsed += remaining;
                return Ok(());
            }
            self.segment_elapsed += until_next;
            remaining -= until_next;
            self.next_disturbance = None;
            let event = self.draw_disturbance(model);
            self.perturb(event);
        }
    }

    fn draw_interarrival(&mut self, rate_hz: f64) -> Ticks {
        let exp = Exp::new(rate_hz).expect("positive rate");
        // at least one tick so a huge rate cannot stall the loop
        Ticks::from_secs_f64(exp.sample(&mut self.rng)).max(Ticks(1))
    }

    fn draw_disturbance(&mut self, model: &DisturbanceModel) -> Disturbance {
        let df = if model.max_frequency_shift > 0.0 {
            self.rng
                .random_range(-model.max_frequency_shift..=model.max_frequency_shift)
        } else {
            0.0
        };
        let max_p = model.max_phase_shift.0.abs();
        let dp = if max_p > 0 {
            Ticks(self.rng.random_range(-max_p..=max_p))
        } else {
            Ticks::ZERO
        };
        Disturbance::Burst {
            frequency: df,
            phase: dp,
        }
    }

    /// Applies a disturbance. The reading jumps by the phase delta and the
    /// new frequency holds until the next event.
    pub fn perturb(&mut self, event: Disturbance) {
        let (df, dp) = match event {
            Disturbance::FrequencyShift(df) => (df, Ticks::ZERO),
            Disturbance::PhaseShift(dp) => (0.0, dp),
            Disturbance::Burst { frequency, phase } => (frequency, phase),
        };
        if df == 0.0 && dp == Ticks::ZERO {
            return;
        }
        self.restart_segment(self.read() + dp);
        self.phase_offset += dp;
        self.frequency_error = (self.frequency_error + df).max(MIN_FREQUENCY_ERROR);
    }

    /// Overwrites the reading, e.g. after a synchronization.
    pub fn set(&mut self, local_time: Ticks) {
        self.restart_segment(local_time);
    }

    fn restart_segment(&mut self, local_time: Ticks) {
        self.segment_start = local_time;
        self.segment_elapsed = Ticks::ZERO;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clock(local: Ticks, freq: f64) -> SimulatedClock {
        SimulatedClock::new(0, local, freq, 7).unwrap()
    }

    #[test]
    fn identity_drift() {
        let mut c = clock(Ticks::ZERO, 0.0);
        c.advance(Ticks::from_secs(10)).unwrap();
        assert_eq!(c.read(), Ticks::from_secs(10));
    }

    #[test]
    fn frequency_error_scales_elapsed_time() {
        let mut c = clock(Ticks::ZERO, 0.01);
        c.advance(Ticks::from_secs(100)).unwrap();
        assert_eq!(c.read(), Ticks::from_secs(101));
    }

    #[test]
    fn negative_step_rejected() {
        let mut c = clock(Ticks::ZERO, 0.0);
        assert_eq!(
            c.advance(Ticks::from_secs(-1)),
            Err(ClockError::NegativeStep(Ticks::from_secs(-1)))
        );
        let mut g = GlobalClock::new();
        assert!(g.advance(Ticks(-1)).is_err());
    }

    #[test]
    fn invalid_frequency_rejected() {
        assert!(SimulatedClock::new(0, Ticks::ZERO, -1.0, 0).is_err());
        assert!(SimulatedClock::new(0, Ticks::ZERO, f64::NAN, 0).is_err());
    }

    #[test]
    fn phase_shift_is_additive() {
        let mut c = clock(Ticks::from_secs(100), 0.0);
        c.perturb(Disturbance::PhaseShift(Ticks::from_millis(500)));
        assert_eq!(c.read(), Ticks::from_millis(100_500));
        assert_eq!(c.phase_offset(), Ticks::from_millis(500));
    }

    #[test]
    fn frequency_shift_then_advance() {
        let mut c = clock(Ticks::ZERO, 0.0);
        c.perturb(Disturbance::FrequencyShift(0.02));
        c.advance(Ticks::from_secs(50)).unwrap();
        assert_eq!(c.read(), Ticks::from_secs(51));
    }

    #[test]
    fn zero_event_is_identity() {
        let mut c = clock(Ticks::from_secs(3), 0.001);
        c.advance(Ticks::from_secs(2)).unwrap();
        let before = c.clone();
        c.perturb(Disturbance::Burst {
            frequency: 0.0,
            phase: Ticks::ZERO,
        });
        assert_eq!(c, before);
    }

    #[test]
    fn read_examples() {
        let mut c = clock(Ticks::ZERO, 0.0);
        assert_eq!(c.read(), Ticks::ZERO);
        c.advance(Ticks::from_secs(5)).unwrap();
        assert_eq!(c.read(), Ticks::from_secs(5));
        c.perturb(Disturbance::PhaseShift(Ticks::from_secs(1)));
        assert_eq!(c.read(), Ticks::from_secs(6));
    }

    #[test]
    fn perturb_never_reaches_minus_one() {
        let mut c = clock(Ticks::ZERO, 0.0);
        c.perturb(Disturbance::FrequencyShift(-5.0));
        assert!(c.frequency_error() > -1.0);
        let before = c.read();
        c.advance(Ticks::from_secs(1)).unwrap();
        assert!(c.read() >= before);
    }

    #[test]
    fn zero_drift_tracks_global_after_sync() {
        let mut g = GlobalClock::new();
        let mut c = clock(Ticks::from_secs(-42), 0.0);
        g.advance(Ticks::from_secs(3)).unwrap();
        c.advance(Ticks::from_secs(3)).unwrap();
        c.set(g.now());
        for step in [1, 10, 1000, 7] {
            g.advance(Ticks::from_millis(step)).unwrap();
            c.advance(Ticks::from_millis(step)).unwrap();
            assert_eq!(c.read(), g.now());
        }
    }

    #[test]
    fn read_after_does_not_mutate() {
        let mut c = clock(Ticks::ZERO, 0.5);
        let peek = c.read_after(Ticks::from_secs(2));
        assert_eq!(c.read(), Ticks::ZERO);
        c.advance(Ticks::from_secs(2)).unwrap();
        assert_eq!(c.read(), peek);
    }

    #[test]
    fn disturbed_advance_is_seed_deterministic() {
        let model = DisturbanceModel {
            rate_hz: 2.0,
            max_frequency_shift: 1e-3,
            max_phase_shift: Ticks::from_millis(5),
        };
        let run = |seed| {
            let mut c = SimulatedClock::new(1, Ticks::ZERO, 1e-5, seed).unwrap();
            let mut trace = Vec::new();
            for _ in 0..100 {
                c.advance_disturbed(Ticks::from_millis(100), &model)
                    .unwrap();
                trace.push(c.read());
            }
            (trace, c.phase_offset())
        };
        let (a, pa) = run(11);
        let (b, pb) = run(11);
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        assert_ne!(pa, Ticks::ZERO, "10 s at 2 Hz should see disturbances");
        let (c, _) = run(12);
        assert_ne!(a, c);
    }
}
