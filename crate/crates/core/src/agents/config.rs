use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::{Circle, Point};
use crate::netsim::{Jitter, LatencyModel};
use crate::timebase::{DisturbanceModel, Ticks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    A,
    B,
    C,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::A, Scenario::B, Scenario::C];
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::A => "A",
            Scenario::B => "B",
            Scenario::C => "C",
        })
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "A" | "a" => Ok(Scenario::A),
            "B" | "b" => Ok(Scenario::B),
            "C" | "c" => Ok(Scenario::C),
            other => Err(format!("unknown scenario `{other}` (expected A, B or C)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Γ modes plus shift-max within ad hoc groups.
    Proposed,
    /// Word of mouth between agents that meet.
    Baseline,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::Proposed, Protocol::Baseline];
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Proposed => "proposed",
            Protocol::Baseline => "baseline",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "proposed" => Ok(Protocol::Proposed),
            "baseline" => Ok(Protocol::Baseline),
            other => Err(format!(
                "unknown protocol `{other}` (expected proposed or baseline)"
            )),
        }
    }
}

/// Delay a person adds when passing the time on by hand: reading the
/// source, then setting their own clock. Each part is uniform on `[min, max]`
/// seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LagModel {
    pub query_min: f64,
    pub query_max: f64,
    pub reset_min: f64,
    pub reset_max: f64,
}

impl LagModel {
    pub const ZERO: LagModel = LagModel::fixed(0.0);

    /// Exactly `lag` seconds for each part, `2 * lag` per hop.
    pub const fn fixed(lag: f64) -> Self {
        Self {
            query_min: lag,
            query_max: lag,
            reset_min: lag,
            reset_max: lag,
        }
    }
}

impl Default for LagModel {
    fn default() -> Self {
        Self {
            query_min: 0.0,
            query_max: 0.5,
            reset_min: 0.0,
            reset_max: 0.5,
        }
    }
}

/// Everything that defines one scenario run except the seed and protocol.
/// Lengths are metres, times seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub width: f64,
    pub height: f64,
    pub gamma: Circle,
    pub fenced: bool,
    /// Radius of the fence around Γ, at least the Γ radius.
    pub fence_radius: f64,
    pub authorized_fraction: f64,
    /// Authorised agents start inside the fence.
    pub authorized_start_inside: bool,
    /// Chance that an authorised agent's next waypoint is back inside the
    /// fence.
    pub authorized_return: f64,
    pub disruptions: Vec<Circle>,
    pub agent_count: usize,
    pub speed: f64,
    pub broadcast_radius: f64,
    pub ranging_fraction: f64,
    pub threshold: f64,
    pub dt: f64,
    pub duration: f64,
    pub max_initial_offset: f64,
    pub max_drift_ppm: f64,
    pub disturbance: DisturbanceModel,
    /// One-way delay of agent-to-agent radio messages.
    pub link_latency: LatencyModel,
    /// Probes per phase of each RTT estimate inside a group.
    pub rtt_samples: usize,
    pub lag: LagModel,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::scenario(Scenario::A)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("`{field}` must be {expected}, got {value}")]
    OutOfRange {
        field: &'static str,
        expected: &'static str,
        value: f64,
    },
    #[error("{what} at ({x}, {y}) radius {r} does not fit in the {w} x {h} world")]
    OutsideWorld {
        what: String,
        x: f64,
        y: f64,
        r: f64,
        w: f64,
        h: f64,
    },
}

fn check(
    field: &'static str,
    value: f64,
    ok: bool,
    expected: &'static str,
) -> Result<(), ConfigError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange {
            field,
            expected,
            value,
        })
    }
}

impl ScenarioConfig {
    pub fn scenario(which: Scenario) -> Self {
        let mut c = Self {
            width: 100.0,
            height: 100.0,
            gamma: Circle::new(50.0, 50.0, 15.0),
            fenced: false,
            fence_radius: 17.0,
            authorized_fraction: 0.1,
            authorized_start_inside: true,
            authorized_return: 0.5,
            disruptions: vec![
                Circle::new(76.0, 65.0, 10.0),
                Circle::new(24.0, 65.0, 10.0),
                Circle::new(50.0, 20.0, 10.0),
            ],
            agent_count: 100,
            speed: 1.5,
            broadcast_radius: 8.0,
            ranging_fraction: 0.5,
            threshold: 0.5,
            dt: 0.1,
            duration: 30.0,
            max_initial_offset: 60.0,
            max_drift_ppm: 100.0,
            disturbance: DisturbanceModel::NONE,
            link_latency: LatencyModel::constant(Ticks::from_millis(1))
                .with_per_bit(Ticks::from_micros(1))
                .with_jitter(Jitter::uniform(Ticks::ZERO, Ticks::from_micros(500))),
            rtt_samples: 8,
            lag: LagModel::default(),
        };
        match which {
            Scenario::A => {}
            Scenario::B => {
                c.fenced = true;
                c.gamma = Circle::new(80.0, 20.0, 15.0);
            }
            Scenario::C => {
                c.fenced = true;
                // centres 27 m out: touching the fence from outside
                let d = c.fence_radius + 10.0;
                c.disruptions = [90.0f64, 210.0, 330.0]
                    .iter()
                    .map(|deg| {
                        let a = deg.to_radians();
                        let p = Point::new(50.0 + d * a.cos(), 50.0 + d * a.sin());
                        Circle::new(p.x, p.y, 10.0)
                    })
                    .collect();
            }
        }
        c
    }

    pub fn ticks(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn dt_ticks(&self) -> Ticks {
        Ticks::from_secs_f64(self.dt)
    }

    pub fn threshold_ticks(&self) -> Ticks {
        Ticks::from_secs_f64(self.threshold)
    }

    /// Outer edge of the area only authorised agents may enter.
    pub fn restricted(&self) -> Option<Circle> {
        self.fenced
            .then(|| Circle::new(self.gamma.center.x, self.gamma.center.y, self.fence_radius))
    }

    fn fits(&self, what: String, c: &Circle) -> Result<(), ConfigError> {
        let inside = c.center.x - c.radius >= 0.0
            && c.center.x + c.radius <= self.width
            && c.center.y - c.radius >= 0.0
            && c.center.y + c.radius <= self.height;
        if inside {
            Ok(())
        } else {
            Err(ConfigError::OutsideWorld {
                what,
                x: c.center.x,
                y: c.center.y,
                r: c.radius,
                w: self.width,
                h: self.height,
            })
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        check("width", self.width, self.width > 0.0, "positive")?;
        check("height", self.height, self.height > 0.0, "positive")?;
        check(
            "gamma.radius",
            self.gamma.radius,
            self.gamma.radius > 0.0,
            "positive",
        )?;
        check(
            "threshold",
            self.threshold,
            self.threshold > 0.0,
            "positive",
        )?;
        check("dt", self.dt, self.dt > 0.0, "positive")?;
        check(
            "duration",
            self.duration,
            self.duration >= 0.0,
            "non-negative",
        )?;
        check("speed", self.speed, self.speed >= 0.0, "non-negative")?;
        check(
            "broadcast_radius",
            self.broadcast_radius,
            self.broadcast_radius >= 0.0,
            "non-negative",
        )?;
        for (field, v) in [
            ("authorized_fraction", self.authorized_fraction),
            ("authorized_return", self.authorized_return),
            ("ranging_fraction", self.ranging_fraction),
        ] {
            check(field, v, (0.0..=1.0).contains(&v), "in [0, 1]")?;
        }
        check(
            "max_initial_offset",
            self.max_initial_offset,
            self.max_initial_offset >= 0.0,
            "non-negative",
        )?;
        check(
            "max_drift_ppm",
            self.max_drift_ppm,
            (0.0..1e6).contains(&self.max_drift_ppm),
            "in [0, 1e6)",
        )?;
        check(
            "rtt_samples",
            self.rtt_samples as f64,
            self.rtt_samples >= 1,
            "at least 1",
        )?;
        let lag = &self.lag;
        for (field, lo, hi) in [
            ("lag.query_max", lag.query_min, lag.query_max),
            ("lag.reset_max", lag.reset_min, lag.reset_max),
        ] {
            check(
                field,
                hi,
                lo >= 0.0 && hi >= lo,
                "at least the matching minimum",
            )?;
        }
        if self.fenced {
            check(
                "fence_radius",
                self.fence_radius,
                self.fence_radius >= self.gamma.radius,
                "at least the gamma radius",
            )?;
        }
        self.fits("gamma area".into(), &self.gamma)?;
        for (i, d) in self.disruptions.iter().enumerate() {
            check(
                "disruptions.radius",
                d.radius,
                d.radius >= 0.0,
                "non-negative",
            )?;
            self.fits(format!("disruption area {}", i + 1), d)?;
        }
        Ok(())
    }
}
