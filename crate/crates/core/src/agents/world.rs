use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::protocol::{
    baseline_contact_sync, form_adhoc_groups, fraction_synchronized, gamma_sync,
    in_gamma_aggressive, in_gamma_passive, out_gamma_sync, update_mode, GroupLinks,
};
use super::{
    AgentClock, Circle, ConfigError, MetricsSeries, Mode, Point, Protocol, ScenarioConfig,
    ZoneState,
};
use crate::rtt::RttThresholds;
use crate::timebase::{ClockError, GlobalClock, SimulatedClock, Ticks};

const INIT_STREAM: u64 = 0;
const MOBILITY_STREAM: u64 = 1;
const PROTOCOL_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct WorldStats {
    pub gamma_syncs: usize,
    pub group_syncs: usize,
    pub adoptions: usize,
    pub contact_syncs: usize,
    pub failed_links: usize,
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Clock(#[from] ClockError),
}

/// One seeded run of a scenario under one protocol. Mobility and the initial
/// state depend only on the config and seed, so both protocols see the same
/// agents moving the same way.
#[derive(Debug, Clone)]
pub struct World {
    config: ScenarioConfig,
    protocol: Protocol,
    seed: u64,
    agents: Vec<AgentClock>,
    global: GlobalClock,
    tick: usize,
    mobility: ChaCha8Rng,
    actions: ChaCha8Rng,
    /// Pairs in range after the previous tick.
    contacts: BTreeSet<(usize, usize)>,
    thresholds: RttThresholds,
    stats: WorldStats,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn chosen(rng: &mut ChaCha8Rng, n: usize, fraction: f64) -> Vec<bool> {
    let k = ((n as f64) * fraction).round() as usize;
    let mut flags = vec![false; n];
    for i in sample(rng, n, k.min(n)) {
        flags[i] = true;
    }
    flags
}

impl World {
    pub fn new(config: ScenarioConfig, protocol: Protocol, seed: u64) -> Result<Self, WorldError> {
        config.validate()?;
        let mut init = stream(seed, INIT_STREAM);
        let n = config.agent_count;
        let authorized = if config.fenced {
            chosen(&mut init, n, config.authorized_fraction)
        } else {
            vec![true; n]
        };
        let ranging = chosen(&mut init, n, config.ranging_fraction);
        let offset_ns = (config.max_initial_offset * 1e9).round() as i64;
        let ppm = config.max_drift_ppm;
        let mut agents = Vec::with_capacity(n);
        for id in 0..n {
            let offset = Ticks(init.random_range(-offset_ns..=offset_ns));
            let freq = if ppm > 0.0 {
                init.random_range(-ppm..=ppm) * 1e-6
            } else {
                0.0
            };
            let clock = SimulatedClock::new(id, offset, freq, init.random())?;
            let mut a = AgentClock::new(id, clock, Point::default());
            a.authorized = authorized[id];
            a.ranging_capable = ranging[id];
            a.broadcast_radius = config.broadcast_radius;
            a.position = match config.restricted() {
                Some(fence) if a.authorized && config.authorized_start_inside => {
                    spot_in(fence, &mut init)
                }
                _ => random_spot(&config, a.authorized, &mut init),
            };
            a.previous_position = a.position;
            a.waypoint = next_waypoint(&config, a.authorized, &mut init);
            a.mode = if a.ranging_capable {
                Mode::Passive
            } else {
                Mode::Aggressive
            };
            agents.push(a);
        }
        let mut world = Self {
            thresholds: RttThresholds {
                samples_per_phase: config.rtt_samples,
                ..RttThresholds::default()
            },
            config,
            protocol,
            seed,
            agents,
            global: GlobalClock::new(),
            tick: 0,
            mobility: stream(seed, MOBILITY_STREAM),
            actions: stream(seed, PROTOCOL_STREAM),
            contacts: BTreeSet::new(),
            stats: WorldStats::default(),
        };
        world.refresh_zones();
        world.contacts = world.pairs_in_range();
        Ok(world)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn agents(&self) -> &[AgentClock] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [AgentClock] {
        &mut self.agents
    }

    pub fn now(&self) -> Ticks {
        self.global.now()
    }

    pub fn tick(&self) -> usize {
        self.tick
    }

    pub fn stats(&self) -> WorldStats {
        self.stats
    }

    pub fn fraction_synchronized(&self) -> f64 {
        fraction_synchronized(&self.agents, self.now(), self.config.threshold_ticks())
    }

    /// Advances one tick: clocks drift, agents move, zones are recomputed and
    /// the protocol acts.
    pub fn step(&mut self) -> Result<(), ClockError> {
        let dt = self.config.dt_ticks();
        self.global.advance(dt)?;
        for a in &mut self.agents {
            a.clock.advance_disturbed(dt, &self.config.disturbance)?;
        }
        self.move_agents();
        let before: Vec<ZoneState> = self.agents.iter().map(|a| a.state).collect();
        self.refresh_zones();
        match self.protocol {
            Protocol::Proposed => self.proposed(&before),
            Protocol::Baseline => self.baseline(),
        }
        self.tick += 1;
        Ok(())
    }

    /// Steps through the configured duration, recording after every tick.
    pub fn run(mut self, scenario: &str) -> Result<MetricsSeries, ClockError> {
        let mut series = MetricsSeries::new(scenario, self.protocol, self.seed);
        for _ in 0..self.config.ticks() {
            self.step()?;
            series.push(self.now(), self.fraction_synchronized());
        }
        Ok(series)
    }

    fn move_agents(&mut self) {
        let step = self.config.speed * self.config.dt;
        let dt = self.config.dt;
        let fence = self.config.restricted();
        for a in &mut self.agents {
            a.previous_position = a.position;
            if step <= 0.0 {
                a.velocity = Point::default();
                continue;
            }
            let to_go = a.waypoint - a.position;
            let dist = to_go.norm();
            let (mut next, arrived) = if dist <= step {
                (a.waypoint, true)
            } else {
                (a.position + to_go * (step / dist), false)
            };
            next = reflect(next, self.config.width, self.config.height);
            let blocked = !a.authorized && fence.is_some_and(|f| f.contains(next));
            if blocked {
                next = a.position;
            }
            if arrived || blocked {
                a.waypoint = next_waypoint(&self.config, a.authorized, &mut self.mobility);
            }
            a.velocity = (next - a.position) * (1.0 / dt);
            a.position = next;
        }
    }

    fn refresh_zones(&mut self) {
        let gamma = self.config.gamma;
        let fenced = self.config.fenced;
        for a in &mut self.agents {
            a.disrupted = self
                .config
                .disruptions
                .iter()
                .any(|d| d.contains(a.position));
            a.state = if gamma.contains(a.position) && (!fenced || a.authorized) {
                ZoneState::InGamma
            } else {
                ZoneState::OutGamma
            };
            update_mode(a, gamma.center);
        }
    }

    fn proposed(&mut self, before: &[ZoneState]) {
        let g = self.now();
        let th = self.config.threshold_ticks();
        for (a, &was) in self.agents.iter_mut().zip(before) {
            if a.state != ZoneState::InGamma || a.disrupted {
                continue;
            }
            if was == ZoneState::OutGamma {
                gamma_sync(a, g);
                self.stats.gamma_syncs += 1;
                continue;
            }
            match a.mode {
                Mode::Passive => {
                    if in_gamma_passive(a, g, th) {
                        self.stats.gamma_syncs += 1;
                    }
                }
                Mode::Aggressive => {
                    in_gamma_aggressive(a, g);
                    self.stats.gamma_syncs += 1;
                }
            }
        }
        let candidates: Vec<usize> = self
            .agents
            .iter()
            .filter(|a| a.state == ZoneState::OutGamma && !a.disrupted)
            .map(|a| a.id)
            .collect();
        let none_left = BTreeSet::new();
        for group in form_adhoc_groups(&self.agents, &candidates) {
            let links = GroupLinks {
                latency: self.config.link_latency,
                thresholds: self.thresholds,
                seed: self.actions.random(),
            };
            let out = out_gamma_sync(&mut self.agents, &group, &none_left, &links);
            if out.winner.is_some() {
                self.stats.group_syncs += 1;
            }
            self.stats.adoptions += out.adopted.len();
            self.stats.failed_links += out.failed_links;
        }
    }

    fn pairs_in_range(&self) -> BTreeSet<(usize, usize)> {
        let mut pairs = BTreeSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            for (j, b) in self.agents.iter().enumerate().skip(i + 1) {
                if a.position.distance(b.position) <= a.broadcast_radius.min(b.broadcast_radius) {
                    pairs.insert((i, j));
                }
            }
        }
        pairs
    }

    fn baseline(&mut self) {
        let g = self.now();
        for a in &mut self.agents {
            if a.state == ZoneState::InGamma && !a.disrupted {
                gamma_sync(a, g);
                self.stats.gamma_syncs += 1;
            }
        }
        let now = self.pairs_in_range();
        for &(i, j) in now.difference(&self.contacts) {
            let (a, b) = (&self.agents[i], &self.agents[j]);
            if a.disrupted || b.disrupted {
                continue;
            }
            // the fresher hand-me-down wins; equal lineages have nothing to add
            let (src, dst) = match a
                .lineage
                .map(|l| l.origin)
                .cmp(&b.lineage.map(|l| l.origin))
            {
                std::cmp::Ordering::Greater => (i, j),
                std::cmp::Ordering::Less => (j, i),
                std::cmp::Ordering::Equal => continue,
            };
            let source = self.agents[src].clone();
            if baseline_contact_sync(
                &source,
                &mut self.agents[dst],
                &self.config.lag,
                &mut self.actions,
            ) {
                self.stats.contact_syncs += 1;
            }
        }
        self.contacts = now;
    }
}

fn reflect(p: Point, w: f64, h: f64) -> Point {
    fn fold(v: f64, max: f64) -> f64 {
        let v = if v < 0.0 { -v } else { v };
        if v > max {
            (2.0 * max - v).max(0.0)
        } else {
            v
        }
    }
    Point::new(fold(p.x, w), fold(p.y, h))
}

/// Uniform point in the world; unauthorised agents never get one inside the
/// fence.
fn random_spot<R: Rng + ?Sized>(config: &ScenarioConfig, authorized: bool, rng: &mut R) -> Point {
    let fence = config.restricted().filter(|_| !authorized);
    loop {
        let p = Point::new(
            rng.random_range(0.0..=config.width),
            rng.random_range(0.0..=config.height),
        );
        if !fence.is_some_and(|f| f.contains(p)) {
            return p;
        }
    }
}

/// Uniform point in a disc.
fn spot_in<R: Rng + ?Sized>(c: Circle, rng: &mut R) -> Point {
    let r = c.radius * rng.random::<f64>().sqrt();
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    c.center + Point::new(r * a.cos(), r * a.sin())
}

/// Authorised agents behind a fence keep going back to it now and then.
fn next_waypoint<R: Rng + ?Sized>(config: &ScenarioConfig, authorized: bool, rng: &mut R) -> Point {
    match config.restricted() {
        Some(_) if authorized && rng.random_bool(config.authorized_return) => {
            spot_in(config.gamma, rng)
        }
        _ => random_spot(config, authorized, rng),
    }
}

/// Runs one (scenario, protocol, seed) and returns its metrics.
pub fn run_scenario(
    config: &ScenarioConfig,
    scenario: &str,
    protocol: Protocol,
    seed: u64,
) -> Result<MetricsSeries, WorldError> {
    Ok(World::new(config.clone(), protocol, seed)?.run(scenario)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{Circle, Scenario};

    fn still(config: ScenarioConfig) -> ScenarioConfig {
        ScenarioConfig {
            speed: 0.0,
            max_drift_ppm: 0.0,
            ..config
        }
    }

    #[test]
    fn frozen_world_stays_put() {
        let cfg = still(ScenarioConfig {
            agent_count: 20,
            disruptions: vec![],
            gamma: Circle::new(-100.0, -100.0, 1.0),
            ..ScenarioConfig::default()
        });
        // gamma off the map is rejected
        assert!(World::new(cfg.clone(), Protocol::Proposed, 1).is_err());
        let cfg = ScenarioConfig {
            gamma: Circle::new(1.0, 1.0, 1.0),
            broadcast_radius: 0.0,
            ..cfg
        };
        let mut w = World::new(cfg, Protocol::Proposed, 1).unwrap();
        let start: Vec<(Point, Ticks)> = w
            .agents()
            .iter()
            .filter(|a| a.state == ZoneState::OutGamma)
            .map(|a| (a.position, a.offset(w.now())))
            .collect();
        for _ in 0..100 {
            w.step().unwrap();
        }
        let end: Vec<(Point, Ticks)> = w
            .agents()
            .iter()
            .filter(|a| a.state == ZoneState::OutGamma)
            .map(|a| (a.position, a.offset(w.now())))
            .collect();
        assert_eq!(start, end);
    }

    #[test]
    fn entering_gamma_syncs_that_tick() {
        let cfg = still(ScenarioConfig {
            agent_count: 1,
            disruptions: vec![],
            ..ScenarioConfig::default()
        });
        let mut w = World::new(cfg, Protocol::Proposed, 4).unwrap();
        let a = &mut w.agents_mut()[0];
        a.position = Point::new(50.0, 34.9);
        a.waypoint = Point::new(50.0, 50.0);
        w.config.speed = 1.0;
        w.step().unwrap();
        let a = &w.agents()[0];
        assert_eq!(a.state, ZoneState::InGamma);
        assert_eq!(a.offset(w.now()), Ticks::ZERO);
        assert_eq!(a.gamma_sync_record, Some(w.now()));
    }

    #[test]
    fn unauthorized_agents_never_enter_the_fence() {
        let cfg = ScenarioConfig::scenario(Scenario::B);
        let fence = cfg.restricted().unwrap();
        let mut w = World::new(cfg, Protocol::Proposed, 9).unwrap();
        assert_eq!(w.agents().iter().filter(|a| a.authorized).count(), 10);
        for _ in 0..300 {
            w.step().unwrap();
            for a in w.agents().iter().filter(|a| !a.authorized) {
                assert!(!fence.contains(a.position));
                assert_eq!(a.gamma_syncs, 0);
            }
        }
    }

    #[test]
    fn reflection_folds_back_inside() {
        assert_eq!(
            reflect(Point::new(-1.0, 101.0), 100.0, 100.0),
            Point::new(1.0, 99.0)
        );
        assert_eq!(
            reflect(Point::new(3.0, 4.0), 100.0, 100.0),
            Point::new(3.0, 4.0)
        );
    }

    #[test]
    fn protocols_share_the_same_world() {
        let cfg = ScenarioConfig {
            duration: 2.0,
            ..ScenarioConfig::default()
        };
        let mut p = World::new(cfg.clone(), Protocol::Proposed, 5).unwrap();
        let mut b = World::new(cfg, Protocol::Baseline, 5).unwrap();
        for _ in 0..20 {
            p.step().unwrap();
            b.step().unwrap();
        }
        let pos = |w: &World| w.agents().iter().map(|a| a.position).collect::<Vec<_>>();
        assert_eq!(pos(&p), pos(&b));
    }

    #[test]
    fn zero_duration_gives_no_rows() {
        let cfg = ScenarioConfig {
            duration: 0.0,
            ..ScenarioConfig::default()
        };
        let s = run_scenario(&cfg, "A", Protocol::Baseline, 1).unwrap();
        assert!(s.records.is_empty());
    }
}
