//! Synthetic cooperative scenarios.
//!
//! Generation is two-staged: [`World::sample`] draws the agents (routes,
//! speeds, sizes), the sensors and their occlusion sectors; [`World::observe`]
//! renders every view's noisy, range-limited, occlusion-masked tracks. Tests
//! build fixtures by editing a sampled world before observing it.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::map::{intersection_map, route_path, LanePath, Maneuver, MapSpec, Route};
use super::{AgentTrack, AgentType, BBox, ObservedState, Scenario, TrackRef, Truth, View, ViewKind};
use crate::error::{Error, Result};
use crate::geometry::{angle_of, heading_from_angle, rotate_into_frame, Vec2};
use crate::rng::Rng;

/// Occluded gaps at least this long split a track into two.
const SPLIT_GAP: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    /// Agents in the world, including the ones carrying vehicle sensors.
    pub n_agents: usize,
    /// Ego, then infrastructure, then `n_views - 2` other vehicles.
    pub n_views: usize,
    pub map: MapSpec,
    /// Per-axis position noise in metres; samples are clipped to `6 sigma`.
    pub noise_sigma: f64,
    /// Random occlusion sectors drawn per view.
    pub occlusion_sectors: usize,
    pub detection_range: f64,
    /// Independent per-frame probability of a missed detection.
    pub fragmentation_prob: f64,
    /// Probability that an agent turns at the intersection.
    pub turn_prob: f64,
    /// Probability that an agent accelerates or brakes.
    pub accel_prob: f64,
    pub dt: f64,
    pub t_obs: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_agents: 10,
            n_views: 3,
            map: MapSpec::default(),
            noise_sigma: 0.15,
            occlusion_sectors: 2,
            detection_range: 70.0,
            fragmentation_prob: 0.02,
            turn_prob: 0.5,
            accel_prob: 0.3,
            dt: 0.1,
            t_obs: 40,
            horizon: 40,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field, constraint: &str| {
            Err(Error::Config {
                field,
                constraint: constraint.to_string(),
            })
        };
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.n_views < 1 {
            return fail("n_views", ">= 1");
        }
        if self.n_agents < 1 || self.n_agents < self.n_views {
            return fail("n_agents", ">= 1 and >= n_views");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail("noise_sigma", ">= 0");
        }
        if !(self.detection_range > 0.0) {
            return fail("detection_range", "> 0");
        }
        if !prob(self.fragmentation_prob) {
            return fail("fragmentation_prob", "in [0, 1]");
        }
        if !prob(self.turn_prob) {
            return fail("turn_prob", "in [0, 1]");
        }
        if !prob(self.accel_prob) {
            return fail("accel_prob", "in [0, 1]");
        }
        if !(self.dt > 0.0) {
            return fail("dt", "> 0");
        }
        if self.t_obs < 2 {
            return fail("t_obs", ">= 2");
        }
        if self.horizon < 2 {
            return fail("horizon", ">= 2");
        }
        let m = &self.map;
        if !(m.lane_width > 0.0 && m.sample_step > 0.0 && m.arm_length > m.box_half() + m.sample_step) {
            return fail(
                "map",
                "lane_width > 0, sample_step > 0, arm_length > 3 * lane_width + sample_step",
            );
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        self.t_obs + self.horizon
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldAgent {
    pub agent_type: AgentType,
    pub length: f64,
    pub width: f64,
    pub path: LanePath,
    /// Arc length along the path at step 0.
    pub s0: f64,
    pub v0: f64,
    /// Longitudinal acceleration; speed never drops below `min(v0, 0.5)`.
    pub accel: f64,
}

impl WorldAgent {
    fn travelled(&self, tau: f64) -> (f64, f64) {
        let floor = self.v0.min(0.5);
        if self.accel < 0.0 {
            let t_floor = (self.v0 - floor) / -self.accel;
            if tau > t_floor {
                let s = self.v0 * t_floor + 0.5 * self.accel * t_floor * t_floor;
                return (s + floor * (tau - t_floor), floor);
            }
        }
        (self.v0 * tau + 0.5 * self.accel * tau * tau, self.v0 + self.accel * tau)
    }

    /// Exact (position, heading, speed) at step `t`.
    pub fn state(&self, t: usize, dt: f64) -> (Vec2, Vec2, f64) {
        let (ds, v) = self.travelled(t as f64 * dt);
        let (p, h) = self.path.pose(self.s0 + ds);
        (p, h, v)
    }
}

/// An angular blind zone in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    /// Centre bearing, radians, relative to the sensor heading.
    pub bearing: f64,
    pub half_width: f64,
    /// Objects closer than this are never occluded.
    pub min_range: f64,
}

impl Sector {
    fn covers(&self, rel: Vec2) -> bool {
        if rel.norm() < self.min_range {
            return false;
        }
        let mut d = angle_of(rel) - self.bearing;
        while d > PI {
            d -= 2.0 * PI;
        }
        while d < -PI {
            d += 2.0 * PI;
        }
        d.abs() <= self.half_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sensor {
    /// Mounted on the agent with this index.
    Agent(usize),
    Fixed {
        position: Vec2,
        heading: Vec2,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorView {
    pub kind: ViewKind,
    pub sensor: Sensor,
    pub sectors: Vec<Sector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub agents: Vec<WorldAgent>,
    pub views: Vec<SensorView>,
}

fn type_profile(t: AgentType) -> (f64, f64, f64, f64) {
    // (length, width, min speed, max speed)
    match t {
        AgentType::Car => (4.5, 1.9, 6.0, 11.0),
        AgentType::Van => (5.0, 2.0, 6.0, 10.0),
        AgentType::Truck => (8.0, 2.5, 5.0, 9.0),
        AgentType::Bus => (11.0, 2.6, 5.0, 8.0),
        AgentType::Motorcyclist => (2.0, 0.8, 6.0, 11.0),
        AgentType::Cyclist => (1.8, 0.6, 3.0, 6.0),
        AgentType::Tricyclist => (2.5, 1.2, 3.0, 5.5),
        AgentType::Pedestrian => (0.6, 0.6, 1.0, 2.0),
    }
}

const TYPE_WEIGHTS: [(AgentType, f64); 8] = [
    (AgentType::Car, 0.55),
    (AgentType::Van, 0.10),
    (AgentType::Truck, 0.07),
    (AgentType::Bus, 0.05),
    (AgentType::Motorcyclist, 0.07),
    (AgentType::Cyclist, 0.08),
    (AgentType::Tricyclist, 0.04),
    (AgentType::Pedestrian, 0.04),
];

fn draw_type(rng: &mut Rng) -> AgentType {
    let mut u = rng.next_f64();
    for (t, w) in TYPE_WEIGHTS {
        if u < w {
            return t;
        }
        u -= w;
    }
    AgentType::Car
}

fn draw_agent(cfg: &GenConfig, rng: &mut Rng, agent_type: AgentType) -> WorldAgent {
    let arm = rng.below(4);
    let maneuver = if rng.bernoulli(cfg.turn_prob) {
        if rng.bernoulli(0.5) {
            Maneuver::Left
        } else {
            Maneuver::Right
        }
    } else {
        Maneuver::Straight
    };
    let path = route_path(&cfg.map, Route { arm, maneuver });
    let (len, wid, vmin, vmax) = type_profile(agent_type);
    let scale = rng.uniform(0.95, 1.05);
    let inbound = cfg.map.arm_length - cfg.map.box_half();
    let s0 = rng.uniform(0.0, 0.9 * inbound);
    let v0 = rng.uniform(vmin, vmax);
    let accel = if rng.bernoulli(cfg.accel_prob) {
        rng.uniform(-1.5, 1.5)
    } else {
        0.0
    };
    WorldAgent {
        agent_type,
        length: len * scale,
        width: wid * scale,
        path,
        s0,
        v0,
        accel,
    }
}

fn clear_of(cfg: &GenConfig, a: &WorldAgent, others: &[WorldAgent]) -> bool {
    others.iter().all(|b| {
        let gap = 0.5 * (a.length + b.length) + 1.0;
        (0..cfg.steps()).all(|t| (a.state(t, cfg.dt).0 - b.state(t, cfg.dt).0).norm() >= gap)
    })
}

fn draw_sectors(cfg: &GenConfig, rng: &mut Rng) -> Vec<Sector> {
    (0..cfg.occlusion_sectors)
        .map(|_| Sector {
            bearing: rng.uniform(-PI, PI),
            half_width: rng.uniform(0.15, 0.4),
            min_range: rng.uniform(5.0, 25.0),
        })
        .collect()
}

impl World {
    /// Draws agents with rejection so that no two bodies ever overlap, then
    /// places the sensors: the ego on agent 0, the infrastructure at a corner
    /// of the intersection, further vehicles on agents 1, 2, ...
    pub fn sample(cfg: &GenConfig, rng: &mut Rng) -> Result<World> {
        cfg.validate()?;
        let mut agents: Vec<WorldAgent> = Vec::with_capacity(cfg.n_agents);
        let carriers = cfg.n_views.saturating_sub(1).max(1);
        for i in 0..cfg.n_agents {
            let mut placed = false;
            for _ in 0..200 {
                let ty = if i < carriers { AgentType::Car } else { draw_type(rng) };
                let a = draw_agent(cfg, rng, ty);
                if clear_of(cfg, &a, &agents) {
                    agents.push(a);
                    placed = true;
                    break;
                }
            }
            if !placed && i < carriers {
                return Err(Error::Generation(format!("could not place sensor vehicle {i}")));
            }
        }
        let b = cfg.map.box_half();
        let mut views = Vec::with_capacity(cfg.n_views);
        for v in 0..cfg.n_views {
            let (kind, sensor) = match v {
                0 => (ViewKind::Ego, Sensor::Agent(0)),
                1 => (
                    ViewKind::Infrastructure,
                    Sensor::Fixed {
                        position: Vec2::new(b + 4.0, b + 4.0),
                        heading: heading_from_angle(-0.75 * PI),
                    },
                ),
                _ => (ViewKind::Vehicle, Sensor::Agent(v - 1)),
            };
            views.push(SensorView {
                kind,
                sensor,
                sectors: draw_sectors(cfg, rng),
            });
        }
        Ok(World { agents, views })
    }

    fn sensor_pose(&self, s: Sensor, t: usize, dt: f64) -> (Vec2, Vec2) {
        match s {
            Sensor::Agent(i) => {
                let (p, h, _) = self.agents[i].state(t, dt);
                (p, h)
            }
            Sensor::Fixed { position, heading } => (position, heading),
        }
    }

    fn visible(&self, cfg: &GenConfig, view: &SensorView, agent: usize, t: usize) -> bool {
        if view.sensor == Sensor::Agent(agent) {
            return false;
        }
        let (sp, sh) = self.sensor_pose(view.sensor, t, cfg.dt);
        let rel = self.agents[agent].state(t, cfg.dt).0 - sp;
        if rel.norm() > cfg.detection_range {
            return false;
        }
        let local = rotate_into_frame(sh, rel).unwrap_or(rel);
        !view.sectors.iter().any(|s| s.covers(local))
    }

    /// Renders all views. Track ids are a random permutation per view.
    pub fn observe(&self, cfg: &GenConfig, rng: &mut Rng) -> Result<Scenario> {
        let t_obs = cfg.t_obs;
        let mut views = Vec::with_capacity(self.views.len());
        let mut identities = BTreeMap::new();
        let mut seen_agents = alloc::collections::BTreeSet::new();
        for (vi, view) in self.views.iter().enumerate() {
            let mut fragments: Vec<(usize, Vec<Option<ObservedState>>)> = Vec::new();
            for (ai, agent) in self.agents.iter().enumerate() {
                let mut frames: Vec<Option<ObservedState>> = Vec::with_capacity(t_obs);
                for t in 0..t_obs {
                    let seen = self.visible(cfg, view, ai, t) && !rng.bernoulli(cfg.fragmentation_prob);
                    frames.push(if seen {
                        Some(observe_state(cfg, agent, t, rng))
                    } else {
                        None
                    });
                }
                for frag in split_fragments(frames) {
                    fragments.push((ai, frag));
                }
            }
            let mut ids: Vec<u32> = (0..fragments.len() as u32).collect();
            rng.shuffle(&mut ids);
            let mut tracks: Vec<AgentTrack> = fragments
                .into_iter()
                .zip(ids)
                .map(|((ai, frames), id)| {
                    identities.insert(TrackRef::new(vi as u32, id), ai as u32);
                    seen_agents.insert(ai);
                    AgentTrack {
                        track_id: id,
                        agent_type: self.agents[ai].agent_type,
                        frames,
                    }
                })
                .collect();
            tracks.sort_by_key(|t| t.track_id);
            views.push(View {
                view_id: vi as u32,
                kind: view.kind,
                tracks,
            });
        }
        let ego = &views[0];
        if ego.tracks.is_empty() {
            return Err(Error::Generation("no agent is visible from the ego view".into()));
        }
        let current: Vec<&AgentTrack> = ego
            .tracks
            .iter()
            .filter(|t| t.last_observed().map(|(i, _)| i) == Some(t_obs - 1))
            .collect();
        let target_track = if current.is_empty() {
            ego.tracks
                .iter()
                .max_by_key(|t| (t.last_observed().map(|(i, _)| i), core::cmp::Reverse(t.track_id)))
                .unwrap()
        } else {
            current[rng.below(current.len())]
        };
        let target = TrackRef::new(0, target_track.track_id);
        let futures = seen_agents
            .into_iter()
            .map(|ai| {
                let f = (t_obs..t_obs + cfg.horizon)
                    .map(|t| self.agents[ai].state(t, cfg.dt).0)
                    .collect();
                (ai as u32, f)
            })
            .collect();
        let scenario = Scenario {
            dt: cfg.dt,
            t_obs,
            horizon: cfg.horizon,
            target,
            views,
            map: intersection_map(&cfg.map),
            truth: Some(Truth { identities, futures }),
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

fn observe_state(cfg: &GenConfig, agent: &WorldAgent, t: usize, rng: &mut Rng) -> ObservedState {
    let (p, h, v) = agent.state(t, cfg.dt);
    let mut noise = Vec2::new(rng.normal(), rng.normal()) * cfg.noise_sigma;
    let cap = 6.0 * cfg.noise_sigma;
    if noise.norm() > cap {
        noise = noise * (cap / noise.norm());
    }
    ObservedState {
        position: p + noise,
        heading: h,
        bbox: BBox {
            length: agent.length,
            width: agent.width,
            heading: h,
        },
        speed: v,
    }
}

/// Splits at gaps of `SPLIT_GAP` or more missing frames; fragments with
/// fewer than two observations are dropped (a tracker would not confirm them).
fn split_fragments(frames: Vec<Option<ObservedState>>) -> Vec<Vec<Option<ObservedState>>> {
    let n = frames.len();
    let mut out = Vec::new();
    let mut cur: Vec<Option<ObservedState>> = alloc::vec![None; n];
    let mut count = 0;
    let mut gap = 0;
    for (t, f) in frames.into_iter().enumerate() {
        match f {
            Some(s) => {
                if gap >= SPLIT_GAP && count > 0 {
                    if count >= 2 {
                        out.push(core::mem::replace(&mut cur, alloc::vec![None; n]));
                    } else {
                        cur = alloc::vec![None; n];
                    }
                    count = 0;
                }
                cur[t] = Some(s);
                count += 1;
                gap = 0;
            }
            None => gap += 1,
        }
    }
    if count >= 2 {
        out.push(cur);
    }
    out
}

pub fn generate_scenario(cfg: &GenConfig, rng: &mut Rng) -> Result<Scenario> {
    let world = World::sample(cfg, rng)?;
    world.observe(cfg, rng)
}

/// `n` scenarios; scenario `i` draws from a stream keyed by `(cfg.seed, i)`
/// and is redrawn (up to 16 times) when generation fails.
pub fn generate_dataset(cfg: &GenConfig, n: usize) -> Result<Vec<Scenario>> {
    cfg.validate()?;
    (0..n)
        .map(|i| {
            let mut last = Error::Generation("no attempt".into());
            for attempt in 0..16 {
                let mut rng = Rng::derive(cfg.seed, &format!("scenario/{i}/{attempt}"));
                match generate_scenario(cfg, &mut rng) {
                    Ok(s) => return Ok(s),
                    Err(e @ Error::Generation(_)) => last = e,
                    Err(e) => return Err(e),
                }
            }
            Err(last)
        })
        .collect()
}
