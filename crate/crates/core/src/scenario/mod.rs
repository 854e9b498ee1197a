//! The cooperative-world data model, the synthetic generator and dataset
//! splitting.

mod generate;
mod map;
mod split;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{is_unit, Rect, Vec2};

pub use generate::{generate_dataset, generate_scenario, GenConfig, Sector, Sensor, SensorView, World, WorldAgent};
pub use map::{intersection_map, route_path, LanePath, Maneuver, MapSpec, Piece, Route};
pub use split::{fraction_count, split_dataset};

/// Tolerance on `|r| = 1` for stored headings.
pub const HEADING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentType {
    Car,
    Truck,
    Cyclist,
    Pedestrian,
    Bus,
    Van,
    Motorcyclist,
    Tricyclist,
}

impl AgentType {
    pub const ALL: [AgentType; 8] = [
        AgentType::Car,
        AgentType::Truck,
        AgentType::Cyclist,
        AgentType::Pedestrian,
        AgentType::Bus,
        AgentType::Van,
        AgentType::Motorcyclist,
        AgentType::Tricyclist,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentType::Car => "car",
            AgentType::Truck => "truck",
            AgentType::Cyclist => "cyclist",
            AgentType::Pedestrian => "pedestrian",
            AgentType::Bus => "bus",
            AgentType::Van => "van",
            AgentType::Motorcyclist => "motorcyclist",
            AgentType::Tricyclist => "tricyclist",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub length: f64,
    pub width: f64,
    pub heading: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservedState {
    pub position: Vec2,
    pub heading: Vec2,
    pub bbox: BBox,
    pub speed: f64,
}

impl ObservedState {
    pub fn rect(&self) -> Rect {
        Rect::new(self.position, self.bbox.length, self.bbox.width, self.bbox.heading)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrack {
    pub track_id: u32,
    pub agent_type: AgentType,
    /// One slot per observed step; `None` where the agent was not seen.
    pub frames: Vec<Option<ObservedState>>,
}

impl AgentTrack {
    pub fn observed(&self) -> impl Iterator<Item = (usize, &ObservedState)> + '_ {
        self.frames
            .iter()
            .enumerate()
            .filter_map(|(t, s)| s.as_ref().map(|s| (t, s)))
    }

    pub fn observed_count(&self) -> usize {
        self.frames.iter().filter(|s| s.is_some()).count()
    }

    pub fn last_observed(&self) -> Option<(usize, &ObservedState)> {
        self.frames
            .iter()
            .enumerate()
            .rev()
            .find_map(|(t, s)| s.as_ref().map(|s| (t, s)))
    }

    /// Heading at the last observed step, carried back from the latest frame
    /// moving faster than 0.1 m/s when the agent is (nearly) stationary.
    pub fn current_heading(&self) -> Vec2 {
        let Some((_, last)) = self.last_observed() else {
            return Vec2::X;
        };
        if last.speed > 0.1 {
            return last.heading;
        }
        self.frames
            .iter()
            .rev()
            .flatten()
            .find(|s| s.speed > 0.1)
            .map_or(Vec2::X, |s| s.heading)
    }

    /// Last observed position and heading: the origin of the agent frame.
    pub fn current_pose(&self) -> Option<(Vec2, Vec2)> {
        self.last_observed().map(|(_, s)| (s.position, self.current_heading()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViewKind {
    Ego,
    Infrastructure,
    Vehicle,
}

impl ViewKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViewKind::Ego => "ego",
            ViewKind::Infrastructure => "infrastructure",
            ViewKind::Vehicle => "vehicle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [ViewKind::Ego, ViewKind::Infrastructure, ViewKind::Vehicle]
            .into_iter()
            .find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub view_id: u32,
    pub kind: ViewKind,
    pub tracks: Vec<AgentTrack>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Turn {
    Left,
    Right,
    Straight,
}

impl Turn {
    pub fn as_str(self) -> &'static str {
        match self {
            Turn::Left => "left",
            Turn::Right => "right",
            Turn::Straight => "straight",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Turn::Left, Turn::Right, Turn::Straight]
            .into_iter()
            .find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RoadType {
    Intersection,
    Normal,
}

impl RoadType {
    pub fn as_str(self) -> &'static str {
        match self {
            RoadType::Intersection => "intersection",
            RoadType::Normal => "normal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [RoadType::Intersection, RoadType::Normal]
            .into_iter()
            .find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneSegment {
    pub start: Vec2,
    pub end: Vec2,
    pub turn: Turn,
    pub road_type: RoadType,
}

/// A track addressed by `(view_id, track_id)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrackRef {
    pub view: u32,
    pub track: u32,
}

impl TrackRef {
    pub const fn new(view: u32, track: u32) -> Self {
        TrackRef { view, track }
    }
}

/// Synthetic ground truth: which agent produced each track, and each agent's
/// exact future positions (world frame) for the `H` steps after the window.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Truth {
    pub identities: BTreeMap<TrackRef, u32>,
    pub futures: BTreeMap<u32, Vec<Vec2>>,
}

impl Truth {
    pub fn future_of(&self, r: TrackRef) -> Option<&[Vec2]> {
        let id = self.identities.get(&r)?;
        self.futures.get(id).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub dt: f64,
    /// Observed steps `T`.
    pub t_obs: usize,
    /// Future steps `H`.
    pub horizon: usize,
    pub target: TrackRef,
    pub views: Vec<View>,
    pub map: Vec<LaneSegment>,
    pub truth: Option<Truth>,
}

impl Scenario {
    pub fn view(&self, view_id: u32) -> Option<&View> {
        self.views.iter().find(|v| v.view_id == view_id)
    }

    pub fn ego_view(&self) -> Option<&View> {
        self.views.iter().find(|v| v.kind == ViewKind::Ego)
    }

    pub fn track(&self, r: TrackRef) -> Option<&AgentTrack> {
        self.view(r.view)?.tracks.iter().find(|t| t.track_id == r.track)
    }

    /// Every track in view order, then track order.
    pub fn track_refs(&self) -> Vec<TrackRef> {
        self.views
            .iter()
            .flat_map(|v| v.tracks.iter().map(move |t| TrackRef::new(v.view_id, t.track_id)))
            .collect()
    }

    /// The pose every view's positions are normalized into: the target
    /// track's last observed position and heading.
    pub fn anchor(&self) -> (Vec2, Vec2) {
        self.track(self.target)
            .and_then(AgentTrack::current_pose)
            .unwrap_or((Vec2::ZERO, Vec2::X))
    }

    pub fn num_tracks(&self) -> usize {
        self.views.iter().map(|v| v.tracks.len()).sum()
    }

    /// Drops every non-ego view's tracks (the "vehicle-only" setting).
    pub fn ego_only(&self) -> Scenario {
        self.with_views_masked(&[ViewKind::Infrastructure, ViewKind::Vehicle])
    }

    /// Empties the tracks of every view whose kind is listed. Truth entries of
    /// removed tracks are dropped so the result stays valid.
    pub fn with_views_masked(&self, kinds: &[ViewKind]) -> Scenario {
        let mut out = self.clone();
        for v in &mut out.views {
            if v.kind != ViewKind::Ego && kinds.contains(&v.kind) {
                v.tracks.clear();
            }
        }
        out.prune_truth();
        out
    }

    pub fn prune_truth(&mut self) {
        let refs: alloc::collections::BTreeSet<TrackRef> = self.track_refs().into_iter().collect();
        if let Some(truth) = &mut self.truth {
            truth.identities.retain(|r, _| refs.contains(r));
        }
    }

    /// Checks every structural invariant of the data model.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidScenario(msg));
        if self.t_obs < 2 || self.horizon < 2 {
            return bad(format!("T and H must be >= 2, got T={} H={}", self.t_obs, self.horizon));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        let egos = self.views.iter().filter(|v| v.kind == ViewKind::Ego).count();
        if egos != 1 {
            return bad(format!("expected exactly one ego view, found {egos}"));
        }
        let mut view_ids: Vec<u32> = self.views.iter().map(|v| v.view_id).collect();
        view_ids.sort_unstable();
        if view_ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate view_id".into());
        }
        for v in &self.views {
            let mut ids: Vec<u32> = v.tracks.iter().map(|t| t.track_id).collect();
            ids.sort_unstable();
            if ids.windows(2).any(|w| w[0] == w[1]) {
                return bad(format!("duplicate track_id in view {}", v.view_id));
            }
            for tr in &v.tracks {
                let at = || format!("view {} track {}", v.view_id, tr.track_id);
                if tr.frames.len() != self.t_obs {
                    return bad(format!("{}: {} frames, expected {}", at(), tr.frames.len(), self.t_obs));
                }
                if tr.observed_count() == 0 {
                    return bad(format!("{}: no observed frame", at()));
                }
                for (t, s) in tr.observed() {
                    let finite = [s.position.x, s.position.y, s.speed, s.bbox.length, s.bbox.width]
                        .iter()
                        .all(|x| x.is_finite());
                    if !finite {
                        return bad(format!("{} frame {t}: non-finite value", at()));
                    }
                    if !is_unit(s.heading, HEADING_TOL) || !is_unit(s.bbox.heading, HEADING_TOL) {
                        return bad(format!("{} frame {t}: heading is not a unit vector", at()));
                    }
                    if s.bbox.length <= 0.0 || s.bbox.width <= 0.0 {
                        return bad(format!("{} frame {t}: box extents must be positive", at()));
                    }
                }
            }
        }
        if self.track(self.target).is_none() || self.target.view != self.ego_view().map_or(u32::MAX, |v| v.view_id) {
            return bad(format!("target {:?} is not an ego-view track", self.target));
        }
        for (i, l) in self.map.iter().enumerate() {
            if l.start == l.end {
                return bad(format!("lane {i} has start == end"));
            }
        }
        if let Some(truth) = &self.truth {
            for r in self.track_refs() {
                let Some(id) = truth.identities.get(&r) else {
                    return bad(format!("truth misses track {r:?}"));
                };
                match truth.futures.get(id) {
                    Some(f) if f.len() == self.horizon => {}
                    _ => {
                        return bad(format!(
                            "truth future of agent {id} missing or not {} steps",
                            self.horizon
                        ))
                    }
                }
            }
        }
        Ok(())
    }
}
