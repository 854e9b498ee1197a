use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::ModelConfig;
use crate::association::{candidate_pairs, canonical};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::scenario::{LaneSegment, RoadType, Scenario, TrackRef, Turn, ViewKind};

pub const HEADING_BINS: usize = 12;
/// `3 turn kinds x 2 road types`.
pub const LANE_ATTRS: usize = 6;

/// Bin of a relative heading angle: 12 bins of 30 degrees, bin 0 centred on
/// 0 so that +-180 degrees falls in bin 6.
pub fn heading_bin(angle: f64) -> usize {
    let width = PI / 6.0;
    let b = libm::floor((angle + width / 2.0) / width) as i64;
    b.rem_euclid(HEADING_BINS as i64) as usize
}

pub fn lane_attr_index(turn: Turn, road: RoadType) -> usize {
    let t = match turn {
        Turn::Left => 0,
        Turn::Right => 1,
        Turn::Straight => 2,
    };
    let r = match road {
        RoadType::Intersection => 0,
        RoadType::Normal => 1,
    };
    t * 2 + r
}

/// Flattened per-track inputs of one scenario, in scenario track order.
///
/// Missing steps keep a placeholder in `positions`; the network never reads
/// it (motion steps fall back to the padding token, spatial-temporal steps
/// are masked), so tests may overwrite it freely.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneInputs {
    pub t_obs: usize,
    pub tracks: Vec<TrackRef>,
    pub is_ego: Vec<bool>,
    /// `N*T` positions, world frame.
    pub positions: Vec<Vec2>,
    pub observed: Vec<bool>,
    pub last: Vec<usize>,
    /// Agent-frame origin: last observed position.
    pub origin: Vec<Vec2>,
    /// Agent-frame heading: last reliable observed heading.
    pub heading: Vec<Vec2>,
    /// Observed at the current (last) step of the window.
    pub present_now: Vec<bool>,
    /// Frame of the spatial-temporal encodings.
    pub anchor: (Vec2, Vec2),
    pub lanes: Vec<LaneSegment>,
    /// Non-pruned cross-view pairs as canonical index pairs.
    pub candidates: Vec<(usize, usize)>,
}

impl SceneInputs {
    pub fn build(scenario: &Scenario, cfg: &ModelConfig) -> Result<Self> {
        if scenario.t_obs != cfg.t_obs {
            return Err(Error::Encoding(format!(
                "scenario has T={}, model expects {}",
                scenario.t_obs, cfg.t_obs
            )));
        }
        let t_obs = scenario.t_obs;
        let mut out = SceneInputs {
            t_obs,
            tracks: Vec::new(),
            is_ego: Vec::new(),
            positions: Vec::new(),
            observed: Vec::new(),
            last: Vec::new(),
            origin: Vec::new(),
            heading: Vec::new(),
            present_now: Vec::new(),
            anchor: scenario.anchor(),
            lanes: scenario.map.clone(),
            candidates: Vec::new(),
        };
        for view in &scenario.views {
            for tr in &view.tracks {
                if tr.observed_count() < 2 {
                    return Err(Error::Encoding(format!(
                        "view {} track {} has fewer than 2 observed frames",
                        view.view_id, tr.track_id
                    )));
                }
                out.tracks.push(TrackRef::new(view.view_id, tr.track_id));
                out.is_ego.push(view.kind == ViewKind::Ego);
                for f in &tr.frames {
                    out.positions.push(f.as_ref().map_or(Vec2::ZERO, |s| s.position));
                    out.observed.push(f.is_some());
                }
                let (last, state) = tr.last_observed().expect("checked above");
                out.last.push(last);
                out.origin.push(state.position);
                out.heading.push(tr.current_heading());
                out.present_now.push(last == t_obs - 1);
            }
        }
        let index: BTreeMap<TrackRef, usize> = out.tracks.iter().enumerate().map(|(i, r)| (*r, i)).collect();
        out.candidates = candidate_pairs(scenario)
            .into_iter()
            .map(|(a, b)| {
                let (a, b) = canonical(a, b);
                (index[&a], index[&b])
            })
            .collect();
        Ok(out)
    }

    pub fn n_tracks(&self) -> usize {
        self.tracks.len()
    }

    pub fn index_of(&self, r: TrackRef) -> Option<usize> {
        self.tracks.iter().position(|t| *t == r)
    }

    pub fn position(&self, track: usize, t: usize) -> Vec2 {
        self.positions[track * self.t_obs + t]
    }

    pub fn is_observed(&self, track: usize, t: usize) -> bool {
        self.observed[track * self.t_obs + t]
    }
}
