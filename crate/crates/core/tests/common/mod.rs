#![allow(dead_code)]

use std::collections::BTreeMap;

use coopgraph::geometry::Vec2;
use coopgraph::model::ModelConfig;
use coopgraph::scenario::{
    AgentTrack, AgentType, BBox, LaneSegment, ObservedState, RoadType, Scenario, TrackRef, Truth, Turn, View, ViewKind,
};

pub const T: usize = 10;
pub const H: usize = 5;

pub fn state(p: Vec2, heading: Vec2, speed: f64) -> ObservedState {
    ObservedState {
        position: p,
        heading,
        bbox: BBox {
            length: 4.5,
            width: 1.9,
            heading,
        },
        speed,
    }
}

/// Straight-line motion `p0 + v t`, observed where `seen(t)`.
pub fn straight(id: u32, p0: Vec2, v: Vec2, seen: impl Fn(usize) -> bool) -> AgentTrack {
    let heading = v.normalized();
    AgentTrack {
        track_id: id,
        agent_type: AgentType::Car,
        frames: (0..T)
            .map(|t| seen(t).then(|| state(p0 + v * (t as f64 * 0.1), heading, v.norm())))
            .collect(),
    }
}

/// Two views (ego and infrastructure) of three agents on parallel lanes.
/// Agent 2 is seen by the ego only; the infrastructure track of agent 0
/// starts late.
pub fn two_view_fixture() -> Scenario {
    let agents = [
        (Vec2::new(0.0, 0.0), Vec2::new(8.0, 0.0)),
        (Vec2::new(6.0, 3.5), Vec2::new(6.0, 0.5)),
        (Vec2::new(-10.0, -3.5), Vec2::new(10.0, -0.3)),
    ];
    let ego = vec![
        straight(0, agents[0].0, agents[0].1, |_| true),
        straight(1, agents[1].0, agents[1].1, |t| t != 4),
        straight(2, agents[2].0, agents[2].1, |_| true),
    ];
    let jitter = Vec2::new(0.12, -0.08);
    let infra = vec![
        straight(5, agents[1].0 + jitter, agents[1].1, |_| true),
        straight(9, agents[0].0 - jitter, agents[0].1, |t| t >= 3),
    ];
    let mut identities = BTreeMap::new();
    for (r, agent) in [((0, 0), 0), ((0, 1), 1), ((0, 2), 2), ((1, 5), 1), ((1, 9), 0)] {
        identities.insert(TrackRef::new(r.0, r.1), agent);
    }
    let futures = agents
        .iter()
        .enumerate()
        .map(|(a, (p0, v))| {
            let curve = Vec2::new(0.0, 0.3 * a as f64);
            let fut = (0..H)
                .map(|k| *p0 + *v * ((T + k) as f64 * 0.1) + curve * (k * k) as f64 * 0.05)
                .collect();
            (a as u32, fut)
        })
        .collect();
    let lane = |x0: f64, y: f64, turn, road_type| LaneSegment {
        start: Vec2::new(x0, y),
        end: Vec2::new(x0 + 2.0, y),
        turn,
        road_type,
    };
    Scenario {
        dt: 0.1,
        t_obs: T,
        horizon: H,
        target: TrackRef::new(0, 0),
        views: vec![
            View {
                view_id: 0,
                kind: ViewKind::Ego,
                tracks: ego,
            },
            View {
                view_id: 1,
                kind: ViewKind::Infrastructure,
                tracks: infra,
            },
        ],
        map: vec![
            lane(0.0, 0.0, Turn::Straight, RoadType::Normal),
            lane(4.0, 3.5, Turn::Left, RoadType::Normal),
            lane(-6.0, -3.5, Turn::Right, RoadType::Intersection),
        ],
        truth: Some(Truth { identities, futures }),
    }
}

pub fn small_config() -> ModelConfig {
    ModelConfig {
        d: 16,
        n_heads: 2,
        motion_sa_layers: 1,
        st_sa_layers: 1,
        edge_sa_layers: 1,
        mfg_layers: 1,
        alg_layers: 1,
        cig_layers: 1,
        k_modes: 2,
        t_obs: T,
        horizon: H,
        ..ModelConfig::default()
    }
}

/// Applies the rigid motion `x -> R x + shift` to every pose in the scenario.
pub fn transform(s: &Scenario, angle: f64, shift: Vec2) -> Scenario {
    let r = Vec2::new(angle.cos(), angle.sin());
    let p = |v: Vec2| v.rotate_by(r) + shift;
    let mut out = s.clone();
    for view in &mut out.views {
        for tr in &mut view.tracks {
            for st in tr.frames.iter_mut().flatten() {
                st.position = p(st.position);
                st.heading = st.heading.rotate_by(r);
                st.bbox.heading = st.bbox.heading.rotate_by(r);
            }
        }
    }
    for lane in &mut out.map {
        lane.start = p(lane.start);
        lane.end = p(lane.end);
    }
    if let Some(truth) = &mut out.truth {
        for fut in truth.futures.values_mut() {
            fut.iter_mut().for_each(|g| *g = p(*g));
        }
    }
    out
}
