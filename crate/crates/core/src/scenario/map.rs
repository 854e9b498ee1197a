//! A four-arm intersection built from exact line and quarter-circle pieces.
//!
//! Arms point east, north, west and south. Traffic keeps right: each arm
//! carries one inbound and one outbound lane, `lane_width / 2` either side
//! of the arm axis. The intersection box has half-size `3 * lane_width`;
//! right turns are arcs of radius `box - w/2` around the near corner, left
//! turns arcs of radius `box + w/2` around the far corner.

use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use super::{LaneSegment, RoadType, Turn};
use crate::geometry::{heading_from_angle, Vec2};
use crate::math::{cos, sin};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapSpec {
    /// Distance from the intersection centre to the far end of each arm.
    pub arm_length: f64,
    /// Lateral spacing between the two lane centrelines of an arm.
    pub lane_width: f64,
    /// Target distance between lane sample points.
    pub sample_step: f64,
}

impl Default for MapSpec {
    fn default() -> Self {
        MapSpec {
            arm_length: 60.0,
            lane_width: 3.5,
            sample_step: 2.0,
        }
    }
}

impl MapSpec {
    pub fn box_half(&self) -> f64 {
        3.0 * self.lane_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Piece {
    Line {
        start: Vec2,
        dir: Vec2,
        len: f64,
    },
    /// Arc around `center`; `sweep` is signed (positive counter-clockwise).
    Arc {
        center: Vec2,
        radius: f64,
        start_angle: f64,
        sweep: f64,
    },
}

impl Piece {
    pub fn length(&self) -> f64 {
        match *self {
            Piece::Line { len, .. } => len,
            Piece::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    /// Position and unit tangent at arc length `s` from the piece start.
    pub fn pose(&self, s: f64) -> (Vec2, Vec2) {
        match *self {
            Piece::Line { start, dir, .. } => (start + dir * s, dir),
            Piece::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let sign = if sweep >= 0.0 { 1.0 } else { -1.0 };
                let a = start_angle + sign * s / radius;
                let (c, sn) = (cos(a), sin(a));
                (center + Vec2::new(c, sn) * radius, Vec2::new(-sn * sign, c * sign))
            }
        }
    }
}

/// A drivable path: inbound lane, connector, outbound lane. Beyond its end
/// the path continues straight along the final tangent.
#[derive(Debug, Clone, PartialEq)]
pub struct LanePath {
    pub pieces: Vec<Piece>,
    pub turn: Turn,
}

impl LanePath {
    pub fn length(&self) -> f64 {
        self.pieces.iter().map(Piece::length).sum()
    }

    pub fn pose(&self, mut s: f64) -> (Vec2, Vec2) {
        let last = self.pieces.len() - 1;
        for (i, p) in self.pieces.iter().enumerate() {
            let len = p.length();
            if s <= len || i == last {
                if s > len {
                    let (end, dir) = p.pose(len);
                    return (end + dir * (s - len), dir);
                }
                return p.pose(s);
            }
            s -= len;
        }
        unreachable!("paths have at least one piece")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Maneuver {
    Straight,
    Left,
    Right,
}

/// Inbound arm (0 = east, counter-clockwise) plus the manoeuvre taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Route {
    pub arm: usize,
    pub maneuver: Maneuver,
}

fn rotate_piece(p: Piece, q: Vec2, angle: f64) -> Piece {
    match p {
        Piece::Line { start, dir, len } => Piece::Line {
            start: start.rotate_by(q),
            dir: dir.rotate_by(q),
            len,
        },
        Piece::Arc {
            center,
            radius,
            start_angle,
            sweep,
        } => Piece::Arc {
            center: center.rotate_by(q),
            radius,
            start_angle: start_angle + angle,
            sweep,
        },
    }
}

fn inbound(spec: &MapSpec) -> Piece {
    let (b, w) = (spec.box_half(), spec.lane_width);
    Piece::Line {
        start: Vec2::new(spec.arm_length, w / 2.0),
        dir: Vec2::new(-1.0, 0.0),
        len: spec.arm_length - b,
    }
}

fn outbound(spec: &MapSpec) -> Piece {
    let (b, w) = (spec.box_half(), spec.lane_width);
    Piece::Line {
        start: Vec2::new(b, -w / 2.0),
        dir: Vec2::X,
        len: spec.arm_length - b,
    }
}

/// Connector from the east inbound lane.
fn connector(spec: &MapSpec, m: Maneuver) -> Piece {
    let (b, w) = (spec.box_half(), spec.lane_width);
    match m {
        Maneuver::Straight => Piece::Line {
            start: Vec2::new(b, w / 2.0),
            dir: Vec2::new(-1.0, 0.0),
            len: 2.0 * b,
        },
        Maneuver::Right => Piece::Arc {
            center: Vec2::new(b, b),
            radius: b - w / 2.0,
            start_angle: -FRAC_PI_2,
            sweep: -FRAC_PI_2,
        },
        Maneuver::Left => Piece::Arc {
            center: Vec2::new(b, -b),
            radius: b + w / 2.0,
            start_angle: FRAC_PI_2,
            sweep: FRAC_PI_2,
        },
    }
}

fn exit_arm(arm: usize, m: Maneuver) -> usize {
    match m {
        Maneuver::Straight => (arm + 2) % 4,
        Maneuver::Right => (arm + 1) % 4,
        Maneuver::Left => (arm + 3) % 4,
    }
}

fn in_arm(p: Piece, arm: usize) -> Piece {
    let angle = arm as f64 * FRAC_PI_2;
    rotate_piece(p, heading_from_angle(angle), angle)
}

pub fn route_path(spec: &MapSpec, route: Route) -> LanePath {
    let turn = match route.maneuver {
        Maneuver::Straight => Turn::Straight,
        Maneuver::Left => Turn::Left,
        Maneuver::Right => Turn::Right,
    };
    LanePath {
        pieces: alloc::vec![
            in_arm(inbound(spec), route.arm),
            in_arm(connector(spec, route.maneuver), route.arm),
            in_arm(outbound(spec), exit_arm(route.arm, route.maneuver)),
        ],
        turn,
    }
}

fn sample_piece(p: &Piece, step: f64, turn: Turn, road_type: RoadType, out: &mut Vec<LaneSegment>) {
    let len = p.length();
    let n = libm::round(len / step).max(1.0) as usize;
    let mut prev = p.pose(0.0).0;
    for i in 1..=n {
        let next = p.pose(len * i as f64 / n as f64).0;
        out.push(LaneSegment {
            start: prev,
            end: next,
            turn,
            road_type,
        });
        prev = next;
    }
}

/// Lane segments of the whole intersection: 8 arm lanes and 12 connectors.
pub fn intersection_map(spec: &MapSpec) -> Vec<LaneSegment> {
    let mut out = Vec::new();
    for arm in 0..4 {
        for p in [inbound(spec), outbound(spec)] {
            sample_piece(
                &in_arm(p, arm),
                spec.sample_step,
                Turn::Straight,
                RoadType::Normal,
                &mut out,
            );
        }
        for (m, turn) in [
            (Maneuver::Straight, Turn::Straight),
            (Maneuver::Right, Turn::Right),
            (Maneuver::Left, Turn::Left),
        ] {
            sample_piece(
                &in_arm(connector(spec, m), arm),
                spec.sample_step,
                turn,
                RoadType::Intersection,
                &mut out,
            );
        }
    }
    out
}
