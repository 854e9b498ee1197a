//! Planar geometry: heading frames, rotated-rectangle IoU and track resync.

use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::math::{hypot, sqrt};
use crate::scenario::{AgentTrack, ObservedState};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };
    pub const X: Vec2 = Vec2 { x: 1.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        hypot(self.x, self.y)
    }

    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    /// Rotates counter-clockwise by the angle whose (cos, sin) is `r`.
    pub fn rotate_by(self, r: Vec2) -> Vec2 {
        Vec2::new(r.x * self.x - r.y * self.y, r.y * self.x + r.x * self.y)
    }

    /// Inverse of [`Vec2::rotate_by`] for unit `r`, without validation.
    pub fn unrotate_by(self, r: Vec2) -> Vec2 {
        Vec2::new(r.x * self.x + r.y * self.y, -r.y * self.x + r.x * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Expresses `v` in the frame whose +x axis is the heading `r = (c, s)`:
/// `(c*vx + s*vy, -s*vx + c*vy)`. Headings within 1e-3 of unit norm are
/// renormalized (with a warning beyond 1e-6); anything else is rejected.
pub fn rotate_into_frame(r: Vec2, v: Vec2) -> Result<Vec2> {
    let n = r.norm();
    let dev = (n - 1.0).abs();
    let r = if dev <= 1e-6 {
        r
    } else if dev <= 1e-3 {
        log::warn!("renormalizing heading with norm {n}");
        r * (1.0 / n)
    } else {
        return Err(Error::NonUnitHeading { norm: n });
    };
    Ok(v.unrotate_by(r))
}

/// Bird's-eye-view rotated rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub center: Vec2,
    /// `(length / 2, width / 2)`.
    pub half_extents: (f64, f64),
    pub heading: Vec2,
}

impl Rect {
    pub fn new(center: Vec2, length: f64, width: f64, heading: Vec2) -> Self {
        Rect {
            center,
            half_extents: (length / 2.0, width / 2.0),
            heading,
        }
    }

    /// Counter-clockwise corners.
    pub fn corners(&self) -> [Vec2; 4] {
        let (hl, hw) = self.half_extents;
        let f = self.heading * hl;
        let s = self.heading.perp() * hw;
        let c = self.center;
        [c - f - s, c + f - s, c + f + s, c - f + s]
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_extents.0 * self.half_extents.1
    }

    pub fn half_diagonal(&self) -> f64 {
        hypot(self.half_extents.0, self.half_extents.1)
    }

    fn key(&self) -> [f64; 6] {
        [
            self.center.x,
            self.center.y,
            self.half_extents.0,
            self.half_extents.1,
            self.heading.x,
            self.heading.y,
        ]
    }
}

/// Shoelace area of a simple polygon (positive for counter-clockwise).
pub fn polygon_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n).map(|i| poly[i].cross(poly[(i + 1) % n])).sum();
    twice / 2.0
}

/// Sutherland-Hodgman clipping of `subject` by the convex counter-clockwise
/// polygon `window`. Collinear vertices are kept.
pub fn clip_convex(subject: &[Vec2], window: &[Vec2]) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = subject.to_vec();
    for i in 0..window.len() {
        if out.is_empty() {
            break;
        }
        let a = window[i];
        let b = window[(i + 1) % window.len()];
        let edge = b - a;
        let inside = |p: Vec2| edge.cross(p - a) >= 0.0;
        let input = core::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (cin, pin) = (inside(cur), inside(prev));
            if cin != pin {
                // Segment prev->cur crosses the window edge line.
                let d = cur - prev;
                let t = edge.cross(a - prev) / edge.cross(d);
                out.push(prev + d * t);
            }
            if cin {
                out.push(cur);
            }
        }
    }
    out
}

fn cmp_key(a: &Rect, b: &Rect) -> Ordering {
    for (x, y) in a.key().iter().zip(b.key().iter()) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Intersection over union of two BEV rectangles. Symmetric bit-for-bit:
/// the arguments are put in a canonical order before clipping.
pub fn iou_bev(a: &Rect, b: &Rect) -> f64 {
    let (a, b) = if cmp_key(a, b) == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    };
    if (a.center - b.center).norm() > a.half_diagonal() + b.half_diagonal() {
        return 0.0;
    }
    let clipped = clip_convex(&b.corners(), &a.corners());
    if clipped.len() < 3 {
        return 0.0;
    }
    let inter = polygon_area(&clipped).max(0.0);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Simulates `drop_latest` frames of transmission latency: the last
/// `drop_latest` steps of the window are removed, and the ones that had been
/// observed are refilled by linear extrapolation of position from the last
/// two remaining observations. Heading, box and speed carry forward.
pub fn resync_track(track: &AgentTrack, drop_latest: usize) -> Result<AgentTrack> {
    if drop_latest == 0 {
        return Ok(track.clone());
    }
    let t_len = track.frames.len();
    let cut = t_len.saturating_sub(drop_latest);
    let kept: Vec<usize> = (0..cut).filter(|&t| track.frames[t].is_some()).collect();
    if kept.len() < 2 {
        return Err(Error::Resync { remaining: kept.len() });
    }
    let (ta, tb) = (kept[kept.len() - 2], kept[kept.len() - 1]);
    let (sa, sb) = (track.frames[ta].as_ref().unwrap(), track.frames[tb].as_ref().unwrap());
    let vel = (sb.position - sa.position) * (1.0 / (tb - ta) as f64);
    let mut out = track.clone();
    for t in cut..t_len {
        if track.frames[t].is_some() {
            out.frames[t] = Some(ObservedState {
                position: sb.position + vel * (t - tb) as f64,
                ..sb.clone()
            });
        }
    }
    Ok(out)
}

/// Unit heading at angle `theta` radians.
pub fn heading_from_angle(theta: f64) -> Vec2 {
    Vec2::new(crate::math::cos(theta), crate::math::sin(theta))
}

/// Signed angle of a heading vector in `(-pi, pi]`.
pub fn angle_of(r: Vec2) -> f64 {
    crate::math::atan2(r.y, r.x)
}

pub(crate) fn is_unit(r: Vec2, tol: f64) -> bool {
    (sqrt(r.dot(r)) - 1.0).abs() <= tol
}
