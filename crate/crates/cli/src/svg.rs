//! Bird's-eye SVG rendering of one scenario: lanes grey, tracks coloured by
//! view, association links dashed, ground truth red, predicted modes green.

use std::collections::BTreeSet;
use std::fmt::Write;

use coopgraph::association::TrackPair;
use coopgraph::geometry::Vec2;
use coopgraph::model::Forecast;
use coopgraph::scenario::{Scenario, ViewKind};

const SIZE: f64 = 800.0;
const MARGIN: f64 = 20.0;

fn view_color(kind: ViewKind, index: usize) -> &'static str {
    match kind {
        ViewKind::Ego => "#1f77b4",
        ViewKind::Infrastructure => "#ff7f0e",
        ViewKind::Vehicle => ["#9467bd", "#8c564b", "#17becf", "#bcbd22"][index % 4],
    }
}

struct Frame {
    min: Vec2,
    scale: f64,
    height: f64,
}

impl Frame {
    fn fit(points: &[Vec2]) -> Frame {
        let (mut lo, mut hi) = (
            Vec2::new(f64::INFINITY, f64::INFINITY),
            Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        for p in points {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if points.is_empty() {
            lo = Vec2::ZERO;
            hi = Vec2::new(1.0, 1.0);
        }
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1.0);
        Frame {
            min: lo,
            scale: (SIZE - 2.0 * MARGIN) / span,
            height: hi.y - lo.y,
        }
    }

    /// World to canvas, with y pointing up.
    fn map(&self, p: Vec2) -> (f64, f64) {
        (
            MARGIN + (p.x - self.min.x) * self.scale,
            MARGIN + (self.height - (p.y - self.min.y)) * self.scale,
        )
    }
}

fn polyline(out: &mut String, f: &Frame, pts: &[Vec2], style: &str) {
    if pts.len() < 2 {
        return;
    }
    let coords: Vec<String> = pts
        .iter()
        .map(|p| {
            let (x, y) = f.map(*p);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(out, r#"<polyline points="{}" fill="none" {style}/>"#, coords.join(" "));
}

/// Renders `scenario`; `links` are drawn between the latest positions of the
/// linked tracks, `forecasts` as one green line per mode.
pub fn render(scenario: &Scenario, links: &BTreeSet<TrackPair>, forecasts: &[Forecast]) -> String {
    let mut pts: Vec<Vec2> = scenario.map.iter().flat_map(|l| [l.start, l.end]).collect();
    for v in &scenario.views {
        for tr in &v.tracks {
            pts.extend(tr.observed().map(|(_, o)| o.position));
        }
    }
    if let Some(truth) = &scenario.truth {
        pts.extend(truth.futures.values().flatten().copied());
    }
    for f in forecasts {
        pts.extend(f.world_modes().into_iter().flatten());
    }
    let frame = Frame::fit(&pts);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    out.push_str("<g id=\"lanes\">\n");
    for l in &scenario.map {
        polyline(
            &mut out,
            &frame,
            &[l.start, l.end],
            r##"stroke="#bbbbbb" stroke-width="1""##,
        );
    }
    out.push_str("</g>\n<g id=\"tracks\">\n");
    let mut vehicle_index = 0;
    for v in &scenario.views {
        let color = view_color(v.kind, vehicle_index);
        if v.kind == ViewKind::Vehicle {
            vehicle_index += 1;
        }
        for tr in &v.tracks {
            let p: Vec<Vec2> = tr.observed().map(|(_, o)| o.position).collect();
            polyline(&mut out, &frame, &p, &format!(r#"stroke="{color}" stroke-width="1.5""#));
            if let Some((_, last)) = tr.last_observed() {
                let (x, y) = frame.map(last.position);
                let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#);
            }
        }
    }
    out.push_str("</g>\n<g id=\"links\">\n");
    for (a, b) in links {
        let pos = |r| {
            scenario
                .track(r)
                .and_then(|t| t.last_observed())
                .map(|(_, o)| o.position)
        };
        if let (Some(pa), Some(pb)) = (pos(*a), pos(*b)) {
            polyline(
                &mut out,
                &frame,
                &[pa, pb],
                r##"stroke="#333333" stroke-width="1" stroke-dasharray="4,3""##,
            );
        }
    }
    out.push_str("</g>\n<g id=\"truth\">\n");
    if let Some(truth) = &scenario.truth {
        for fut in truth.futures.values() {
            polyline(&mut out, &frame, fut, r##"stroke="#d62728" stroke-width="1.5""##);
        }
    }
    out.push_str("</g>\n<g id=\"forecasts\">\n");
    for f in forecasts {
        for mode in f.world_modes() {
            let mut line = vec![f.origin];
            line.extend(mode);
            polyline(
                &mut out,
                &frame,
                &line,
                r##"stroke="#2ca02c" stroke-width="1" opacity="0.8""##,
            );
        }
    }
    out.push_str("</g>\n</svg>\n");
    out
}
