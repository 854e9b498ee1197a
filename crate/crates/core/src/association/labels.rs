use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::ToString;
use alloc::vec::Vec;

use super::{canonical, hungarian_max, TrackPair};
use crate::error::{Error, Result};
use crate::geometry::{iou_bev, rotate_into_frame, Rect, Vec2};
use crate::scenario::{AgentTrack, Scenario, TrackRef, View};

/// Inflation applied to each track's bounding rectangle before the overlap test.
pub const PRUNE_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelGenConfig {
    /// Per-frame IoU a matched pair must exceed.
    pub tau_iou: f64,
    /// Matched frames a pair needs before it is accepted.
    pub eps_length: usize,
}

impl Default for LabelGenConfig {
    fn default() -> Self {
        LabelGenConfig {
            tau_iou: 0.1,
            eps_length: 5,
        }
    }
}

impl LabelGenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tau_iou) {
            return Err(Error::Config {
                field: "tau_iou",
                constraint: "0 <= tau_iou < 1".to_string(),
            });
        }
        if self.eps_length < 1 {
            return Err(Error::Config {
                field: "eps_length",
                constraint: ">= 1".to_string(),
            });
        }
        Ok(())
    }
}

/// Which pairs of a view pair survive pre-pruning, row-major over
/// `(view_a.tracks[i], view_b.tracks[j])`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateMask {
    pub rows: usize,
    pub cols: usize,
    pub keep: Vec<bool>,
}

impl CandidateMask {
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.keep[i * self.cols + j]
    }
}

fn track_aabb(track: &AgentTrack, anchor: (Vec2, Vec2)) -> Option<(Vec2, Vec2)> {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (_, s) in track.observed() {
        let p = rotate_into_frame(anchor.1, s.position - anchor.0).ok()?;
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    lo.x.is_finite().then_some((lo, hi))
}

fn overlaps(a: (Vec2, Vec2), b: (Vec2, Vec2)) -> bool {
    let m = PRUNE_MARGIN;
    a.0.x - m <= b.1.x + m && b.0.x - m <= a.1.x + m && a.0.y - m <= b.1.y + m && b.0.y - m <= a.1.y + m
}

/// Prunes a pair when the agent types differ or when the axis-aligned
/// bounding rectangles of the observed positions, each inflated by
/// [`PRUNE_MARGIN`], are disjoint. Rectangles are taken in the scenario's
/// anchor frame so the decision does not depend on the world orientation.
pub fn pre_prune(scenario: &Scenario, a: &View, b: &View) -> CandidateMask {
    let anchor = scenario.anchor();
    let ba: Vec<_> = a.tracks.iter().map(|t| track_aabb(t, anchor)).collect();
    let bb: Vec<_> = b.tracks.iter().map(|t| track_aabb(t, anchor)).collect();
    let mut keep = Vec::with_capacity(a.tracks.len() * b.tracks.len());
    for (ta, ra) in a.tracks.iter().zip(&ba) {
        for (tb, rb) in b.tracks.iter().zip(&bb) {
            let k = ta.agent_type == tb.agent_type && matches!((ra, rb), (Some(ra), Some(rb)) if overlaps(*ra, *rb));
            keep.push(k);
        }
    }
    CandidateMask {
        rows: a.tracks.len(),
        cols: b.tracks.len(),
        keep,
    }
}

/// Every non-pruned cross-view pair of the scenario, in view-pair order
/// (views in scenario order), then row-major.
pub fn candidate_pairs(scenario: &Scenario) -> Vec<TrackPair> {
    let mut out = Vec::new();
    for (ia, va) in scenario.views.iter().enumerate() {
        for vb in &scenario.views[ia + 1..] {
            let mask = pre_prune(scenario, va, vb);
            for (i, ta) in va.tracks.iter().enumerate() {
                for (j, tb) in vb.tracks.iter().enumerate() {
                    if mask.get(i, j) {
                        out.push((
                            TrackRef::new(va.view_id, ta.track_id),
                            TrackRef::new(vb.view_id, tb.track_id),
                        ));
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelPair {
    pub a: u32,
    pub b: u32,
    pub count: usize,
}

/// Accepted matches between two views; `view_a` precedes `view_b` in the
/// scenario's view order (so the ego view always comes first).
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPairLabels {
    pub view_a: u32,
    pub view_b: u32,
    pub pairs: Vec<LabelPair>,
}

fn rect_at(track: &AgentTrack, t: usize) -> Option<Rect> {
    track.frames[t].as_ref().map(|s| s.rect())
}

/// Per-frame IoU matching with optimal assignment, vote accumulation over
/// frames, length thresholding and greedy one-to-one conflict resolution.
pub fn generate_pseudo_labels(scenario: &Scenario, cfg: &LabelGenConfig) -> Vec<ViewPairLabels> {
    let mut out = Vec::new();
    for (ia, va) in scenario.views.iter().enumerate() {
        for vb in &scenario.views[ia + 1..] {
            let mask = pre_prune(scenario, va, vb);
            out.push(ViewPairLabels {
                view_a: va.view_id,
                view_b: vb.view_id,
                pairs: label_view_pair(scenario.t_obs, va, vb, &mask, cfg),
            });
        }
    }
    out
}

fn label_view_pair(t_obs: usize, va: &View, vb: &View, mask: &CandidateMask, cfg: &LabelGenConfig) -> Vec<LabelPair> {
    // (i, j) -> (matched frames, summed IoU)
    let mut votes: BTreeMap<(usize, usize), (usize, f64)> = BTreeMap::new();
    for t in 0..t_obs {
        let rows: Vec<(usize, Rect)> = va
            .tracks
            .iter()
            .enumerate()
            .filter_map(|(i, tr)| rect_at(tr, t).map(|r| (i, r)))
            .collect();
        let cols: Vec<(usize, Rect)> = vb
            .tracks
            .iter()
            .enumerate()
            .filter_map(|(j, tr)| rect_at(tr, t).map(|r| (j, r)))
            .collect();
        if rows.is_empty() || cols.is_empty() {
            continue;
        }
        let w = frame_weights(&rows, &cols, mask, cfg.tau_iou);
        for (r, c) in hungarian_max(&w, rows.len(), cols.len()) {
            let iou = w[r * cols.len() + c];
            if iou > cfg.tau_iou {
                let e = votes.entry((rows[r].0, cols[c].0)).or_insert((0, 0.0));
                e.0 += 1;
                e.1 += iou;
            }
        }
    }
    resolve(votes, cfg.eps_length)
        .into_iter()
        .map(|(i, j, count)| LabelPair {
            a: va.tracks[i].track_id,
            b: vb.tracks[j].track_id,
            count,
        })
        .collect()
}

/// IoU matrix for one frame with gated and pruned entries zeroed.
pub(crate) fn frame_weights(
    rows: &[(usize, Rect)],
    cols: &[(usize, Rect)],
    mask: &CandidateMask,
    tau: f64,
) -> Vec<f64> {
    let mut w = Vec::with_capacity(rows.len() * cols.len());
    for (i, ra) in rows {
        for (j, rb) in cols {
            let iou = if mask.get(*i, *j) { iou_bev(ra, rb) } else { 0.0 };
            w.push(if iou < tau { 0.0 } else { iou });
        }
    }
    w
}

/// Keeps pairs with at least `eps` votes, then accepts them greedily by
/// (count desc, mean IoU desc, row asc, col asc) while both tracks are free.
/// Returns `(row, col, count)` sorted by row.
pub(crate) fn resolve(votes: BTreeMap<(usize, usize), (usize, f64)>, eps: usize) -> Vec<(usize, usize, usize)> {
    let mut cands: Vec<((usize, usize), usize, f64)> = votes
        .into_iter()
        .filter(|(_, (c, _))| *c >= eps)
        .map(|(k, (c, s))| (k, c, s / c as f64))
        .collect();
    cands.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.total_cmp(&a.2)).then(a.0.cmp(&b.0)));
    let mut used_a = BTreeSet::new();
    let mut used_b = BTreeSet::new();
    let mut out = Vec::new();
    for ((i, j), c, _) in cands {
        if !used_a.contains(&i) && !used_b.contains(&j) {
            used_a.insert(i);
            used_b.insert(j);
            out.push((i, j, c));
        }
    }
    out.sort_unstable();
    out
}

/// All accepted pairs as canonical track-reference pairs.
pub fn label_set(labels: &[ViewPairLabels]) -> BTreeSet<TrackPair> {
    labels
        .iter()
        .flat_map(|l| {
            l.pairs
                .iter()
                .map(move |p| canonical(TrackRef::new(l.view_a, p.a), TrackRef::new(l.view_b, p.b)))
        })
        .collect()
}
