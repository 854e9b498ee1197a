//! Cross-view track association: optimal assignment, candidate pre-pruning,
//! IoU/assignment pseudo labels and link-prediction metrics.

mod hungarian;
mod labels;
mod metrics;

pub use hungarian::hungarian_max;
pub use labels::{
    candidate_pairs, generate_pseudo_labels, label_set, pre_prune, CandidateMask, LabelGenConfig, LabelPair,
    ViewPairLabels,
};
pub use metrics::{association_metrics, truth_pairs, AssocCounts, AssocMetrics};

use crate::scenario::TrackRef;

/// An unordered cross-view pair stored with the smaller reference first.
pub type TrackPair = (TrackRef, TrackRef);

pub fn canonical(a: TrackRef, b: TrackRef) -> TrackPair {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
