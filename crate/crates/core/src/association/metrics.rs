use alloc::collections::BTreeSet;
use alloc::string::ToString;

use super::{canonical, TrackPair};
use crate::error::{Error, Result};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AssocCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssocMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl AssocCounts {
    pub fn add(&mut self, o: AssocCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }

    /// Empty prediction sets have precision 1 and empty truth sets recall 1.
    pub fn metrics(&self) -> AssocMetrics {
        let precision = if self.tp + self.fp == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        };
        let recall = if self.tp + self.fn_ == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        AssocMetrics { precision, recall, f1 }
    }
}

/// Cross-view pairs whose tracks share a ground-truth agent id.
pub fn truth_pairs(scenario: &Scenario) -> Result<BTreeSet<TrackPair>> {
    let truth = scenario
        .truth
        .as_ref()
        .ok_or_else(|| Error::Metric("scenario has no ground truth".to_string()))?;
    let refs = scenario.track_refs();
    let mut out = BTreeSet::new();
    for (i, a) in refs.iter().enumerate() {
        for b in &refs[i + 1..] {
            if a.view != b.view
                && truth.identities.contains_key(a)
                && truth.identities.get(a) == truth.identities.get(b)
            {
                out.insert(canonical(*a, *b));
            }
        }
    }
    Ok(out)
}

/// Counts predicted cross-view pairs against ground-truth identities.
pub fn association_metrics(predicted: &BTreeSet<TrackPair>, scenario: &Scenario) -> Result<AssocCounts> {
    let truth = truth_pairs(scenario)?;
    let predicted: BTreeSet<TrackPair> = predicted.iter().map(|&(a, b)| canonical(a, b)).collect();
    let tp = predicted.intersection(&truth).count();
    Ok(AssocCounts {
        tp,
        fp: predicted.len() - tp,
        fn_: truth.len() - tp,
    })
}
