use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::metrics::{evaluate, EvalOptions, MetricsReport};
use crate::error::{Error, Result};
use crate::geometry::resync_track;
use crate::model::{Ablation, ModelConfig};
use crate::numerics::ParamStore;
use crate::rng::Rng;
use crate::scenario::{Scenario, ViewKind};

/// Drops the latest `k` frames of every non-ego track and refills them by
/// extrapolation. Tracks left with fewer than two observations disappear,
/// as they would from a receiver's point of view.
pub fn resync_scenario(scenario: &Scenario, k: usize) -> Result<Scenario> {
    if k == 0 {
        return Ok(scenario.clone());
    }
    let mut out = scenario.clone();
    for view in out.views.iter_mut().filter(|v| v.kind != ViewKind::Ego) {
        let mut kept = Vec::with_capacity(view.tracks.len());
        for tr in &view.tracks {
            match resync_track(tr, k) {
                Ok(t) => kept.push(t),
                Err(Error::Resync { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        view.tracks = kept;
    }
    out.prune_truth();
    Ok(out)
}

/// Drops each non-ego per-frame observation independently with probability
/// `ratio`; tracks left with fewer than two observations are removed.
pub fn drop_observations(scenario: &Scenario, ratio: f64, rng: &mut Rng) -> Scenario {
    let mut out = scenario.clone();
    for view in out.views.iter_mut().filter(|v| v.kind != ViewKind::Ego) {
        for tr in &mut view.tracks {
            for f in &mut tr.frames {
                if f.is_some() && rng.bernoulli(ratio) {
                    *f = None;
                }
            }
        }
        view.tracks.retain(|t| t.observed_count() >= 2);
    }
    out.prune_truth();
    out
}

pub fn latency_harness(
    scenarios: &[Scenario],
    params: &ParamStore,
    cfg: &ModelConfig,
    ks: &[usize],
    opts: &EvalOptions,
) -> Result<Vec<(usize, MetricsReport)>> {
    ks.iter()
        .map(|&k| {
            let shifted = scenarios
                .iter()
                .map(|s| resync_scenario(s, k))
                .collect::<Result<Vec<_>>>()?;
            Ok((k, evaluate(&shifted, params, cfg, opts)?))
        })
        .collect()
}

/// Scenario `i` draws its drops from a stream keyed by `(seed, i)`, so every
/// ratio sees the same uniform draws.
pub fn droploss_harness(
    scenarios: &[Scenario],
    params: &ParamStore,
    cfg: &ModelConfig,
    ratios: &[f64],
    seed: u64,
    opts: &EvalOptions,
) -> Result<Vec<(f64, MetricsReport)>> {
    ratios
        .iter()
        .map(|&r| {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config {
                    field: "drop",
                    constraint: "ratio in [0, 1]".to_string(),
                });
            }
            let dropped: Vec<Scenario> = scenarios
                .iter()
                .enumerate()
                .map(|(i, s)| drop_observations(s, r, &mut Rng::derive(seed, &format!("drop/{i}"))))
                .collect();
            Ok((r, evaluate(&dropped, params, cfg, opts)?))
        })
        .collect()
}

/// A component-removal, masking or label-disturbance experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AblationSwitch {
    NoMfg,
    NoAlg,
    NoCig,
    MaskCoopInMfg,
    MaskCoopInAlg,
    MaskCoopInCig,
    FullyConnectedA,
    DisturbLabels(f64),
}

impl AblationSwitch {
    /// Parses `no_mfg`, `mask_coop_in_cig`, `fully_connected_A`,
    /// `disturb_labels(0.25)`, ...
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config {
            field: "ablate",
            constraint: format!("unknown switch `{s}`"),
        };
        Ok(match s {
            "no_mfg" => Self::NoMfg,
            "no_alg" => Self::NoAlg,
            "no_cig" => Self::NoCig,
            "mask_coop_in_mfg" => Self::MaskCoopInMfg,
            "mask_coop_in_alg" => Self::MaskCoopInAlg,
            "mask_coop_in_cig" => Self::MaskCoopInCig,
            "fully_connected_A" | "fully_connected_a" => Self::FullyConnectedA,
            _ => {
                let p = s
                    .strip_prefix("disturb_labels(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|p| p.trim().parse::<f64>().ok())
                    .ok_or_else(bad)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Config {
                        field: "ablate",
                        constraint: "disturbance in [0, 1]".to_string(),
                    });
                }
                Self::DisturbLabels(p)
            }
        })
    }

    pub fn name(&self) -> alloc::string::String {
        match self {
            Self::NoMfg => "no_mfg".into(),
            Self::NoAlg => "no_alg".into(),
            Self::NoCig => "no_cig".into(),
            Self::MaskCoopInMfg => "mask_coop_in_mfg".into(),
            Self::MaskCoopInAlg => "mask_coop_in_alg".into(),
            Self::MaskCoopInCig => "mask_coop_in_cig".into(),
            Self::FullyConnectedA => "fully_connected_A".into(),
            Self::DisturbLabels(p) => format!("disturb_labels({p})"),
        }
    }

    /// Model switches this experiment sets (label disturbance sets none).
    pub fn ablation(&self) -> Ablation {
        let mut a = Ablation::default();
        match self {
            Self::NoMfg => a.no_mfg = true,
            Self::NoAlg => a.no_alg = true,
            Self::NoCig => a.no_cig = true,
            Self::MaskCoopInMfg => a.mask_coop_mfg = true,
            Self::MaskCoopInAlg => a.mask_coop_alg = true,
            Self::MaskCoopInCig => a.mask_coop_cig = true,
            Self::FullyConnectedA => a.fully_connected_a = true,
            Self::DisturbLabels(_) => {}
        }
        a
    }

    /// Component removal and label disturbance change training; masking and
    /// full connection are applied at evaluation time.
    pub fn retrains(&self) -> bool {
        matches!(self, Self::NoMfg | Self::NoAlg | Self::NoCig | Self::DisturbLabels(_))
    }
}
