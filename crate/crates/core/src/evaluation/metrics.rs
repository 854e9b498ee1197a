use alloc::format;
use alloc::vec::Vec;

use crate::association::{association_metrics, AssocCounts};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::model::{model_forward, Ablation, Forecast, ForwardOptions, Mode, ModelConfig};
use crate::numerics::ParamStore;
use crate::scenario::{Scenario, TrackRef, ViewKind};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Final-step error above which an agent counts as a miss, metres.
    pub miss_threshold: f64,
    /// Score every decoded agent instead of the target only.
    pub all_agents: bool,
    pub ablation: Ablation,
    /// Views of these kinds are emptied before evaluation (never the ego).
    pub mask_views: Vec<ViewKind>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            miss_threshold: 2.0,
            all_agents: false,
            ablation: Ablation::default(),
            mask_views: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentResult {
    pub track: TrackRef,
    pub ade: f64,
    pub fde: f64,
    pub miss: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub index: usize,
    pub agents: Vec<AgentResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub min_ade: f64,
    pub min_fde: f64,
    pub mr: f64,
    pub n_agents: usize,
    pub per_scenario: Vec<ScenarioResult>,
    /// Association counts when the forecaster predicts links.
    pub association: Option<AssocCounts>,
}

/// `(minADE, minFDE)` of one agent, each minimized over modes independently.
pub fn agent_errors(modes: &[Vec<Vec2>], truth: &[Vec2]) -> Result<(f64, f64)> {
    if modes.is_empty() {
        return Err(Error::Metric("forecast has no modes".into()));
    }
    let mut ade = f64::INFINITY;
    let mut fde = f64::INFINITY;
    for m in modes {
        if m.len() != truth.len() || truth.is_empty() {
            return Err(Error::Metric(format!(
                "horizon mismatch: {} predicted vs {} true steps",
                m.len(),
                truth.len()
            )));
        }
        let errs: Vec<f64> = m.iter().zip(truth).map(|(p, g)| (*p - *g).norm()).collect();
        ade = ade.min(errs.iter().sum::<f64>() / errs.len() as f64);
        fde = fde.min(errs[errs.len() - 1]);
    }
    Ok((ade, fde))
}

/// Aggregates per-agent results (scenario order, then agent order).
pub fn forecast_metrics(per_scenario: Vec<ScenarioResult>, association: Option<AssocCounts>) -> MetricsReport {
    let agents: Vec<&AgentResult> = per_scenario.iter().flat_map(|s| &s.agents).collect();
    let n = agents.len();
    let mean = |f: &dyn Fn(&AgentResult) -> f64| {
        if n == 0 {
            0.0
        } else {
            agents.iter().map(|a| f(a)).sum::<f64>() / n as f64
        }
    };
    MetricsReport {
        min_ade: mean(&|a| a.ade),
        min_fde: mean(&|a| a.fde),
        mr: mean(&|a| if a.miss { 1.0 } else { 0.0 }),
        n_agents: n,
        per_scenario,
        association,
    }
}

fn score(track: TrackRef, modes: &[Vec<Vec2>], scenario: &Scenario, opts: &EvalOptions) -> Result<AgentResult> {
    let truth = scenario
        .truth
        .as_ref()
        .ok_or_else(|| Error::Metric("scenario has no ground truth".into()))?;
    let fut = truth
        .future_of(track)
        .ok_or_else(|| Error::Metric(format!("no future for {track:?}")))?;
    let h = modes.first().map_or(0, Vec::len);
    if fut.len() < h {
        return Err(Error::Metric(format!(
            "horizon mismatch: {h} predicted vs {} true steps",
            fut.len()
        )));
    }
    let (ade, fde) = agent_errors(modes, &fut[..h])?;
    let final_min = modes
        .iter()
        .map(|m| (m[h - 1] - fut[h - 1]).norm())
        .fold(f64::INFINITY, f64::min);
    Ok(AgentResult {
        track,
        ade,
        fde,
        miss: final_min > opts.miss_threshold,
    })
}

/// Model evaluation in inference mode. The target's score uses the forecast
/// decoded for its association component.
pub fn evaluate(
    scenarios: &[Scenario],
    params: &ParamStore,
    cfg: &ModelConfig,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let fopts = ForwardOptions {
        ablation: opts.ablation,
        assoc_override: None,
    };
    let mut per = Vec::with_capacity(scenarios.len());
    let mut counts = AssocCounts::default();
    for (index, s) in scenarios.iter().enumerate() {
        let s = if opts.mask_views.is_empty() {
            s.clone()
        } else {
            s.with_views_masked(&opts.mask_views)
        };
        let out = model_forward(&s, params, cfg, Mode::Infer, &fopts)?;
        counts.add(association_metrics(&out.association.associated(), &s)?);
        let mut agents = Vec::new();
        for (f, members) in out.forecasts.iter().zip(&out.components) {
            if opts.all_agents {
                agents.push(score(f.track, &f.world_modes(), &s, opts)?);
            } else if members.contains(&s.target) {
                agents.push(score(s.target, &f.world_modes(), &s, opts)?);
            }
        }
        per.push(ScenarioResult { index, agents });
    }
    Ok(forecast_metrics(per, Some(counts)))
}

/// Constant-velocity extrapolation from the last two observed states.
pub fn cv_forecast(scenario: &Scenario, track: TrackRef) -> Result<Forecast> {
    let tr = scenario
        .track(track)
        .ok_or_else(|| Error::Metric(format!("unknown track {track:?}")))?;
    let obs: Vec<_> = tr.observed().collect();
    if obs.len() < 2 {
        return Err(Error::Metric(format!(
            "track {track:?} has fewer than 2 observed frames"
        )));
    }
    let ((ta, a), (tb, b)) = (obs[obs.len() - 2], obs[obs.len() - 1]);
    let vel = (b.position - a.position) * (1.0 / (tb - ta) as f64);
    let steps_ahead = scenario.t_obs - tb;
    let heading = tr.current_heading();
    let mut mu = Vec::with_capacity(scenario.horizon * 2);
    for t in 0..scenario.horizon {
        let d = crate::geometry::rotate_into_frame(heading, vel * (steps_ahead + t) as f64)?;
        mu.extend([d.x, d.y]);
    }
    Ok(Forecast {
        track,
        origin: b.position,
        heading,
        k_modes: 1,
        horizon: scenario.horizon,
        mu,
        scale: alloc::vec![1.0; scenario.horizon * 2],
        probs: alloc::vec![1.0],
    })
}

/// Constant-velocity baseline scored like [`evaluate`] (ego-view tracks in
/// all-agents mode).
pub fn evaluate_cv(scenarios: &[Scenario], opts: &EvalOptions) -> Result<MetricsReport> {
    let mut per = Vec::with_capacity(scenarios.len());
    for (index, s) in scenarios.iter().enumerate() {
        let tracks: Vec<TrackRef> = if opts.all_agents {
            s.ego_view()
                .map(|v| v.tracks.iter().map(|t| TrackRef::new(v.view_id, t.track_id)).collect())
                .unwrap_or_default()
        } else {
            alloc::vec![s.target]
        };
        let agents = tracks
            .into_iter()
            .map(|r| score(r, &cv_forecast(s, r)?.world_modes(), s, opts))
            .collect::<Result<Vec<_>>>()?;
        per.push(ScenarioResult { index, agents });
    }
    Ok(forecast_metrics(per, None))
}
