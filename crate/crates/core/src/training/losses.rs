use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use crate::association::TrackPair;
use crate::error::{Error, Result};
use crate::geometry::{rotate_into_frame, Vec2};
use crate::math::{exp, ln, ln_1p};
use crate::model::{ForwardVars, ModelConfig, SceneInputs};
use crate::numerics::{Tape, Tensor, Var};
use crate::scenario::Scenario;

/// Probabilities are floored here inside the log of the selection loss.
const PROB_FLOOR: f64 = 1e-12;

/// Binary cross-entropy of one logit against a 0/1 label.
pub fn bce_value(logit: f64, label: bool) -> f64 {
    // softplus(x) - y*x, evaluated stably.
    let sp = if logit > 0.0 {
        logit + ln_1p(exp(-logit))
    } else {
        ln_1p(exp(logit))
    };
    if label {
        sp - logit
    } else {
        sp
    }
}

/// Per-step two-axis Laplace negative log-likelihood.
pub fn laplace_nll_value(target: Vec2, mu: Vec2, b: Vec2) -> f64 {
    ln(2.0 * b.x) + (target.x - mu.x).abs() / b.x + ln(2.0 * b.y) + (target.y - mu.y).abs() / b.y
}

pub fn cls_value(probs: &[f64], winner: usize) -> f64 {
    -ln(probs[winner].max(PROB_FLOOR))
}

/// Winner mode and agent-frame targets for every decoded track.
#[derive(Debug, Clone, PartialEq)]
pub struct WinnerSelection {
    pub winners: Vec<usize>,
    /// Per track, `H` displacement targets in the agent frame.
    pub targets: Vec<Vec<Vec2>>,
}

/// Agent-frame targets `r_i^T (gt^t - p_i^T)` for every track of the scenario.
pub fn winner_targets(scenario: &Scenario, inp: &SceneInputs, cfg: &ModelConfig) -> Result<Vec<Vec<Vec2>>> {
    let truth = scenario
        .truth
        .as_ref()
        .ok_or_else(|| Error::InvalidScenario("training needs ground truth".into()))?;
    if scenario.horizon < cfg.horizon {
        return Err(Error::InvalidScenario(format!(
            "horizon {} shorter than model H {}",
            scenario.horizon, cfg.horizon
        )));
    }
    inp.tracks
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let fut = truth
                .future_of(*r)
                .ok_or_else(|| Error::InvalidScenario(format!("no future for {r:?}")))?;
            fut[..cfg.horizon]
                .iter()
                .map(|g| rotate_into_frame(inp.heading[i], *g - inp.origin[i]))
                .collect()
        })
        .collect()
}

/// `argmin_k` of the mean L2 distance over the horizon; ties go to the lowest `k`.
pub fn select_winner(mu_row: &[f64], targets: &[Vec2], k_modes: usize) -> usize {
    let h = targets.len();
    let mut best = (f64::INFINITY, 0);
    for k in 0..k_modes {
        let mut s = 0.0;
        for (t, g) in targets.iter().enumerate() {
            let i = (k * h + t) * 2;
            s += (Vec2::new(mu_row[i], mu_row[i + 1]) - *g).norm();
        }
        let mean = s / h as f64;
        if mean < best.0 {
            best = (mean, k);
        }
    }
    best.1
}

/// Unnormalized loss sums of one scenario and the counts they average over.
#[derive(Debug, Clone)]
pub struct SceneLoss {
    pub dis: Option<Var>,
    pub n_pairs: usize,
    pub reg: Var,
    pub cls: Var,
    pub n_agents: usize,
    pub selection: WinnerSelection,
}

/// Builds `sum BCE`, `sum winner NLL` and `sum -ln p_k*` on the tape.
/// Label 1 marks candidates present in `labels`.
pub fn scene_loss(
    tape: &mut Tape,
    vars: &ForwardVars,
    targets: Vec<Vec<Vec2>>,
    labels: &BTreeSet<TrackPair>,
    cfg: &ModelConfig,
) -> Result<SceneLoss> {
    let (k_modes, h) = (cfg.k_modes, cfg.horizon);
    let n = targets.len();
    let dis = match vars.logits {
        Some(lg) => {
            let y: Vec<f64> = vars
                .assoc
                .pairs
                .iter()
                .map(|p| if labels.contains(p) { 1.0 } else { 0.0 })
                .collect();
            let yv = tape.constant(Tensor::new(&[y.len(), 1], y)?)?;
            let sp = tape.softplus(lg)?;
            let yx = tape.mul(yv, lg)?;
            let per = tape.sub(sp, yx)?;
            Some(tape.sum(per)?)
        }
        None => None,
    };
    let mu_vals = tape.value(vars.mu).clone();
    let winners: Vec<usize> = (0..n)
        .map(|i| select_winner(mu_vals.row_slice(i), &targets[i], k_modes))
        .collect();
    let width = k_modes * h * 2;
    let idx: Vec<usize> = (0..n)
        .flat_map(|i| {
            let w = winners[i];
            (0..h * 2).map(move |c| i * width + w * h * 2 + c)
        })
        .collect();
    let mu = tape.gather(vars.mu, idx.clone(), n, h * 2)?;
    let b = tape.gather(vars.scale, idx, n, h * 2)?;
    let tgt: Vec<f64> = targets
        .iter()
        .flat_map(|row| row.iter().flat_map(|g| [g.x, g.y]))
        .collect();
    let tgt = tape.constant(Tensor::new(&[n, h * 2], tgt)?)?;
    let diff = tape.sub(tgt, mu)?;
    let ad = tape.abs(diff)?;
    let ratio = tape.div(ad, b)?;
    let b2 = tape.scale(b, 2.0)?;
    let lb = tape.ln_floor(b2, f64::MIN_POSITIVE)?;
    let per = tape.add(lb, ratio)?;
    let reg = tape.sum(per)?;
    let pidx: Vec<usize> = (0..n).map(|i| i * k_modes + winners[i]).collect();
    let pw = tape.gather(vars.probs, pidx, n, 1)?;
    let lp = tape.ln_floor(pw, PROB_FLOOR)?;
    let s = tape.sum(lp)?;
    let cls = tape.scale(s, -1.0)?;
    Ok(SceneLoss {
        dis,
        n_pairs: vars.assoc.pairs.len(),
        reg,
        cls,
        n_agents: n,
        selection: WinnerSelection { winners, targets },
    })
}
