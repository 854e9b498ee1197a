use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::losses::{scene_loss, winner_targets};
use crate::association::TrackPair;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalOptions};
use crate::geometry::Vec2;
use crate::model::{forward_on_tape, init_params, Ablation, ForwardOptions, ModelConfig, SceneInputs};
use crate::numerics::optim::cosine_lr;
use crate::numerics::{AdamW, AdamWConfig, Grads, ParamStore, Tape};
use crate::rng::Rng;
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub w_dis: f64,
    pub w_reg: f64,
    pub w_cls: f64,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
    /// Build the MFG/CIG graphs from the pseudo labels instead of the
    /// classifier while training.
    pub teacher_forcing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 8,
            lr0: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            w_dis: 1.0,
            w_reg: 1.0,
            w_cls: 1.0,
            clip_norm: 5.0,
            teacher_forcing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field, c: &str| {
            Err(Error::Config {
                field,
                constraint: c.to_string(),
            })
        };
        if self.epochs < 1 {
            return fail("epochs", ">= 1");
        }
        if self.batch_size < 1 {
            return fail("batch_size", ">= 1");
        }
        if !(self.lr0 > 0.0) {
            return fail("lr0", "> 0");
        }
        if !(self.weight_decay >= 0.0) {
            return fail("weight_decay", ">= 0");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return fail("betas", "in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return fail("eps", "> 0");
        }
        if !(self.w_dis >= 0.0 && self.w_reg >= 0.0 && self.w_cls >= 0.0) {
            return fail("loss_weights", ">= 0");
        }
        if !(self.clip_norm > 0.0) {
            return fail("clip_norm", "> 0");
        }
        Ok(())
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValMetrics {
    pub min_ade: f64,
    pub min_fde: f64,
    pub mr: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate of the last step of the epoch.
    pub lr: f64,
    pub l_dis: f64,
    pub l_reg: f64,
    pub l_cls: f64,
    pub train_scenarios: usize,
    pub val: Option<ValMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ParamStore,
    pub history: Vec<EpochRecord>,
}

/// Training stopped on an error; `last_good` holds the parameters before the
/// failing step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainFailure {
    pub error: Error,
    pub last_good: ParamStore,
    pub history: Vec<EpochRecord>,
}

struct Prepared {
    inputs: SceneInputs,
    targets: Vec<Vec<Vec2>>,
}

/// Flips the membership of every candidate pair with probability `p`.
pub fn disturb_labels(
    labels: &BTreeSet<TrackPair>,
    candidates: &[TrackPair],
    p: f64,
    rng: &mut Rng,
) -> BTreeSet<TrackPair> {
    let mut out = labels.clone();
    for c in candidates {
        if rng.bernoulli(p) && !out.remove(c) {
            out.insert(*c);
        }
    }
    out
}

/// Mini-batch AdamW on `L_dis + L_reg + L_cls` with a cosine-annealed
/// learning rate. Each loss is averaged over the batch's candidate pairs
/// (`L_dis`), agent steps (`L_reg`) or agents (`L_cls`). Scenarios within a
/// batch are processed in index order, so runs are bit-reproducible.
pub fn fit(
    train: &[Scenario],
    labels: &[BTreeSet<TrackPair>],
    val: &[Scenario],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    ablation: Ablation,
    on_epoch: &mut dyn FnMut(&EpochRecord, &ParamStore),
) -> core::result::Result<FitResult, TrainFailure> {
    let mut history = Vec::new();
    let mut params = match init_params(mcfg, tcfg.seed) {
        Ok(p) => p,
        Err(error) => {
            return Err(TrainFailure {
                error,
                last_good: ParamStore::new(tcfg.seed),
                history,
            })
        }
    };
    let fail = |error, params: &ParamStore, history: Vec<EpochRecord>| TrainFailure {
        error,
        last_good: params.clone(),
        history,
    };
    if let Err(e) = tcfg.validate() {
        return Err(fail(e, &params, history));
    }
    if labels.len() != train.len() {
        return Err(fail(
            Error::Config {
                field: "labels",
                constraint: format!("{} label sets for {} scenarios", labels.len(), train.len()),
            },
            &params,
            history,
        ));
    }
    let prepared: Result<Vec<Prepared>> = train
        .iter()
        .map(|s| {
            let inputs = SceneInputs::build(s, mcfg)?;
            let targets = winner_targets(s, &inputs, mcfg)?;
            Ok(Prepared { inputs, targets })
        })
        .collect();
    let prepared = match prepared {
        Ok(p) => p,
        Err(e) => return Err(fail(e, &params, history)),
    };
    let steps_per_epoch = train.len().div_ceil(tcfg.batch_size) as u64;
    let t_max = steps_per_epoch * tcfg.epochs as u64;
    let mut opt = AdamW::new(tcfg.adamw());
    let mut step: u64 = 0;
    for epoch in 0..tcfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        Rng::derive(tcfg.seed, &format!("epoch/{epoch}")).shuffle(&mut order);
        let (mut sum_dis, mut sum_reg, mut sum_cls) = (0.0, 0.0, 0.0);
        let (mut n_pairs, mut n_steps, mut n_agents) = (0usize, 0usize, 0usize);
        let mut lr = tcfg.lr0;
        for chunk in order.chunks(tcfg.batch_size) {
            let mut batch = chunk.to_vec();
            batch.sort_unstable();
            let p_tot: usize = batch.iter().map(|&i| prepared[i].inputs.candidates.len()).sum();
            let a_tot: usize = batch.iter().map(|&i| prepared[i].inputs.n_tracks()).sum();
            let h = mcfg.horizon;
            let mut grads = Grads::default();
            for &i in &batch {
                let opts = ForwardOptions {
                    ablation,
                    assoc_override: tcfg.teacher_forcing.then(|| labels[i].clone()),
                };
                let run = (|| -> Result<(f64, f64, f64, Grads)> {
                    let mut tape = Tape::new(&params);
                    let vars = forward_on_tape(&mut tape, &prepared[i].inputs, mcfg, &opts)?;
                    let sl = scene_loss(&mut tape, &vars, prepared[i].targets.clone(), &labels[i], mcfg)?;
                    let reg = tape.scale(sl.reg, tcfg.w_reg / (a_tot * h) as f64)?;
                    let cls = tape.scale(sl.cls, tcfg.w_cls / a_tot as f64)?;
                    let mut total = tape.add(reg, cls)?;
                    let mut dis_val = 0.0;
                    if let Some(d) = sl.dis {
                        dis_val = tape.value(d).data()[0];
                        let dw = tape.scale(d, tcfg.w_dis / p_tot.max(1) as f64)?;
                        total = tape.add(total, dw)?;
                    }
                    let g = tape.backward(total)?;
                    Ok((dis_val, tape.value(sl.reg).data()[0], tape.value(sl.cls).data()[0], g))
                })();
                match run {
                    Ok((d, r, c, g)) => {
                        sum_dis += d;
                        sum_reg += r;
                        sum_cls += c;
                        grads.accumulate(&g);
                    }
                    Err(e) => return Err(fail(e, &params, history)),
                }
            }
            n_pairs += p_tot;
            n_agents += a_tot;
            n_steps += a_tot * h;
            grads.clip_global_norm(tcfg.clip_norm);
            lr = cosine_lr(tcfg.lr0, step, t_max);
            let before = params.clone();
            if let Err(e) = opt.step(&mut params, &grads, lr) {
                return Err(fail(e, &before, history));
            }
            step += 1;
        }
        let val_metrics = if val.is_empty() {
            None
        } else {
            let opts = EvalOptions {
                ablation,
                ..EvalOptions::default()
            };
            match evaluate(val, &params, mcfg, &opts) {
                Ok(r) => Some(ValMetrics {
                    min_ade: r.min_ade,
                    min_fde: r.min_fde,
                    mr: r.mr,
                    f1: r.association.map_or(f64::NAN, |a| a.metrics().f1),
                }),
                Err(e) => return Err(fail(e, &params, history)),
            }
        };
        let rec = EpochRecord {
            epoch,
            lr,
            l_dis: if n_pairs == 0 { 0.0 } else { sum_dis / n_pairs as f64 },
            l_reg: sum_reg / n_steps.max(1) as f64,
            l_cls: sum_cls / n_agents.max(1) as f64,
            train_scenarios: train.len(),
            val: val_metrics,
        };
        if !(rec.l_dis.is_finite() && rec.l_reg.is_finite() && rec.l_cls.is_finite()) {
            return Err(fail(Error::NonFinite { op: "training loss" }, &params, history));
        }
        on_epoch(&rec, &params);
        history.push(rec);
    }
    Ok(FitResult { params, history })
}
