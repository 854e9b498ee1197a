use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::inputs::{heading_bin, lane_attr_index, SceneInputs};
use super::{AssociationSet, Forecast, ForwardOptions, Mode, ModelConfig, MU_SCALE, POS_SCALE, SCALE_FLOOR};
use crate::association::canonical;
use crate::error::Result;
use crate::geometry::{angle_of, rotate_into_frame};
use crate::numerics::nn::{edge_mha, layer_norm, linear, mlp, self_attn_block};
use crate::numerics::{EdgeLayout, ParamStore, SeqLayout, SeqMask, Tape, Tensor, Var};
use crate::scenario::{Scenario, TrackRef};

/// Everything one forward pass leaves on the tape.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub v_mot: Var,
    pub v_st: Var,
    pub v_mfg: Var,
    pub v_alg: Var,
    pub v_cig: Var,
    /// Per-step spatial-temporal hidden states, `N*T x d`.
    pub st_steps: Var,
    /// Canonical-orientation pair encodings, `P x d` (absent when `P = 0`).
    pub e_st: Option<Var>,
    /// Classifier logits, `P x 1`.
    pub logits: Option<Var>,
    pub assoc: AssociationSet,
    /// `N x K*H*2` agent-frame displacements.
    pub mu: Var,
    /// `N x K*H*2` Laplace scales.
    pub scale: Var,
    pub prob_logits: Var,
    pub probs: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub forecasts: Vec<Forecast>,
    pub association: AssociationSet,
    /// Connected components of the association graph (infer mode), members
    /// in track order; the representative is the decoded track.
    pub components: Vec<Vec<TrackRef>>,
}

fn const_rows(tape: &mut Tape, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
    tape.constant(Tensor::new(&[rows, cols], data)?)
}

/// Tiles a `[T x d]` table over `n` sequences.
fn tile_rows(tape: &mut Tape, table: Var, n: usize, t: usize) -> Result<Var> {
    let rows: Vec<usize> = (0..n * t).map(|r| r % t).collect();
    tape.gather_rows(table, &rows)
}

/// Cross-attention of nodes over incoming edge tokens, pre-norm residual with
/// FFN. Nodes without incoming edges are copied through unchanged.
fn fusion_layer(tape: &mut Tape, prefix: &str, v: Var, keys: Var, dst: Vec<usize>, cfg: &ModelConfig) -> Result<Var> {
    if dst.is_empty() {
        return Ok(v);
    }
    let n = tape.value(v).rows();
    let layout = EdgeLayout::new(n, dst);
    let has: Vec<bool> = (0..n).map(|i| layout.has_incoming(i)).collect();
    let (q, kv) = if cfg.layer_norm {
        (
            layer_norm(tape, &format!("{prefix}.ln_q"), v)?,
            layer_norm(tape, &format!("{prefix}.ln_kv"), keys)?,
        )
    } else {
        (v, keys)
    };
    let a = edge_mha(tape, &format!("{prefix}.attn"), q, kv, layout, cfg.n_heads)?;
    let h = tape.add(v, a)?;
    let hn = if cfg.layer_norm {
        layer_norm(tape, &format!("{prefix}.ln_f"), h)?
    } else {
        h
    };
    let f = mlp(tape, &format!("{prefix}.ffn"), hn, 2)?;
    let out = tape.add(h, f)?;
    tape.blend_rows(out, v, has)
}

fn encode_motion(tape: &mut Tape, inp: &SceneInputs, cfg: &ModelConfig) -> Result<Var> {
    let (n, t_obs) = (inp.n_tracks(), inp.t_obs);
    let mut x = vec![0.0; n * t_obs * 2];
    let mut valid = vec![false; n * t_obs];
    for i in 0..n {
        for t in 1..t_obs {
            if inp.is_observed(i, t) && inp.is_observed(i, t - 1) {
                let d = rotate_into_frame(inp.heading[i], inp.position(i, t) - inp.position(i, t - 1))?;
                let r = i * t_obs + t;
                x[2 * r] = d.x;
                x[2 * r + 1] = d.y;
                valid[r] = true;
            }
        }
    }
    let x = const_rows(tape, n * t_obs, 2, x)?;
    let emb = mlp(tape, "mot.embed", x, 2)?;
    let pad = tape.param("mot.pad")?;
    let tok = tape.blend_rows(emb, pad, valid)?;
    let pe = tape.param("mot.pe")?;
    let pe = tile_rows(tape, pe, n, t_obs)?;
    let mut h = tape.add(tok, pe)?;
    for l in 0..cfg.motion_sa_layers {
        let layout = SeqLayout::new(n, t_obs, t_obs, SeqMask::Causal);
        h = self_attn_block(tape, &format!("mot.blk{l}"), h, layout, cfg.n_heads, cfg.layer_norm)?;
    }
    let rows: Vec<usize> = (0..n).map(|i| i * t_obs + inp.last[i]).collect();
    tape.gather_rows(h, &rows)
}

/// Returns `(v_st, per-step hidden states)`.
fn encode_st(tape: &mut Tape, inp: &SceneInputs, cfg: &ModelConfig) -> Result<(Var, Var)> {
    let (n, t_obs) = (inp.n_tracks(), inp.t_obs);
    let mut x = vec![0.0; n * t_obs * 2];
    for r in 0..n * t_obs {
        if inp.observed[r] {
            let p = rotate_into_frame(inp.anchor.1, inp.positions[r] - inp.anchor.0)? * POS_SCALE;
            x[2 * r] = p.x;
            x[2 * r + 1] = p.y;
        }
    }
    let x = const_rows(tape, n * t_obs, 2, x)?;
    let emb = mlp(tape, "st.embed", x, 2)?;
    let pe = tape.param("st.pe")?;
    let pe = tile_rows(tape, pe, n, t_obs)?;
    let mut h = tape.add(emb, pe)?;
    for l in 0..cfg.st_sa_layers {
        let layout = SeqLayout::new(n, t_obs, t_obs, SeqMask::KeyValid(inp.observed.clone()));
        h = self_attn_block(tape, &format!("st.blk{l}"), h, layout, cfg.n_heads, cfg.layer_norm)?;
    }
    let mut entries = Vec::new();
    for i in 0..n {
        let steps: Vec<usize> = (0..t_obs).filter(|&t| inp.is_observed(i, t)).collect();
        let w = 1.0 / steps.len() as f64;
        entries.extend(steps.into_iter().map(|t| (i, i * t_obs + t, w)));
    }
    let v = tape.sparse_rows(h, n, entries)?;
    Ok((v, h))
}

/// Pair encodings `e_{i->j}` for each `(i, j)`: per-step `[s_i, s_j]` tokens
/// (zero where either step is missing), projected, self-attended, averaged.
fn encode_pairs(
    tape: &mut Tape,
    inp: &SceneInputs,
    cfg: &ModelConfig,
    s: Var,
    pairs: &[(usize, usize)],
) -> Result<Var> {
    let (p, t_obs) = (pairs.len(), inp.t_obs);
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (k, &(i, j)) in pairs.iter().enumerate() {
        for t in 0..t_obs {
            if inp.is_observed(i, t) && inp.is_observed(j, t) {
                left.push((k * t_obs + t, i * t_obs + t, 1.0));
                right.push((k * t_obs + t, j * t_obs + t, 1.0));
            }
        }
    }
    let l = tape.sparse_rows(s, p * t_obs, left)?;
    let r = tape.sparse_rows(s, p * t_obs, right)?;
    let tok = tape.concat_cols(&[l, r])?;
    let mut h = linear(tape, "est.proj", tok)?;
    for layer in 0..cfg.edge_sa_layers {
        let layout = SeqLayout::new(p, t_obs, t_obs, SeqMask::None);
        h = self_attn_block(tape, &format!("est.blk{layer}"), h, layout, cfg.n_heads, cfg.layer_norm)?;
    }
    let w = 1.0 / t_obs as f64;
    let entries = (0..p)
        .flat_map(|k| (0..t_obs).map(move |t| (k, k * t_obs + t, w)))
        .collect();
    tape.sparse_rows(h, p, entries)
}

fn logit_threshold(p: f64) -> f64 {
    crate::math::ln(p / (1.0 - p))
}

/// Runs the full network on `tape` and decodes every track.
pub fn forward_on_tape(
    tape: &mut Tape,
    inp: &SceneInputs,
    cfg: &ModelConfig,
    opts: &ForwardOptions,
) -> Result<ForwardVars> {
    cfg.validate()?;
    let n = inp.n_tracks();
    let abl = opts.ablation;
    let v_mot = encode_motion(tape, inp, cfg)?;
    let (v_st, st_steps) = encode_st(tape, inp, cfg)?;

    // Association over canonical candidate pairs.
    let cands = &inp.candidates;
    let (e_st, logits, logit_vals) = if cands.is_empty() {
        (None, None, Vec::new())
    } else {
        let e = encode_pairs(tape, inp, cfg, st_steps, cands)?;
        let lg = mlp(tape, "assoc", e, 2)?;
        let vals = tape.value(lg).data().to_vec();
        (Some(e), Some(lg), vals)
    };
    let pairs: Vec<_> = cands
        .iter()
        .map(|&(i, j)| canonical(inp.tracks[i], inp.tracks[j]))
        .collect();
    let thr = logit_threshold(cfg.assoc_threshold);
    let a: Vec<bool> = (0..cands.len())
        .map(|k| {
            if abl.fully_connected_a {
                true
            } else if let Some(set) = &opts.assoc_override {
                set.contains(&pairs[k])
            } else {
                logit_vals[k] > thr
            }
        })
        .collect();
    let assoc = AssociationSet {
        pairs,
        logits: logit_vals,
        a: a.clone(),
    };

    // MFG over associated pairs, both directions.
    let mut v = v_mot;
    if !abl.no_mfg && cfg.mfg_layers > 0 {
        let linked: Vec<usize> = (0..cands.len()).filter(|&k| a[k]).collect();
        let reversed: Vec<(usize, usize)> = linked.iter().map(|&k| (cands[k].1, cands[k].0)).collect();
        let mut dst = Vec::new();
        let mut src = Vec::new();
        let mut fwd_rows = Vec::new();
        let mut rev_rows = Vec::new();
        for (q, &k) in linked.iter().enumerate() {
            let (i, j) = cands[k];
            for (to, from, forward) in [(i, j, true), (j, i, false)] {
                if abl.mask_coop_mfg && !inp.is_ego[from] {
                    continue;
                }
                let e = dst.len();
                dst.push(to);
                src.push(from);
                if forward {
                    fwd_rows.push((e, k, 1.0));
                } else {
                    rev_rows.push((e, q, 1.0));
                }
            }
        }
        if !dst.is_empty() {
            let ne = dst.len();
            let e_fwd = tape.sparse_rows(e_st.expect("edges imply candidates"), ne, fwd_rows)?;
            let e_edges = if rev_rows.is_empty() {
                e_fwd
            } else {
                let e_rev_all = encode_pairs(tape, inp, cfg, st_steps, &reversed)?;
                let e_rev = tape.sparse_rows(e_rev_all, ne, rev_rows)?;
                tape.add(e_fwd, e_rev)?
            };
            for l in 0..cfg.mfg_layers {
                let vs = tape.gather_rows(v, &src)?;
                let keys = tape.add(vs, e_edges)?;
                v = fusion_layer(tape, &format!("mfg{l}"), v, keys, dst.clone(), cfg)?;
            }
        }
    }
    let v_mfg = v;

    // ALG: agent <- lanes within range.
    if !abl.no_alg && cfg.alg_layers > 0 {
        let mut dst = Vec::new();
        let mut lane_in = Vec::new();
        let mut rel_in = Vec::new();
        let mut attr = Vec::new();
        for i in 0..n {
            if abl.mask_coop_alg && !inp.is_ego[i] {
                continue;
            }
            for lane in &inp.lanes {
                if (lane.start - inp.origin[i]).norm() > cfg.lane_range {
                    continue;
                }
                let lv = rotate_into_frame(inp.heading[i], lane.end - lane.start)?;
                let rv = rotate_into_frame(inp.heading[i], inp.origin[i] - lane.start)? * POS_SCALE;
                dst.push(i);
                lane_in.extend([lv.x, lv.y]);
                rel_in.extend([rv.x, rv.y]);
                attr.push(lane_attr_index(lane.turn, lane.road_type));
            }
        }
        if !dst.is_empty() {
            let ne = dst.len();
            let li = const_rows(tape, ne, 2, lane_in)?;
            let ri = const_rows(tape, ne, 2, rel_in)?;
            let lm = mlp(tape, "lane.embed", li, 2)?;
            let rs = mlp(tape, "rs", ri, 2)?;
            let table = tape.param("lane.attr")?;
            let at = tape.gather_rows(table, &attr)?;
            let k0 = tape.add(lm, rs)?;
            let keys = tape.add(k0, at)?;
            for l in 0..cfg.alg_layers {
                v = fusion_layer(tape, &format!("alg{l}"), v, keys, dst.clone(), cfg)?;
            }
        }
    }
    let v_alg = v;

    // CIG: same-view pairs and non-associated cross-view pairs present now.
    if !abl.no_cig && cfg.cig_layers > 0 {
        let linked: alloc::collections::BTreeSet<(usize, usize)> =
            (0..cands.len()).filter(|&k| a[k]).map(|k| cands[k]).collect();
        let mut dst = Vec::new();
        let mut src = Vec::new();
        let mut rel_in = Vec::new();
        let mut bins = Vec::new();
        for i in 0..n {
            if !inp.present_now[i] {
                continue;
            }
            for j in 0..n {
                if i == j || !inp.present_now[j] || (abl.mask_coop_cig && !inp.is_ego[j]) {
                    continue;
                }
                if inp.tracks[i].view != inp.tracks[j].view && linked.contains(&(i.min(j), i.max(j))) {
                    continue;
                }
                let rv = rotate_into_frame(inp.heading[i], inp.origin[i] - inp.origin[j])? * POS_SCALE;
                let rh = rotate_into_frame(inp.heading[i], inp.heading[j])?;
                dst.push(i);
                src.push(j);
                rel_in.extend([rv.x, rv.y]);
                bins.push(heading_bin(angle_of(rh)));
            }
        }
        if !dst.is_empty() {
            let ne = dst.len();
            let ri = const_rows(tape, ne, 2, rel_in)?;
            let rs = mlp(tape, "rs", ri, 2)?;
            let table = tape.param("cig.attr")?;
            let at = tape.gather_rows(table, &bins)?;
            let stat = tape.add(rs, at)?;
            for l in 0..cfg.cig_layers {
                let vs = tape.gather_rows(v, &src)?;
                let keys = tape.add(vs, stat)?;
                v = fusion_layer(tape, &format!("cig{l}"), v, keys, dst.clone(), cfg)?;
            }
        }
    }
    let v_cig = v;

    // Decoder.
    let z = tape.concat_cols(&[v_st, v_mot, v_mfg, v_alg, v_cig])?;
    let loc = mlp(tape, "dec.loc", z, 2)?;
    let (k_modes, h) = (cfg.k_modes, cfg.horizon);
    let width = k_modes * h * 4;
    let pick = |offset: usize| -> Vec<usize> {
        (0..n)
            .flat_map(move |r| (0..k_modes * h).flat_map(move |m| (0..2).map(move |c| r * width + m * 4 + offset + c)))
            .collect()
    };
    let mu_raw = tape.gather(loc, pick(0), n, k_modes * h * 2)?;
    let mu = tape.scale(mu_raw, MU_SCALE)?;
    let b_raw = tape.gather(loc, pick(2), n, k_modes * h * 2)?;
    let b_sp = tape.softplus(b_raw)?;
    let scale = tape.add_const(b_sp, SCALE_FLOOR)?;
    let prob_logits = mlp(tape, "dec.prob", z, 2)?;
    let probs = tape.softmax_rows(prob_logits)?;

    Ok(ForwardVars {
        v_mot,
        v_st,
        v_mfg,
        v_alg,
        v_cig,
        st_steps,
        e_st,
        logits,
        assoc,
        mu,
        scale,
        prob_logits,
        probs,
    })
}

fn forecast_row(tape: &Tape, vars: &ForwardVars, inp: &SceneInputs, cfg: &ModelConfig, i: usize) -> Forecast {
    Forecast {
        track: inp.tracks[i],
        origin: inp.origin[i],
        heading: inp.heading[i],
        k_modes: cfg.k_modes,
        horizon: cfg.horizon,
        mu: tape.value(vars.mu).row_slice(i).to_vec(),
        scale: tape.value(vars.scale).row_slice(i).to_vec(),
        probs: tape.value(vars.probs).row_slice(i).to_vec(),
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Connected components of the association graph with one representative
/// each: the ego member seen most recently (then longest, then lowest id),
/// otherwise the member with the most observed frames.
pub(crate) fn components(inp: &SceneInputs, assoc: &AssociationSet) -> Vec<(usize, Vec<usize>)> {
    let n = inp.n_tracks();
    let mut parent: Vec<usize> = (0..n).collect();
    for (k, &(i, j)) in inp.candidates.iter().enumerate() {
        if assoc.a[k] {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let count = |i: usize| (0..inp.t_obs).filter(|&t| inp.is_observed(i, t)).count();
    groups
        .into_values()
        .map(|members| {
            let ego: Vec<usize> = members.iter().copied().filter(|&i| inp.is_ego[i]).collect();
            let rep = if ego.is_empty() {
                *members
                    .iter()
                    .max_by_key(|&&i| (count(i), core::cmp::Reverse(i)))
                    .unwrap()
            } else {
                *ego.iter()
                    .max_by_key(|&&i| (inp.last[i], count(i), core::cmp::Reverse(i)))
                    .unwrap()
            };
            (rep, members)
        })
        .collect()
}

pub fn model_forward(
    scenario: &Scenario,
    params: &ParamStore,
    cfg: &ModelConfig,
    mode: Mode,
    opts: &ForwardOptions,
) -> Result<ModelOutput> {
    let inp = SceneInputs::build(scenario, cfg)?;
    let mut tape = Tape::new(params);
    let vars = forward_on_tape(&mut tape, &inp, cfg, opts)?;
    let (forecasts, comps) = match mode {
        Mode::Train => (
            (0..inp.n_tracks())
                .map(|i| forecast_row(&tape, &vars, &inp, cfg, i))
                .collect(),
            Vec::new(),
        ),
        Mode::Infer => {
            let mut comps = components(&inp, &vars.assoc);
            comps.sort_by_key(|(rep, _)| *rep);
            let f = comps
                .iter()
                .map(|(rep, _)| forecast_row(&tape, &vars, &inp, cfg, *rep))
                .collect();
            let c = comps
                .into_iter()
                .map(|(_, m)| m.into_iter().map(|i| inp.tracks[i]).collect())
                .collect();
            (f, c)
        }
    };
    Ok(ModelOutput {
        forecasts,
        association: vars.assoc,
        components: comps,
    })
}
