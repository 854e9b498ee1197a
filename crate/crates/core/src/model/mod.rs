//! The multi-view trajectory graph network: motion and spatial-temporal node
//! encoders, pairwise edge encoders, the association classifier, the
//! MFG/ALG/CIG fusion subgraphs and the Laplace-mixture decoder.

mod inputs;
mod network;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::association::TrackPair;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::numerics::nn::{init_layer_norm, init_linear, init_mha, init_mlp, init_self_attn_block};
use crate::numerics::ParamStore;
use crate::scenario::TrackRef;

pub use inputs::{heading_bin, lane_attr_index, SceneInputs, HEADING_BINS, LANE_ATTRS};
pub use network::{forward_on_tape, model_forward, ForwardVars, ModelOutput};

/// Relative positions entering an MLP are multiplied by this (metres to
/// tens of metres) to keep inputs near unit scale.
pub const POS_SCALE: f64 = 0.1;
/// Decoded locations are the location head's output times this.
pub const MU_SCALE: f64 = 10.0;
/// Lower bound added to every Laplace scale.
pub const SCALE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d: usize,
    pub n_heads: usize,
    pub motion_sa_layers: usize,
    pub st_sa_layers: usize,
    pub edge_sa_layers: usize,
    pub mfg_layers: usize,
    pub alg_layers: usize,
    pub cig_layers: usize,
    /// Number of forecast modes `K`.
    pub k_modes: usize,
    pub lane_range: f64,
    pub assoc_threshold: f64,
    /// Pre-norm layer normalization inside every attention block.
    pub layer_norm: bool,
    /// Observed steps `T` the positional tables cover.
    pub t_obs: usize,
    /// Decoded future steps `H`.
    pub horizon: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 128,
            n_heads: 16,
            motion_sa_layers: 4,
            st_sa_layers: 2,
            edge_sa_layers: 2,
            mfg_layers: 3,
            alg_layers: 1,
            cig_layers: 3,
            k_modes: 6,
            lane_range: 50.0,
            assoc_threshold: 0.5,
            layer_norm: true,
            t_obs: 40,
            horizon: 40,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field, constraint: &str| {
            Err(Error::Config {
                field,
                constraint: constraint.to_string(),
            })
        };
        if self.d == 0 {
            return fail("d", "d >= 1");
        }
        if self.n_heads == 0 || !self.d.is_multiple_of(self.n_heads) {
            return fail("n_heads", "d % n_heads == 0");
        }
        if self.k_modes < 1 {
            return fail("k_modes", "K >= 1");
        }
        if !(self.lane_range > 0.0) {
            return fail("lane_range", "lane_range > 0");
        }
        if !(self.assoc_threshold > 0.0 && self.assoc_threshold < 1.0) {
            return fail("assoc_threshold", "0 < assoc_threshold < 1");
        }
        if self.t_obs < 2 {
            return fail("t_obs", "T >= 2");
        }
        if self.horizon < 1 {
            return fail("horizon", "H >= 1");
        }
        Ok(())
    }

    fn ffn_hidden(&self) -> usize {
        2 * self.d
    }

    /// Decoder output width: `K*H*4` location/scale values plus `K` logits.
    pub fn decoder_width(&self) -> usize {
        self.k_modes * self.horizon * 4 + self.k_modes
    }
}

/// Fresh parameters: Glorot-uniform weights, zero biases, zero positional
/// tables, padding token and attribute tables, unit layer-norm gains.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let (d, h) = (cfg.d, cfg.ffn_hidden());
    let mut s = ParamStore::new(seed);
    init_mlp(&mut s, "mot.embed", &[2, d, d]);
    s.init_zeros("mot.pad", 1, d);
    s.init_zeros("mot.pe", cfg.t_obs, d);
    for l in 0..cfg.motion_sa_layers {
        init_self_attn_block(&mut s, &format!("mot.blk{l}"), d, h);
    }
    init_mlp(&mut s, "st.embed", &[2, d, d]);
    s.init_zeros("st.pe", cfg.t_obs, d);
    for l in 0..cfg.st_sa_layers {
        init_self_attn_block(&mut s, &format!("st.blk{l}"), d, h);
    }
    init_linear(&mut s, "est.proj", 2 * d, d);
    for l in 0..cfg.edge_sa_layers {
        init_self_attn_block(&mut s, &format!("est.blk{l}"), d, h);
    }
    init_mlp(&mut s, "assoc", &[d, d, 1]);
    init_mlp(&mut s, "lane.embed", &[2, d, d]);
    init_mlp(&mut s, "rs", &[2, d, d]);
    s.init_zeros("lane.attr", LANE_ATTRS, d);
    s.init_zeros("cig.attr", HEADING_BINS, d);
    for (name, layers) in [
        ("mfg", cfg.mfg_layers),
        ("alg", cfg.alg_layers),
        ("cig", cfg.cig_layers),
    ] {
        for l in 0..layers {
            let p = format!("{name}{l}");
            init_layer_norm(&mut s, &format!("{p}.ln_q"), d);
            init_layer_norm(&mut s, &format!("{p}.ln_kv"), d);
            init_mha(&mut s, &format!("{p}.attn"), d);
            init_layer_norm(&mut s, &format!("{p}.ln_f"), d);
            init_mlp(&mut s, &format!("{p}.ffn"), &[d, h, d]);
        }
    }
    init_mlp(&mut s, "dec.loc", &[5 * d, 2 * d, cfg.k_modes * cfg.horizon * 4]);
    init_mlp(&mut s, "dec.prob", &[5 * d, d, cfg.k_modes]);
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Decode every track of every view.
    Train,
    /// Decode one representative per connected component of the association graph.
    Infer,
}

/// Component switches for ablations. Defaults leave the full model on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Ablation {
    pub no_mfg: bool,
    pub no_alg: bool,
    pub no_cig: bool,
    /// Non-ego tracks are removed from the subgraph's neighbor sets.
    pub mask_coop_mfg: bool,
    pub mask_coop_alg: bool,
    pub mask_coop_cig: bool,
    /// Every non-pruned cross-view pair is treated as associated.
    pub fully_connected_a: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForwardOptions {
    pub ablation: Ablation,
    /// Replaces the classifier's decisions (pruned pairs stay excluded).
    pub assoc_override: Option<BTreeSet<TrackPair>>,
}

/// Candidate pairs with classifier logits and the thresholded adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationSet {
    pub pairs: Vec<TrackPair>,
    pub logits: Vec<f64>,
    pub a: Vec<bool>,
}

impl AssociationSet {
    pub fn associated(&self) -> BTreeSet<TrackPair> {
        self.pairs
            .iter()
            .zip(&self.a)
            .filter(|(_, a)| **a)
            .map(|(p, _)| *p)
            .collect()
    }
}

/// `K`-mode Laplace-mixture forecast in the agent frame of `track`: the
/// displacement of mode `k` at future step `t` is `mu[(k*H + t)*2 ..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub track: TrackRef,
    pub origin: Vec2,
    pub heading: Vec2,
    pub k_modes: usize,
    pub horizon: usize,
    pub mu: Vec<f64>,
    pub scale: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Forecast {
    pub fn mu_at(&self, k: usize, t: usize) -> Vec2 {
        let i = (k * self.horizon + t) * 2;
        Vec2::new(self.mu[i], self.mu[i + 1])
    }

    /// Mode trajectories in the world frame.
    pub fn world_modes(&self) -> Vec<Vec<Vec2>> {
        (0..self.k_modes)
            .map(|k| {
                (0..self.horizon)
                    .map(|t| self.origin + self.mu_at(k, t).rotate_by(self.heading))
                    .collect()
            })
            .collect()
    }
}
