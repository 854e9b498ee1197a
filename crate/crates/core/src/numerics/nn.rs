//! Parameterized blocks built on the tape. Weights follow the `x * W + b`
//! convention with `W` stored `[fan_in x fan_out]`; a block named `p` owns
//! the parameters `p.w`, `p.b`, `p.0.w`, ... under that prefix.

use alloc::format;
use alloc::vec;

use super::attention::{EdgeLayout, SeqLayout, SeqMask};
use super::params::ParamStore;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{shape_err, Result};

/// Layer widths of an MLP, input first. ReLU between layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec<'a> {
    pub widths: &'a [usize],
}

pub fn init_linear(store: &mut ParamStore, prefix: &str, fan_in: usize, fan_out: usize) {
    store.init_glorot(&format!("{prefix}.w"), fan_in, fan_out);
    store.init_zeros(&format!("{prefix}.b"), 1, fan_out);
}

pub fn init_mlp(store: &mut ParamStore, prefix: &str, widths: &[usize]) {
    for (l, pair) in widths.windows(2).enumerate() {
        init_linear(store, &format!("{prefix}.{l}"), pair[0], pair[1]);
    }
}

pub fn init_layer_norm(store: &mut ParamStore, prefix: &str, width: usize) {
    store.init_ones(&format!("{prefix}.gain"), 1, width);
    store.init_zeros(&format!("{prefix}.bias"), 1, width);
}

pub fn init_mha(store: &mut ParamStore, prefix: &str, d: usize) {
    for proj in ["q", "k", "v", "o"] {
        init_linear(store, &format!("{prefix}.{proj}"), d, d);
    }
}

pub fn linear(tape: &mut Tape, prefix: &str, x: Var) -> Result<Var> {
    let w = tape.param(&format!("{prefix}.w"))?;
    let b = tape.param(&format!("{prefix}.b"))?;
    let xw = tape.matmul(x, w)?;
    tape.add_row(xw, b)
}

/// `layers` stacked linear maps under `prefix.0 .. prefix.{layers-1}`.
pub fn mlp(tape: &mut Tape, prefix: &str, x: Var, layers: usize) -> Result<Var> {
    let mut h = x;
    for l in 0..layers {
        h = linear(tape, &format!("{prefix}.{l}"), h)?;
        if l + 1 < layers {
            h = tape.relu(h)?;
        }
    }
    Ok(h)
}

pub fn layer_norm(tape: &mut Tape, prefix: &str, x: Var) -> Result<Var> {
    let g = tape.param(&format!("{prefix}.gain"))?;
    let b = tape.param(&format!("{prefix}.bias"))?;
    tape.layer_norm(x, g, b)
}

/// Projected multi-head attention of `query` rows over `kv` rows.
pub fn mha(tape: &mut Tape, prefix: &str, query: Var, kv: Var, layout: SeqLayout, heads: usize) -> Result<Var> {
    let q = linear(tape, &format!("{prefix}.q"), query)?;
    let k = linear(tape, &format!("{prefix}.k"), kv)?;
    let v = linear(tape, &format!("{prefix}.v"), kv)?;
    let o = tape.seq_attention(q, k, v, heads, layout)?;
    linear(tape, &format!("{prefix}.o"), o)
}

/// Projected attention of nodes over their incoming edge tokens.
pub fn edge_mha(
    tape: &mut Tape,
    prefix: &str,
    nodes: Var,
    edges: Var,
    layout: EdgeLayout,
    heads: usize,
) -> Result<Var> {
    let q = linear(tape, &format!("{prefix}.q"), nodes)?;
    let k = linear(tape, &format!("{prefix}.k"), edges)?;
    let v = linear(tape, &format!("{prefix}.v"), edges)?;
    let o = tape.edge_attention(q, k, v, heads, layout)?;
    linear(tape, &format!("{prefix}.o"), o)
}

pub fn init_ffn(store: &mut ParamStore, prefix: &str, d: usize, hidden: usize) {
    init_mlp(store, prefix, &[d, hidden, d]);
}

pub fn init_self_attn_block(store: &mut ParamStore, prefix: &str, d: usize, hidden: usize) {
    init_layer_norm(store, &format!("{prefix}.ln1"), d);
    init_mha(store, &format!("{prefix}.attn"), d);
    init_layer_norm(store, &format!("{prefix}.ln2"), d);
    init_ffn(store, &format!("{prefix}.ffn"), d, hidden);
}

/// Pre-norm transformer layer: `x + MHA(LN x)`, then `h + FFN(LN h)`.
/// With `layer_norm == false` the normalizations are skipped.
pub fn self_attn_block(
    tape: &mut Tape,
    prefix: &str,
    x: Var,
    layout: SeqLayout,
    heads: usize,
    layer_norm_on: bool,
) -> Result<Var> {
    let n1 = if layer_norm_on {
        layer_norm(tape, &format!("{prefix}.ln1"), x)?
    } else {
        x
    };
    let a = mha(tape, &format!("{prefix}.attn"), n1, n1, layout, heads)?;
    let h = tape.add(x, a)?;
    let n2 = if layer_norm_on {
        layer_norm(tape, &format!("{prefix}.ln2"), h)?
    } else {
        h
    };
    let f = mlp(tape, &format!("{prefix}.ffn"), n2, 2)?;
    tape.add(h, f)
}

/// Standalone MLP evaluation over the parameters under `prefix`.
pub fn mlp_forward(params: &ParamStore, prefix: &str, x: &Tensor, spec: &MlpSpec) -> Result<Tensor> {
    let layers = spec.widths.len().saturating_sub(1);
    if x.cols() != spec.widths.first().copied().unwrap_or(0) {
        return Err(shape_err(
            "mlp_forward",
            format!("input width {} vs {:?}", x.cols(), spec.widths),
        ));
    }
    let mut tape = Tape::new(params);
    let xv = tape.constant(Tensor::new(&[x.rows(), x.cols()], x.data().to_vec())?)?;
    let out = mlp(&mut tape, prefix, xv, layers)?;
    Ok(tape.value(out).clone())
}

/// Standalone projected multi-head attention with an explicit `Tq x Tk` mask.
pub fn mha_forward(
    params: &ParamStore,
    prefix: &str,
    query_seq: &Tensor,
    kv_seq: &Tensor,
    mask: &[bool],
    n_heads: usize,
) -> Result<Tensor> {
    let (tq, tk) = (query_seq.rows(), kv_seq.rows());
    if mask.len() != tq * tk {
        return Err(shape_err("mha_forward", "mask must be Tq x Tk"));
    }
    let mut tape = Tape::new(params);
    let q = tape.constant(query_seq.clone())?;
    let kv = tape.constant(kv_seq.clone())?;
    let layout = SeqLayout::new(1, tq, tk, SeqMask::Dense(mask.to_vec()));
    let out = mha(&mut tape, prefix, q, kv, layout, n_heads)?;
    Ok(tape.value(out).clone())
}

/// Causal `T x T` mask.
pub fn causal_mask(t: usize) -> alloc::vec::Vec<bool> {
    let mut m = vec![false; t * t];
    for i in 0..t {
        for j in 0..=i {
            m[i * t + j] = true;
        }
    }
    m
}
