//! Fused multi-head attention kernels with hand-written backward passes.
//!
//! Two layouts share the same math. [`SeqLayout`] stacks `n_seqs`
//! independent sequences row-wise (query rows `s*tq..(s+1)*tq` attend to key
//! rows `s*tk..(s+1)*tk`). [`EdgeLayout`] lets each node attend over the
//! edges pointing at it, as in graph message passing.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, sqrt};

#[derive(Debug, Clone, PartialEq)]
pub enum SeqMask {
    None,
    /// Query `i` sees keys `j <= i`; requires `tq == tk`.
    Causal,
    /// Per sequence and key step: `n_seqs * tk` flags.
    KeyValid(Vec<bool>),
    /// Explicit `n_seqs * tq * tk` flags.
    Dense(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqLayout {
    pub n_seqs: usize,
    pub tq: usize,
    pub tk: usize,
    pub mask: SeqMask,
}

impl SeqLayout {
    pub fn new(n_seqs: usize, tq: usize, tk: usize, mask: SeqMask) -> Self {
        SeqLayout { n_seqs, tq, tk, mask }
    }

    #[inline]
    pub fn allowed(&self, s: usize, i: usize, j: usize) -> bool {
        match &self.mask {
            SeqMask::None => true,
            SeqMask::Causal => j <= i,
            SeqMask::KeyValid(v) => v[s * self.tk + j],
            SeqMask::Dense(v) => v[(s * self.tq + i) * self.tk + j],
        }
    }
}

/// Incoming-edge lists for node-level attention.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeLayout {
    dst: Vec<usize>,
    incoming: Vec<Vec<usize>>,
}

impl EdgeLayout {
    /// `dst[e]` is the node that edge `e` delivers to.
    pub fn new(n_nodes: usize, dst: Vec<usize>) -> Self {
        let mut incoming = vec![Vec::new(); n_nodes];
        for (e, &t) in dst.iter().enumerate() {
            incoming[t].push(e);
        }
        EdgeLayout { dst, incoming }
    }

    pub fn n_nodes(&self) -> usize {
        self.incoming.len()
    }

    pub fn n_edges(&self) -> usize {
        self.dst.len()
    }

    pub fn has_incoming(&self, node: usize) -> bool {
        !self.incoming[node].is_empty()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax over `scores` in place, ignoring `NEG_INFINITY` entries.
fn softmax_in_place(scores: &mut [f64]) {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for s in scores.iter_mut() {
        *s = if *s == f64::NEG_INFINITY { 0.0 } else { exp(*s - m) };
        z += *s;
    }
    for s in scores.iter_mut() {
        *s /= z;
    }
}

pub(crate) fn seq_forward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    d: usize,
    heads: usize,
    layout: &SeqLayout,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (tq, tk) = (layout.tq, layout.tk);
    let dh = d / heads;
    let scale = 1.0 / sqrt(dh as f64);
    let mut out = vec![0.0; layout.n_seqs * tq * d];
    let mut probs = vec![0.0; layout.n_seqs * heads * tq * tk];
    for s in 0..layout.n_seqs {
        for i in 0..tq {
            if !(0..tk).any(|j| layout.allowed(s, i, j)) {
                return Err(Error::EmptyAttention { row: s * tq + i });
            }
        }
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            for i in 0..tq {
                let qi = &q[(s * tq + i) * d..][cols.clone()];
                let p = &mut probs[((s * heads + h) * tq + i) * tk..][..tk];
                for (j, pj) in p.iter_mut().enumerate() {
                    *pj = if layout.allowed(s, i, j) {
                        dot(qi, &k[(s * tk + j) * d..][cols.clone()]) * scale
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                softmax_in_place(p);
                let o = &mut out[(s * tq + i) * d..][cols.clone()];
                for (j, &pj) in p.iter().enumerate() {
                    if pj == 0.0 {
                        continue;
                    }
                    for (oc, vc) in o.iter_mut().zip(&v[(s * tk + j) * d..][cols.clone()]) {
                        *oc += pj * vc;
                    }
                }
            }
        }
    }
    Ok((out, probs))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn seq_backward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    probs: &[f64],
    g: &[f64],
    d: usize,
    heads: usize,
    layout: &SeqLayout,
    gq: &mut [f64],
    gk: &mut [f64],
    gv: &mut [f64],
) {
    let (tq, tk) = (layout.tq, layout.tk);
    let dh = d / heads;
    let scale = 1.0 / sqrt(dh as f64);
    let mut dp = vec![0.0; tk];
    for s in 0..layout.n_seqs {
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            for i in 0..tq {
                let qrow = (s * tq + i) * d;
                let gi = &g[qrow..][cols.clone()];
                let p = &probs[((s * heads + h) * tq + i) * tk..][..tk];
                let mut acc = 0.0;
                for j in 0..tk {
                    dp[j] = if p[j] == 0.0 {
                        0.0
                    } else {
                        dot(gi, &v[(s * tk + j) * d..][cols.clone()])
                    };
                    acc += p[j] * dp[j];
                }
                for j in 0..tk {
                    if p[j] == 0.0 {
                        continue;
                    }
                    let krow = (s * tk + j) * d;
                    let ds = p[j] * (dp[j] - acc) * scale;
                    for c in cols.clone() {
                        gq[qrow + c] += ds * k[krow + c];
                        gk[krow + c] += ds * q[qrow + c];
                        gv[krow + c] += p[j] * g[qrow + c];
                    }
                }
            }
        }
    }
}

pub(crate) fn edge_forward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    d: usize,
    heads: usize,
    layout: &EdgeLayout,
) -> (Vec<f64>, Vec<f64>) {
    let dh = d / heads;
    let scale = 1.0 / sqrt(dh as f64);
    let mut out = vec![0.0; layout.n_nodes() * d];
    let mut probs = vec![0.0; layout.n_edges() * heads];
    let mut scores = Vec::new();
    for (node, edges) in layout.incoming.iter().enumerate() {
        if edges.is_empty() {
            continue;
        }
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            let qi = &q[node * d..][cols.clone()];
            scores.clear();
            scores.extend(edges.iter().map(|&e| dot(qi, &k[e * d..][cols.clone()]) * scale));
            softmax_in_place(&mut scores);
            for (&e, &p) in edges.iter().zip(&scores) {
                probs[e * heads + h] = p;
                for (oc, vc) in out[node * d..][cols.clone()].iter_mut().zip(&v[e * d..][cols.clone()]) {
                    *oc += p * vc;
                }
            }
        }
    }
    (out, probs)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn edge_backward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    probs: &[f64],
    g: &[f64],
    d: usize,
    heads: usize,
    layout: &EdgeLayout,
    gq: &mut [f64],
    gk: &mut [f64],
    gv: &mut [f64],
) {
    let dh = d / heads;
    let scale = 1.0 / sqrt(dh as f64);
    let mut dp = Vec::new();
    for (node, edges) in layout.incoming.iter().enumerate() {
        if edges.is_empty() {
            continue;
        }
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            let gi = &g[node * d..][cols.clone()];
            dp.clear();
            dp.extend(edges.iter().map(|&e| dot(gi, &v[e * d..][cols.clone()])));
            let acc: f64 = edges.iter().zip(&dp).map(|(&e, x)| probs[e * heads + h] * x).sum();
            for (&e, &dpe) in edges.iter().zip(&dp) {
                let p = probs[e * heads + h];
                let ds = p * (dpe - acc) * scale;
                for c in cols.clone() {
                    gq[node * d + c] += ds * k[e * d + c];
                    gk[e * d + c] += ds * q[node * d + c];
                    gv[e * d + c] += p * g[node * d + c];
                }
            }
        }
    }
}
