use alloc::vec;
use alloc::vec::Vec;

use super::gradcheck::check_gradients;
use super::nn::{self, causal_mask, mha_forward, mlp_forward, MlpSpec};
use super::*;
use crate::error::Error;
use crate::rng::Rng;

fn random_tensor(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(
        &[rows, cols],
        (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect(),
    )
    .unwrap()
}

fn store_with(entries: &[(&str, Tensor)]) -> ParamStore {
    let mut p = ParamStore::new(1);
    for (n, t) in entries {
        p.insert(*n, t.clone());
    }
    p
}

#[test]
fn sum_of_squares_gradient() {
    let p = store_with(&[("x", Tensor::row(&[1.0, -2.0, 3.0]))]);
    let mut tape = Tape::new(&p);
    let x = tape.param("x").unwrap();
    let sq = tape.mul(x, x).unwrap();
    let loss = tape.sum(sq).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get("x").unwrap().data(), &[2.0, -4.0, 6.0]);
}

#[test]
fn unreached_and_constant_parameters_get_zero() {
    let p = store_with(&[("x", Tensor::row(&[1.0, 2.0])), ("unused", Tensor::row(&[5.0]))]);
    let mut tape = Tape::new(&p);
    let _x = tape.param("x").unwrap();
    let c = tape.constant(Tensor::scalar(4.0)).unwrap();
    let loss = tape.sum(c).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get("x").unwrap().data(), &[0.0, 0.0]);
    assert_eq!(g.get("unused").unwrap().data(), &[0.0]);
}

#[test]
fn non_scalar_loss_rejected() {
    let p = store_with(&[("x", Tensor::row(&[1.0, 2.0]))]);
    let mut tape = Tape::new(&p);
    let x = tape.param("x").unwrap();
    assert_eq!(tape.backward(x).unwrap_err(), Error::NotScalar { rows: 1, cols: 2 });
}

#[test]
fn non_finite_output_is_an_error() {
    let p = store_with(&[("x", Tensor::row(&[1.0, 0.0]))]);
    let mut tape = Tape::new(&p);
    let x = tape.param("x").unwrap();
    let zero = tape.constant(Tensor::row(&[0.0, 0.0])).unwrap();
    assert_eq!(tape.div(x, zero).unwrap_err(), Error::NonFinite { op: "div" });
}

#[test]
fn elementwise_ops_match_finite_differences() {
    for seed in 0..10 {
        let mut rng = Rng::new(seed);
        let (n, m) = (1 + rng.below(4), 1 + rng.below(6));
        let a = random_tensor(&mut rng, n, m);
        let mut b = random_tensor(&mut rng, n, m);
        b.data_mut().iter_mut().for_each(|v| *v = 1.5 + *v);
        let bias = random_tensor(&mut rng, 1, m);
        let p = store_with(&[("a", a), ("b", b), ("bias", bias)]);
        let r = check_gradients(
            &p,
            1e-5,
            |_| true,
            |t| {
                let a = t.param("a")?;
                let b = t.param("b")?;
                let bias = t.param("bias")?;
                let s = t.add(a, b)?;
                let d = t.sub(s, a)?;
                let q = t.div(a, d)?;
                let mm = t.mul(q, b)?;
                let sp = t.softplus(mm)?;
                let sg = t.sigmoid(a)?;
                let ab = t.abs(a)?;
                let x = t.add(sp, sg)?;
                let x = t.add(x, ab)?;
                let x = t.add_row(x, bias)?;
                let x = t.scale(x, 0.7)?;
                let x = t.add_const(x, 3.0)?;
                let l = t.ln_floor(x, 1e-12)?;
                let sm = t.softmax_rows(l)?;
                let w = t.mul(sm, a)?;
                t.sum(w)
            },
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-6, "seed {seed}: {r:?}");
    }
}

#[test]
fn structural_ops_match_finite_differences() {
    for seed in 0..10 {
        let mut rng = Rng::new(100 + seed);
        let (n, k, m) = (1 + rng.below(5), 1 + rng.below(5), 1 + rng.below(5));
        let p = store_with(&[
            ("a", random_tensor(&mut rng, n, k)),
            ("w", random_tensor(&mut rng, k, m)),
            ("c", random_tensor(&mut rng, n, m)),
            ("pad", random_tensor(&mut rng, 1, m + k)),
            ("g", random_tensor(&mut rng, 1, m + k)),
            ("bias", random_tensor(&mut rng, 1, m + k)),
        ]);
        let take: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
        let gather_idx: Vec<usize> = (0..3).map(|_| rng.below(n * (m + k))).collect();
        let r = check_gradients(
            &p,
            1e-5,
            |_| true,
            |t| {
                let a = t.param("a")?;
                let w = t.param("w")?;
                let c = t.param("c")?;
                let mm = t.matmul(a, w)?;
                let prod = t.mul(mm, c)?;
                let cat = t.concat_cols(&[prod, a])?;
                let pad = t.param("pad")?;
                let bl = t.blend_rows(cat, pad, take.clone())?;
                let ln = nn::layer_norm(t, "unused", bl).or_else(|_| {
                    let g = t.param("g")?;
                    let b = t.param("bias")?;
                    t.layer_norm(bl, g, b)
                })?;
                let sl = t.slice_cols(ln, 1, m + k - 1)?;
                let sq = t.mul(sl, sl)?;
                let rows = t.sparse_rows(sq, 2, vec![(0, 0, 0.5), (1, n - 1, 2.0), (0, n - 1, -1.0)])?;
                let s1 = t.sum(rows)?;
                let gth = t.gather(ln, gather_idx.clone(), 1, 3)?;
                let gq = t.mul(gth, gth)?;
                let s2 = t.sum(gq)?;
                t.add(s1, s2)
            },
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-5, "seed {seed}: {r:?}");
    }
}

#[test]
fn seq_attention_matches_finite_differences() {
    for seed in 0..10 {
        let mut rng = Rng::new(200 + seed);
        let heads = 1 + rng.below(2);
        let d = heads * (1 + rng.below(4));
        let t_len = 1 + rng.below(6);
        let n_seqs = 1 + rng.below(2);
        let n = n_seqs * t_len;
        let p = store_with(&[
            ("q", random_tensor(&mut rng, n, d)),
            ("k", random_tensor(&mut rng, n, d)),
            ("v", random_tensor(&mut rng, n, d)),
            ("w", random_tensor(&mut rng, n, d)),
        ]);
        let mut valid: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.7)).collect();
        for s in 0..n_seqs {
            valid[s * t_len] = true;
        }
        let masks = [SeqMask::None, SeqMask::Causal, SeqMask::KeyValid(valid)];
        for mask in masks {
            let layout = SeqLayout::new(n_seqs, t_len, t_len, mask);
            let r = check_gradients(
                &p,
                1e-5,
                |_| true,
                |t| {
                    let q = t.param("q")?;
                    let k = t.param("k")?;
                    let v = t.param("v")?;
                    let w = t.param("w")?;
                    let o = t.seq_attention(q, k, v, heads, layout.clone())?;
                    let ow = t.mul(o, w)?;
                    t.sum(ow)
                },
            )
            .unwrap();
            assert!(r.max_rel_err < 1e-5, "seed {seed}: {r:?}");
        }
    }
}

#[test]
fn edge_attention_matches_finite_differences() {
    for seed in 0..10 {
        let mut rng = Rng::new(300 + seed);
        let heads = 1 + rng.below(2);
        let d = heads * (1 + rng.below(4));
        let n_nodes = 2 + rng.below(4);
        let n_edges = 1 + rng.below(8);
        let dst: Vec<usize> = (0..n_edges).map(|_| rng.below(n_nodes)).collect();
        let p = store_with(&[
            ("q", random_tensor(&mut rng, n_nodes, d)),
            ("k", random_tensor(&mut rng, n_edges, d)),
            ("v", random_tensor(&mut rng, n_edges, d)),
            ("w", random_tensor(&mut rng, n_nodes, d)),
        ]);
        let layout = EdgeLayout::new(n_nodes, dst);
        let r = check_gradients(
            &p,
            1e-5,
            |_| true,
            |t| {
                let q = t.param("q")?;
                let k = t.param("k")?;
                let v = t.param("v")?;
                let w = t.param("w")?;
                let o = t.edge_attention(q, k, v, heads, layout.clone())?;
                let ow = t.mul(o, w)?;
                t.sum(ow)
            },
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-5, "seed {seed}: {r:?}");
    }
}

#[test]
fn transformer_block_matches_finite_differences() {
    for seed in 0..10 {
        let mut rng = Rng::new(400 + seed);
        let heads = 2;
        let d = 2 * (1 + rng.below(4));
        let t_len = 2 + rng.below(5);
        let mut p = ParamStore::new(seed);
        nn::init_self_attn_block(&mut p, "blk", d, d);
        nn::init_mlp(&mut p, "head", &[d, 3, 1]);
        p.insert("x", random_tensor(&mut rng, t_len, d));
        let r = check_gradients(
            &p,
            1e-5,
            |_| true,
            |t| {
                let x = t.param("x")?;
                let layout = SeqLayout::new(1, t_len, t_len, SeqMask::Causal);
                let h = nn::self_attn_block(t, "blk", x, layout, heads, true)?;
                let o = nn::mlp(t, "head", h, 2)?;
                let o2 = t.mul(o, o)?;
                t.sum(o2)
            },
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "seed {seed}: {r:?}");
    }
}

#[test]
fn mlp_zero_and_identity() {
    let mut p = ParamStore::new(0);
    nn::init_mlp(&mut p, "m", &[2, 4, 2]);
    let zero = p.zeroed();
    let x = Tensor::row(&[3.0, -7.0]);
    let out = mlp_forward(&zero, "m", &x, &MlpSpec { widths: &[2, 4, 2] }).unwrap();
    assert_eq!(out.data(), &[0.0, 0.0]);

    let mut id = ParamStore::new(0);
    id.insert("m.0.w", Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    id.insert("m.0.b", Tensor::row(&[0.0, 0.0]));
    let out = mlp_forward(&id, "m", &Tensor::row(&[3.0, 4.0]), &MlpSpec { widths: &[2, 2] }).unwrap();
    assert_eq!(out.data(), &[3.0, 4.0]);
}

#[test]
fn mlp_matches_hand_rolled_matmul() {
    let mut p = ParamStore::new(42);
    nn::init_mlp(&mut p, "m", &[2, 4, 2]);
    for (name, t) in p.clone().iter() {
        if name.ends_with(".b") {
            let mut rng = Rng::derive(7, name);
            let data = (0..t.len()).map(|_| rng.uniform(-0.5, 0.5)).collect();
            p.insert(name.clone(), Tensor::new(t.shape(), data).unwrap());
        }
    }
    let x = [0.3, -1.2];
    let out = mlp_forward(&p, "m", &Tensor::row(&x), &MlpSpec { widths: &[2, 4, 2] }).unwrap();
    let w0 = p.get("m.0.w").unwrap().data();
    let b0 = p.get("m.0.b").unwrap().data();
    let w1 = p.get("m.1.w").unwrap().data();
    let b1 = p.get("m.1.b").unwrap().data();
    let mut h = [0.0; 4];
    for j in 0..4 {
        h[j] = (x[0] * w0[j] + x[1] * w0[4 + j] + b0[j]).max(0.0);
    }
    for o in 0..2 {
        let mut s = b1[o];
        for j in 0..4 {
            s += h[j] * w1[j * 2 + o];
        }
        assert!((out.data()[o] - s).abs() < 1e-12);
    }
}

#[test]
fn mlp_width_mismatch() {
    let mut p = ParamStore::new(0);
    nn::init_mlp(&mut p, "m", &[2, 2]);
    let err = mlp_forward(&p, "m", &Tensor::row(&[1.0, 2.0, 3.0]), &MlpSpec { widths: &[2, 2] });
    assert!(matches!(err, Err(Error::Shape { .. })));
}

#[test]
fn single_token_attention_is_value_then_output_projection() {
    let mut p = ParamStore::new(3);
    nn::init_mha(&mut p, "a", 4);
    let token = Tensor::row(&[0.5, -1.0, 2.0, 0.25]);
    let out = mha_forward(&p, "a", &token, &token, &[true], 1).unwrap();
    let wv = p.get("a.v.w").unwrap();
    let wo = p.get("a.o.w").unwrap();
    let v: Vec<f64> = (0..4)
        .map(|j| (0..4).map(|i| token.data()[i] * wv.at(i, j)).sum())
        .collect();
    for j in 0..4 {
        let want: f64 = (0..4).map(|i| v[i] * wo.at(i, j)).sum();
        assert!((out.data()[j] - want).abs() < 1e-12);
    }
}

#[test]
fn paper_width_attention_shape() {
    let mut p = ParamStore::new(5);
    nn::init_mha(&mut p, "a", 128);
    let mut rng = Rng::new(1);
    let x = random_tensor(&mut rng, 50, 128);
    let out = mha_forward(&p, "a", &x, &x, &causal_mask(50), 16).unwrap();
    assert_eq!(out.shape(), &[50, 128]);
}

#[test]
fn causal_rows_ignore_future_tokens() {
    let mut p = ParamStore::new(8);
    nn::init_mha(&mut p, "a", 8);
    let mut rng = Rng::new(2);
    let x = random_tensor(&mut rng, 6, 8);
    let base = mha_forward(&p, "a", &x, &x, &causal_mask(6), 2).unwrap();
    for t in 0..5 {
        let mut y = x.clone();
        for c in 0..8 {
            y.data_mut()[(t + 1) * 8 + c] += 10.0;
        }
        let pert = mha_forward(&p, "a", &y, &y, &causal_mask(6), 2).unwrap();
        for r in 0..=t {
            assert_eq!(
                base.row_slice(r),
                pert.row_slice(r),
                "row {r} changed by step {}",
                t + 1
            );
        }
    }
}

#[test]
fn fully_masked_row_is_rejected() {
    let mut p = ParamStore::new(8);
    nn::init_mha(&mut p, "a", 4);
    let x = Tensor::new(&[2, 4], vec![0.1; 8]).unwrap();
    let err = mha_forward(&p, "a", &x, &x, &[true, false, false, false], 1).unwrap_err();
    assert_eq!(err, Error::EmptyAttention { row: 1 });
}

#[test]
fn attention_is_convex_combination_of_values() {
    // Identity projections: every output row lies in the per-head convex hull
    // of the value rows, so each coordinate is within [min, max] of its column.
    let d = 4;
    let mut p = ParamStore::new(0);
    for proj in ["q", "k", "v", "o"] {
        let mut w = Tensor::zeros(&[d, d]);
        for i in 0..d {
            w.data_mut()[i * d + i] = 1.0;
        }
        p.insert(alloc::format!("a.{proj}.w"), w);
        p.insert(alloc::format!("a.{proj}.b"), Tensor::zeros(&[1, d]));
    }
    let mut rng = Rng::new(11);
    for _ in 0..10 {
        let x = random_tensor(&mut rng, 5, d);
        let out = mha_forward(&p, "a", &x, &x, &vec![true; 25], 2).unwrap();
        for c in 0..d {
            let lo = (0..5).map(|r| x.at(r, c)).fold(f64::INFINITY, f64::min);
            let hi = (0..5).map(|r| x.at(r, c)).fold(f64::NEG_INFINITY, f64::max);
            for r in 0..5 {
                assert!(out.at(r, c) >= lo - 1e-12 && out.at(r, c) <= hi + 1e-12);
            }
        }
    }
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let mut p = ParamStore::new(77);
        nn::init_self_attn_block(&mut p, "blk", 8, 8);
        let mut rng = Rng::new(5);
        p.insert("x", random_tensor(&mut rng, 4, 8));
        let mut t = Tape::new(&p);
        let x = t.param("x").unwrap();
        let h = nn::self_attn_block(&mut t, "blk", x, SeqLayout::new(1, 4, 4, SeqMask::None), 2, true).unwrap();
        let s = t.sum(h).unwrap();
        let g = t.backward(s).unwrap();
        (t.value(h).clone(), g)
    };
    assert_eq!(run(), run());
}
