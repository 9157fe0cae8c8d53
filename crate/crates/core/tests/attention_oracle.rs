use genrender::attention::{
    attend, attention_probabilities, extended_attention, pre_attention_inject, post_attention_fuse, self_attention,
    AttentionWeights, TokenFeatures,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn tokens(n: usize, c: usize, salt: u64) -> TokenFeatures {
    TokenFeatures(DMatrix::from_fn(n, c, |r, k| genrender::rng::standard_normal(&[salt, r as u64, k as u64])))
}

/// Loop-by-loop evaluation of multi-head softmax attention, no matrix
/// library calls.
fn brute_force(q_tokens: &DMatrix<f64>, kv_tokens: &DMatrix<f64>, w: &AttentionWeights) -> DMatrix<f64> {
    let (nq, nk, c, d, h) = (q_tokens.nrows(), kv_tokens.nrows(), w.w_q.nrows(), w.w_q.ncols(), w.heads);
    let hd = d / h;
    let proj = |x: &DMatrix<f64>, m: &DMatrix<f64>, row: usize, col: usize| (0..c).map(|i| x[(row, i)] * m[(i, col)]).sum::<f64>();
    let mut concat = vec![vec![0.0; d]; nq];
    for head in 0..h {
        for i in 0..nq {
            let q: Vec<f64> = (0..hd).map(|j| proj(q_tokens, &w.w_q, i, head * hd + j)).collect();
            let scores: Vec<f64> = (0..nk)
                .map(|t| {
                    let dot: f64 = (0..hd).map(|j| q[j] * proj(kv_tokens, &w.w_k, t, head * hd + j)).sum();
                    dot / (hd as f64).sqrt()
                })
                .collect();
            let exps: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
            let z: f64 = exps.iter().sum();
            for j in 0..hd {
                concat[i][head * hd + j] = (0..nk).map(|t| exps[t] / z * proj(kv_tokens, &w.w_v, t, head * hd + j)).sum();
            }
        }
    }
    DMatrix::from_fn(nq, c, |i, k| (0..d).map(|j| concat[i][j] * w.w_o[(j, k)]).sum())
}

#[test]
fn two_token_single_head_hand_weights() {
    let eye = DMatrix::<f64>::identity(2, 2);
    let w = AttentionWeights::new(eye.clone(), eye.clone(), eye.clone(), eye, 1).unwrap();
    let f = TokenFeatures::from_rows(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    // scores = I / sqrt(2); row 0 weights (e^{1/√2}, 1) / Z
    let a = (0.5f64.sqrt()).exp();
    let out = self_attention(&f, &w).unwrap();
    let expected = [a / (a + 1.0), 1.0 / (a + 1.0), 1.0 / (a + 1.0), a / (a + 1.0)];
    for (got, want) in out.0.transpose().iter().zip(expected) {
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn seeded_self_attention_matches_brute_force() {
    for (n, c, d, h) in [(1, 3, 4, 1), (5, 4, 8, 2), (8, 6, 12, 3), (8, 8, 8, 4)] {
        let w = AttentionWeights::seeded(11, n as u64, c, d, h).unwrap();
        let f = tokens(n, c, 3);
        let err = (self_attention(&f, &w).unwrap().0 - brute_force(&f.0, &f.0, &w)).amax();
        assert!(err < 1e-6, "n={n}: {err}");
    }
}

#[test]
fn extended_attention_matches_concatenated_brute_force() {
    let w = AttentionWeights::seeded(2, 0, 4, 8, 2).unwrap();
    let frames = [tokens(3, 4, 1), tokens(3, 4, 2), tokens(3, 4, 3)];
    let all = DMatrix::from_fn(9, 4, |r, c| frames[r / 3].0[(r % 3, c)]);
    let out = extended_attention(&frames, &w).unwrap();
    for (f, o) in frames.iter().zip(&out) {
        assert!((&o.0 - brute_force(&f.0, &all, &w)).amax() < 1e-6);
    }
}

#[test]
fn extended_attention_is_invariant_to_other_frame_order() {
    let w = AttentionWeights::seeded(2, 1, 4, 8, 2).unwrap();
    let (a, b, c) = (tokens(4, 4, 1), tokens(4, 4, 2), tokens(4, 4, 3));
    let x = extended_attention(&[a.clone(), b.clone(), c.clone()], &w).unwrap();
    let y = extended_attention(&[a, c, b], &w).unwrap();
    assert!(x[0].max_abs_diff(&y[0]) < 1e-12);
}

#[test]
fn saturated_keyframe_dominates_output() {
    // one-dimensional features; the keyframe token's key is scaled so its
    // logit exceeds the frame's own by a wide margin
    let one = DMatrix::from_element(1, 1, 1.0);
    let w = AttentionWeights::new(one.clone(), one.clone(), one.clone(), one, 1).unwrap();
    let f = TokenFeatures::from_rows(1, 1, &[1.0]);
    let kf = TokenFeatures::from_rows(1, 1, &[50.0]);
    let out = pre_attention_inject(&f, &[kf], &w).unwrap();
    assert!((out.0[(0, 0)] - 50.0).abs() < 1e-9);
}

#[test]
fn fusion_midpoint_is_arithmetic_mean() {
    let hat = TokenFeatures::from_rows(2, 2, &[2.0; 4]);
    let bar = TokenFeatures::from_rows(2, 2, &[4.0; 4]);
    let out = post_attention_fuse(&hat, &bar, &[true, false], 0.5).unwrap();
    assert_eq!(out.0.row(0).iter().copied().collect::<Vec<_>>(), vec![3.0, 3.0]);
    assert_eq!(out.0.row(1).iter().copied().collect::<Vec<_>>(), vec![2.0, 2.0]);
    assert!(post_attention_fuse(&hat, &bar, &[true, true], 1.5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn probability_rows_sum_to_one(n in 1usize..8, m in 1usize..8, heads in 1usize..4, salt in any::<u64>()) {
        let w = AttentionWeights::seeded(salt, 0, 3, 2 * heads, heads).unwrap();
        let q = tokens(n, 3, salt);
        let kv = tokens(m, 3, salt ^ 1);
        for h in 0..heads {
            let p = attention_probabilities(&q, &[&kv], &w, h).unwrap();
            for r in 0..n {
                prop_assert!((p.row(r).sum() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn duplicating_kv_entries_leaves_output_unchanged(n in 1usize..8, copies in 1usize..4, salt in any::<u64>()) {
        let w = AttentionWeights::seeded(salt, 1, 4, 4, 2).unwrap();
        let f = tokens(n, 4, salt);
        let plain = self_attention(&f, &w).unwrap();
        let kv: Vec<&TokenFeatures> = std::iter::repeat_n(&f, copies + 1).collect();
        prop_assert!(attend(&f, &kv, &w).unwrap().max_abs_diff(&plain) < 1e-6);
        let single = extended_attention(std::slice::from_ref(&f), &w).unwrap();
        prop_assert!(single[0].max_abs_diff(&plain) < 1e-7);
    }

    #[test]
    fn fusion_is_affine_in_alpha(alpha in 0.0f64..=1.0, salt in any::<u64>()) {
        let hat = tokens(5, 3, salt);
        let bar = tokens(5, 3, salt ^ 7);
        let valid = vec![true; 5];
        let out = post_attention_fuse(&hat, &bar, &valid, alpha).unwrap();
        let lerp = &hat.0 + (&bar.0 - &hat.0) * alpha;
        prop_assert!((out.0 - lerp).amax() < 1e-12);
    }
}
