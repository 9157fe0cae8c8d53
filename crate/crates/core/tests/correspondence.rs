mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{coverage, static_quad_scene, translating_quad_scene};
use genrender::scene::{rasterize_frame, rasterize_sequence};
use genrender::uv::{blend_multi_frame, resample_gbuffer, sample_from_textures, splat_to_textures, warp_features};
use genrender::{FeatureMap, GBufferFrame};
use proptest::prelude::*;

/// Texel of a UV coordinate, written out independently of the library.
fn texel_of(uv: [f32; 2], r: usize) -> usize {
    let tu = ((uv[0] as f64 * r as f64) as usize).min(r - 1);
    let tv = ((uv[1] as f64 * r as f64) as usize).min(r - 1);
    tv * r + tu
}

fn pixel_texels(g: &GBufferFrame, r: usize) -> Vec<Option<(u16, usize)>> {
    (0..g.pixel_count())
        .map(|i| (g.object_ids()[i] != 0).then(|| (g.object_ids()[i], texel_of(g.uvs()[i], r))))
        .collect()
}

fn is_injective(g: &GBufferFrame, r: usize) -> bool {
    let keys: Vec<_> = pixel_texels(g, r).into_iter().flatten().collect();
    keys.iter().collect::<BTreeSet<_>>().len() == keys.len()
}

#[test]
fn small_layout_matches_enumerated_means() {
    // 4×4 frame, two objects, R = 2: several pixels share texels
    let uvs: Vec<[f32; 2]> = (0..16).map(|i| [((i % 4) as f32 + 0.3) / 4.0, ((i / 4) as f32 + 0.6) / 4.0]).collect();
    let ids: Vec<u16> = (0..16).map(|i| [0, 1, 1, 2][i % 4]).collect();
    let depth: Vec<f32> = ids.iter().map(|&id| if id == 0 { f32::INFINITY } else { 1.0 }).collect();
    let g = GBufferFrame::from_channels(4, 4, uvs, ids, depth).unwrap();
    let fm = FeatureMap::from_fn(4, 4, 2, |x, y, c| (x * 7 + y * 3) as f64 + 0.25 * c as f64);

    let mut sums: BTreeMap<(u16, usize), (Vec<f64>, usize)> = BTreeMap::new();
    for (i, key) in pixel_texels(&g, 2).into_iter().enumerate() {
        if let Some(key) = key {
            let e = sums.entry(key).or_insert((vec![0.0; 2], 0));
            e.0.iter_mut().zip(fm.pixel(i)).for_each(|(s, v)| *s += v);
            e.1 += 1;
        }
    }
    let tex = splat_to_textures(&fm, &g, &[1, 2], 2).unwrap();
    let mut filled = 0;
    for id in [1u16, 2] {
        let t = tex.get(id).unwrap();
        for texel in 0..4 {
            match sums.get(&(id, texel)) {
                Some((s, n)) => {
                    let mean: Vec<f64> = s.iter().map(|v| v / *n as f64).collect();
                    for (got, want) in t.texel(texel).iter().zip(&mean) {
                        assert!((got - want).abs() < 1e-12);
                    }
                    assert_eq!(t.count(texel) as usize, *n);
                    filled += 1;
                }
                None => assert!(!t.is_filled(texel)),
            }
        }
    }
    assert_eq!(filled, sums.len());
}

#[test]
fn injective_round_trip_is_exact() {
    let g = rasterize_frame(&static_quad_scene(1), 0, 24, 24).unwrap();
    let r = 64;
    assert!(is_injective(&g, r), "test layout must map pixels to distinct texels");
    let fm = FeatureMap::from_fn(24, 24, 3, |x, y, c| ((x * 31 + y * 17 + c * 5) as f64).sin() * 3.7);
    let tex = splat_to_textures(&fm, &g, &[1], r).unwrap();
    let (back, valid) = sample_from_textures(&tex, &g);
    assert_eq!(valid, g.coverage_mask());
    for i in (0..g.pixel_count()).filter(|&i| valid[i]) {
        assert_eq!(back.pixel(i), fm.pixel(i));
    }
    for i in (0..g.pixel_count()).filter(|&i| !valid[i]) {
        assert!(back.pixel(i).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn translated_constant_is_transported_with_oracle_validity() {
    let gs = rasterize_sequence(&translating_quad_scene(2, 0.3), 32, 32).unwrap();
    let r = 16;
    let src = FeatureMap::filled(32, 32, 2, 1.75);
    let (out, valid) = warp_features(&src, &gs[0], &gs[1], r).unwrap();
    let seen: BTreeSet<_> = pixel_texels(&gs[0], r).into_iter().flatten().collect();
    for (i, key) in pixel_texels(&gs[1], r).into_iter().enumerate() {
        let expected = key.is_some_and(|k| seen.contains(&k));
        assert_eq!(valid[i], expected, "pixel {i}");
        if expected {
            assert_eq!(out.pixel(i), &[1.75, 1.75]);
        }
    }
    assert!(valid.iter().any(|&v| v));
}

#[test]
fn identical_views_warp_to_identity() {
    let g = rasterize_frame(&static_quad_scene(1), 0, 20, 20).unwrap();
    assert!(is_injective(&g, 64));
    let src = FeatureMap::from_fn(20, 20, 1, |x, y, _| (x * 20 + y) as f64);
    let (out, valid) = warp_features(&src, &g, &g, 64).unwrap();
    for i in (0..400).filter(|&i| g.is_covered(i)) {
        assert!(valid[i]);
        assert_eq!(out.pixel(i), src.pixel(i));
    }
}

#[test]
fn decimation_preserves_half_coverage() {
    // left half covered, with a non-axis-aligned boundary to make it interesting
    let mut ids = vec![0u16; 64 * 64];
    let mut uvs = vec![[0.0f32; 2]; 64 * 64];
    let mut depth = vec![f32::INFINITY; 64 * 64];
    for y in 0..64 {
        for x in 0..64 {
            if x < 32 + (y % 3) {
                let i = y * 64 + x;
                ids[i] = 1;
                uvs[i] = [x as f32 / 64.0, y as f32 / 64.0];
                depth[i] = 2.0;
            }
        }
    }
    let g = GBufferFrame::from_channels(64, 64, uvs, ids, depth).unwrap();
    let small = resample_gbuffer(&g, 32, 32).unwrap();
    let full = coverage(&g) as f64 / 4096.0;
    let half = coverage(&small) as f64 / 1024.0;
    assert!((full - half).abs() <= 1.0 / 32.0, "{full} vs {half}");
    for i in 0..small.pixel_count() {
        assert_eq!(small.is_covered(i), small.depths()[i].is_finite());
    }
    assert_eq!(resample_gbuffer(&g, 64, 64).unwrap(), g);
    assert!(resample_gbuffer(&g, 65, 64).is_err());
}

fn arb_gbuffer() -> impl Strategy<Value = GBufferFrame> {
    let px = (0u16..3, 0.0f32..1.0, 0.0f32..1.0);
    prop::collection::vec(px, 36).prop_map(|v| {
        let ids: Vec<u16> = v.iter().map(|p| p.0).collect();
        let uvs = v.iter().map(|p| [p.1, p.2]).collect();
        let depth = ids.iter().map(|&id| if id == 0 { f32::INFINITY } else { 1.5 }).collect();
        GBufferFrame::from_channels(6, 6, uvs, ids, depth).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn blend_of_identical_contributions_is_exact(g in arb_gbuffer(), value in -5.0f64..5.0, n in 1usize..4) {
        let fm = FeatureMap::filled(6, 6, 2, value);
        let fms = vec![&fm; n];
        let gbs = vec![&g; n];
        let tex = blend_multi_frame(&fms, &gbs, &[1, 2], 4).unwrap();
        for t in tex.iter() {
            for texel in (0..16).filter(|&k| t.is_filled(k)) {
                prop_assert_eq!(t.texel(texel), &[value, value][..]);
            }
        }
    }

    #[test]
    fn single_frame_blend_equals_splat(g in arb_gbuffer(), salt in any::<u32>()) {
        let fm = FeatureMap::from_fn(6, 6, 1, |x, y, _| ((x + 6 * y) as f64 + salt as f64).sin());
        let blended = blend_multi_frame(&[&fm], &[&g], &[1, 2], 4).unwrap();
        prop_assert_eq!(blended, splat_to_textures(&fm, &g, &[1, 2], 4).unwrap());
    }

    #[test]
    fn average_component_ignores_frame_order(a in arb_gbuffer(), b in arb_gbuffer()) {
        // with frames that never share a texel, the sequential fill equals
        // the average, so the blend must not depend on order
        let fa = FeatureMap::filled(6, 6, 1, 1.0);
        let fb = FeatureMap::filled(6, 6, 1, 3.0);
        let x = blend_multi_frame(&[&fa, &fb], &[&a, &b], &[1, 2], 4).unwrap();
        let y = blend_multi_frame(&[&fb, &fa], &[&b, &a], &[1, 2], 4).unwrap();
        let ta: BTreeSet<_> = pixel_texels(&a, 4).into_iter().flatten().collect();
        let tb: BTreeSet<_> = pixel_texels(&b, 4).into_iter().flatten().collect();
        for (tx, ty) in x.iter().zip(y.iter()) {
            for texel in 0..16 {
                prop_assert_eq!(tx.is_filled(texel), ty.is_filled(texel));
                let key = (tx.object_id(), texel);
                if ta.contains(&key) != tb.contains(&key) && tx.is_filled(texel) {
                    prop_assert_eq!(tx.texel(texel), ty.texel(texel));
                }
            }
        }
    }

    #[test]
    fn warp_keeps_per_object_constants(a in arb_gbuffer(), b in arb_gbuffer()) {
        let src = FeatureMap::from_fn(6, 6, 1, |x, y, _| a.object_ids()[y * 6 + x] as f64 * 10.0);
        let (out, valid) = warp_features(&src, &a, &b, 4).unwrap();
        for i in (0..36).filter(|&i| valid[i]) {
            prop_assert_eq!(out.pixel(i)[0], b.object_ids()[i] as f64 * 10.0);
        }
    }
}
