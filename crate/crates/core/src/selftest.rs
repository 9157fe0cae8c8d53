//! Fast built-in sanity checks, run by the `selftest` subcommand.

use nalgebra::Point3;

use crate::attention::{
    extended_attention, post_attention_fuse, pre_attention_inject, self_attention, AttentionWeights,
    TokenFeatures,
};
use crate::config::RunConfig;
use crate::denoiser::{init_toy_model, karras_sigmas, ModelConfig};
use crate::feature::FeatureMap;
use crate::gbuffer::GBufferFrame;
use crate::metrics::{frame_consistency, FrameEmbedder};
use crate::noise::{init_uv_noise, BackgroundMode, NoiseConfig};
use crate::pipeline::{masked_stats, normalize_latent, render_sequence};
use crate::rng::standard_normal;
use crate::scene::{rasterize_frame, AnimatedScene, CameraPose, MeshObject};
use crate::uv::{blend_multi_frame, sample_from_textures, splat_to_textures};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> CheckResult {
    match f() {
        Ok(detail) => CheckResult {
            name,
            passed: true,
            detail,
        },
        Err(detail) => CheckResult {
            name,
            passed: false,
            detail,
        },
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn tokens(n: usize, c: usize, seed: u64) -> TokenFeatures {
    TokenFeatures(nalgebra::DMatrix::from_fn(n, c, |r, k| {
        standard_normal(&[seed, r as u64, k as u64])
    }))
}

fn attention_checks() -> Result<String, String> {
    let w = AttentionWeights::seeded(1, 0, 4, 8, 2).map_err(|e| e.to_string())?;
    let f = tokens(6, 4, 2);
    let plain = self_attention(&f, &w).map_err(|e| e.to_string())?;
    let ext = extended_attention(std::slice::from_ref(&f), &w).map_err(|e| e.to_string())?;
    let dup = pre_attention_inject(&f, &[f.clone(), f.clone()], &w).map_err(|e| e.to_string())?;
    let e1 = plain.max_abs_diff(&ext[0]);
    let e2 = plain.max_abs_diff(&dup);
    ensure(e1 <= 1e-7 && e2 <= 1e-6, format!("extended {e1:e}, duplicate {e2:e}"))?;
    let other = tokens(6, 4, 3);
    let all = vec![true; 6];
    let a0 = post_attention_fuse(&plain, &other, &all, 0.0).map_err(|e| e.to_string())?;
    let a1 = post_attention_fuse(&plain, &other, &all, 1.0).map_err(|e| e.to_string())?;
    ensure(a0 == plain && a1 == other, "fusion extremes")?;
    Ok(format!("extended {e1:.1e}, duplicate-kv {e2:.1e}"))
}

fn uv_checks() -> Result<String, String> {
    let mut g = GBufferFrame::background(4, 4);
    for i in 0..12 {
        let (x, y) = (i % 4, i / 4);
        g.set_pixel(i, 1, [(x as f32 + 0.5) / 4.0, (y as f32 + 0.5) / 4.0], 1.0);
    }
    let fm = FeatureMap::from_fn(4, 4, 2, |x, y, c| (x * 10 + y + c) as f64 * 0.37);
    let tex = splat_to_textures(&fm, &g, &[1], 4).map_err(|e| e.to_string())?;
    let (back, valid) = sample_from_textures(&tex, &g);
    for i in 0..16 {
        ensure(valid[i] == (i < 12), "validity")?;
        if i < 12 {
            ensure(back.pixel(i) == fm.pixel(i), format!("round trip at pixel {i}"))?;
        }
    }
    let a = FeatureMap::filled(4, 4, 1, 1.0);
    let b = FeatureMap::filled(4, 4, 1, 3.0);
    let blend = blend_multi_frame(&[&a, &b], &[&g, &g], &[1], 4).map_err(|e| e.to_string())?;
    let t = blend.get(1).ok_or("missing texture")?;
    ensure(t.texel(0) == [1.5], format!("blend gave {:?}", t.texel(0)))?;
    Ok("round trip exact, blend (3a+b)/4".into())
}

fn noise_checks() -> Result<String, String> {
    let cfg = NoiseConfig {
        seed: 5,
        texel_resolution: 64,
        channels: 4,
        background_mode: BackgroundMode::FixedImage,
    };
    let tex = init_uv_noise(&[1], &cfg).map_err(|e| e.to_string())?;
    let d = tex.get(1).ok_or("missing")?.data();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    ensure(mean.abs() < 0.05 && (std - 1.0).abs() < 0.05, format!("mean {mean}, std {std}"))?;
    Ok(format!("mean {mean:.4}, std {std:.4}"))
}

fn schedule_checks() -> Result<String, String> {
    let s = karras_sigmas(50, 0.0292, 14.6146, 7.0).map_err(|e| e.to_string())?;
    let sig = s.sigmas();
    ensure(sig[0] == 14.6146 && sig[49] == 0.0292 && sig[50] == 0.0, "endpoints")?;
    ensure(sig.windows(2).all(|w| w[1] < w[0]), "monotonicity")?;
    Ok("50 steps strictly decreasing".into())
}

fn normalization_checks() -> Result<String, String> {
    let mask: Vec<bool> = (0..64).map(|i| i % 4 != 1).collect();
    let reference = FeatureMap::from_fn(8, 8, 2, |x, y, c| standard_normal(&[9, x as u64, y as u64, c as u64]));
    let mut z = reference.clone();
    z.data_mut().iter_mut().for_each(|v| *v = *v * 1.3 + 0.7);
    let stats = masked_stats(&reference, &mask).ok_or("empty mask")?;
    let out = masked_stats(&normalize_latent(&z, &stats, &mask), &mask).ok_or("empty mask")?;
    let err = (0..2)
        .map(|c| (out.mean[c] - stats.mean[c]).abs().max((out.std[c] - stats.std[c]).abs()))
        .fold(0.0, f64::max);
    ensure(err < 1e-6, format!("stat error {err:e}"))?;
    Ok(format!("stat error {err:.1e}"))
}

fn raster_and_render_checks() -> Result<String, String> {
    let verts = vec![
        Point3::new(-0.5, -0.5, 2.0),
        Point3::new(0.5, -0.5, 2.0),
        Point3::new(0.5, 0.5, 2.0),
        Point3::new(-0.5, 0.5, 2.0),
    ];
    let uvs = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let faces = vec![[0, 1, 2], [0, 2, 3]];
    let obj = MeshObject::static_mesh(1, verts, uvs, faces.clone(), faces, 3);
    let scene = AnimatedScene::new(vec![obj], vec![CameraPose::identity(1.0, 0.1, 10.0); 3])
        .map_err(|e| e.to_string())?;
    let gbufs = (0..3)
        .map(|f| rasterize_frame(&scene, f, 16, 16))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    ensure(gbufs[0].object_ids().contains(&1), "quad not rasterized")?;
    let cfg = RunConfig {
        steps: 3,
        keyframes: 2,
        latent_width: 8,
        latent_height: 8,
        ..Default::default()
    };
    let model = init_toy_model(0, &ModelConfig::default(), 4).map_err(|e| e.to_string())?;
    let out = render_sequence(&gbufs, &cfg, &model).map_err(|e| e.to_string())?;
    ensure(
        out.latents.iter().all(|z| z.bitwise_eq(&out.latents[0])),
        "static frames diverged",
    )?;
    let score = frame_consistency(&out.latents, FrameEmbedder::default(), 1).map_err(|e| e.to_string())?;
    ensure(score == 1.0, format!("consistency {score}"))?;
    Ok("static render collapses to identical frames".into())
}

/// Runs every built-in check.
pub fn run() -> Vec<CheckResult> {
    vec![
        check("attention", attention_checks),
        check("uv-correspondence", uv_checks),
        check("uv-noise", noise_checks),
        check("karras-schedule", schedule_checks),
        check("latent-normalization", normalization_checks),
        check("raster-and-render", raster_and_render_checks),
    ]
}
