//! End-to-end sampling loop: UV noise initialization, per-step keyframe
//! capture with extended attention, UV-space blending of the keyframes'
//! post-attention features, injected per-frame passes, Euler updates and
//! background-statistics latent normalization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::attention::TokenFeatures;
use crate::config::RunConfig;
use crate::denoiser::{
    denoise, denoise_extended, euler_step, karras_sigmas, prompt_embedding, BlockInjection,
    DenoiserModel, SigmaSchedule, TapMode,
};
use crate::error::{Error, Result};
use crate::feature::FeatureMap;
use crate::gbuffer::GBufferFrame;
use crate::noise::{init_uv_noise, project_noise, NoiseConfig};
use crate::rng::{derive_seed, hash_words};
use crate::uv::{blend_multi_frame, resample_gbuffer, sample_from_textures, TextureSet};

/// Draws `k` distinct frames uniformly, in random order. A pure function
/// of `(seed, step)`.
pub fn sample_keyframes(n: usize, k: usize, seed: u64, step: usize) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::Config(format!("cannot draw {k} keyframes from {n} frames")));
    }
    let key = hash_words(&[derive_seed(seed, "keyframes"), step as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    Ok(rand::seq::index::sample(&mut rng, n, k).into_vec())
}

/// Per-channel mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Statistics over the masked pixels; `None` when the mask selects nothing.
pub fn masked_stats(z: &FeatureMap, mask: &[bool]) -> Option<ChannelStats> {
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return None;
    }
    let c = z.channels();
    let mut mean = vec![0.0; c];
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for (acc, v) in mean.iter_mut().zip(z.pixel(i)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; c];
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for ((acc, v), m) in var.iter_mut().zip(z.pixel(i)).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let std = var.into_iter().map(|v| (v / n as f64).sqrt()).collect();
    Some(ChannelStats { mean, std })
}

/// AdaIN with statistics taken over background pixels only: every pixel
/// of `z` is shifted and scaled per channel so that the background matches
/// `reference`.
pub fn normalize_latent(z: &FeatureMap, reference: &ChannelStats, background_mask: &[bool]) -> FeatureMap {
    let Some(stats) = masked_stats(z, background_mask) else {
        return z.clone();
    };
    if stats.std.iter().any(|&s| s == 0.0 || !s.is_finite()) {
        log::warn!("background has zero variance; skipping latent normalization");
        return z.clone();
    }
    let mut out = z.clone();
    for i in 0..out.pixel_count() {
        for (c, v) in out.pixel_mut(i).iter_mut().enumerate() {
            *v = (*v - stats.mean[c]) / stats.std[c] * reference.std[c] + reference.mean[c];
        }
    }
    out
}

/// Hooks into a running sampler.
pub trait RunObserver {
    fn on_keyframes(&mut self, _step: usize, _keyframes: &[usize]) {}
    /// Blended keyframe texture of one attention block.
    fn on_textures(&mut self, _step: usize, _block: usize, _textures: &TextureSet) {}
    /// Latents after the step; returning an error aborts the run.
    fn on_step(&mut self, _step: usize, _latents: &[FeatureMap]) -> Result<()> {
        Ok(())
    }
}

/// Observer that does nothing.
pub struct NoopObserver;

impl RunObserver for NoopObserver {}

/// Fails the run as soon as any two frames differ after a step. Only
/// meaningful for scenes whose G-buffers are all identical.
#[derive(Debug, Default)]
pub struct StaticCollapseCheck {
    pub steps_checked: usize,
}

impl RunObserver for StaticCollapseCheck {
    fn on_step(&mut self, step: usize, latents: &[FeatureMap]) -> Result<()> {
        if let Some(i) = latents.iter().position(|z| !z.bitwise_eq(&latents[0])) {
            return Err(Error::Numeric(format!(
                "frame {i} diverged from frame 0 at step {step}"
            )));
        }
        self.steps_checked += 1;
        Ok(())
    }
}

/// Features captured from the keyframe pass of one step.
#[derive(Debug, Clone)]
pub struct KeyframeCapture {
    pub keyframes: Vec<usize>,
    /// x0 estimates of the joint keyframe pass (discarded by the sampler).
    pub predictions: Vec<FeatureMap>,
    /// `[block][keyframe]` pre-attention tokens.
    pub pre_features: Vec<Vec<TokenFeatures>>,
    /// Blended post-attention texture per block.
    pub textures: Vec<TextureSet>,
}

/// State of one sampling run over a fixed set of G-buffers.
#[derive(Debug, Clone)]
pub struct DiffusionRun {
    config: RunConfig,
    schedule: SigmaSchedule,
    step: usize,
    latents: Vec<FeatureMap>,
    object_ids: Vec<u16>,
    /// G-buffers at latent resolution.
    latent_gbufs: Vec<GBufferFrame>,
    /// `[block][frame]` G-buffers at each attention block's token grid.
    block_gbufs: Vec<Vec<GBufferFrame>>,
    depth_conds: Vec<FeatureMap>,
    background_masks: Vec<Vec<bool>>,
    prompt_emb: Vec<f64>,
}

impl DiffusionRun {
    /// Validates inputs, resamples G-buffers and draws the UV-space
    /// initial noise.
    pub fn new(gbufs: &[GBufferFrame], config: &RunConfig, model: &DenoiserModel) -> Result<Self> {
        config.validate_for_frames(gbufs.len())?;
        if model.latent_channels() != config.latent_channels {
            return Err(Error::Config(format!(
                "model expects {} latent channels, config has {}",
                model.latent_channels(),
                config.latent_channels
            )));
        }
        let (gw, gh) = (gbufs[0].width(), gbufs[0].height());
        if gbufs.iter().any(|g| g.width() != gw || g.height() != gh) {
            return Err(Error::Config("g-buffers differ in size".into()));
        }
        let (lw, lh) = (config.latent_width, config.latent_height);
        model.check_latent_size(lw, lh)?;
        let latent_gbufs = gbufs
            .iter()
            .map(|g| resample_gbuffer(g, lw, lh))
            .collect::<Result<Vec<_>>>()?;
        let block_gbufs = model
            .block_resolutions(lw, lh)
            .into_iter()
            .map(|(bw, bh)| {
                latent_gbufs
                    .iter()
                    .map(|g| resample_gbuffer(g, bw, bh))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;

        let mut object_ids: Vec<u16> = gbufs
            .iter()
            .flat_map(|g| g.object_ids().iter().copied())
            .filter(|&id| id != 0)
            .collect();
        object_ids.sort_unstable();
        object_ids.dedup();

        let schedule = karras_sigmas(config.steps, config.sigma_min, config.sigma_max, config.rho)?;
        let noise_cfg = NoiseConfig {
            seed: derive_seed(config.seed, "noise"),
            texel_resolution: config.texel_resolution(),
            channels: config.latent_channels,
            background_mode: config.background_noise,
        };
        let noise = init_uv_noise(&object_ids, &noise_cfg)?;
        let sigma_max = schedule.sigmas()[0];
        let latents = latent_gbufs
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let mut z = project_noise(&noise, g, &noise_cfg, i)?;
                z.data_mut().iter_mut().for_each(|v| *v *= sigma_max);
                Ok(z)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            config: config.clone(),
            schedule,
            step: 0,
            depth_conds: latent_gbufs.iter().map(|g| g.depth_conditioning()).collect(),
            background_masks: latent_gbufs.iter().map(|g| g.background_mask()).collect(),
            latents,
            object_ids,
            latent_gbufs,
            block_gbufs,
            prompt_emb: prompt_embedding(&config.prompt, model.config().embed_dim),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn schedule(&self) -> &SigmaSchedule {
        &self.schedule
    }

    /// Index of the next step to run, `0..n_steps`.
    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.schedule.n_steps()
    }

    pub fn frame_count(&self) -> usize {
        self.latents.len()
    }

    pub fn latents(&self) -> &[FeatureMap] {
        &self.latents
    }

    pub fn set_latents(&mut self, latents: Vec<FeatureMap>) -> Result<()> {
        if latents.len() != self.latents.len() || latents.iter().zip(&self.latents).any(|(a, b)| !a.same_shape(b)) {
            return Err(Error::Shape("replacement latents do not match the run".into()));
        }
        self.latents = latents;
        Ok(())
    }

    pub fn latent_gbuffers(&self) -> &[GBufferFrame] {
        &self.latent_gbufs
    }

    pub fn depth_conditioning(&self) -> &[FeatureMap] {
        &self.depth_conds
    }

    pub fn prompt_embedding(&self) -> &[f64] {
        &self.prompt_emb
    }

    pub fn object_ids(&self) -> &[u16] {
        &self.object_ids
    }

    /// `(sigma_t, sigma_next)` of the current step.
    pub fn sigmas(&self) -> Result<(f64, f64)> {
        let s = self.schedule.sigmas();
        if self.is_finished() {
            return Err(Error::Config("sampling already finished".into()));
        }
        Ok((s[self.step], s[self.step + 1]))
    }

    fn block_texel_resolution(&self, block: usize) -> usize {
        (self.config.texel_resolution() >> block).max(1)
    }

    /// Joint keyframe pass with extended attention; blends each block's
    /// post-attention features in UV space.
    pub fn keyframe_pass(&self, keyframes: &[usize], model: &DenoiserModel) -> Result<KeyframeCapture> {
        if keyframes.is_empty() || keyframes.iter().any(|&k| k >= self.frame_count()) {
            return Err(Error::Config(format!("invalid keyframe set {keyframes:?}")));
        }
        let (sigma, _) = self.sigmas()?;
        let latents: Vec<&FeatureMap> = keyframes.iter().map(|&k| &self.latents[k]).collect();
        let depths: Vec<&FeatureMap> = keyframes.iter().map(|&k| &self.depth_conds[k]).collect();
        let (predictions, taps) = denoise_extended(&latents, sigma, &depths, &self.prompt_emb, model)?;

        let blocks = model.attention_blocks();
        let mut pre_features = Vec::with_capacity(blocks);
        let mut textures = Vec::with_capacity(blocks);
        for l in 0..blocks {
            let gbufs: Vec<&GBufferFrame> = keyframes.iter().map(|&k| &self.block_gbufs[l][k]).collect();
            let (bw, bh) = (gbufs[0].width(), gbufs[0].height());
            let post = taps
                .iter()
                .map(|t| t.blocks[l].post.to_feature_map(bw, bh))
                .collect::<Result<Vec<_>>>()?;
            let post_refs: Vec<&FeatureMap> = post.iter().collect();
            textures.push(blend_multi_frame(
                &post_refs,
                &gbufs,
                &self.object_ids,
                self.block_texel_resolution(l),
            )?);
            pre_features.push(taps.iter().map(|t| t.blocks[l].pre.clone()).collect());
        }
        Ok(KeyframeCapture {
            keyframes: keyframes.to_vec(),
            predictions,
            pre_features,
            textures,
        })
    }

    /// Injections for `frame`: keyframe keys/values plus the blended
    /// texture projected into the frame.
    pub fn injections(&self, frame: usize, capture: &KeyframeCapture, model: &DenoiserModel) -> Vec<BlockInjection> {
        (0..model.attention_blocks())
            .map(|l| {
                if !model.injects_block(l) {
                    return BlockInjection::default();
                }
                let (warped, valid) = sample_from_textures(&capture.textures[l], &self.block_gbufs[l][frame]);
                BlockInjection {
                    keyframe_features: capture.pre_features[l].clone(),
                    warped: Some((TokenFeatures::from_feature_map(&warped), valid)),
                    alpha: self.config.alpha,
                }
            })
            .collect()
    }

    /// Injected x0 estimate for one frame.
    pub fn frame_prediction(&self, frame: usize, capture: &KeyframeCapture, model: &DenoiserModel) -> Result<FeatureMap> {
        let (sigma, _) = self.sigmas()?;
        let inj = self.injections(frame, capture, model);
        let (pred, _) = denoise(
            &self.latents[frame],
            sigma,
            &self.depth_conds[frame],
            &self.prompt_emb,
            model,
            TapMode::Inject(&inj),
        )?;
        Ok(pred)
    }

    /// Next latent of one frame: injected pass followed by an Euler step.
    pub fn frame_pass(&self, frame: usize, capture: &KeyframeCapture, model: &DenoiserModel) -> Result<FeatureMap> {
        let (sigma, sigma_next) = self.sigmas()?;
        let pred = self.frame_prediction(frame, capture, model)?;
        euler_step(&self.latents[frame], &pred, sigma, sigma_next)
    }

    /// Normalizes every frame's background statistics to frame 0's.
    pub fn normalize(&self, latents: Vec<FeatureMap>) -> Vec<FeatureMap> {
        let Some(reference) = masked_stats(&latents[0], &self.background_masks[0]) else {
            return latents;
        };
        latents
            .iter()
            .zip(&self.background_masks)
            .map(|(z, mask)| normalize_latent(z, &reference, mask))
            .collect()
    }

    /// Runs one full diffusion step.
    pub fn step(&mut self, model: &DenoiserModel, observer: &mut dyn RunObserver) -> Result<()> {
        let keyframes = sample_keyframes(self.frame_count(), self.config.keyframes, self.config.seed, self.step)?;
        observer.on_keyframes(self.step, &keyframes);
        let capture = self.keyframe_pass(&keyframes, model)?;
        for (l, tex) in capture.textures.iter().enumerate() {
            observer.on_textures(self.step, l, tex);
        }
        let mut next = (0..self.frame_count())
            .into_par_iter()
            .map(|i| self.frame_pass(i, &capture, model))
            .collect::<Result<Vec<_>>>()?;
        if self.config.normalize_latents {
            next = self.normalize(next);
        }
        if let Some(i) = next.iter().position(|z| !z.is_finite()) {
            return Err(Error::Numeric(format!(
                "frame {i} has non-finite latents after step {}",
                self.step
            )));
        }
        self.latents = next;
        observer.on_step(self.step, &self.latents)?;
        self.step += 1;
        Ok(())
    }
}

/// Final latents of a run.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub latents: Vec<FeatureMap>,
    pub keyframes: Vec<Vec<usize>>,
}

struct KeyframeLog<'a> {
    inner: &'a mut dyn RunObserver,
    keyframes: Vec<Vec<usize>>,
}

impl RunObserver for KeyframeLog<'_> {
    fn on_keyframes(&mut self, step: usize, keyframes: &[usize]) {
        self.keyframes.push(keyframes.to_vec());
        self.inner.on_keyframes(step, keyframes);
    }

    fn on_textures(&mut self, step: usize, block: usize, textures: &TextureSet) {
        self.inner.on_textures(step, block, textures);
    }

    fn on_step(&mut self, step: usize, latents: &[FeatureMap]) -> Result<()> {
        self.inner.on_step(step, latents)
    }
}

pub fn render_sequence(gbufs: &[GBufferFrame], config: &RunConfig, model: &DenoiserModel) -> Result<RenderOutput> {
    render_sequence_observed(gbufs, config, model, &mut NoopObserver)
}

pub fn render_sequence_observed(
    gbufs: &[GBufferFrame],
    config: &RunConfig,
    model: &DenoiserModel,
    observer: &mut dyn RunObserver,
) -> Result<RenderOutput> {
    let mut run = DiffusionRun::new(gbufs, config, model)?;
    let mut log = KeyframeLog {
        inner: observer,
        keyframes: Vec::new(),
    };
    while !run.is_finished() {
        run.step(model, &mut log)?;
    }
    Ok(RenderOutput {
        latents: run.latents,
        keyframes: log.keyframes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_draw_is_a_permutation() {
        let mut ks = sample_keyframes(6, 6, 3, 0).unwrap();
        ks.sort_unstable();
        assert_eq!(ks, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn draws_are_deterministic_and_vary_by_step() {
        assert_eq!(sample_keyframes(20, 4, 1, 7).unwrap(), sample_keyframes(20, 4, 1, 7).unwrap());
        let differs = (0..10).any(|s| sample_keyframes(20, 4, 1, s).unwrap() != sample_keyframes(20, 4, 1, 0).unwrap());
        assert!(differs);
        assert!(sample_keyframes(3, 4, 1, 0).is_err());
        assert!(sample_keyframes(3, 0, 1, 0).is_err());
    }

    #[test]
    fn normalization_removes_offset() {
        let mask: Vec<bool> = (0..16).map(|i| i % 3 != 0).collect();
        let reference = FeatureMap::from_fn(4, 4, 2, |x, y, c| ((x * 5 + y * 3 + c) % 7) as f64 * 0.3);
        let mut shifted = reference.clone();
        shifted.data_mut().iter_mut().for_each(|v| *v += 0.7);
        let stats = masked_stats(&reference, &mask).unwrap();
        let out = normalize_latent(&shifted, &stats, &mask);
        let got = masked_stats(&out, &mask).unwrap();
        for c in 0..2 {
            assert!((got.mean[c] - stats.mean[c]).abs() < 1e-12);
            assert!((got.std[c] - stats.std[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_skips_empty_and_flat_backgrounds() {
        let z = FeatureMap::from_fn(2, 2, 1, |x, y, _| (x + 2 * y) as f64);
        let stats = ChannelStats {
            mean: vec![5.0],
            std: vec![2.0],
        };
        assert_eq!(normalize_latent(&z, &stats, &[false; 4]), z);
        let flat = FeatureMap::filled(2, 2, 1, 1.0);
        assert_eq!(normalize_latent(&flat, &stats, &[true; 4]), flat);
    }
}
