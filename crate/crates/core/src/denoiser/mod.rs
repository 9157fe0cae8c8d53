//! The pluggable denoiser and its sampler.
//!
//! The `toy` network is a small latent-space model: a 3×3 input conv over
//! `[latent, depth]`, a prompt bias, a stack of residual self-attention
//! blocks at successively halved resolutions, and a 3×3 output conv,
//! wrapped in the usual x0 preconditioning. Every attention block exposes
//! its pre- and post-attention tokens and accepts injected keys/values and
//! fused outputs.

mod schedule;
pub mod weights;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attention::{
    extended_attention, post_attention_fuse, pre_attention_inject, self_attention,
    AttentionWeights, TokenFeatures,
};
use crate::error::{Error, Result};
use crate::feature::FeatureMap;
use crate::rng::standard_normal;

pub use schedule::{euler_step, karras_sigmas, SigmaSchedule};

pub const MODEL_NAMES: [&str; 4] = ["toy", "identity", "blur", "linear"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// One of `toy`, `identity`, `blur`, `linear`.
    pub name: String,
    pub hidden: usize,
    pub attn_dim: usize,
    pub heads: usize,
    pub embed_dim: usize,
    /// Number of attention blocks; block `l` runs at `1/2^l` resolution.
    pub levels: usize,
    pub sigma_data: f64,
    /// Blocks receiving keyframe injection; all blocks when absent.
    pub inject_blocks: Option<Vec<usize>>,
    /// Weight descriptor to load instead of seeded initialization.
    pub weights: Option<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            name: "toy".into(),
            hidden: 16,
            attn_dim: 16,
            heads: 2,
            embed_dim: 16,
            levels: 2,
            sigma_data: 1.0,
            inject_blocks: None,
            weights: None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !MODEL_NAMES.contains(&self.name.as_str()) {
            return Err(Error::Config(format!(
                "unknown model {:?} (expected one of {MODEL_NAMES:?})",
                self.name
            )));
        }
        if self.name == "toy" {
            if self.hidden == 0 || self.embed_dim == 0 || self.levels == 0 {
                return Err(Error::Config("toy model needs hidden, embed_dim and levels > 0".into()));
            }
            if self.heads == 0 || !self.attn_dim.is_multiple_of(self.heads) || self.attn_dim == 0 {
                return Err(Error::Config(format!(
                    "attn_dim {} must split evenly into {} heads",
                    self.attn_dim, self.heads
                )));
            }
            if let Some(blocks) = &self.inject_blocks {
                if blocks.iter().any(|&b| b >= self.levels) {
                    return Err(Error::Config(format!(
                        "inject_blocks {blocks:?} out of range for {} levels",
                        self.levels
                    )));
                }
            }
        }
        if !(self.sigma_data > 0.0 && self.sigma_data.is_finite()) {
            return Err(Error::Config("sigma_data must be positive".into()));
        }
        Ok(())
    }
}

/// 3×3 convolution, stride 1, zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out][in][ky][kx]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    fn seeded(seed: u64, tag: u64, in_channels: usize, out_channels: usize, gain: f64) -> Self {
        let scale = gain / ((9 * in_channels) as f64).sqrt();
        let weight = (0..out_channels * in_channels * 9)
            .map(|i| f32_round(scale * standard_normal(&[seed, tag, 0, i as u64])))
            .collect();
        let bias = (0..out_channels)
            .map(|i| f32_round(0.1 * standard_normal(&[seed, tag, 1, i as u64])))
            .collect();
        Self {
            in_channels,
            out_channels,
            weight,
            bias,
        }
    }

    #[inline]
    fn w(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weight[((o * self.in_channels + i) * 3 + ky) * 3 + kx]
    }

    pub fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        if x.channels() != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        let (w, h) = (x.width() as isize, x.height() as isize);
        let mut out = FeatureMap::zeros(x.width(), x.height(), self.out_channels);
        for y in 0..h {
            for xx in 0..w {
                let px = out.pixel_mut((y * w + xx) as usize);
                px.copy_from_slice(&self.bias);
                for ky in 0..3 {
                    let sy = y + ky as isize - 1;
                    if sy < 0 || sy >= h {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = xx + kx as isize - 1;
                        if sx < 0 || sx >= w {
                            continue;
                        }
                        let src = x.pixel((sy * w + sx) as usize);
                        for (o, acc) in px.iter_mut().enumerate() {
                            for (i, &v) in src.iter().enumerate() {
                                *acc += self.w(o, i, ky, kx) * v;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Seeded weights are rounded to f32 so the flat f32 weight blob
/// reproduces them exactly.
fn f32_round(v: f64) -> f64 {
    v as f32 as f64
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ToyNet {
    pub conv_in: Conv2d,
    /// `embed_dim × hidden`
    pub prompt_proj: DMatrix<f64>,
    pub blocks: Vec<AttentionWeights>,
    pub conv_out: Conv2d,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Arch {
    Identity,
    Blur,
    Linear(Conv2d),
    Toy(ToyNet),
}

/// Immutable denoiser weights plus architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    config: ModelConfig,
    latent_channels: usize,
    pub(crate) arch: Arch,
}

/// Pre- and post-attention tokens of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct TapRecord {
    pub pre: TokenFeatures,
    pub post: TokenFeatures,
}

/// Records captured at every attention block during one pass, indexed by block.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTap {
    pub blocks: Vec<TapRecord>,
}

/// What to inject into one attention block.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockInjection {
    /// Keyframe pre-attention tokens appended to this frame's keys/values.
    pub keyframe_features: Vec<TokenFeatures>,
    /// UV-projected post-attention tokens with per-token validity.
    pub warped: Option<(TokenFeatures, Vec<bool>)>,
    pub alpha: f64,
}

/// Per-pass behavior of the attention taps.
#[derive(Debug, Clone, Copy)]
pub enum TapMode<'a> {
    Off,
    Capture,
    /// One entry per attention block.
    Inject(&'a [BlockInjection]),
}

enum Attn<'a> {
    Plain,
    Extended,
    Inject(&'a [BlockInjection]),
}

/// Deterministic prompt embedding: the prompt's SHA-256 keys a unit-scale
/// Gaussian vector of width `dim`.
pub fn prompt_embedding(prompt: &str, dim: usize) -> Vec<f64> {
    let digest = Sha256::digest(prompt.as_bytes());
    let key = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    (0..dim)
        .map(|i| standard_normal(&[0x70726f6d7074, key, i as u64]))
        .collect()
}

fn silu(v: f64) -> f64 {
    v / (1.0 + (-v).exp())
}

fn rms_normalize(fm: &FeatureMap) -> FeatureMap {
    let mut out = fm.clone();
    let c = fm.channels();
    for i in 0..fm.pixel_count() {
        let px = out.pixel_mut(i);
        let ms = px.iter().map(|v| v * v).sum::<f64>() / c as f64;
        let inv = 1.0 / (ms + 1e-6).sqrt();
        px.iter_mut().for_each(|v| *v *= inv);
    }
    out
}

fn avg_pool(fm: &FeatureMap, factor: usize) -> FeatureMap {
    if factor == 1 {
        return fm.clone();
    }
    let (w, h) = (fm.width() / factor, fm.height() / factor);
    let norm = 1.0 / (factor * factor) as f64;
    FeatureMap::from_fn(w, h, fm.channels(), |x, y, c| {
        let mut s = 0.0;
        for dy in 0..factor {
            for dx in 0..factor {
                s += fm.get(x * factor + dx, y * factor + dy, c);
            }
        }
        s * norm
    })
}

fn add_upsampled(target: &mut FeatureMap, low: &FeatureMap, factor: usize) {
    let c = target.channels();
    for y in 0..target.height() {
        for x in 0..target.width() {
            for k in 0..c {
                let v = target.get(x, y, k) + low.get(x / factor, y / factor, k);
                target.set(x, y, k, v);
            }
        }
    }
}

fn concat_channels(a: &FeatureMap, b: &FeatureMap) -> FeatureMap {
    let (ca, cb) = (a.channels(), b.channels());
    FeatureMap::from_fn(a.width(), a.height(), ca + cb, |x, y, c| {
        if c < ca {
            a.get(x, y, c)
        } else {
            b.get(x, y, c - ca)
        }
    })
}

fn box_blur(fm: &FeatureMap) -> FeatureMap {
    let (w, h) = (fm.width() as isize, fm.height() as isize);
    FeatureMap::from_fn(fm.width(), fm.height(), fm.channels(), |x, y, c| {
        let (mut s, mut n) = (0.0, 0.0);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (sx, sy) = (x as isize + dx, y as isize + dy);
                if sx >= 0 && sx < w && sy >= 0 && sy < h {
                    s += fm.get(sx as usize, sy as usize, c);
                    n += 1.0;
                }
            }
        }
        s / n
    })
}

impl DenoiserModel {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn latent_channels(&self) -> usize {
        self.latent_channels
    }

    /// Number of attention blocks (0 for the fixed test models).
    pub fn attention_blocks(&self) -> usize {
        match &self.arch {
            Arch::Toy(net) => net.blocks.len(),
            _ => 0,
        }
    }

    /// Token grid of every attention block for a `width × height` latent.
    pub fn block_resolutions(&self, width: usize, height: usize) -> Vec<(usize, usize)> {
        (0..self.attention_blocks())
            .map(|l| (width >> l, height >> l))
            .collect()
    }

    /// Whether block `l` takes part in keyframe injection.
    pub fn injects_block(&self, l: usize) -> bool {
        self.config
            .inject_blocks
            .as_ref()
            .is_none_or(|blocks| blocks.contains(&l))
    }

    pub fn check_latent_size(&self, width: usize, height: usize) -> Result<()> {
        let factor = 1usize << self.attention_blocks().saturating_sub(1);
        if width == 0 || height == 0 || !width.is_multiple_of(factor) || !height.is_multiple_of(factor) {
            return Err(Error::Config(format!(
                "latent {width}x{height} must be a positive multiple of {factor} for {} attention levels",
                self.attention_blocks()
            )));
        }
        Ok(())
    }

    fn preconditioning(&self, sigma: f64) -> (f64, f64, f64) {
        let sd = self.config.sigma_data;
        let denom = sigma * sigma + sd * sd;
        (sd * sd / denom, sigma * sd / denom.sqrt(), 1.0 / denom.sqrt())
    }

    fn forward(
        &self,
        latents: &[&FeatureMap],
        depths: &[&FeatureMap],
        sigma: f64,
        prompt_emb: &[f64],
        attn: Attn<'_>,
        capture: bool,
    ) -> Result<(Vec<FeatureMap>, Vec<FeatureTap>)> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Numeric(format!("invalid sigma {sigma}")));
        }
        if latents.len() != depths.len() || latents.is_empty() {
            return Err(Error::Shape("latent and depth batches disagree".into()));
        }
        for (z, d) in latents.iter().zip(depths) {
            if z.channels() != self.latent_channels {
                return Err(Error::Shape(format!(
                    "latent has {} channels, model expects {}",
                    z.channels(),
                    self.latent_channels
                )));
            }
            if d.width() != z.width() || d.height() != z.height() || d.channels() != 1 {
                return Err(Error::Shape("depth conditioning must be one channel at latent size".into()));
            }
        }
        let empty_taps = || vec![FeatureTap::default(); latents.len()];
        match &self.arch {
            Arch::Identity => Ok((latents.iter().map(|z| (*z).clone()).collect(), empty_taps())),
            Arch::Blur => Ok((latents.iter().map(|z| box_blur(z)).collect(), empty_taps())),
            Arch::Linear(conv) => {
                let out = latents
                    .iter()
                    .zip(depths)
                    .map(|(z, d)| conv.forward(&concat_channels(z, d)))
                    .collect::<Result<Vec<_>>>()?;
                Ok((out, empty_taps()))
            }
            Arch::Toy(net) => self.forward_toy(net, latents, depths, sigma, prompt_emb, attn, capture),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn forward_toy(
        &self,
        net: &ToyNet,
        latents: &[&FeatureMap],
        depths: &[&FeatureMap],
        sigma: f64,
        prompt_emb: &[f64],
        attn: Attn<'_>,
        capture: bool,
    ) -> Result<(Vec<FeatureMap>, Vec<FeatureTap>)> {
        if prompt_emb.len() != self.config.embed_dim {
            return Err(Error::Shape(format!(
                "prompt embedding has width {}, model expects {}",
                prompt_emb.len(),
                self.config.embed_dim
            )));
        }
        let (w, h) = (latents[0].width(), latents[0].height());
        if latents.iter().any(|z| z.width() != w || z.height() != h) {
            return Err(Error::Shape("batch latents differ in size".into()));
        }
        self.check_latent_size(w, h)?;
        if let Attn::Inject(inj) = &attn {
            if inj.len() != net.blocks.len() {
                return Err(Error::Shape(format!(
                    "{} injections for {} attention blocks",
                    inj.len(),
                    net.blocks.len()
                )));
            }
            if latents.len() != 1 {
                return Err(Error::Shape("injection runs on one frame at a time".into()));
            }
        }
        let (c_skip, c_out, c_in) = self.preconditioning(sigma);
        let emb = nalgebra::DVector::from_column_slice(prompt_emb);
        let prompt_bias = net.prompt_proj.transpose() * emb;

        let mut hidden: Vec<FeatureMap> = latents
            .iter()
            .zip(depths)
            .map(|(z, d)| {
                let mut scaled = (*z).clone();
                scaled.data_mut().iter_mut().for_each(|v| *v *= c_in);
                let mut hdn = net.conv_in.forward(&concat_channels(&scaled, d))?;
                for i in 0..hdn.pixel_count() {
                    for (v, b) in hdn.pixel_mut(i).iter_mut().zip(prompt_bias.iter()) {
                        *v = silu(*v + b);
                    }
                }
                Ok(hdn)
            })
            .collect::<Result<_>>()?;

        let mut taps = vec![FeatureTap::default(); latents.len()];
        for (l, weights) in net.blocks.iter().enumerate() {
            let factor = 1usize << l;
            let (bw, bh) = (w / factor, h / factor);
            let pre: Vec<TokenFeatures> = hidden
                .iter()
                .map(|hdn| TokenFeatures::from_feature_map(&rms_normalize(&avg_pool(hdn, factor))))
                .collect();
            let post: Vec<TokenFeatures> = match &attn {
                Attn::Plain => pre
                    .iter()
                    .map(|f| self_attention(f, weights))
                    .collect::<Result<_>>()?,
                Attn::Extended => extended_attention(&pre, weights)?,
                Attn::Inject(inj) => {
                    let block = &inj[l];
                    let attended = pre_attention_inject(&pre[0], &block.keyframe_features, weights)?;
                    let out = match &block.warped {
                        Some((warped, valid)) => {
                            post_attention_fuse(&attended, warped, valid, block.alpha)?
                        }
                        None => attended,
                    };
                    vec![out]
                }
            };
            for (b, out) in post.iter().enumerate() {
                add_upsampled(&mut hidden[b], &out.to_feature_map(bw, bh)?, factor);
            }
            if capture {
                for (tap, (f, out)) in taps.iter_mut().zip(pre.into_iter().zip(post)) {
                    tap.blocks.push(TapRecord { pre: f, post: out });
                }
            }
        }

        let preds = hidden
            .into_iter()
            .zip(latents)
            .map(|(mut hdn, z)| {
                hdn.data_mut().iter_mut().for_each(|v| *v = silu(*v));
                let out = net.conv_out.forward(&hdn)?;
                let mut pred = (*z).clone();
                for (p, &o) in pred.data_mut().iter_mut().zip(out.data()) {
                    *p = c_skip * *p + c_out * o;
                }
                Ok(pred)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((preds, taps))
    }
}

/// Builds a model from seeded weights. `config.name` selects the toy
/// network or one of the fixed test models.
pub fn init_toy_model(seed: u64, config: &ModelConfig, latent_channels: usize) -> Result<DenoiserModel> {
    config.validate()?;
    if latent_channels == 0 {
        return Err(Error::Config("latent channels must be positive".into()));
    }
    let arch = match config.name.as_str() {
        "identity" => Arch::Identity,
        "blur" => Arch::Blur,
        "linear" => Arch::Linear(Conv2d::seeded(seed, 0, latent_channels + 1, latent_channels, 1.0)),
        "toy" => {
            let hidden = config.hidden;
            let pscale = 1.0 / (config.embed_dim as f64).sqrt();
            let prompt_proj = DMatrix::from_fn(config.embed_dim, hidden, |r, c| {
                f32_round(pscale * standard_normal(&[seed, 2, r as u64, c as u64]))
            });
            let blocks = (0..config.levels)
                .map(|l| {
                    let w = AttentionWeights::seeded(seed, 100 + l as u64, hidden, config.attn_dim, config.heads)?;
                    let round = |m: DMatrix<f64>| m.map(f32_round);
                    AttentionWeights::new(round(w.w_q), round(w.w_k), round(w.w_v), round(w.w_o), w.heads)
                })
                .collect::<Result<Vec<_>>>()?;
            Arch::Toy(ToyNet {
                conv_in: Conv2d::seeded(seed, 1, latent_channels + 1, hidden, 1.0),
                prompt_proj,
                blocks,
                conv_out: Conv2d::seeded(seed, 3, hidden, latent_channels, 0.5),
            })
        }
        other => return Err(Error::Config(format!("unknown model {other:?}"))),
    };
    Ok(DenoiserModel {
        config: config.clone(),
        latent_channels,
        arch,
    })
}

/// One denoiser evaluation on a single frame. Returns the x0 estimate and,
/// in capture mode, the per-block tap records.
pub fn denoise(
    latent: &FeatureMap,
    sigma: f64,
    depth_cond: &FeatureMap,
    prompt_emb: &[f64],
    model: &DenoiserModel,
    mode: TapMode<'_>,
) -> Result<(FeatureMap, Option<FeatureTap>)> {
    let (attn, capture) = match mode {
        TapMode::Off => (Attn::Plain, false),
        TapMode::Capture => (Attn::Plain, true),
        TapMode::Inject(inj) => (Attn::Inject(inj), false),
    };
    let (mut preds, mut taps) = model.forward(&[latent], &[depth_cond], sigma, prompt_emb, attn, capture)?;
    let tap = capture.then(|| taps.pop().expect("one frame"));
    Ok((preds.pop().expect("one frame"), tap))
}

/// Joint pass over a batch of frames with extended attention, capturing
/// taps for every frame.
pub fn denoise_extended(
    latents: &[&FeatureMap],
    sigma: f64,
    depth_conds: &[&FeatureMap],
    prompt_emb: &[f64],
    model: &DenoiserModel,
) -> Result<(Vec<FeatureMap>, Vec<FeatureTap>)> {
    model.forward(latents, depth_conds, sigma, prompt_emb, Attn::Extended, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> DenoiserModel {
        init_toy_model(3, &ModelConfig::default(), 4).unwrap()
    }

    fn inputs(seed: u64) -> (FeatureMap, FeatureMap) {
        let z = FeatureMap::from_fn(8, 8, 4, |x, y, c| standard_normal(&[seed, x as u64, y as u64, c as u64]));
        let d = FeatureMap::from_fn(8, 8, 1, |x, y, _| ((x + y) % 5) as f64 / 4.0);
        (z, d)
    }

    #[test]
    fn same_seed_same_weights() {
        assert_eq!(toy(), toy());
        assert_ne!(toy(), init_toy_model(4, &ModelConfig::default(), 4).unwrap());
    }

    #[test]
    fn identity_model_returns_latent() {
        let cfg = ModelConfig {
            name: "identity".into(),
            ..Default::default()
        };
        let m = init_toy_model(0, &cfg, 4).unwrap();
        let (z, d) = inputs(1);
        for sigma in [0.0, 0.5, 80.0] {
            let (p, _) = denoise(&z, sigma, &d, &[], &m, TapMode::Off).unwrap();
            assert!(p.bitwise_eq(&z));
        }
    }

    #[test]
    fn unknown_model_name_is_rejected() {
        let cfg = ModelConfig {
            name: "unet".into(),
            ..Default::default()
        };
        assert!(init_toy_model(0, &cfg, 4).is_err());
    }

    #[test]
    fn capture_does_not_change_prediction() {
        let m = toy();
        let (z, d) = inputs(2);
        let emb = prompt_embedding("a castle", 16);
        let (plain, none) = denoise(&z, 3.0, &d, &emb, &m, TapMode::Off).unwrap();
        let (cap, tap) = denoise(&z, 3.0, &d, &emb, &m, TapMode::Capture).unwrap();
        assert!(none.is_none());
        assert!(plain.bitwise_eq(&cap));
        let tap = tap.unwrap();
        assert_eq!(tap.blocks.len(), 2);
        assert_eq!(tap.blocks[0].pre.n_tokens(), 64);
        assert_eq!(tap.blocks[1].pre.n_tokens(), 16);
    }

    #[test]
    fn empty_injection_matches_plain_pass() {
        let m = toy();
        let (z, d) = inputs(3);
        let emb = prompt_embedding("x", 16);
        let (plain, _) = denoise(&z, 1.0, &d, &emb, &m, TapMode::Off).unwrap();
        let inj = vec![BlockInjection::default(); 2];
        let (injected, _) = denoise(&z, 1.0, &d, &emb, &m, TapMode::Inject(&inj)).unwrap();
        assert!(plain.max_abs_diff(&injected).unwrap() <= 1e-6);
    }

    #[test]
    fn prompt_reaches_output() {
        let m = toy();
        let (z, d) = inputs(4);
        let (a, _) = denoise(&z, 2.0, &d, &prompt_embedding("a red car", 16), &m, TapMode::Off).unwrap();
        let (b, _) = denoise(&z, 2.0, &d, &prompt_embedding("a blue boat", 16), &m, TapMode::Off).unwrap();
        let l2: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
        assert!(l2 > 0.0);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let m = toy();
        let (z, d) = inputs(5);
        let emb = prompt_embedding("x", 16);
        assert!(denoise(&z, -1.0, &d, &emb, &m, TapMode::Off).is_err());
        assert!(denoise(&z, 1.0, &d, &emb[..3], &m, TapMode::Off).is_err());
        let wrong = vec![BlockInjection::default(); 1];
        assert!(denoise(&z, 1.0, &d, &emb, &m, TapMode::Inject(&wrong)).is_err());
        let odd = FeatureMap::zeros(7, 8, 4);
        let odd_d = FeatureMap::zeros(7, 8, 1);
        assert!(denoise(&odd, 1.0, &odd_d, &emb, &m, TapMode::Off).is_err());
    }

    #[test]
    fn prompt_embedding_is_deterministic_and_distinct() {
        assert_eq!(prompt_embedding("p", 8), prompt_embedding("p", 8));
        assert_ne!(prompt_embedding("p", 8), prompt_embedding("q", 8));
    }

    #[test]
    fn blur_preserves_constants() {
        let cfg = ModelConfig {
            name: "blur".into(),
            ..Default::default()
        };
        let m = init_toy_model(0, &cfg, 2).unwrap();
        let z = FeatureMap::filled(5, 3, 2, 0.25);
        let d = FeatureMap::zeros(5, 3, 1);
        let (p, _) = denoise(&z, 1.0, &d, &[], &m, TapMode::Off).unwrap();
        assert!(p.max_abs_diff(&z).unwrap() < 1e-15);
    }
}
