//! Initial diffusion noise sampled once per texel in UV space and
//! projected into every frame, so corresponding pixels start identical.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::FeatureMap;
use crate::gbuffer::GBufferFrame;
use crate::rng::{derive_seed, standard_normal};
use crate::uv::{texel_index, TextureSet, UVTexture};

/// Noise source for pixels no object covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BackgroundMode {
    /// One noise image shared by every frame.
    #[default]
    FixedImage,
    /// Independent noise for each frame.
    PerFrame,
}

impl std::str::FromStr for BackgroundMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed-image" | "fixed" => Ok(Self::FixedImage),
            "per-frame" => Ok(Self::PerFrame),
            other => Err(Error::Config(format!(
                "unknown background noise mode {other:?} (expected fixed-image or per-frame)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub seed: u64,
    pub texel_resolution: usize,
    pub channels: usize,
    pub background_mode: BackgroundMode,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.texel_resolution == 0 || self.channels == 0 {
            return Err(Error::Config(
                "noise needs positive texel resolution and channel count".into(),
            ));
        }
        Ok(())
    }
}

/// Texture keys use a different sub-seed from background keys.
fn object_seed(cfg: &NoiseConfig) -> u64 {
    derive_seed(cfg.seed, "uv-noise/object")
}

fn background_seed(cfg: &NoiseConfig) -> u64 {
    derive_seed(cfg.seed, "uv-noise/background")
}

/// One fully filled `R × R × C` standard-normal texture per object.
pub fn init_uv_noise(object_ids: &[u16], cfg: &NoiseConfig) -> Result<TextureSet> {
    cfg.validate()?;
    if object_ids.is_empty() {
        return TextureSet::empty(&[], cfg.texel_resolution, cfg.channels);
    }
    let seed = object_seed(cfg);
    let textures = object_ids
        .iter()
        .map(|&id| {
            UVTexture::from_fn(id, cfg.texel_resolution, cfg.channels, |t, c| {
                standard_normal(&[seed, id as u64, t as u64, c as u64])
            })
        })
        .collect();
    TextureSet::from_textures(textures)
}

/// Fills a frame with noise: covered pixels copy their texel, background
/// pixels draw from the background stream selected by `cfg`.
pub fn project_noise(
    noise: &TextureSet,
    gbuf: &GBufferFrame,
    cfg: &NoiseConfig,
    frame_index: usize,
) -> Result<FeatureMap> {
    cfg.validate()?;
    if noise.channels() != cfg.channels && !noise.object_ids().is_empty() {
        return Err(Error::Shape(format!(
            "noise textures have {} channels, config asks for {}",
            noise.channels(),
            cfg.channels
        )));
    }
    let bg_seed = background_seed(cfg);
    let frame_key = match cfg.background_mode {
        BackgroundMode::FixedImage => u64::MAX,
        BackgroundMode::PerFrame => frame_index as u64,
    };
    let w = gbuf.width();
    let mut out = FeatureMap::zeros(w, gbuf.height(), cfg.channels);
    for (i, &id) in gbuf.object_ids().iter().enumerate() {
        let px = out.pixel_mut(i);
        if id != 0 {
            let tex = noise.get(id).ok_or_else(|| {
                Error::Shape(format!("no noise texture for object id {id}"))
            })?;
            px.copy_from_slice(tex.texel(texel_index(gbuf.uvs()[i], tex.resolution())));
        } else {
            let (x, y) = ((i % w) as u64, (i / w) as u64);
            for (c, v) in px.iter_mut().enumerate() {
                *v = standard_normal(&[bg_seed, frame_key, x, y, c as u64]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(mode: BackgroundMode) -> NoiseConfig {
        NoiseConfig {
            seed: 11,
            texel_resolution: 16,
            channels: 4,
            background_mode: mode,
        }
    }

    #[test]
    fn textures_are_deterministic_and_full() {
        let a = init_uv_noise(&[1, 2], &cfg(BackgroundMode::FixedImage)).unwrap();
        let b = init_uv_noise(&[1, 2], &cfg(BackgroundMode::FixedImage)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|t| t.filled_count() == 256));
        assert_ne!(a.get(1).unwrap().data(), a.get(2).unwrap().data());
    }

    #[test]
    fn background_modes() {
        let g = GBufferFrame::background(8, 8);
        let tex = init_uv_noise(&[1], &cfg(BackgroundMode::FixedImage)).unwrap();
        let c = cfg(BackgroundMode::FixedImage);
        assert!(project_noise(&tex, &g, &c, 0)
            .unwrap()
            .bitwise_eq(&project_noise(&tex, &g, &c, 1).unwrap()));
        let c = cfg(BackgroundMode::PerFrame);
        assert!(!project_noise(&tex, &g, &c, 0)
            .unwrap()
            .bitwise_eq(&project_noise(&tex, &g, &c, 1).unwrap()));
    }

    #[test]
    fn same_texel_same_noise() {
        let c = cfg(BackgroundMode::PerFrame);
        let tex = init_uv_noise(&[3], &c).unwrap();
        let mut g0 = GBufferFrame::background(4, 4);
        let mut g1 = GBufferFrame::background(4, 4);
        g0.set_pixel(1, 3, [0.51, 0.26], 1.0);
        g1.set_pixel(14, 3, [0.52, 0.27], 3.0);
        let a = project_noise(&tex, &g0, &c, 0).unwrap();
        let b = project_noise(&tex, &g1, &c, 1).unwrap();
        assert_eq!(a.pixel(1), b.pixel(14));
    }

    #[test]
    fn mode_parses_from_flag_text() {
        assert_eq!("per-frame".parse::<BackgroundMode>().unwrap(), BackgroundMode::PerFrame);
        assert_eq!("fixed-image".parse::<BackgroundMode>().unwrap(), BackgroundMode::FixedImage);
        assert!("sometimes".parse::<BackgroundMode>().is_err());
    }
}
