//! Run configuration, parsed from a TOML document. Unknown keys are errors.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use std::path::Path;

use crate::denoiser::weights::load_weights;
use crate::denoiser::{init_toy_model, DenoiserModel, ModelConfig};
use crate::error::{Error, Result};
use crate::noise::BackgroundMode;
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed; every subsystem seed is derived from it.
    pub seed: u64,
    /// Number of diffusion steps.
    pub steps: usize,
    /// Keyframes sampled per step.
    pub keyframes: usize,
    /// Weight of the UV-projected features in post-attention fusion.
    pub alpha: f64,
    /// Texels per side at latent resolution; `2 × latent_width` when absent.
    pub texel_resolution: Option<usize>,
    pub latent_width: usize,
    pub latent_height: usize,
    pub latent_channels: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub background_noise: BackgroundMode,
    pub prompt: String,
    pub normalize_latents: bool,
    pub model: ModelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 50,
            keyframes: 2,
            alpha: 0.5,
            texel_resolution: None,
            latent_width: 32,
            latent_height: 32,
            latent_channels: 4,
            sigma_min: 0.0292,
            sigma_max: 14.6146,
            rho: 7.0,
            background_noise: BackgroundMode::FixedImage,
            prompt: String::new(),
            normalize_latents: true,
            model: ModelConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn texel_resolution(&self) -> usize {
        self.texel_resolution.unwrap_or(2 * self.latent_width)
    }

    /// Checks everything that does not depend on the frame count.
    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::Config(format!("steps must be at least 2, got {}", self.steps)));
        }
        if self.keyframes < 1 {
            return Err(Error::Config("keyframes must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.texel_resolution == Some(0) {
            return Err(Error::Config("texel_resolution must be positive".into()));
        }
        if self.latent_width == 0 || self.latent_height == 0 || self.latent_channels == 0 {
            return Err(Error::Config("latent dimensions must be positive".into()));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max && self.sigma_max.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < sigma_min < sigma_max, got {} and {}",
                self.sigma_min, self.sigma_max
            )));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        self.model.validate()
    }

    /// Checks constraints involving the number of frames.
    pub fn validate_for_frames(&self, frame_count: usize) -> Result<()> {
        self.validate()?;
        if frame_count == 0 {
            return Err(Error::Config("no frames to render".into()));
        }
        if self.keyframes > frame_count {
            return Err(Error::Config(format!(
                "keyframes ({}) exceeds frame count ({frame_count})",
                self.keyframes
            )));
        }
        Ok(())
    }

    /// Loads `model.weights` (relative to `base_dir`) when set, otherwise
    /// initializes the named model from the root seed.
    pub fn build_model(&self, base_dir: &Path) -> Result<DenoiserModel> {
        let Some(weights) = &self.model.weights else {
            return init_toy_model(derive_seed(self.seed, "model"), &self.model, self.latent_channels);
        };
        let model = load_weights(&base_dir.join(weights))?;
        if model.latent_channels() != self.latent_channels {
            return Err(Error::Config(format!(
                "weights expect {} latent channels, config has {}",
                model.latent_channels(),
                self.latent_channels
            )));
        }
        let mut expected = model.config().clone();
        expected.weights = self.model.weights.clone();
        if expected != self.model {
            return Err(Error::Config("[model] table disagrees with the weight descriptor".into()));
        }
        Ok(model)
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("run config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
