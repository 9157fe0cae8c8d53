//! Generative rendering of animated, untextured scenes.
//!
//! An animated mesh scene is rasterized into per-frame G-buffers (UV
//! coordinates, object ids, depth). A multi-frame diffusion sampler then
//! denoises all frames together, keeping them consistent by routing
//! attention features and initial noise through each object's canonical
//! UV space.
//!
//! Module map:
//! - [`scene`]: scene description, OBJ loading, z-buffered rasterization
//! - [`gbuffer`], [`latent_io`]: per-frame binary formats
//! - [`uv`]: texture splatting, sampling, blending and warping
//! - [`noise`]: UV-space noise initialization
//! - [`attention`]: self/extended attention, injection and fusion
//! - [`denoiser`]: toy denoiser, Karras schedule, Euler step
//! - [`pipeline`]: the full sampling loop
//! - [`metrics`]: frame-consistency scores

pub mod attention;
pub mod config;
pub mod denoiser;
pub mod error;
pub mod feature;
pub mod gbuffer;
pub mod latent_io;
pub mod metrics;
pub mod noise;
pub mod pipeline;
pub mod rng;
pub mod scene;
pub mod selftest;
pub mod uv;
pub mod visualize;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use feature::FeatureMap;
pub use gbuffer::GBufferFrame;
