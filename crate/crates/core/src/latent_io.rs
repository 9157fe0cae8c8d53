//! Latent frame files.
//!
//! ```text
//! "LATF" | version: u32 | width: u32 | height: u32 | channels: u32
//! channel 0: f32 * W*H | channel 1 ... (planar, row-major, little-endian)
//! ```

use crate::error::{Error, Result};
use crate::feature::FeatureMap;
use crate::gbuffer::{f32_le, read_header, u32_le, MAX_PIXELS};

pub const LATF_MAGIC: [u8; 4] = *b"LATF";
pub const LATF_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;
const MAX_CHANNELS: usize = 1024;

pub fn encode_latent(fm: &FeatureMap) -> Vec<u8> {
    let n = fm.pixel_count();
    let mut out = Vec::with_capacity(HEADER_LEN + n * fm.channels() * 4);
    out.extend_from_slice(&LATF_MAGIC);
    out.extend_from_slice(&LATF_VERSION.to_le_bytes());
    out.extend_from_slice(&(fm.width() as u32).to_le_bytes());
    out.extend_from_slice(&(fm.height() as u32).to_le_bytes());
    out.extend_from_slice(&(fm.channels() as u32).to_le_bytes());
    for c in 0..fm.channels() {
        for i in 0..n {
            out.extend_from_slice(&(fm.pixel(i)[c] as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_latent(bytes: &[u8]) -> Result<FeatureMap> {
    let (width, height) = read_header(bytes, LATF_MAGIC, LATF_VERSION, "latent")?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::format("latent", "truncated header"));
    }
    let channels = u32_le(&bytes[16..20]) as usize;
    if channels == 0 || channels > MAX_CHANNELS || width * height * channels > MAX_PIXELS {
        return Err(Error::format("latent", format!("bad channel count {channels}")));
    }
    let n = width * height;
    let expected = HEADER_LEN + n * channels * 4;
    if bytes.len() != expected {
        return Err(Error::format(
            "latent",
            format!("expected {expected} bytes, got {}", bytes.len()),
        ));
    }
    let body = &bytes[HEADER_LEN..];
    let mut data = vec![0.0; n * channels];
    for c in 0..channels {
        for i in 0..n {
            let off = (c * n + i) * 4;
            data[i * channels + c] = f32_le(&body[off..off + 4]) as f64;
        }
    }
    FeatureMap::from_vec(width, height, channels, data)
}
