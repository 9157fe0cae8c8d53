//! Per-frame guiding channels and their binary file format.
//!
//! File layout, all little-endian:
//!
//! ```text
//! "GBUF" | version: u32 | width: u32 | height: u32
//! uv_u: f32 * W*H | uv_v: f32 * W*H | object_id: u16 * W*H | depth: f32 * W*H
//! ```
//!
//! Channels are planar and row-major. Background pixels have object id 0
//! and infinite depth.

use crate::error::{Error, Result};
use crate::feature::FeatureMap;

pub const GBUF_MAGIC: [u8; 4] = *b"GBUF";
pub const GBUF_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;
/// Upper bound on decoded pixel count, guards allocations on hostile input.
pub const MAX_PIXELS: usize = 1 << 26;

pub const BACKGROUND_DEPTH: f32 = f32::INFINITY;

#[derive(Debug, Clone, PartialEq)]
pub struct GBufferFrame {
    width: usize,
    height: usize,
    uv: Vec<[f32; 2]>,
    object_id: Vec<u16>,
    depth: Vec<f32>,
}

impl GBufferFrame {
    pub fn background(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            uv: vec![[0.0; 2]; n],
            object_id: vec![0; n],
            depth: vec![BACKGROUND_DEPTH; n],
        }
    }

    /// Assembles a frame from raw channels, checking the background/depth
    /// and UV range invariants.
    pub fn from_channels(
        width: usize,
        height: usize,
        uv: Vec<[f32; 2]>,
        object_id: Vec<u16>,
        depth: Vec<f32>,
    ) -> Result<Self> {
        let n = width * height;
        if uv.len() != n || object_id.len() != n || depth.len() != n {
            return Err(Error::Shape(format!(
                "g-buffer {width}x{height} channel lengths {}/{}/{}",
                uv.len(),
                object_id.len(),
                depth.len()
            )));
        }
        for i in 0..n {
            let bg = object_id[i] == 0;
            if bg != (depth[i] == BACKGROUND_DEPTH) {
                return Err(Error::format(
                    "g-buffer",
                    format!("pixel {i}: object id {} with depth {}", object_id[i], depth[i]),
                ));
            }
            if !bg {
                if !(depth[i] > 0.0 && depth[i].is_finite()) {
                    return Err(Error::format(
                        "g-buffer",
                        format!("pixel {i}: covered depth {} not positive", depth[i]),
                    ));
                }
                if !uv[i].iter().all(|c| (0.0..=1.0).contains(c)) {
                    return Err(Error::format(
                        "g-buffer",
                        format!("pixel {i}: uv {:?} outside [0,1]", uv[i]),
                    ));
                }
            }
        }
        Ok(Self {
            width,
            height,
            uv,
            object_id,
            depth,
        })
    }

    pub(crate) fn set_pixel(&mut self, index: usize, object_id: u16, uv: [f32; 2], depth: f32) {
        self.object_id[index] = object_id;
        self.uv[index] = uv;
        self.depth[index] = depth;
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn uvs(&self) -> &[[f32; 2]] {
        &self.uv
    }

    pub fn object_ids(&self) -> &[u16] {
        &self.object_id
    }

    pub fn depths(&self) -> &[f32] {
        &self.depth
    }

    #[inline]
    pub fn is_covered(&self, index: usize) -> bool {
        self.object_id[index] != 0
    }

    pub fn coverage_mask(&self) -> Vec<bool> {
        self.object_id.iter().map(|&id| id != 0).collect()
    }

    pub fn background_mask(&self) -> Vec<bool> {
        self.object_id.iter().map(|&id| id == 0).collect()
    }

    /// One-channel conditioning map: inverse depth divided by its maximum
    /// over covered pixels, so the nearest surface is 1 and background is 0.
    pub fn depth_conditioning(&self) -> FeatureMap {
        let max_inv = self
            .depth
            .iter()
            .zip(&self.object_id)
            .filter(|(_, &id)| id != 0)
            .map(|(&d, _)| 1.0 / d as f64)
            .fold(0.0, f64::max);
        let data = self
            .depth
            .iter()
            .zip(&self.object_id)
            .map(|(&d, &id)| {
                if id == 0 || max_inv == 0.0 {
                    0.0
                } else {
                    (1.0 / d as f64) / max_inv
                }
            })
            .collect();
        FeatureMap::from_vec(self.width, self.height, 1, data).expect("shape matches")
    }

    pub fn encode(&self) -> Vec<u8> {
        let n = self.pixel_count();
        let mut out = Vec::with_capacity(HEADER_LEN + n * 14);
        out.extend_from_slice(&GBUF_MAGIC);
        out.extend_from_slice(&GBUF_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for uv in &self.uv {
            out.extend_from_slice(&uv[0].to_le_bytes());
        }
        for uv in &self.uv {
            out.extend_from_slice(&uv[1].to_le_bytes());
        }
        for id in &self.object_id {
            out.extend_from_slice(&id.to_le_bytes());
        }
        for d in &self.depth {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (width, height) = read_header(bytes, GBUF_MAGIC, GBUF_VERSION, "g-buffer")?;
        let n = width * height;
        let expected = HEADER_LEN + n * (4 + 4 + 2 + 4);
        if bytes.len() != expected {
            return Err(Error::format(
                "g-buffer",
                format!("expected {expected} bytes for {width}x{height}, got {}", bytes.len()),
            ));
        }
        let body = &bytes[HEADER_LEN..];
        let (us, rest) = body.split_at(n * 4);
        let (vs, rest) = rest.split_at(n * 4);
        let (ids, ds) = rest.split_at(n * 2);
        let uv = us
            .chunks_exact(4)
            .zip(vs.chunks_exact(4))
            .map(|(u, v)| [f32_le(u), f32_le(v)])
            .collect();
        let object_id = ids
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .collect();
        let depth = ds.chunks_exact(4).map(f32_le).collect();
        Self::from_channels(width, height, uv, object_id, depth)
    }
}

#[inline]
pub(crate) fn f32_le(b: &[u8]) -> f32 {
    f32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

#[inline]
pub(crate) fn u32_le(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

/// Validates magic and version; returns `(width, height)`.
pub(crate) fn read_header(
    bytes: &[u8],
    magic: [u8; 4],
    version: u32,
    format: &'static str,
) -> Result<(usize, usize)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(format, "truncated header"));
    }
    if bytes[..4] != magic {
        return Err(Error::format(format, "bad magic bytes"));
    }
    let found = u32_le(&bytes[4..8]);
    if found != version {
        return Err(Error::format(format, format!("unsupported version {found}")));
    }
    let width = u32_le(&bytes[8..12]) as usize;
    let height = u32_le(&bytes[12..16]) as usize;
    if width == 0 || height == 0 {
        return Err(Error::format(format, "zero dimension"));
    }
    match width.checked_mul(height) {
        Some(n) if n <= MAX_PIXELS => Ok((width, height)),
        _ => Err(Error::format(format, format!("{width}x{height} too large"))),
    }
}
