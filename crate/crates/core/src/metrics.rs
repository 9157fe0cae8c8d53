//! Frame-consistency scores: mean cosine similarity between embeddings of
//! frames a fixed interval apart.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::feature::FeatureMap;

/// Deterministic frame embedding strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameEmbedder {
    /// Per-channel mean and standard deviation over a `grid × grid`
    /// partition of the frame, L2-normalized.
    GridStats { grid: usize },
}

impl Default for FrameEmbedder {
    fn default() -> Self {
        FrameEmbedder::GridStats { grid: 4 }
    }
}

impl FrameEmbedder {
    pub fn name(&self) -> &'static str {
        match self {
            FrameEmbedder::GridStats { .. } => "grid-stats",
        }
    }

    pub fn dimension(&self, channels: usize) -> usize {
        match *self {
            FrameEmbedder::GridStats { grid } => grid * grid * channels * 2,
        }
    }
}

/// Cell `g` of `grid` along an axis of length `len`; never empty.
fn cell_range(g: usize, grid: usize, len: usize) -> std::ops::Range<usize> {
    let start = (g * len / grid).min(len - 1);
    let end = ((g + 1) * len / grid).max(start + 1).min(len);
    start..end
}

pub fn embed_frame(frame: &FeatureMap, embedder: FrameEmbedder) -> Result<Vec<f64>> {
    if frame.pixel_count() == 0 || frame.channels() == 0 {
        return Err(Error::Shape("cannot embed an empty frame".into()));
    }
    let FrameEmbedder::GridStats { grid } = embedder;
    if grid == 0 {
        return Err(Error::Config("embedding grid must be positive".into()));
    }
    let c = frame.channels();
    let mut v = Vec::with_capacity(embedder.dimension(c));
    for gy in 0..grid {
        let ys = cell_range(gy, grid, frame.height());
        for gx in 0..grid {
            let xs = cell_range(gx, grid, frame.width());
            let n = (ys.len() * xs.len()) as f64;
            for ch in 0..c {
                let mut sum = 0.0;
                for y in ys.clone() {
                    for x in xs.clone() {
                        sum += frame.get(x, y, ch);
                    }
                }
                let mean = sum / n;
                let mut var = 0.0;
                for y in ys.clone() {
                    for x in xs.clone() {
                        var += (frame.get(x, y, ch) - mean).powi(2);
                    }
                }
                v.push(mean);
                v.push((var / n).sqrt());
            }
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Numeric("frame embedding has zero or non-finite norm".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

/// Cosine similarity clamped to `[-1, 1]`; exactly 1 for equal vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        return 1.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Mean cosine similarity over all pairs `(i, i + interval)`.
pub fn frame_consistency(frames: &[FeatureMap], embedder: FrameEmbedder, interval: usize) -> Result<f64> {
    let embeddings = frames
        .iter()
        .map(|f| embed_frame(f, embedder))
        .collect::<Result<Vec<_>>>()?;
    consistency_of_embeddings(&embeddings, interval)
}

pub fn consistency_of_embeddings(embeddings: &[Vec<f64>], interval: usize) -> Result<f64> {
    if interval == 0 {
        return Err(Error::Config("frame interval must be positive".into()));
    }
    if embeddings.len() < interval + 1 {
        return Err(Error::Config(format!(
            "interval {interval} needs at least {} frames, got {}",
            interval + 1,
            embeddings.len()
        )));
    }
    let pairs = embeddings.len() - interval;
    let total: f64 = (0..pairs)
        .map(|i| cosine(&embeddings[i], &embeddings[i + interval]))
        .sum();
    Ok(total / pairs as f64)
}

/// Scores for several intervals, embedding each frame once.
pub fn consistency_report(
    frames: &[FeatureMap],
    embedder: FrameEmbedder,
    intervals: &[usize],
) -> Result<BTreeMap<usize, f64>> {
    let embeddings = frames
        .iter()
        .map(|f| embed_frame(f, embedder))
        .collect::<Result<Vec<_>>>()?;
    intervals
        .iter()
        .map(|&k| Ok((k, consistency_of_embeddings(&embeddings, k)?)))
        .collect()
}
