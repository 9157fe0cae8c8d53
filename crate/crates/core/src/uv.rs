//! Canonical UV-space correspondence: splatting frame features into
//! per-object textures, reading them back, multi-frame blending and
//! frame-to-frame warping.
//!
//! Texel addressing is nearest-texel in both directions: a pixel with
//! coordinates `(u, v)` owns texel `(⌊u·R⌋, ⌊v·R⌋)`, clamped to `R - 1`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::feature::FeatureMap;
use crate::gbuffer::GBufferFrame;

/// Square per-object texture of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct UVTexture {
    object_id: u16,
    resolution: usize,
    channels: usize,
    data: Vec<f64>,
    count: Vec<u32>,
}

impl UVTexture {
    pub fn empty(object_id: u16, resolution: usize, channels: usize) -> Self {
        let n = resolution * resolution;
        Self {
            object_id,
            resolution,
            channels,
            data: vec![0.0; n * channels],
            count: vec![0; n],
        }
    }

    /// Fully filled texture from `f(texel_index, channel)`, each texel
    /// counting as one observation.
    pub fn from_fn(
        object_id: u16,
        resolution: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let n = resolution * resolution;
        let mut data = Vec::with_capacity(n * channels);
        for t in 0..n {
            for c in 0..channels {
                data.push(f(t, c));
            }
        }
        Self {
            object_id,
            resolution,
            channels,
            data,
            count: vec![1; n],
        }
    }

    pub fn object_id(&self) -> u16 {
        self.object_id
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn texel_count(&self) -> usize {
        self.resolution * self.resolution
    }

    #[inline]
    pub fn is_filled(&self, texel: usize) -> bool {
        self.count[texel] > 0
    }

    pub fn filled_count(&self) -> usize {
        self.count.iter().filter(|&&c| c > 0).count()
    }

    #[inline]
    pub fn count(&self, texel: usize) -> u32 {
        self.count[texel]
    }

    #[inline]
    pub fn texel(&self, texel: usize) -> &[f64] {
        &self.data[texel * self.channels..(texel + 1) * self.channels]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Index of the texel owning `uv` in an `resolution²` grid (row = v).
#[inline]
pub fn texel_index(uv: [f32; 2], resolution: usize) -> usize {
    let r = resolution as f64;
    let tu = ((uv[0] as f64 * r).floor() as usize).min(resolution - 1);
    let tv = ((uv[1] as f64 * r).floor() as usize).min(resolution - 1);
    tv * resolution + tu
}

/// One texture per scene object, all with the same resolution and width.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureSet {
    resolution: usize,
    channels: usize,
    textures: BTreeMap<u16, UVTexture>,
}

impl TextureSet {
    pub fn empty(object_ids: &[u16], resolution: usize, channels: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::Config("texel resolution must be positive".into()));
        }
        let textures = object_ids
            .iter()
            .map(|&id| (id, UVTexture::empty(id, resolution, channels)))
            .collect();
        Ok(Self {
            resolution,
            channels,
            textures,
        })
    }

    pub fn from_textures(textures: Vec<UVTexture>) -> Result<Self> {
        let first = textures
            .first()
            .ok_or_else(|| Error::Shape("texture set needs at least one texture".into()))?;
        let (resolution, channels) = (first.resolution, first.channels);
        let mut map = BTreeMap::new();
        for t in textures {
            if t.resolution != resolution || t.channels != channels {
                return Err(Error::Shape("textures disagree on resolution or channels".into()));
            }
            if map.insert(t.object_id, t).is_some() {
                return Err(Error::Shape("duplicate object id in texture set".into()));
            }
        }
        Ok(Self {
            resolution,
            channels,
            textures: map,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn get(&self, object_id: u16) -> Option<&UVTexture> {
        self.textures.get(&object_id)
    }

    pub fn object_ids(&self) -> Vec<u16> {
        self.textures.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &UVTexture> {
        self.textures.values()
    }
}

/// Running per-texel means, updated incrementally so that identical
/// contributions reproduce their value bit for bit.
struct Accumulator {
    set: TextureSet,
}

impl Accumulator {
    fn new(object_ids: &[u16], resolution: usize, channels: usize) -> Result<Self> {
        Ok(Self {
            set: TextureSet::empty(object_ids, resolution, channels)?,
        })
    }

    fn add_frame(&mut self, features: &FeatureMap, gbuf: &GBufferFrame) -> Result<()> {
        check_dims(features, gbuf)?;
        if features.channels() != self.set.channels {
            return Err(Error::Shape(format!(
                "feature width {} vs texture width {}",
                features.channels(),
                self.set.channels
            )));
        }
        let r = self.set.resolution;
        let c = self.set.channels;
        for (i, &id) in gbuf.object_ids().iter().enumerate() {
            if id == 0 {
                continue;
            }
            let tex = self
                .set
                .textures
                .get_mut(&id)
                .ok_or_else(|| Error::Shape(format!("pixel {i} has unknown object id {id}")))?;
            let t = texel_index(gbuf.uvs()[i], r);
            tex.count[t] += 1;
            let n = tex.count[t] as f64;
            for (mean, &v) in tex.data[t * c..(t + 1) * c].iter_mut().zip(features.pixel(i)) {
                *mean += (v - *mean) / n;
            }
        }
        Ok(())
    }

    fn finish(self) -> TextureSet {
        self.set
    }
}

fn check_dims(features: &FeatureMap, gbuf: &GBufferFrame) -> Result<()> {
    if features.width() != gbuf.width() || features.height() != gbuf.height() {
        return Err(Error::Shape(format!(
            "feature map {}x{} vs g-buffer {}x{}",
            features.width(),
            features.height(),
            gbuf.width(),
            gbuf.height()
        )));
    }
    Ok(())
}

/// Averages the features of every covered pixel into its object's texel.
pub fn splat_to_textures(
    features: &FeatureMap,
    gbuf: &GBufferFrame,
    object_ids: &[u16],
    resolution: usize,
) -> Result<TextureSet> {
    let mut acc = Accumulator::new(object_ids, resolution, features.channels())?;
    acc.add_frame(features, gbuf)?;
    Ok(acc.finish())
}

/// Nearest-texel lookup for every pixel. Background pixels and pixels
/// whose texel is unfilled (or whose object has no texture) are invalid
/// and read as zero.
pub fn sample_from_textures(textures: &TextureSet, gbuf: &GBufferFrame) -> (FeatureMap, Vec<bool>) {
    let c = textures.channels;
    let mut out = FeatureMap::zeros(gbuf.width(), gbuf.height(), c);
    let mut valid = vec![false; gbuf.pixel_count()];
    for (i, &id) in gbuf.object_ids().iter().enumerate() {
        if id == 0 {
            continue;
        }
        let Some(tex) = textures.textures.get(&id) else {
            continue;
        };
        let t = texel_index(gbuf.uvs()[i], textures.resolution);
        if tex.is_filled(t) {
            out.pixel_mut(i).copy_from_slice(tex.texel(t));
            valid[i] = true;
        }
    }
    (out, valid)
}

/// Blends several frames into one texture set: the mean of the all-frame
/// average texture and the first-writer-wins sequential fill.
pub fn blend_multi_frame(
    features: &[&FeatureMap],
    gbufs: &[&GBufferFrame],
    object_ids: &[u16],
    resolution: usize,
) -> Result<TextureSet> {
    if features.len() != gbufs.len() {
        return Err(Error::Shape(format!(
            "{} feature maps for {} g-buffers",
            features.len(),
            gbufs.len()
        )));
    }
    let first = features
        .first()
        .ok_or_else(|| Error::Shape("blend needs at least one frame".into()))?;
    let channels = first.channels();

    let mut average = Accumulator::new(object_ids, resolution, channels)?;
    let mut inpainted = TextureSet::empty(object_ids, resolution, channels)?;
    for (fm, gb) in features.iter().zip(gbufs) {
        average.add_frame(fm, gb)?;
        let frame = splat_to_textures(fm, gb, object_ids, resolution)?;
        for (id, src) in &frame.textures {
            let dst = inpainted.textures.get_mut(id).expect("same object ids");
            for t in 0..src.texel_count() {
                if src.is_filled(t) && !dst.is_filled(t) {
                    dst.count[t] = 1;
                    dst.data[t * channels..(t + 1) * channels].copy_from_slice(src.texel(t));
                }
            }
        }
    }

    let mut blended = average.finish();
    for (id, tex) in blended.textures.iter_mut() {
        let fill = &inpainted.textures[id];
        for t in 0..tex.count.len() {
            if tex.count[t] == 0 {
                continue;
            }
            for (a, &i) in tex.data[t * channels..(t + 1) * channels]
                .iter_mut()
                .zip(fill.texel(t))
            {
                *a = (*a + i) / 2.0;
            }
        }
    }
    Ok(blended)
}

/// Re-projects `src` (seen through `src_gbuf`) into the view of
/// `dst_gbuf` by way of UV space.
pub fn warp_features(
    src: &FeatureMap,
    src_gbuf: &GBufferFrame,
    dst_gbuf: &GBufferFrame,
    resolution: usize,
) -> Result<(FeatureMap, Vec<bool>)> {
    let mut ids: Vec<u16> = src_gbuf.object_ids().iter().copied().filter(|&id| id != 0).collect();
    ids.sort_unstable();
    ids.dedup();
    let tex = splat_to_textures(src, src_gbuf, &ids, resolution)?;
    Ok(sample_from_textures(&tex, dst_gbuf))
}

/// Nearest-pixel decimation: each target pixel copies every channel of the
/// source pixel under its center.
pub fn resample_gbuffer(
    gbuf: &GBufferFrame,
    new_width: usize,
    new_height: usize,
) -> Result<GBufferFrame> {
    let (w, h) = (gbuf.width(), gbuf.height());
    if new_width > w || new_height > h {
        return Err(Error::Config(format!(
            "cannot upsample g-buffer {w}x{h} to {new_width}x{new_height}"
        )));
    }
    if new_width == 0 || new_height == 0 {
        return Err(Error::Config("resampled g-buffer needs positive size".into()));
    }
    if new_width == w && new_height == h {
        return Ok(gbuf.clone());
    }
    let mut out = GBufferFrame::background(new_width, new_height);
    for y in 0..new_height {
        let sy = (2 * y + 1) * h / (2 * new_height);
        for x in 0..new_width {
            let sx = (2 * x + 1) * w / (2 * new_width);
            let s = sy * w + sx;
            out.set_pixel(
                y * new_width + x,
                gbuf.object_ids()[s],
                gbuf.uvs()[s],
                gbuf.depths()[s],
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 4x4 frame: object 1 on the left half, object 2 on the bottom-right
    /// quadrant, background top-right.
    fn layout() -> GBufferFrame {
        let mut g = GBufferFrame::background(4, 4);
        for y in 0..4 {
            for x in 0..2 {
                g.set_pixel(y * 4 + x, 1, [x as f32 * 0.5 + 0.1, y as f32 * 0.25 + 0.05], 1.0);
            }
        }
        for y in 2..4 {
            for x in 2..4 {
                g.set_pixel(y * 4 + x, 2, [0.9, 0.9], 2.0);
            }
        }
        g
    }

    #[test]
    fn constant_map_fills_constant_texels() {
        let g = layout();
        let fm = FeatureMap::filled(4, 4, 3, 0.37);
        let tex = splat_to_textures(&fm, &g, &[1, 2], 8).unwrap();
        for t in tex.iter() {
            for i in 0..t.texel_count() {
                if t.is_filled(i) {
                    assert_eq!(t.texel(i), &[0.37; 3]);
                }
            }
        }
    }

    #[test]
    fn shared_texel_holds_mean() {
        let g = layout();
        let fm = FeatureMap::from_fn(4, 4, 1, |x, y, _| (y * 4 + x) as f64);
        let tex = splat_to_textures(&fm, &g, &[1, 2], 4).unwrap();
        // all four object-2 pixels land on texel (3, 3)
        let t2 = tex.get(2).unwrap();
        assert_eq!(t2.count(15), 4);
        assert_eq!(t2.texel(15), &[(10.0 + 11.0 + 14.0 + 15.0) / 4.0]);
        assert_eq!(t2.filled_count(), 1);
    }

    #[test]
    fn unknown_object_and_zero_resolution_are_errors() {
        let g = layout();
        let fm = FeatureMap::zeros(4, 4, 1);
        assert!(splat_to_textures(&fm, &g, &[1], 4).is_err());
        assert!(splat_to_textures(&fm, &g, &[1, 2], 0).is_err());
        assert!(splat_to_textures(&FeatureMap::zeros(3, 4, 1), &g, &[1, 2], 4).is_err());
    }

    #[test]
    fn background_only_samples_nothing() {
        let g = GBufferFrame::background(5, 3);
        let tex = TextureSet::empty(&[1], 4, 2).unwrap();
        let (fm, valid) = sample_from_textures(&tex, &g);
        assert!(valid.iter().all(|v| !v));
        assert!(fm.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn blend_of_single_frame_equals_splat() {
        let g = layout();
        let fm = FeatureMap::from_fn(4, 4, 2, |x, y, c| (x * 7 + y * 3 + c) as f64 * 0.1);
        let splat = splat_to_textures(&fm, &g, &[1, 2], 4).unwrap();
        let blend = blend_multi_frame(&[&fm], &[&g], &[1, 2], 4).unwrap();
        assert_eq!(splat, blend);
    }

    #[test]
    fn blend_two_constants_gives_three_to_one_mix() {
        let g = layout();
        let a = FeatureMap::filled(4, 4, 1, 1.0);
        let b = FeatureMap::filled(4, 4, 1, 5.0);
        let blend = blend_multi_frame(&[&a, &b], &[&g, &g], &[1, 2], 4).unwrap();
        for t in blend.iter() {
            for i in 0..t.texel_count() {
                if t.is_filled(i) {
                    assert_eq!(t.texel(i), &[(3.0 * 1.0 + 5.0) / 4.0]);
                }
            }
        }
    }

    #[test]
    fn blend_rejects_mismatched_lists() {
        let g = layout();
        let a = FeatureMap::zeros(4, 4, 1);
        assert!(blend_multi_frame(&[&a], &[&g, &g], &[1, 2], 4).is_err());
        assert!(blend_multi_frame(&[], &[], &[1, 2], 4).is_err());
    }

    #[test]
    fn late_frame_fills_unseen_texel_exactly() {
        let g0 = GBufferFrame::background(4, 4);
        let mut g1 = GBufferFrame::background(4, 4);
        g1.set_pixel(5, 1, [0.3, 0.3], 1.0);
        let a = FeatureMap::filled(4, 4, 1, 2.0);
        let b = FeatureMap::filled(4, 4, 1, 0.7);
        let blend = blend_multi_frame(&[&a, &b], &[&g0, &g1], &[1], 4).unwrap();
        let t = blend.get(1).unwrap();
        assert_eq!(t.filled_count(), 1);
        assert_eq!(t.texel(texel_index([0.3, 0.3], 4)), &[0.7]);
    }

    #[test]
    fn warp_between_disjoint_objects_is_invalid() {
        let mut a = GBufferFrame::background(4, 4);
        let mut b = GBufferFrame::background(4, 4);
        a.set_pixel(0, 1, [0.5, 0.5], 1.0);
        b.set_pixel(0, 2, [0.5, 0.5], 1.0);
        let (_, valid) = warp_features(&FeatureMap::filled(4, 4, 1, 1.0), &a, &b, 8).unwrap();
        assert!(valid.iter().all(|v| !v));
    }

    #[test]
    fn resample_picks_center_source_pixel() {
        let g = layout();
        let r = resample_gbuffer(&g, 2, 2).unwrap();
        // target (0,0) center maps to source (1,1)
        assert_eq!(r.uvs()[0], g.uvs()[5]);
        assert_eq!(r.object_ids(), &[1, 0, 1, 2]);
        assert_eq!(resample_gbuffer(&g, 4, 4).unwrap(), g);
        assert!(resample_gbuffer(&g, 8, 4).is_err());
    }

    #[test]
    fn texel_index_clamps_upper_edge() {
        assert_eq!(texel_index([1.0, 1.0], 4), 15);
        assert_eq!(texel_index([0.0, 0.0], 4), 0);
        assert_eq!(texel_index([0.24, 0.26], 4), 4);
    }
}
