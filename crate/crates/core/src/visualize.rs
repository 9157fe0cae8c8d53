//! Direct latent-to-RGB visualization (no decoder).

use crate::feature::FeatureMap;

/// Linear map from four latent channels to RGB, the common approximation
/// for Stable-Diffusion-style latents.
const LATENT_RGB: [[f64; 3]; 4] = [
    [0.298, 0.207, 0.208],
    [0.187, 0.286, 0.173],
    [-0.158, 0.189, 0.264],
    [-0.184, -0.271, -0.473],
];

/// Interleaved 8-bit RGB, row-major. Four-channel latents use the linear
/// latent-to-RGB map; other widths show their first three channels
/// (repeating the last when fewer), mapping `[-1, 1]` to `[0, 255]`.
pub fn latent_to_rgb8(fm: &FeatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(fm.pixel_count() * 3);
    for i in 0..fm.pixel_count() {
        let px = fm.pixel(i);
        let rgb: [f64; 3] = if px.len() == 4 {
            std::array::from_fn(|k| (0..4).map(|c| px[c] * LATENT_RGB[c][k]).sum())
        } else {
            std::array::from_fn(|k| px[k.min(px.len() - 1)])
        };
        out.extend(rgb.iter().map(|v| ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8));
    }
    out
}

/// Grayscale image of one channel, min-max scaled over the given values.
pub fn channel_to_gray8(values: &[f64]) -> Vec<u8> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    values
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round() as u8
            } else {
                128
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_latent_is_mid_gray() {
        let rgb = latent_to_rgb8(&FeatureMap::zeros(2, 1, 4));
        assert_eq!(rgb, vec![128; 6]);
    }

    #[test]
    fn narrow_latents_repeat_last_channel() {
        let rgb = latent_to_rgb8(&FeatureMap::filled(1, 1, 1, 1.0));
        assert_eq!(rgb, vec![255; 3]);
    }

    #[test]
    fn gray_scales_to_full_range() {
        assert_eq!(channel_to_gray8(&[1.0, 2.0, 3.0]), vec![0, 128, 255]);
        assert_eq!(channel_to_gray8(&[2.0, 2.0]), vec![128, 128]);
    }
}
