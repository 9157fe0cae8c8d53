//! Multi-head scaled dot-product attention and the cross-frame variants:
//! extended attention over a batch of frames, key/value injection from
//! keyframes, and post-attention fusion with UV-warped features.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::feature::FeatureMap;
use crate::rng::standard_normal;

/// `n_tokens × channels` matrix of per-position features.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenFeatures(pub DMatrix<f64>);

impl TokenFeatures {
    pub fn from_rows(n_tokens: usize, channels: usize, data: &[f64]) -> Self {
        Self(DMatrix::from_row_slice(n_tokens, channels, data))
    }

    /// Flattens a feature map row-major, one token per pixel.
    pub fn from_feature_map(fm: &FeatureMap) -> Self {
        Self::from_rows(fm.pixel_count(), fm.channels(), fm.data())
    }

    pub fn to_feature_map(&self, width: usize, height: usize) -> Result<FeatureMap> {
        if width * height != self.n_tokens() {
            return Err(Error::Shape(format!(
                "{} tokens cannot form a {width}x{height} map",
                self.n_tokens()
            )));
        }
        let c = self.channels();
        let mut data = Vec::with_capacity(self.0.len());
        for r in 0..self.n_tokens() {
            data.extend(self.0.row(r).iter());
        }
        FeatureMap::from_vec(width, height, c, data)
    }

    pub fn n_tokens(&self) -> usize {
        self.0.nrows()
    }

    pub fn channels(&self) -> usize {
        self.0.ncols()
    }

    pub fn max_abs_diff(&self, other: &TokenFeatures) -> f64 {
        assert_eq!(self.0.shape(), other.0.shape());
        (&self.0 - &other.0).amax()
    }
}

/// Projection weights of one attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    /// `C_in × d`
    pub w_q: DMatrix<f64>,
    pub w_k: DMatrix<f64>,
    pub w_v: DMatrix<f64>,
    /// `d × C_in`
    pub w_o: DMatrix<f64>,
    pub heads: usize,
}

impl AttentionWeights {
    pub fn new(
        w_q: DMatrix<f64>,
        w_k: DMatrix<f64>,
        w_v: DMatrix<f64>,
        w_o: DMatrix<f64>,
        heads: usize,
    ) -> Result<Self> {
        let w = Self {
            w_q,
            w_k,
            w_v,
            w_o,
            heads,
        };
        w.validate()?;
        Ok(w)
    }

    /// Gaussian weights scaled by `1/sqrt(fan_in)`, keyed on `(seed, tag)`.
    pub fn seeded(seed: u64, tag: u64, channels: usize, dim: usize, heads: usize) -> Result<Self> {
        let gen = |which: u64, rows: usize, cols: usize| {
            let scale = 1.0 / (rows as f64).sqrt();
            DMatrix::from_fn(rows, cols, |r, c| {
                scale * standard_normal(&[seed, tag, which, r as u64, c as u64])
            })
        };
        Self::new(
            gen(0, channels, dim),
            gen(1, channels, dim),
            gen(2, channels, dim),
            gen(3, dim, channels),
            heads,
        )
    }

    pub fn channels(&self) -> usize {
        self.w_q.nrows()
    }

    pub fn dim(&self) -> usize {
        self.w_q.ncols()
    }

    pub fn head_dim(&self) -> usize {
        self.dim() / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let (c, d) = self.w_q.shape();
        if self.w_k.shape() != (c, d) || self.w_v.shape() != (c, d) || self.w_o.shape() != (d, c) {
            return Err(Error::Shape("attention weight shapes disagree".into()));
        }
        if self.heads == 0 || d == 0 || d % self.heads != 0 {
            return Err(Error::Shape(format!(
                "attention dim {d} not divisible into {} heads",
                self.heads
            )));
        }
        let finite = [&self.w_q, &self.w_k, &self.w_v, &self.w_o]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Numeric("non-finite attention weight".into()));
        }
        Ok(())
    }
}

fn stack(sources: &[&TokenFeatures]) -> DMatrix<f64> {
    let rows: usize = sources.iter().map(|s| s.n_tokens()).sum();
    let cols = sources[0].channels();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for s in sources {
        out.rows_mut(r, s.n_tokens()).copy_from(&s.0);
        r += s.n_tokens();
    }
    out
}

/// In-place row softmax with max subtraction.
fn softmax_rows(scores: &mut DMatrix<f64>) {
    for mut row in scores.row_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row /= sum;
    }
}

fn check_inputs(queries: &TokenFeatures, kv: &[&TokenFeatures], w: &AttentionWeights) -> Result<()> {
    w.validate()?;
    if kv.is_empty() {
        return Err(Error::Shape("attention needs at least one key/value source".into()));
    }
    let c = w.channels();
    if queries.channels() != c || kv.iter().any(|s| s.channels() != c) {
        return Err(Error::Shape(format!(
            "token width does not match attention input width {c}"
        )));
    }
    Ok(())
}

/// Softmax attention matrix of one head: queries from `queries`, keys
/// from the concatenation of `kv` sources.
pub fn attention_probabilities(
    queries: &TokenFeatures,
    kv: &[&TokenFeatures],
    w: &AttentionWeights,
    head: usize,
) -> Result<DMatrix<f64>> {
    check_inputs(queries, kv, w)?;
    if head >= w.heads {
        return Err(Error::Shape(format!("head {head} of {}", w.heads)));
    }
    let hd = w.head_dim();
    let q = &queries.0 * w.w_q.columns(head * hd, hd);
    let k = stack(kv) * w.w_k.columns(head * hd, hd);
    let mut scores = q * k.transpose() / (hd as f64).sqrt();
    softmax_rows(&mut scores);
    Ok(scores)
}

/// Attention with queries from `queries` and keys/values projected from
/// the row-concatenation of `kv`.
pub fn attend(
    queries: &TokenFeatures,
    kv: &[&TokenFeatures],
    w: &AttentionWeights,
) -> Result<TokenFeatures> {
    check_inputs(queries, kv, w)?;
    let hd = w.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    let q = &queries.0 * &w.w_q;
    let kv_stack = stack(kv);
    let k = &kv_stack * &w.w_k;
    let v = &kv_stack * &w.w_v;
    let mut heads = DMatrix::zeros(queries.n_tokens(), w.dim());
    for h in 0..w.heads {
        let cols = h * hd;
        let mut scores = q.columns(cols, hd) * k.columns(cols, hd).transpose() * scale;
        softmax_rows(&mut scores);
        heads.columns_mut(cols, hd).copy_from(&(scores * v.columns(cols, hd)));
    }
    Ok(TokenFeatures(heads * &w.w_o))
}

pub fn self_attention(f: &TokenFeatures, w: &AttentionWeights) -> Result<TokenFeatures> {
    attend(f, &[f], w)
}

/// Every frame's queries attend to the keys/values of all frames.
pub fn extended_attention(
    frames: &[TokenFeatures],
    w: &AttentionWeights,
) -> Result<Vec<TokenFeatures>> {
    if frames.is_empty() {
        return Err(Error::Shape("extended attention over zero frames".into()));
    }
    let shape = frames[0].0.shape();
    if frames.iter().any(|f| f.0.shape() != shape) {
        return Err(Error::Shape("extended attention frames differ in shape".into()));
    }
    let all: Vec<&TokenFeatures> = frames.iter().collect();
    frames.iter().map(|f| attend(f, &all, w)).collect()
}

/// Queries from the current frame, keys/values from the current frame
/// followed by every keyframe.
pub fn pre_attention_inject(
    f: &TokenFeatures,
    keyframes: &[TokenFeatures],
    w: &AttentionWeights,
) -> Result<TokenFeatures> {
    let mut kv: Vec<&TokenFeatures> = Vec::with_capacity(keyframes.len() + 1);
    kv.push(f);
    kv.extend(keyframes.iter());
    attend(f, &kv, w)
}

/// `alpha · warped + (1 − alpha) · attended` on valid tokens; invalid
/// tokens keep the attention output.
pub fn post_attention_fuse(
    attended: &TokenFeatures,
    warped: &TokenFeatures,
    validity: &[bool],
    alpha: f64,
) -> Result<TokenFeatures> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    if attended.0.shape() != warped.0.shape() || validity.len() != attended.n_tokens() {
        return Err(Error::Shape("fusion inputs disagree in shape".into()));
    }
    let mut out = attended.0.clone();
    for (r, _) in validity.iter().enumerate().filter(|(_, &v)| v) {
        if alpha == 1.0 {
            out.row_mut(r).copy_from(&warped.0.row(r));
        } else if alpha != 0.0 {
            let fused = warped.0.row(r) * alpha + attended.0.row(r) * (1.0 - alpha);
            out.row_mut(r).copy_from(&fused);
        }
    }
    Ok(TokenFeatures(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tokens(n: usize, c: usize, seed: u64) -> TokenFeatures {
        TokenFeatures(DMatrix::from_fn(n, c, |r, k| {
            standard_normal(&[seed, r as u64, k as u64])
        }))
    }

    #[test]
    fn single_token_returns_value_projection() {
        let c = 3;
        let w = AttentionWeights::new(
            DMatrix::from_element(c, c, 0.3),
            DMatrix::from_element(c, c, -0.2),
            DMatrix::from_fn(c, c, |r, k| (r * 3 + k) as f64 * 0.1),
            DMatrix::identity(c, c),
            1,
        )
        .unwrap();
        let f = TokenFeatures::from_rows(1, c, &[1.0, -2.0, 0.5]);
        let out = self_attention(&f, &w).unwrap();
        let expected = &f.0 * &w.w_v;
        assert!((out.0 - expected).amax() < 1e-15);
    }

    #[test]
    fn uniform_tokens_give_uniform_output() {
        let w = AttentionWeights::seeded(1, 0, 4, 8, 2).unwrap();
        let f = TokenFeatures(DMatrix::from_fn(5, 4, |_, k| k as f64 - 1.5));
        let out = self_attention(&f, &w).unwrap();
        for r in 1..5 {
            assert!((out.0.row(r) - out.0.row(0)).amax() < 1e-14);
        }
    }

    #[test]
    fn probability_rows_sum_to_one() {
        let w = AttentionWeights::seeded(2, 0, 4, 8, 2).unwrap();
        let f = tokens(6, 4, 3);
        let kf = tokens(4, 4, 4);
        for h in 0..2 {
            let p = attention_probabilities(&f, &[&f, &kf], &w, h).unwrap();
            assert_eq!(p.shape(), (6, 10));
            for row in p.row_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fusion_extremes_and_midpoint() {
        let a = TokenFeatures(DMatrix::from_element(3, 2, 2.0));
        let b = TokenFeatures(DMatrix::from_element(3, 2, 4.0));
        let all = [true; 3];
        assert_eq!(post_attention_fuse(&a, &b, &all, 0.0).unwrap(), a);
        assert_eq!(post_attention_fuse(&a, &b, &all, 1.0).unwrap(), b);
        let mid = post_attention_fuse(&a, &b, &all, 0.5).unwrap();
        assert!(mid.0.iter().all(|&v| v == 3.0));
        let partial = post_attention_fuse(&a, &b, &[true, false, true], 1.0).unwrap();
        assert_eq!(partial.0.row(1), a.0.row(1));
        assert_eq!(partial.0.row(2), b.0.row(2));
        assert!(post_attention_fuse(&a, &b, &all, 1.5).is_err());
        assert!(post_attention_fuse(&a, &b, &[true], 0.5).is_err());
    }

    #[test]
    fn empty_keyframe_list_reduces_to_self_attention() {
        let w = AttentionWeights::seeded(5, 0, 4, 4, 1).unwrap();
        let f = tokens(7, 4, 9);
        assert_eq!(
            pre_attention_inject(&f, &[], &w).unwrap(),
            self_attention(&f, &w).unwrap()
        );
    }

    #[test]
    fn shape_errors() {
        let w = AttentionWeights::seeded(5, 0, 4, 4, 1).unwrap();
        assert!(self_attention(&tokens(3, 5, 1), &w).is_err());
        assert!(extended_attention(&[], &w).is_err());
        assert!(extended_attention(&[tokens(3, 4, 1), tokens(2, 4, 1)], &w).is_err());
        assert!(AttentionWeights::seeded(1, 0, 4, 6, 4).is_err());
    }

    #[test]
    fn feature_map_round_trip() {
        let fm = FeatureMap::from_fn(3, 2, 2, |x, y, c| (x + 10 * y + 100 * c) as f64);
        let t = TokenFeatures::from_feature_map(&fm);
        assert_eq!(t.0[(4, 1)], fm.get(1, 1, 1));
        assert_eq!(t.to_feature_map(3, 2).unwrap(), fm);
    }
}
