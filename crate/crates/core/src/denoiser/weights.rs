//! Flat little-endian f32 weight blobs described by a JSON descriptor.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{init_toy_model, Arch, Conv2d, DenoiserModel, ModelConfig};
use crate::error::{Error, Result};

pub const WEIGHTS_FORMAT: &str = "genrender-weights";
pub const WEIGHTS_VERSION: u32 = 1;
const MAX_ELEMENTS: usize = 1 << 28;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob in f32 elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightDescriptor {
    pub format: String,
    pub version: u32,
    pub latent_channels: usize,
    pub model: ModelConfig,
    /// Blob file name, relative to the descriptor.
    pub blob: String,
    pub tensors: Vec<TensorEntry>,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        out.extend(m.row(r).iter());
    }
    out
}

/// Named tensors in a fixed order, values row-major.
fn tensors(model: &DenoiserModel) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    let conv = |prefix: &str, c: &Conv2d| {
        vec![
            (
                format!("{prefix}.weight"),
                vec![c.out_channels, c.in_channels, 3, 3],
                c.weight.clone(),
            ),
            (format!("{prefix}.bias"), vec![c.out_channels], c.bias.clone()),
        ]
    };
    let mat = |name: String, m: &DMatrix<f64>| (name, vec![m.nrows(), m.ncols()], matrix_rows(m));
    match &model.arch {
        Arch::Identity | Arch::Blur => vec![],
        Arch::Linear(c) => conv("conv", c),
        Arch::Toy(net) => {
            let mut out = conv("conv_in", &net.conv_in);
            out.push(mat("prompt_proj".into(), &net.prompt_proj));
            for (l, b) in net.blocks.iter().enumerate() {
                out.push(mat(format!("blocks.{l}.w_q"), &b.w_q));
                out.push(mat(format!("blocks.{l}.w_k"), &b.w_k));
                out.push(mat(format!("blocks.{l}.w_v"), &b.w_v));
                out.push(mat(format!("blocks.{l}.w_o"), &b.w_o));
            }
            out.extend(conv("conv_out", &net.conv_out));
            out
        }
    }
}

pub fn encode_weights(model: &DenoiserModel, blob_name: &str) -> (WeightDescriptor, Vec<u8>) {
    let mut blob = Vec::new();
    let mut entries = Vec::new();
    let mut offset = 0;
    for (name, shape, values) in tensors(model) {
        entries.push(TensorEntry {
            name,
            shape,
            offset,
        });
        offset += values.len();
        for v in values {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut config = model.config.clone();
    config.weights = None;
    (
        WeightDescriptor {
            format: WEIGHTS_FORMAT.into(),
            version: WEIGHTS_VERSION,
            latent_channels: model.latent_channels,
            model: config,
            blob: blob_name.into(),
            tensors: entries,
        },
        blob,
    )
}

fn fmt_err(message: impl Into<String>) -> Error {
    Error::format("weights", message)
}

fn read_tensor(desc: &WeightDescriptor, blob: &[u8], name: &str, shape: &[usize]) -> Result<Vec<f64>> {
    let mut hits = desc.tensors.iter().filter(|t| t.name == name);
    let entry = hits.next().ok_or_else(|| fmt_err(format!("missing tensor {name}")))?;
    if hits.next().is_some() {
        return Err(fmt_err(format!("duplicate tensor {name}")));
    }
    if entry.shape != shape {
        return Err(fmt_err(format!(
            "tensor {name} has shape {:?}, expected {shape:?}",
            entry.shape
        )));
    }
    let len: usize = shape.iter().product();
    let start = entry.offset.checked_mul(4).ok_or_else(|| fmt_err("offset overflow"))?;
    let end = start
        .checked_add(len * 4)
        .filter(|&e| e <= blob.len())
        .ok_or_else(|| fmt_err(format!("tensor {name} runs past the blob")))?;
    let values: Vec<f64> = blob[start..end]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("tensor {name} has non-finite values")));
    }
    Ok(values)
}

/// Element count of the biggest tensor the model declares, so oversized
/// descriptors are rejected before anything is allocated.
fn largest_tensor(model: &ModelConfig, latent_channels: usize) -> Option<usize> {
    let conv = |i: usize, o: usize| i.checked_mul(o)?.checked_mul(9);
    match model.name.as_str() {
        "linear" => conv(latent_channels + 1, latent_channels),
        "toy" => [
            conv(latent_channels + 1, model.hidden)?,
            model.embed_dim.checked_mul(model.hidden)?,
            model.hidden.checked_mul(model.attn_dim)?,
            conv(model.hidden, latent_channels)?,
        ]
        .into_iter()
        .max(),
        _ => Some(0),
    }
}

/// Rebuilds a model from a descriptor and its blob.
pub fn decode_weights(desc: &WeightDescriptor, blob: &[u8]) -> Result<DenoiserModel> {
    if desc.format != WEIGHTS_FORMAT || desc.version != WEIGHTS_VERSION {
        return Err(fmt_err(format!(
            "unsupported weights format {:?} v{}",
            desc.format, desc.version
        )));
    }
    if !blob.len().is_multiple_of(4) || blob.len() / 4 > MAX_ELEMENTS {
        return Err(fmt_err("blob length is not a whole number of f32 values"));
    }
    let too_big = desc.latent_channels > 4096
        || desc.model.hidden > 4096
        || desc.model.attn_dim > 4096
        || desc.model.embed_dim > 4096
        || desc.model.levels > 16;
    if too_big {
        return Err(fmt_err("model dimensions out of range"));
    }
    if largest_tensor(&desc.model, desc.latent_channels).is_none_or(|n| n > blob.len() / 4) {
        return Err(fmt_err("blob is too short for the declared model"));
    }
    let mut model = init_toy_model(0, &desc.model, desc.latent_channels)?;
    let expected = tensors(&model);
    if desc.tensors.len() != expected.len() {
        return Err(fmt_err(format!(
            "{} tensors listed, model needs {}",
            desc.tensors.len(),
            expected.len()
        )));
    }
    let mut loaded = expected
        .iter()
        .map(|(name, shape, _)| read_tensor(desc, blob, name, shape))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    let fill_conv = |c: &mut Conv2d, it: &mut std::vec::IntoIter<Vec<f64>>| {
        c.weight = it.next().expect("weight");
        c.bias = it.next().expect("bias");
    };
    let next_mat = |it: &mut std::vec::IntoIter<Vec<f64>>, r: usize, c: usize| {
        DMatrix::from_row_slice(r, c, &it.next().expect("matrix"))
    };
    match &mut model.arch {
        Arch::Identity | Arch::Blur => {}
        Arch::Linear(c) => fill_conv(c, &mut loaded),
        Arch::Toy(net) => {
            fill_conv(&mut net.conv_in, &mut loaded);
            let (r, c) = net.prompt_proj.shape();
            net.prompt_proj = next_mat(&mut loaded, r, c);
            for b in &mut net.blocks {
                let (ci, d) = b.w_q.shape();
                b.w_q = next_mat(&mut loaded, ci, d);
                b.w_k = next_mat(&mut loaded, ci, d);
                b.w_v = next_mat(&mut loaded, ci, d);
                b.w_o = next_mat(&mut loaded, d, ci);
            }
            fill_conv(&mut net.conv_out, &mut loaded);
        }
    }
    Ok(model)
}

/// Parses descriptor JSON and blob bytes.
pub fn decode_weights_bytes(descriptor_json: &[u8], blob: &[u8]) -> Result<DenoiserModel> {
    let desc: WeightDescriptor = serde_json::from_slice(descriptor_json)
        .map_err(|e| fmt_err(format!("descriptor: {e}")))?;
    decode_weights(&desc, blob)
}

/// Writes `<path>` (descriptor) and the blob next to it.
pub fn save_weights(model: &DenoiserModel, descriptor_path: &Path) -> Result<()> {
    let blob_name = descriptor_path
        .with_extension("bin")
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| Error::Config("weights path needs a file name".into()))?;
    let (desc, blob) = encode_weights(model, &blob_name);
    let json = serde_json::to_vec_pretty(&desc).expect("descriptor serializes");
    std::fs::write(descriptor_path, json).map_err(|e| Error::io(descriptor_path, e))?;
    let blob_path = blob_path(descriptor_path, &blob_name);
    std::fs::write(&blob_path, blob).map_err(|e| Error::io(&blob_path, e))?;
    Ok(())
}

fn blob_path(descriptor_path: &Path, blob: &str) -> PathBuf {
    descriptor_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(blob)
}

pub fn load_weights(descriptor_path: &Path) -> Result<DenoiserModel> {
    let json = std::fs::read(descriptor_path).map_err(|e| Error::io(descriptor_path, e))?;
    let desc: WeightDescriptor =
        serde_json::from_slice(&json).map_err(|e| fmt_err(format!("descriptor: {e}")))?;
    let path = blob_path(descriptor_path, &desc.blob);
    let blob = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    decode_weights(&desc, &blob)
}
