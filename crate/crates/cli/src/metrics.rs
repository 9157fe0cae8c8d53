use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use genrender::latent_io::decode_latent;
use genrender::metrics::{consistency_report, FrameEmbedder};
use genrender::FeatureMap;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::files::{numbered_files, read};
use crate::manifest::to_json;

#[derive(Debug, Serialize)]
struct Report {
    frames: usize,
    embedder: String,
    frame_consistency: BTreeMap<String, f64>,
    prompt_fidelity: &'static str,
}

fn load_png(path: &Path) -> CliResult<FeatureMap> {
    let img = image::open(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
    Ok(FeatureMap::from_vec(w, h, 3, data)?)
}

/// Latent blobs when the directory has any, otherwise PNG frames.
fn load_frames(dir: &Path) -> CliResult<Vec<FeatureMap>> {
    let latents = numbered_files(dir, "latent", "latf")?;
    if !latents.is_empty() {
        return latents.iter().map(|p| Ok(decode_latent(&read(p)?)?)).collect();
    }
    numbered_files(dir, "frame", "png")?.iter().map(|p| load_png(p)).collect()
}

pub fn run(frames_dir: &Path, intervals: &[usize], out: Option<&Path>) -> CliResult<()> {
    let frames = load_frames(frames_dir)?;
    if frames.is_empty() {
        return Err(CliError::Io(format!("no frames found in {}", frames_dir.display())));
    }
    let embedder = FrameEmbedder::default();
    let scores = consistency_report(&frames, embedder, intervals)?;
    let FrameEmbedder::GridStats { grid } = embedder;
    let report = Report {
        frames: frames.len(),
        embedder: format!("{}-{grid}", embedder.name()),
        frame_consistency: scores.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        prompt_fidelity: "n/a",
    };
    let json = to_json(&report);
    std::io::stdout()
        .write_all(&json)
        .map_err(|e| CliError::Io(format!("stdout: {e}")))?;

    let out = out.map(Path::to_path_buf).unwrap_or_else(|| frames_dir.join("metrics.json"));
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&parent).map_err(|e| CliError::io(&parent, e))?;
    tmp.write_all(&json).map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.persist(&out).map_err(|e| CliError::io(&out, e.error))?;
    Ok(())
}
