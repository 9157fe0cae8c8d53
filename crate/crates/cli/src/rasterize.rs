use std::path::Path;
use std::time::Instant;

use genrender::scene::{load_scene, rasterize_sequence};

use crate::error::CliResult;
use crate::files::{frame_name, read, sha256_hex, Staged};
use crate::manifest::{to_json, RasterizeManifest, TOOL};

pub fn run(scene_path: &Path, out_dir: &Path, width: usize, height: usize) -> CliResult<()> {
    let start = Instant::now();
    let scene_bytes = read(scene_path)?;
    let scene = load_scene(scene_path)?;
    let mut staged = Staged::new(out_dir)?;
    log::info!(
        "rasterizing {} frames at {width}x{height}",
        scene.frame_count()
    );
    let gbufs = rasterize_sequence(&scene, width, height)?;
    for (i, g) in gbufs.iter().enumerate() {
        staged.write(&frame_name("frame", i, "gbuf"), &g.encode())?;
    }
    let manifest = RasterizeManifest {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "rasterize".into(),
        scene: scene_path.display().to_string(),
        scene_sha256: sha256_hex(&scene_bytes),
        width,
        height,
        frames: gbufs.len(),
        outputs: staged.digests().clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    staged.write_unhashed("manifest.json", &to_json(&manifest))?;
    let dir = staged.commit()?;
    println!("wrote {} G-buffers to {}", gbufs.len(), dir.display());
    Ok(())
}
