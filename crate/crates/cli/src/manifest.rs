use std::collections::BTreeMap;
use std::path::Path;

use genrender::RunConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const TOOL: &str = "genrender";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RasterizeManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub scene: String,
    pub scene_sha256: String,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub outputs: BTreeMap<String, String>,
    pub wall_time_s: f64,
}

/// Everything needed to repeat a render: the full config, the absolute
/// input directory and the digests the inputs must still have.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub seed: u64,
    pub config_hash: String,
    pub input_dir: String,
    pub inputs: BTreeMap<String, String>,
    pub weights_sha256: Option<String>,
    pub outputs: BTreeMap<String, String>,
    pub keyframes: Vec<Vec<usize>>,
    pub wall_time_s: f64,
}

impl RenderManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = crate::files::read(path)?;
        let m: RenderManifest = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if m.tool != TOOL || m.command != "render" {
            return Err(CliError::Config(format!(
                "{} is not a render manifest",
                path.display()
            )));
        }
        if m.config.hash() != m.config_hash {
            return Err(CliError::Config(format!(
                "{}: config hash does not match the recorded config",
                path.display()
            )));
        }
        Ok(m)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("manifest serializes");
    out.push(b'\n');
    out
}
