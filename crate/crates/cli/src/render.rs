use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use genrender::noise::BackgroundMode;
use genrender::pipeline::{render_sequence_observed, RunObserver, StaticCollapseCheck};
use genrender::uv::TextureSet;
use genrender::visualize::{channel_to_gray8, latent_to_rgb8};
use genrender::{FeatureMap, GBufferFrame, RunConfig};
use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{CliError, CliResult};
use crate::files::{frame_name, numbered_files, read, sha256_hex, Staged};
use crate::manifest::{to_json, RenderManifest, TOOL};

/// Command-line values that replace fields of the run config.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub keyframes: Option<usize>,
    pub steps: Option<usize>,
    pub texres: Option<usize>,
    pub latent_size: Option<(usize, usize)>,
    pub model: Option<String>,
    pub background_noise: Option<BackgroundMode>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        self.seed.is_none()
            && self.alpha.is_none()
            && self.keyframes.is_none()
            && self.steps.is_none()
            && self.texres.is_none()
            && self.latent_size.is_none()
            && self.model.is_none()
            && self.background_noise.is_none()
    }

    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.keyframes {
            cfg.keyframes = v;
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.texres {
            cfg.texel_resolution = Some(v);
        }
        if let Some((w, h)) = self.latent_size {
            cfg.latent_width = w;
            cfg.latent_height = h;
        }
        if let Some(v) = &self.model {
            cfg.model.name = v.clone();
        }
        if let Some(v) = self.background_noise {
            cfg.background_noise = v;
        }
    }
}

pub struct RenderArgs {
    pub gbuf_dir: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub overrides: Overrides,
    pub dump_textures: bool,
    pub check_static: bool,
}

fn absolute(path: &Path) -> CliResult<PathBuf> {
    std::fs::canonicalize(path).map_err(|e| CliError::io(path, e))
}

/// Resolves the run config and input directory, either from a previous
/// manifest or from a config file plus overrides.
fn resolve(args: &RenderArgs) -> CliResult<(RunConfig, PathBuf, Option<RenderManifest>)> {
    if let Some(path) = &args.manifest {
        if args.config.is_some() || !args.overrides.is_empty() {
            return Err(CliError::Config(
                "--manifest cannot be combined with --config or overrides".into(),
            ));
        }
        let m = RenderManifest::load(path)?;
        let dir = args
            .gbuf_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(&m.input_dir));
        return Ok((m.config.clone(), dir, Some(m)));
    }
    let Some(dir) = args.gbuf_dir.clone() else {
        return Err(CliError::Config("a G-buffer directory or --manifest is required".into()));
    };
    let mut cfg = match &args.config {
        Some(path) => {
            let text = String::from_utf8(read(path)?)
                .map_err(|_| CliError::Config(format!("{} is not UTF-8", path.display())))?;
            let mut cfg = RunConfig::from_toml_str(&text, &path.display().to_string())?;
            if let Some(w) = &cfg.model.weights {
                let base = path.parent().unwrap_or(Path::new("."));
                let full = absolute(&base.join(w))?;
                cfg.model.weights = Some(full.display().to_string());
            }
            cfg
        }
        None => RunConfig::default(),
    };
    args.overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok((cfg, dir, None))
}

fn png(pixels: &[u8], width: usize, height: usize, color: ExtendedColorType) -> CliResult<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(pixels, width as u32, height as u32, color)
        .map_err(|e| CliError::Io(format!("png encoding: {e}")))?;
    Ok(out)
}

struct CliObserver<'a> {
    steps: usize,
    staged: &'a mut Staged,
    dump_textures: bool,
    collapse: Option<StaticCollapseCheck>,
    error: Option<CliError>,
}

impl CliObserver<'_> {
    fn dump(&mut self, step: usize, block: usize, textures: &TextureSet) -> CliResult<()> {
        let r = textures.resolution();
        for tex in textures.iter() {
            for c in 0..tex.channels() {
                let values: Vec<f64> = tex.data().iter().skip(c).step_by(tex.channels()).copied().collect();
                let bytes = png(&channel_to_gray8(&values), r, r, ExtendedColorType::L8)?;
                let name = format!(
                    "textures/step_{step:03}_block_{block}_object_{}_ch_{c}.png",
                    tex.object_id()
                );
                self.staged.write(&name, &bytes)?;
            }
        }
        Ok(())
    }
}

impl RunObserver for CliObserver<'_> {
    fn on_keyframes(&mut self, step: usize, keyframes: &[usize]) {
        log::debug!("step {step}: keyframes {keyframes:?}");
    }

    fn on_textures(&mut self, step: usize, block: usize, textures: &TextureSet) {
        if self.dump_textures && self.error.is_none() {
            if let Err(e) = self.dump(step, block, textures) {
                self.error = Some(e);
            }
        }
    }

    fn on_step(&mut self, step: usize, latents: &[FeatureMap]) -> genrender::Result<()> {
        log::info!("step {}/{}", step + 1, self.steps);
        if let Some(check) = &mut self.collapse {
            check.on_step(step, latents)?;
        }
        Ok(())
    }
}

pub fn run(args: &RenderArgs) -> CliResult<()> {
    let start = Instant::now();
    let (cfg, dir, previous) = resolve(args)?;
    let dir = absolute(&dir)?;

    let files = numbered_files(&dir, "frame", "gbuf")?;
    let mut inputs = BTreeMap::new();
    let mut gbufs = Vec::with_capacity(files.len());
    for path in &files {
        let bytes = read(path)?;
        let name = path.file_name().expect("numbered file").to_string_lossy().into_owned();
        inputs.insert(name, sha256_hex(&bytes));
        gbufs.push(GBufferFrame::decode(&bytes)?);
    }
    if let Some(m) = &previous {
        if m.inputs != inputs {
            return Err(CliError::Config(format!(
                "G-buffers in {} differ from those recorded in the manifest",
                dir.display()
            )));
        }
    }
    cfg.validate_for_frames(gbufs.len())?;

    let weights_sha256 = match &cfg.model.weights {
        Some(w) => {
            let desc = read(Path::new(w))?;
            Some(sha256_hex(&desc))
        }
        None => None,
    };
    if let (Some(m), Some(now)) = (&previous, &weights_sha256) {
        if m.weights_sha256.as_ref() != Some(now) {
            return Err(CliError::Config("model weights changed since the manifest was written".into()));
        }
    }
    let model = cfg.build_model(Path::new("."))?;

    let mut staged = Staged::new(&args.out_dir)?;
    let mut observer = CliObserver {
        steps: cfg.steps,
        staged: &mut staged,
        dump_textures: args.dump_textures,
        collapse: args.check_static.then(StaticCollapseCheck::default),
        error: None,
    };
    log::info!(
        "rendering {} frames, {} steps, model {}",
        gbufs.len(),
        cfg.steps,
        model.name()
    );
    let output = render_sequence_observed(&gbufs, &cfg, &model, &mut observer)?;
    if let Some(e) = observer.error.take() {
        return Err(e);
    }

    for (i, z) in output.latents.iter().enumerate() {
        staged.write(&frame_name("latent", i, "latf"), &genrender::latent_io::encode_latent(z))?;
        let rgb = latent_to_rgb8(z);
        let bytes = png(&rgb, z.width(), z.height(), ExtendedColorType::Rgb8)?;
        staged.write(&frame_name("frame", i, "png"), &bytes)?;
    }
    let manifest = RenderManifest {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "render".into(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        config: cfg,
        input_dir: dir.display().to_string(),
        inputs,
        weights_sha256,
        outputs: staged.digests().clone(),
        keyframes: output.keyframes,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    staged.write_unhashed("manifest.json", &to_json(&manifest))?;
    if let Some(m) = &previous {
        if m.outputs != manifest.outputs {
            log::warn!("outputs differ from the manifest being replayed");
        }
    }
    let out = staged.commit()?;
    println!(
        "rendered {} frames to {} in {:.2}s",
        output.latents.len(),
        out.display(),
        manifest.wall_time_s
    );
    Ok(())
}
