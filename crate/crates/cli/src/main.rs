//! `genrender`: rasterize animated scenes, render them with the multi-frame
//! sampler, and score frame consistency.

mod error;
mod files;
mod manifest;
mod metrics;
mod rasterize;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use genrender::noise::BackgroundMode;

use crate::error::{CliError, CliResult};
use crate::render::{Overrides, RenderArgs};

/// Environment variable holding the log filter (`error`..`trace`).
const LOG_ENV: &str = "GENRENDER_LOG";

#[derive(Parser)]
#[command(name = "genrender", version, about = "Generative rendering of animated untextured scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize a scene file into per-frame G-buffers.
    Rasterize {
        scene: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
    },
    /// Run the sampler over a directory of G-buffers.
    Render(RenderCmd),
    /// Frame-consistency scores over a directory of frames.
    Metrics {
        frames: PathBuf,
        /// Comma-separated frame intervals.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        intervals: Vec<usize>,
        /// Report path; defaults to `metrics.json` inside the frames directory.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in consistency checks.
    Selftest,
}

#[derive(Args)]
struct RenderCmd {
    /// Directory of `frame_NNNN.gbuf` files; taken from the manifest when omitted.
    gbuf_dir: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Repeat the run recorded in a previous render manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    keyframes: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Texels per side of each object's UV texture.
    #[arg(long)]
    texres: Option<usize>,
    /// `N` or `WxH`.
    #[arg(long, value_parser = parse_size)]
    latent_size: Option<(usize, usize)>,
    #[arg(long)]
    model: Option<String>,
    /// `fixed-image` or `per-frame`.
    #[arg(long)]
    background_noise: Option<BackgroundMode>,
    /// Write blended UV textures (one PNG per object, channel and step).
    #[arg(long)]
    dump_textures: bool,
    /// Abort as soon as two frames differ; for scenes with identical frames.
    #[arg(long)]
    check_static: bool,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    match s.split_once(['x', 'X']) {
        Some((w, h)) => Ok((parse(w)?, parse(h)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

fn selftest() -> CliResult<()> {
    let results = genrender::selftest::run();
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status} {}: {}", r.name, r.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::Numeric(format!("{failed} self-test check(s) failed")));
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Rasterize {
            scene,
            out,
            width,
            height,
        } => rasterize::run(&scene, &out, width, height),
        Command::Render(cmd) => render::run(&RenderArgs {
            gbuf_dir: cmd.gbuf_dir,
            config: cmd.config,
            manifest: cmd.manifest,
            out_dir: cmd.out,
            overrides: Overrides {
                seed: cmd.seed,
                alpha: cmd.alpha,
                keyframes: cmd.keyframes,
                steps: cmd.steps,
                texres: cmd.texres,
                latent_size: cmd.latent_size,
                model: cmd.model,
                background_noise: cmd.background_noise,
            },
            dump_textures: cmd.dump_textures,
            check_static: cmd.check_static,
        }),
        Command::Metrics {
            frames,
            intervals,
            out,
        } => metrics::run(&frames, &intervals, out.as_deref()),
        Command::Selftest => selftest(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
