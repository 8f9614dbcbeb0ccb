//! Argument definitions and the subcommand implementations.

use std::fs;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{ArgGroup, Args, Parser, Subcommand};
use dst_core::imgio::{load_image, save_image, CropRect, ImageFormat};
use dst_core::lut::{apply_lut, read_cube, DEFAULT_LUT_SIZE, MAX_LUT_SIZE};
use dst_core::pipeline::{transfer_optics, transfer_style, ChannelOrders, ClampPolicy, TransferConfig, TransferRecipe};
use dst_core::RgbImage;

use crate::jobs;
use crate::server::{self, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "dst", version, about = "Photorealistic style transfer by decoupled moment and spectrum matching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Give a source image the color statistics of a target.
    Transfer(TransferArgs),
    /// Give a source the diffusion separating two views of a target.
    Optics(OpticsArgs),
    /// Apply a .cube LUT to an image.
    ApplyLut(ApplyLutArgs),
    /// Apply a saved recipe to every file matching a pattern.
    Batch(BatchArgs),
    /// Bake a saved recipe into a .cube LUT.
    BakeLut(BakeLutArgs),
    /// Run the local HTTP service.
    Serve(ServeArgs),
}

fn lut_size(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if !(2..=MAX_LUT_SIZE).contains(&n) {
        return Err(format!("must be in 2..={MAX_LUT_SIZE}"));
    }
    Ok(n)
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("outputs").args(["out", "emit_lut", "emit_recipe"]).multiple(true).required(true)))]
pub struct TransferArgs {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub tgt: PathBuf,
    /// Source region used for statistics.
    #[arg(long, value_name = "X,Y,W,H")]
    pub src_crop: Option<CropRect>,
    /// Target region used for statistics.
    #[arg(long, value_name = "X,Y,W,H")]
    pub tgt_crop: Option<CropRect>,
    /// Moments matched on intensity (orders 1..=N).
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(0..=4))]
    pub orders_i: u8,
    /// Moments matched on both chroma channels.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(0..=4))]
    pub orders_chroma: u8,
    /// Also match the target's luminance power spectrum.
    #[arg(long)]
    pub spectral: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub depth: DepthArg,
    #[arg(long, value_name = "FILE")]
    pub emit_lut: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_LUT_SIZE, value_parser = lut_size)]
    pub lut_size: usize,
    /// Clamp encoded output to [0, 1].
    #[arg(long, overrides_with = "no_clamp")]
    pub clamp: bool,
    /// Keep out-of-range float output (the default).
    #[arg(long, overrides_with = "clamp")]
    pub no_clamp: bool,
    #[arg(long, value_name = "FILE")]
    pub emit_recipe: Option<PathBuf>,
}

impl TransferArgs {
    pub fn config(&self) -> TransferConfig {
        TransferConfig {
            orders: ChannelOrders::upto(self.orders_i, self.orders_chroma),
            src_crop: self.src_crop,
            tgt_crop: self.tgt_crop,
            spectral: self.spectral,
            clamp: if self.clamp { ClampPolicy::Clamp } else { ClampPolicy::Preserve },
        }
    }
}

#[derive(Debug, Args)]
pub struct DepthArg {
    /// Bit depth of PNG and PPM outputs.
    #[arg(long, default_value_t = 16, value_parser = PossibleValuesParser::new(["8", "16"]).map(|s| s.parse::<u8>().unwrap()))]
    pub depth: u8,
}

#[derive(Debug, Args)]
pub struct OpticsArgs {
    #[arg(long)]
    pub src: PathBuf,
    /// Reference view of the target.
    #[arg(long)]
    pub t: PathBuf,
    /// Diffused view of the target, same size as the reference.
    #[arg(long)]
    pub tprime: PathBuf,
    /// Region of the target views used to fit the kernel.
    #[arg(long, value_name = "X,Y,W,H")]
    pub diff_crop: Option<CropRect>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub depth: DepthArg,
    /// Write the fitted kernel as JSON.
    #[arg(long, value_name = "FILE")]
    pub emit_kernel: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ApplyLutArgs {
    #[arg(long)]
    pub lut: PathBuf,
    #[arg(long = "in", value_name = "IN")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub depth: DepthArg,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[arg(long)]
    pub recipe: PathBuf,
    /// File pattern, e.g. "frames/*.png".
    #[arg(long)]
    pub glob: String,
    /// Outputs keep their file names and land here.
    #[arg(long, default_value = "graded")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub depth: DepthArg,
}

#[derive(Debug, Args)]
pub struct BakeLutArgs {
    #[arg(long)]
    pub recipe: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_LUT_SIZE, value_parser = lut_size)]
    pub lut_size: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub bind: IpAddr,
    #[arg(long, env = "DST_PORT", default_value_t = 8787)]
    pub port: u16,
    /// Concurrent pixel jobs; 0 means one per logical core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Request body cap in MiB.
    #[arg(long, default_value_t = 64)]
    pub max_body_mib: usize,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Transfer(a) => transfer(&a),
        Command::Optics(a) => optics(&a),
        Command::ApplyLut(a) => apply(&a),
        Command::Batch(a) => batch(&a),
        Command::BakeLut(a) => bake(&a),
        Command::Serve(a) => serve(&a),
    }
}

/// One-line message for an error chain; core errors already print their
/// own causes, so the walk stops at the first one.
pub fn report(err: &anyhow::Error) -> String {
    let mut parts = Vec::new();
    for cause in err.chain() {
        parts.push(cause.to_string());
        if cause.is::<dst_core::Error>() {
            break;
        }
    }
    parts.join(": ")
}

fn read_input(path: &Path) -> Result<RgbImage> {
    load_image(path).with_context(|| format!("reading {}", path.display()))
}

fn output_format(path: &Path, depth: &DepthArg) -> Result<ImageFormat> {
    let f = ImageFormat::from_path(path).with_context(|| format!("output {}", path.display()))?;
    Ok(f.with_depth(depth.depth))
}

fn write_image(img: &RgbImage, path: &Path, format: ImageFormat) -> Result<()> {
    save_image(img, path, format).with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn transfer(a: &TransferArgs) -> Result<()> {
    let format = a.out.as_deref().map(|p| output_format(p, &a.depth)).transpose()?;
    let src = read_input(&a.src)?;
    let tgt = read_input(&a.tgt)?;
    let (out, recipe) = transfer_style(&src, &tgt, &a.config()).context("style transfer")?;
    if let (Some(path), Some(format)) = (&a.out, format) {
        write_image(&out, path, format)?;
    }
    if let Some(path) = &a.emit_lut {
        let cube = jobs::cube_text(&recipe, a.lut_size).context("baking LUT")?;
        write_text(path, &cube)?;
    }
    if let Some(path) = &a.emit_recipe {
        write_text(path, &recipe.to_json())?;
    }
    Ok(())
}

fn optics(a: &OpticsArgs) -> Result<()> {
    let format = output_format(&a.out, &a.depth)?;
    let src = read_input(&a.src)?;
    let t = read_input(&a.t)?;
    let tprime = read_input(&a.tprime)?;
    let (out, kernel) = transfer_optics(&src, &t, &tprime, a.diff_crop).context("optics transfer")?;
    write_image(&out, &a.out, format)?;
    if let Some(path) = &a.emit_kernel {
        write_text(path, &serde_json::to_string_pretty(&kernel)?)?;
    }
    Ok(())
}

fn apply(a: &ApplyLutArgs) -> Result<()> {
    let format = output_format(&a.out, &a.depth)?;
    let text = fs::read_to_string(&a.lut).with_context(|| format!("reading {}", a.lut.display()))?;
    let lut = read_cube(&text).with_context(|| format!("parsing {}", a.lut.display()))?;
    let img = read_input(&a.input)?;
    write_image(&apply_lut(&img, &lut), &a.out, format)
}

fn read_recipe(path: &Path) -> Result<TransferRecipe> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    TransferRecipe::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn batch(a: &BatchArgs) -> Result<()> {
    let recipe = read_recipe(&a.recipe)?;
    let inputs = glob::glob(&a.glob)
        .with_context(|| format!("pattern `{}`", a.glob))?
        .collect::<Result<Vec<_>, _>>()?;
    let inputs: Vec<PathBuf> = inputs.into_iter().filter(|p| p.is_file()).collect();
    if inputs.is_empty() {
        bail!("pattern `{}` matched no files", a.glob);
    }
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut failed = 0;
    for input in &inputs {
        if let Err(e) = batch_one(&recipe, input, a) {
            log::error!("{}", report(&e));
            failed += 1;
        }
    }
    if failed > 0 {
        bail!("{failed} of {} files failed", inputs.len());
    }
    log::info!("graded {} files into {}", inputs.len(), a.out_dir.display());
    Ok(())
}

fn batch_one(recipe: &TransferRecipe, input: &Path, a: &BatchArgs) -> Result<()> {
    let name = input.file_name().context("input without a file name")?;
    let out = a.out_dir.join(name);
    if fs::canonicalize(&out).ok() == fs::canonicalize(input).ok() {
        bail!("{} would overwrite its input", out.display());
    }
    let format = output_format(&out, &a.depth)?;
    let img = read_input(input)?;
    let graded = recipe.apply(&img).with_context(|| format!("applying recipe to {}", input.display()))?;
    write_image(&graded, &out, format)
}

fn bake(a: &BakeLutArgs) -> Result<()> {
    let recipe = read_recipe(&a.recipe)?;
    let cube = jobs::cube_text(&recipe, a.lut_size).context("baking LUT")?;
    write_text(&a.out, &cube)
}

fn serve(a: &ServeArgs) -> Result<()> {
    let cfg = ServiceConfig {
        workers: if a.workers == 0 { jobs::logical_cores() } else { a.workers },
        max_body_bytes: a.max_body_mib << 20,
    };
    let addr = SocketAddr::new(a.bind, a.port);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime
        .block_on(server::serve(addr, cfg))
        .with_context(|| format!("serving on {addr}"))
}
