//! Operations shared by the command line and the service.

use std::num::NonZeroUsize;

use dst_core::imgio::{encode_image, ImageFormat};
use dst_core::lut::{bake_lut, write_cube};
use dst_core::pipeline::TransferRecipe;
use dst_core::{Result, RgbImage};

/// Encoding of images returned by the service and the CLI's default for
/// `.png` outputs.
pub const RESULT_FORMAT: ImageFormat = ImageFormat::Png16;

/// Bakes `recipe` and renders it as `.cube` text.
pub fn cube_text(recipe: &TransferRecipe, size: usize) -> Result<String> {
    Ok(write_cube(&bake_lut(recipe, size)?))
}

pub fn encode_result(img: &RgbImage) -> Result<Vec<u8>> {
    encode_image(img, RESULT_FORMAT)
}

pub fn logical_cores() -> usize {
    std::thread::available_parallelism().map(NonZeroUsize::get).unwrap_or(1)
}
