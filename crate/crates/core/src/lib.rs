//! Photorealistic style transfer by decoupled moment and power-spectrum
//! matching, with 3D LUT baking.

pub mod color;
pub mod error;
pub mod image;
pub mod imgio;
pub mod lut;
pub mod moments;
pub mod pipeline;
pub mod spectral;
pub mod synth;

pub use error::{Channel, Error, Result};
pub use image::{Encoding, Plane, RgbImage};
