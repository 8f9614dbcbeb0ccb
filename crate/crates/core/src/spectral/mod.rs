//! Power-spectrum descriptor: mean, MSV and the MSVs at the outputs of an
//! isotropic Parseval filter bank, with exact decoupling of the first three
//! and a fitted exponential flow for the rest.

mod bank;
mod features;
mod fft;
mod kernel;

pub use bank::{radial_profile, FilterBank, BANDS, CONTINUOUS_REFERENCE};
pub use features::{
    decoupled_features, spectral_features, spectral_normalize, spectral_transfer, SpectralFeatures,
};
pub use fft::{bin_frequency, Fft2};
pub use kernel::{
    apply_kernel, apply_kernel_rgb, band_gains, EquivalentKernel, MAX_SUPPORT, RETAINED_ENERGY,
};

use crate::error::{Error, Result};
use crate::image::Plane;

/// Kernel that, convolved with `base`, gives it the decoupled band MSVs of
/// `look`. Both planes show the same scene through different optics.
pub fn extract_diffusion_kernel(look: &Plane, base: &Plane) -> Result<EquivalentKernel> {
    if look.dims() != base.dims() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", look.width, look.height),
            got: format!("{}x{}", base.width, base.height),
        });
    }
    let bank = FilterBank::new(base.width, base.height);
    let reference = bank.grid_reference();
    let target = decoupled_features(look, &bank, &reference)?;
    let (_, kernel) = spectral_transfer(base, &target, &bank, &reference)?;
    Ok(kernel)
}
