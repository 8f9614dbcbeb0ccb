//! Gamma model, Gray World illuminant correction and the IPT opponent space.

use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Channel, Error, Result};
use crate::image::{Encoding, RgbImage};
use crate::imgio::{CropRect, CropView};

pub type Mat3 = [[f64; 3]; 3];

/// Display gamma: `linear = encoded^GAMMA`.
pub const GAMMA: f64 = 2.2;
/// Exponent of the IPT cone-response nonlinearity.
pub const IPT_EXPONENT: f64 = 0.43;
/// Channel means below this make an image black for Gray World.
pub const BLACK_LEVEL: f64 = 1e-9;

/// Linear sRGB (D65) to CIE XYZ.
pub const RGB_TO_XYZ: Mat3 = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];
/// XYZ (D65) to IPT cone space.
pub const XYZ_TO_LMS: Mat3 = [
    [0.4002, 0.7075, -0.0807],
    [-0.2280, 1.1500, 0.0612],
    [0.0, 0.0, 0.9184],
];
/// Nonlinear cone responses to IPT.
pub const LMS_TO_IPT: Mat3 = [
    [0.4000, 0.4000, 0.2000],
    [4.4550, -4.8510, 0.3960],
    [0.8056, 0.3572, -1.1628],
];

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

#[inline]
pub fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

/// Inverse by cofactors; `None` when singular.
pub fn mat_inv(m: &Mat3) -> Option<Mat3> {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let cof = [
        [c(1, 2, 1, 2), -c(1, 2, 0, 2), c(1, 2, 0, 1)],
        [-c(0, 2, 1, 2), c(0, 2, 0, 2), -c(0, 2, 0, 1)],
        [c(0, 1, 1, 2), -c(0, 1, 0, 2), c(0, 1, 0, 1)],
    ];
    let det = m[0][0] * cof[0][0] + m[0][1] * cof[0][1] + m[0][2] * cof[0][2];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some(std::array::from_fn(|i| std::array::from_fn(|j| cof[j][i] / det)))
}

/// Linear RGB straight to IPT cone space.
pub static RGB_TO_LMS: LazyLock<Mat3> = LazyLock::new(|| mat_mul(&XYZ_TO_LMS, &RGB_TO_XYZ));

#[inline]
pub fn signed_pow(v: f64, e: f64) -> f64 {
    v.signum() * v.abs().powf(e)
}

/// Encoded value to linear light.
#[inline]
pub fn decode_value(v: f64) -> f64 {
    signed_pow(v, GAMMA)
}

/// Linear light to encoded value.
#[inline]
pub fn encode_value(v: f64) -> f64 {
    signed_pow(v, 1.0 / GAMMA)
}

/// Fails with `NegativeInput` on the first negative value.
pub fn check_nonnegative(img: &RgbImage) -> Result<()> {
    match img.planes.iter().flatten().find(|v| **v < 0.0) {
        Some(&v) => Err(Error::NegativeInput(v)),
        None => Ok(()),
    }
}

pub fn gamma_decode(img: &RgbImage) -> RgbImage {
    img.map_pixels(Encoding::Linear, |p| p.map(decode_value))
}

pub fn gamma_encode(img: &RgbImage) -> RgbImage {
    img.map_pixels(Encoding::Gamma, |p| p.map(encode_value))
}

/// Gray World illuminant: per-channel means of a linear image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Illuminant(pub [f64; 3]);

impl Illuminant {
    pub fn estimate(img: &RgbImage, crop: Option<CropRect>) -> Result<Self> {
        let view = CropView::new(img, crop)?;
        let means: [f64; 3] = std::array::from_fn(|c| view.mean(c));
        for (c, ch) in [Channel::R, Channel::G, Channel::B].into_iter().enumerate() {
            if !(means[c] >= BLACK_LEVEL) {
                return Err(Error::BlackImage {
                    channel: ch,
                    mean: means[c],
                });
            }
        }
        Ok(Illuminant(means))
    }

    /// Per-channel factors taking `self` to `target`.
    pub fn scale_to(&self, target: &Illuminant) -> [f64; 3] {
        std::array::from_fn(|c| target.0[c] / self.0[c])
    }
}

/// Scales `src` per channel by `L_T / L_S`.
pub fn gray_world_scale(src: &RgbImage, tgt: &RgbImage) -> Result<(RgbImage, Illuminant, Illuminant)> {
    let ls = Illuminant::estimate(src, None)?;
    let lt = Illuminant::estimate(tgt, None)?;
    let k = ls.scale_to(&lt);
    Ok((src.map_pixels(src.encoding, |p| std::array::from_fn(|c| p[c] * k[c])), ls, lt))
}

/// Matrices and exponent of an RGB/opponent conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpponentSpace {
    pub rgb_to_lms: Mat3,
    pub exponent: f64,
    pub lms_to_ipt: Mat3,
}

impl Default for OpponentSpace {
    fn default() -> Self {
        OpponentSpace {
            rgb_to_lms: *RGB_TO_LMS,
            exponent: IPT_EXPONENT,
            lms_to_ipt: LMS_TO_IPT,
        }
    }
}

/// An [`OpponentSpace`] with its inverses precomputed.
#[derive(Debug, Clone, Copy)]
pub struct OpponentTransform {
    space: OpponentSpace,
    lms_to_rgb: Mat3,
    ipt_to_lms: Mat3,
}

impl OpponentTransform {
    pub fn new(space: OpponentSpace) -> Result<Self> {
        let bad = || Error::RecipeIncomplete("opponent matrices are singular or non-finite".into());
        if !(space.exponent.is_finite() && space.exponent > 0.0) {
            return Err(Error::RecipeIncomplete(format!("opponent exponent {}", space.exponent)));
        }
        Ok(OpponentTransform {
            lms_to_rgb: mat_inv(&space.rgb_to_lms).ok_or_else(bad)?,
            ipt_to_lms: mat_inv(&space.lms_to_ipt).ok_or_else(bad)?,
            space,
        })
    }

    pub fn space(&self) -> &OpponentSpace {
        &self.space
    }

    #[inline]
    pub fn forward(&self, rgb: [f64; 3]) -> [f64; 3] {
        let lms = mat_vec(&self.space.rgb_to_lms, rgb).map(|v| signed_pow(v, self.space.exponent));
        mat_vec(&self.space.lms_to_ipt, lms)
    }

    #[inline]
    pub fn inverse(&self, ipt: [f64; 3]) -> [f64; 3] {
        let e = 1.0 / self.space.exponent;
        let lms = mat_vec(&self.ipt_to_lms, ipt).map(|v| signed_pow(v, e));
        mat_vec(&self.lms_to_rgb, lms)
    }
}

pub static IPT: LazyLock<OpponentTransform> =
    LazyLock::new(|| OpponentTransform::new(OpponentSpace::default()).expect("IPT matrices are invertible"));

pub fn rgb_to_opponent(img: &RgbImage) -> RgbImage {
    let t = *IPT;
    img.map_pixels(Encoding::Opponent, move |p| t.forward(p))
}

pub fn opponent_to_rgb(img: &RgbImage) -> RgbImage {
    let t = *IPT;
    img.map_pixels(Encoding::Linear, move |p| t.inverse(p))
}
