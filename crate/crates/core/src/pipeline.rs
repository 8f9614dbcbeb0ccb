//! Still-image style transfer and optics transfer, and the frozen recipe that
//! replays a style transfer on other images.

use serde::{Deserialize, Serialize};

use crate::color::{
    check_nonnegative, gamma_decode, gamma_encode, signed_pow, Illuminant, OpponentSpace,
    OpponentTransform, GAMMA,
};
use crate::error::{Channel, Error, Result, ResultExt};
use crate::image::{Encoding, RgbImage};
use crate::imgio::{crop_plane, CropRect, CropView};
use crate::moments::{analyze, order_prefix, transfer_moments_with, MomentFeatures, MomentRecipe, Sample, TransferOptions};
use crate::spectral::{
    apply_kernel_rgb, decoupled_features, extract_diffusion_kernel, spectral_transfer, EquivalentKernel, FilterBank,
};

/// Schema version written to and required from recipe JSON.
pub const RECIPE_VERSION: u32 = 1;

const OPPONENT_CHANNELS: [Channel; 3] = [Channel::I, Channel::P, Channel::T];

/// What happens to encoded values outside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClampPolicy {
    Clamp,
    /// Keep float outputs as computed; integer files clamp on write.
    #[default]
    Preserve,
}

/// Moment orders imposed on each opponent channel; each must be `{1..k}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelOrders {
    pub i: Vec<u8>,
    pub p: Vec<u8>,
    pub t: Vec<u8>,
}

impl Default for ChannelOrders {
    fn default() -> Self {
        ChannelOrders {
            i: vec![1, 2, 3, 4],
            p: vec![1, 2],
            t: vec![1, 2],
        }
    }
}

impl ChannelOrders {
    /// All orders up to `i` on intensity and up to `chroma` on both chroma
    /// channels.
    pub fn upto(i: u8, chroma: u8) -> Self {
        ChannelOrders {
            i: (1..=i).collect(),
            p: (1..=chroma).collect(),
            t: (1..=chroma).collect(),
        }
    }

    pub fn counts(&self) -> Result<[u8; 3]> {
        Ok([order_prefix(&self.i)?, order_prefix(&self.p)?, order_prefix(&self.t)?])
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferConfig {
    pub orders: ChannelOrders,
    /// Region of the source used for statistics.
    pub src_crop: Option<CropRect>,
    /// Region of the target used for statistics.
    pub tgt_crop: Option<CropRect>,
    /// Also match the target's luminance power spectrum.
    pub spectral: bool,
    pub clamp: ClampPolicy,
}

impl TransferConfig {
    /// Validates orders and crops against the image sizes.
    pub fn validate(&self, src: &RgbImage, tgt: &RgbImage) -> Result<[u8; 3]> {
        let counts = self.orders.counts()?;
        if let Some(r) = self.src_crop {
            r.validate(src.width, src.height)?;
        }
        if let Some(r) = self.tgt_crop {
            r.validate(tgt.width, tgt.height)?;
        }
        Ok(counts)
    }
}

/// Everything needed to replay a style transfer on another image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferRecipe {
    pub v: u32,
    /// Display gamma of the decode/encode stages.
    pub gamma: f64,
    pub source_illuminant: Illuminant,
    pub target_illuminant: Illuminant,
    /// Per-channel Gray World factors `L_T / L_S`.
    pub illuminant_scale: [f64; 3],
    pub opponent: OpponentSpace,
    /// Frozen maps for the I, P and T channels.
    pub channels: [MomentRecipe; 3],
    /// Spectral kernel applied in linear light before the point-wise stages.
    pub kernel: Option<EquivalentKernel>,
    pub clamp: ClampPolicy,
}

fn unit_features() -> MomentFeatures {
    MomentFeatures {
        mean: 0.0,
        variance: 1.0,
        skewness: None,
        ortho_kurtosis: None,
        order: 2,
        degenerate: false,
    }
}

impl TransferRecipe {
    /// Recipe whose point-wise stages compose to the identity.
    pub fn identity() -> Self {
        TransferRecipe {
            v: RECIPE_VERSION,
            gamma: GAMMA,
            source_illuminant: Illuminant([1.0; 3]),
            target_illuminant: Illuminant([1.0; 3]),
            illuminant_scale: [1.0; 3],
            opponent: OpponentSpace::default(),
            channels: std::array::from_fn(|_| MomentRecipe::identity(unit_features())),
            kernel: None,
            clamp: ClampPolicy::Preserve,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.v != RECIPE_VERSION {
            return Err(Error::UnsupportedFormat(format!(
                "recipe version {} (expected {RECIPE_VERSION})",
                self.v
            )));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::RecipeIncomplete(format!("gamma {}", self.gamma)));
        }
        if !self.illuminant_scale.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::RecipeIncomplete(format!(
                "illuminant scale {:?}",
                self.illuminant_scale
            )));
        }
        for (c, ch) in self.channels.iter().enumerate() {
            ch.validate().stage("recipe", Some(OPPONENT_CHANNELS[c]))?;
        }
        OpponentTransform::new(self.opponent)?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("recipe serializes")
    }

    /// Parses and validates recipe JSON.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("v").and_then(|v| v.as_u64()) {
            Some(v) if v == RECIPE_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::UnsupportedFormat(format!(
                    "recipe version {v} (expected {RECIPE_VERSION})"
                )))
            }
            None => return Err(Error::RecipeIncomplete("missing schema field `v`".into())),
        }
        let recipe: TransferRecipe = serde_json::from_value(value)?;
        recipe.validate()?;
        Ok(recipe)
    }

    pub fn compile(&self) -> Result<CompiledRecipe<'_>> {
        self.validate()?;
        Ok(CompiledRecipe {
            recipe: self,
            opponent: OpponentTransform::new(self.opponent)?,
        })
    }

    /// Replays the recipe on a gamma-encoded image, kernel included.
    pub fn apply(&self, img: &RgbImage) -> Result<RgbImage> {
        let compiled = self.compile()?;
        let linear = img.map_pixels(Encoding::Linear, |p| p.map(|v| signed_pow(v, self.gamma)));
        let linear = match &self.kernel {
            Some(k) => apply_kernel_rgb(&linear, k).stage("kernel", None)?,
            None => linear,
        };
        Ok(linear.map_pixels(Encoding::Gamma, |p| compiled.apply_linear(p)))
    }
}

/// A validated recipe with its inverse matrices precomputed.
pub struct CompiledRecipe<'a> {
    recipe: &'a TransferRecipe,
    opponent: OpponentTransform,
}

impl CompiledRecipe<'_> {
    /// Point-wise stages from linear RGB to the encoded result.
    #[inline]
    pub fn apply_linear(&self, rgb: [f64; 3]) -> [f64; 3] {
        let r = self.recipe;
        let scaled: [f64; 3] = std::array::from_fn(|c| rgb[c] * r.illuminant_scale[c]);
        let opp = self.opponent.forward(scaled);
        let mapped: [f64; 3] = std::array::from_fn(|c| r.channels[c].apply(opp[c]));
        let lin = self.opponent.inverse(mapped);
        let inv_gamma = 1.0 / r.gamma;
        lin.map(|v| {
            let e = signed_pow(v, inv_gamma);
            match r.clamp {
                ClampPolicy::Clamp => e.clamp(0.0, 1.0),
                ClampPolicy::Preserve => e,
            }
        })
    }

    /// All point-wise stages of a gamma-encoded pixel (the kernel is not
    /// point-wise and is skipped).
    #[inline]
    pub fn apply_pixel(&self, rgb: [f64; 3]) -> [f64; 3] {
        let g = self.recipe.gamma;
        self.apply_linear(rgb.map(|v| signed_pow(v, g)))
    }
}

/// Kernel giving the source luminance the target's decoupled spectral
/// features. The target is analysed on its own grid (and crop).
fn style_kernel(src_lin: &RgbImage, tgt_lin: &RgbImage, tgt_crop: Option<CropRect>) -> Result<EquivalentKernel> {
    let tgt_lum = match tgt_crop {
        Some(r) => crop_plane(&tgt_lin.luminance(), r)?,
        None => tgt_lin.luminance(),
    };
    let tgt_bank = FilterBank::new(tgt_lum.width, tgt_lum.height);
    let target = decoupled_features(&tgt_lum, &tgt_bank, &tgt_bank.grid_reference())?;
    let src_lum = src_lin.luminance();
    let bank = FilterBank::new(src_lum.width, src_lum.height);
    let (_, kernel) = spectral_transfer(&src_lum, &target, &bank, &bank.grid_reference())?;
    Ok(kernel)
}

/// Imposes the target's color statistics on the source.
///
/// Stages: gamma decode, optional spectral kernel on luminance, Gray World
/// scaling, IPT, per-channel moment transfer (statistics from the crops,
/// maps applied to every pixel), inverse IPT, gamma encode.
pub fn transfer_style(src: &RgbImage, tgt: &RgbImage, cfg: &TransferConfig) -> Result<(RgbImage, TransferRecipe)> {
    let orders = cfg.validate(src, tgt).stage("config", None)?;
    check_nonnegative(src).stage("decode source", None)?;
    check_nonnegative(tgt).stage("decode target", None)?;
    let src_lin = gamma_decode(src);
    let tgt_lin = gamma_decode(tgt);

    let kernel = if cfg.spectral {
        Some(style_kernel(&src_lin, &tgt_lin, cfg.tgt_crop).stage("spectral", Some(Channel::Luminance))?)
    } else {
        None
    };
    let base = match &kernel {
        Some(k) => apply_kernel_rgb(&src_lin, k).stage("spectral", Some(Channel::Luminance))?,
        None => src_lin,
    };

    let ls = Illuminant::estimate(&base, cfg.src_crop).stage("gray world (source)", None)?;
    let lt = Illuminant::estimate(&tgt_lin, cfg.tgt_crop).stage("gray world (target)", None)?;
    let scale = ls.scale_to(&lt);
    let space = OpponentSpace::default();
    let opp = OpponentTransform::new(space)?;
    let src_opp = base.map_pixels(Encoding::Opponent, |p| opp.forward(std::array::from_fn(|c| p[c] * scale[c])));
    let tgt_opp = tgt_lin.map_pixels(Encoding::Opponent, |p| opp.forward(p));
    let src_view = CropView::new(&src_opp, cfg.src_crop)?;
    let tgt_view = CropView::new(&tgt_opp, cfg.tgt_crop)?;

    let mut channels: [MomentRecipe; 3] = std::array::from_fn(|_| MomentRecipe::identity(unit_features()));
    for c in 0..3 {
        let ch = Some(OPPONENT_CHANNELS[c]);
        if orders[c] == 0 {
            continue;
        }
        let tv: Vec<f64> = tgt_view.values(c).collect();
        let target = analyze(&tv, orders[c]).stage("analyze target", ch)?;
        let sample = Sample::new(src_view.values(c).collect());
        let (_, recipe) =
            transfer_moments_with(&sample, &target, orders[c], &TransferOptions::default()).stage("moments", ch)?;
        channels[c] = recipe;
    }

    let recipe = TransferRecipe {
        v: RECIPE_VERSION,
        gamma: GAMMA,
        source_illuminant: ls,
        target_illuminant: lt,
        illuminant_scale: scale,
        opponent: space,
        channels,
        kernel,
        clamp: cfg.clamp,
    };
    let compiled = recipe.compile().stage("recipe", None)?;
    let out = base.map_pixels(Encoding::Gamma, |p| compiled.apply_linear(p));
    Ok((out, recipe))
}

/// Gives `src` the optical diffusion that separates `t_diff` from `t_ref`.
///
/// The kernel is extracted from the linear luminances of the two targets
/// (restricted to `diff_crop` when set) and applied to each linear channel
/// of the source.
pub fn transfer_optics(
    src: &RgbImage,
    t_ref: &RgbImage,
    t_diff: &RgbImage,
    diff_crop: Option<CropRect>,
) -> Result<(RgbImage, EquivalentKernel)> {
    if t_ref.dims() != t_diff.dims() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", t_ref.width, t_ref.height),
            got: format!("{}x{}", t_diff.width, t_diff.height),
        })
        .stage("config", None);
    }
    for (img, stage) in [(src, "decode source"), (t_ref, "decode reference"), (t_diff, "decode diffused")] {
        check_nonnegative(img).stage(stage, None)?;
    }
    let lum = |img: &RgbImage| -> Result<_> {
        let l = gamma_decode(img).luminance();
        match diff_crop {
            Some(r) => crop_plane(&l, r),
            None => Ok(l),
        }
    };
    let base = lum(t_ref).stage("config", None)?;
    let look = lum(t_diff).stage("config", None)?;
    let kernel = extract_diffusion_kernel(&look, &base).stage("kernel", Some(Channel::Luminance))?;
    let blurred = apply_kernel_rgb(&gamma_decode(src), &kernel).stage("convolve", None)?;
    Ok((gamma_encode(&blurred), kernel))
}
