//! Decoupled analysis and transfer of the first four sample moments.
//!
//! The decoupled moments are measured on progressively normalized copies of
//! a sample: the mean on the sample itself, the variance after subtracting
//! the mean, the skewness after standardizing, and the ortho-kurtosis after
//! additionally removing the skewness with a Riccati flow. Transfer runs the
//! normalization on the source and then imposes the target's values from the
//! innermost level outwards.

mod flow;
mod ops;
mod riccati;
mod transfer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use flow::{flow_to_orthokurtosis, projected_kurtosis_gradient, FlowTrace};
pub use ops::{replay, FlowStep, PointOp, StagePoly};
pub use riccati::riccati_time;
pub use transfer::{
    order_prefix, transfer_moments, transfer_moments_with, ClampReport, MomentRecipe,
    TransferOptions,
};

/// Expected raw moments of orders 1..4 for a zero-mean, unit-variance Gaussian.
pub const REFERENCE_VALUES: [f64; 4] = [0.0, 1.0, 0.0, 3.0];

/// Variance threshold, relative to the mean square, below which a sample is
/// treated as constant.
pub const EPS_VAR: f64 = 1e-12;

/// Bounds applied to requested ortho-kurtosis targets: `[1 + 1e-6, 0.9 N]`.
pub const ORTHO_KURTOSIS_FLOOR: f64 = 1.0 + 1e-6;
pub const ORTHO_KURTOSIS_CEIL_FRACTION: f64 = 0.9;

/// One color plane as a flat vector, plus values that follow every map
/// applied to it without contributing to any statistic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sample {
    pub values: Vec<f64>,
    pub passengers: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Self {
        Sample {
            values,
            passengers: Vec::new(),
        }
    }

    pub fn with_passengers(values: Vec<f64>, passengers: Vec<f64>) -> Self {
        Sample { values, passengers }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn validate(&self, required: usize) -> Result<()> {
        if self.values.len() < required || self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSample {
                required,
                got: self.values.iter().filter(|v| v.is_finite()).count(),
            });
        }
        Ok(())
    }

    /// Applies `ops` to values and passengers alike.
    pub fn mapped(&self, ops: &[PointOp]) -> Sample {
        let mut out = self.clone();
        for op in ops {
            op.apply_slice(&mut out.values);
            op.apply_slice(&mut out.passengers);
        }
        out
    }
}

impl From<Vec<f64>> for Sample {
    fn from(values: Vec<f64>) -> Self {
        Sample::new(values)
    }
}

impl From<&[f64]> for Sample {
    fn from(values: &[f64]) -> Self {
        Sample::new(values.to_vec())
    }
}

/// `(1/N) sum x_n^j`.
pub fn sample_moment(x: &[f64], j: u32) -> f64 {
    raw_moment(x, j)
}

pub(crate) fn raw_moment(x: &[f64], j: u32) -> f64 {
    let n = x.len() as f64;
    let s: f64 = match j {
        0 => return 1.0,
        1 => x.iter().sum(),
        2 => x.iter().map(|v| v * v).sum(),
        3 => x.iter().map(|v| v * v * v).sum(),
        4 => x.iter().map(|v| (v * v) * (v * v)).sum(),
        _ => x.iter().map(|v| v.powi(j as i32)).sum(),
    };
    s / n
}

fn central_second(x: &[f64], mean: f64) -> f64 {
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.len() as f64
}

fn is_degenerate(variance: f64, mean_square: f64) -> bool {
    variance <= EPS_VAR * mean_square
}

/// Decoupled moments of a sample up to `order`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentFeatures {
    pub mean: f64,
    /// Biased variance.
    pub variance: f64,
    pub skewness: Option<f64>,
    pub ortho_kurtosis: Option<f64>,
    /// Number of populated moments (1..=4).
    pub order: u8,
    /// Set when the variance is at or below [`EPS_VAR`]; higher orders are
    /// then absent.
    pub degenerate: bool,
}

impl MomentFeatures {
    pub fn as_array(&self) -> [Option<f64>; 4] {
        [
            Some(self.mean),
            (self.order >= 2).then_some(self.variance),
            self.skewness,
            self.ortho_kurtosis,
        ]
    }
}

/// Measures the decoupled moments of `x` up to `order` (1..=4).
pub fn analyze(x: &[f64], order: u8) -> Result<MomentFeatures> {
    let order = order.clamp(1, 4);
    let sample = Sample::new(x.to_vec());
    sample.validate(if order >= 4 { 3 } else { 1 })?;
    let mean = raw_moment(x, 1);
    let variance = central_second(x, mean);
    let mut f = MomentFeatures {
        mean,
        variance,
        skewness: None,
        ortho_kurtosis: None,
        order,
        degenerate: false,
    };
    if order == 1 {
        f.variance = 0.0;
        return Ok(f);
    }
    if is_degenerate(variance, raw_moment(x, 2)) {
        f.degenerate = true;
        f.order = 2;
        return Ok(f);
    }
    if order >= 3 {
        let sd = variance.sqrt();
        f.skewness = Some(x.iter().map(|v| ((v - mean) / sd).powi(3)).sum::<f64>() / x.len() as f64);
    }
    if order >= 4 {
        let norm = normalize_to_r3_ops(x)?;
        f.ortho_kurtosis = Some(raw_moment(&sample.mapped(&norm.ops).values, 4));
    }
    Ok(f)
}

/// Subtracts the mean and scales to unit mean square.
///
/// Returns the normalized sample with the input's mean and variance.
pub fn normalize_mean_var(x: &Sample) -> Result<(Sample, f64, f64)> {
    x.validate(2)?;
    let (ops, m1, m2) = standardize_ops(&x.values)?;
    Ok((x.mapped(&ops), m1, m2))
}

fn standardize_ops(x: &[f64]) -> Result<(Vec<PointOp>, f64, f64)> {
    let m1 = raw_moment(x, 1);
    let m2 = central_second(x, m1);
    if is_degenerate(m2, raw_moment(x, 2)) {
        return Err(Error::DegenerateSample { variance: m2 });
    }
    Ok((
        vec![PointOp::Shift { by: -m1 }, PointOp::Scale { by: 1.0 / m2.sqrt() }],
        m1,
        m2,
    ))
}

/// Point-wise maps taking a sample onto the zero-mean, unit-variance,
/// zero-skewness manifold, with the statistics that fixed them.
#[derive(Debug, Clone)]
pub(crate) struct Normalization {
    pub ops: Vec<PointOp>,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub t0: f64,
}

/// Four-step path: subtract the mean, Riccati flow to zero third central
/// moment, subtract the mean again, scale to unit variance. The Riccati flow
/// runs on the standardized sample, which only rescales its time.
pub(crate) fn normalize_to_r3_ops(x: &[f64]) -> Result<Normalization> {
    if x.len() < 3 {
        return Err(Error::InvalidSample {
            required: 3,
            got: x.len(),
        });
    }
    let (mut ops, mean, variance) = standardize_ops(x)?;
    let mut y = x.to_vec();
    for op in &ops {
        op.apply_slice(&mut y);
    }
    let skewness = raw_moment(&y, 3);
    let t0 = riccati_time(&y, 0.0)?;
    let (lo, hi) = flow::min_max(&y);
    let ric = PointOp::Riccati { t: t0, lo, hi };
    ric.apply_slice(&mut y);
    let (post, _, _) = standardize_ops(&y)?;
    ops.push(ric);
    ops.extend(post);
    Ok(Normalization {
        ops,
        mean,
        variance,
        skewness,
        t0,
    })
}

/// Normalizes to zero mean, unit variance and zero skewness, returning the
/// input's first three decoupled moments.
pub fn normalize_to_r3(x: &Sample) -> Result<(Sample, MomentFeatures)> {
    x.validate(3)?;
    let norm = normalize_to_r3_ops(&x.values)?;
    let f = MomentFeatures {
        mean: norm.mean,
        variance: norm.variance,
        skewness: Some(norm.skewness),
        ortho_kurtosis: None,
        order: 3,
        degenerate: false,
    };
    Ok((x.mapped(&norm.ops), f))
}

/// Fourth raw moment after normalization to zero mean, unit variance and
/// zero skewness.
pub fn ortho_kurtosis(x: &[f64]) -> Result<f64> {
    let s = Sample::from(x);
    s.validate(3)?;
    let norm = normalize_to_r3_ops(x)?;
    Ok(raw_moment(&s.mapped(&norm.ops).values, 4))
}

/// Analytic gradients of the raw and decoupled moments.
pub mod gradients {
    use super::central_second;

    /// Gradient of `(1/N) sum x^j`.
    pub fn raw_moment(x: &[f64], j: u32) -> Vec<f64> {
        let n = x.len() as f64;
        x.iter()
            .map(|v| j as f64 / n * v.powi(j as i32 - 1))
            .collect()
    }

    pub fn mean(x: &[f64]) -> Vec<f64> {
        vec![1.0 / x.len() as f64; x.len()]
    }

    pub fn variance(x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let m = super::raw_moment(x, 1);
        x.iter().map(|v| 2.0 / n * (v - m)).collect()
    }

    /// `(3 / (N sigma)) (x2^2 - skew x2 - 1)` with `x2` the standardized sample.
    pub fn skewness(x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let m = super::raw_moment(x, 1);
        let sd = central_second(x, m).sqrt();
        let x2: Vec<f64> = x.iter().map(|v| (v - m) / sd).collect();
        let skew = super::raw_moment(&x2, 3);
        x2.iter()
            .map(|z| 3.0 / (n * sd) * (z * z - skew * z - 1.0))
            .collect()
    }

    pub use super::flow::projected_kurtosis_gradient as projected_fourth_moment;
}
