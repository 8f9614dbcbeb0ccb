use std::fmt;

use thiserror::Error;

/// Color-plane label used to give errors a location inside the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    R,
    G,
    B,
    I,
    P,
    T,
    Luminance,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Channel::R => "R",
            Channel::G => "G",
            Channel::B => "B",
            Channel::I => "I",
            Channel::P => "P",
            Channel::T => "T",
            Channel::Luminance => "luminance",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample is degenerate (variance {variance:e} at or below threshold)")]
    DegenerateSample { variance: f64 },

    #[error("sample must hold at least {required} finite values, got {got}")]
    InvalidSample { required: usize, got: usize },

    #[error("target {what} = {target} is unreachable: {reason}")]
    TargetUnreachable {
        what: &'static str,
        target: f64,
        reason: String,
    },

    #[error("root search would cross a pole of the Riccati map at t = {t}")]
    PoleCollision { t: f64 },

    #[error("projection basis is rank deficient (pivot {pivot:e})")]
    RankDeficient { pivot: f64 },

    #[error("adaptive integration failed: {0}")]
    StepFailure(String),

    #[error("moment orders must be a prefix 1..=k, got {0:?}")]
    OrderGap(Vec<u8>),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("spectral fit did not converge (residual {residual:e} after {iterations} iterations)")]
    FitDivergence { residual: f64, iterations: usize },

    #[error("negative value {0} where a nonnegative value is required")]
    NegativeInput(f64),

    #[error("image channel {channel} is black (mean {mean:e})")]
    BlackImage { channel: Channel, mean: f64 },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("size mismatch: header declares {expected} entries, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("recipe is incomplete: {0}")]
    RecipeIncomplete(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt image file: {0}")]
    CorruptFile(String),

    #[error("rectangle {rect} lies outside a {width}x{height} image")]
    OutOfBounds {
        rect: String,
        width: usize,
        height: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{stage}{}: {source}", channel.map(|c| format!(" [{c}]")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        channel: Option<Channel>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str, channel: Option<Channel>) -> Self {
        Error::Stage {
            stage,
            channel,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Outermost stage, and the outermost channel named anywhere in the
    /// chain.
    pub fn location(&self) -> (Option<&'static str>, Option<Channel>) {
        match self {
            Error::Stage { stage, channel, source } => (Some(stage), channel.or_else(|| source.location().1)),
            Error::BlackImage { channel, .. } => (None, Some(*channel)),
            _ => (None, None),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait ResultExt<T> {
    fn stage(self, stage: &'static str, channel: Option<Channel>) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn stage(self, stage: &'static str, channel: Option<Channel>) -> Result<T> {
        self.map_err(|e| e.in_stage(stage, channel))
    }
}
