//! Distribution fitting, the analytical EFD and resource models, and reports
//! comparing them against simulation logs.

mod compare;
mod dist;
mod efd;
mod fit;
mod model;
pub mod quad;
mod resource;

use thiserror::Error;

pub use compare::{compare_report, ComparisonRow, ComparisonTable, GapFlag, DEFAULT_GAP_THRESHOLD, METHOD_TOLERANCE};
pub use dist::{discrete_length_mass, normalize_z_i, normalize_z_l, ChainLengthLaw, TruncatedPowerLaw};
pub use efd::{
    efd_segment_expectation, empirical_efd, percentile, predict_efd, relative_gap, zero_efd_probability, EfdReport,
    SegmentMethod, DEFAULT_PERCENTILES, DEFAULT_THRESHOLDS,
};
pub use fit::{fit_exponential, fit_power_law, ExponentialFit, PowerLawFit, DEFAULT_BINS_PER_DECADE, MIN_FIT_SAMPLES};
pub use model::FittedModel;
pub use resource::{resource_fit, ResourcePoint, ResourceReport};

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("all samples equal {0}: zero-width support")]
    ZeroWidthSupport(f64),
    #[error("fit is degenerate: fewer than two distinct non-empty bins")]
    DegenerateFit,
    #[error("no posted record for {} forward(s): {}", .0.len(), .0.join(", "))]
    MissingRecords(Vec<String>),
}
