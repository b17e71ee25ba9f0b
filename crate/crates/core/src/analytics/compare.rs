//! Empirical vs analytical EFD across a sweep of query gaps.

use std::fmt::Write as _;

use super::efd::{efd_segment_expectation, predict_efd, relative_gap, EfdReport, SegmentMethod};
use super::model::FittedModel;
use super::AnalyticsError;

pub const DEFAULT_GAP_THRESHOLD: f64 = 0.15;
/// Allowed relative spread between quadrature and the closed-form bracket
/// before a row carries a method warning.
pub const METHOD_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapFlag {
    Ok,
    UnderPredicted,
    OverPredicted,
}

impl GapFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            GapFlag::Ok => "ok",
            GapFlag::UnderPredicted => "under_predicted",
            GapFlag::OverPredicted => "over_predicted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub h: f64,
    pub empirical: f64,
    pub analytical: f64,
    pub relative_gap: f64,
    pub flag: GapFlag,
    /// Closed-form bracket evaluated at `h`, times mean_L.
    pub closed_form: f64,
    pub method_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonTable {
    pub threshold: f64,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flag != GapFlag::Ok)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,empirical_mean,analytical_mean,relative_gap,flag,closed_form,method_warning\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.3},{:.6},{:.6},{:.6},{},{:.6},{}",
                r.h,
                r.empirical,
                r.analytical,
                r.relative_gap,
                r.flag.as_str(),
                r.closed_form,
                r.method_warning
            );
        }
        out
    }
}

/// One row per report, sorted by h. A row is flagged when the empirical mean
/// sits more than `threshold` (relative) above or below the prediction.
pub fn compare_report(reports: &[EfdReport], model: &FittedModel, threshold: f64) -> Result<ComparisonTable, AnalyticsError> {
    let mut rows = Vec::with_capacity(reports.len());
    for r in reports {
        let analytical = predict_efd(r.h, model)?;
        let gap = relative_gap(r.empirical_mean, analytical);
        let flag = if gap > threshold {
            GapFlag::UnderPredicted
        } else if gap < -threshold {
            GapFlag::OverPredicted
        } else {
            GapFlag::Ok
        };
        let closed_form = model.mean_l * efd_segment_expectation(r.h, model, SegmentMethod::ClosedForm)?;
        let method_warning = relative_gap(closed_form, analytical).abs() > METHOD_TOLERANCE;
        if method_warning {
            log::warn!("h={}: closed-form bracket gives {closed_form:.3}s, quadrature {analytical:.3}s", r.h);
        }
        rows.push(ComparisonRow { h: r.h, empirical: r.empirical_mean, analytical, relative_gap: gap, flag, closed_form, method_warning });
    }
    rows.sort_by(|a, b| a.h.total_cmp(&b.h));
    Ok(ComparisonTable { threshold, rows })
}
