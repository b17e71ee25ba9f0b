//! Per-bot load as a function of the query gap.

use std::fmt::Write as _;

use super::fit::weighted_line;
use super::AnalyticsError;
use crate::harness::SimLog;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourcePoint {
    pub h: f64,
    /// Mean per-bot HTTP queries issued per second of run time.
    pub query_rate: f64,
    /// Mean per-bot feed bytes served per second.
    pub byte_rate: f64,
    /// Mean per-bot queries issued plus served per second; the load term of
    /// the CPU model.
    pub cpu_proxy: f64,
    /// Mean messages stored per bot.
    pub memory_proxy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceReport {
    pub points: Vec<ResourcePoint>,
    /// Query rate = beta_q / h.
    pub beta_q: f64,
    /// Byte rate = beta_s / h.
    pub beta_s: f64,
    /// Relative residuals of the two fits, one per point.
    pub query_residuals: Vec<f64>,
    pub byte_residuals: Vec<f64>,
    /// CPU proxy = c_base + beta_c / h.
    pub cpu_base: f64,
    pub beta_c: f64,
    /// Memory proxy = m_base + beta_m / h; beta_m is expected to vanish.
    pub memory_base: f64,
    pub beta_m: f64,
}

impl ResourceReport {
    pub fn max_query_residual(&self) -> f64 {
        self.query_residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,query_rate,byte_rate,cpu_proxy,memory_proxy,query_fit,query_residual\n");
        for (p, r) in self.points.iter().zip(&self.query_residuals) {
            let _ = writeln!(
                out,
                "{:.3},{:.9},{:.6},{:.9},{:.3},{:.9},{:.3e}",
                p.h,
                p.query_rate,
                p.byte_rate,
                p.cpu_proxy,
                p.memory_proxy,
                self.beta_q / p.h,
                r
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "beta_q={:.6}\nbeta_s={:.6}\nmax_query_residual={:.3e}\ncpu_base={:.6}\nbeta_c={:.6}\nmemory_base={:.3}\nbeta_m={:.6}\n",
            self.beta_q, self.beta_s, self.max_query_residual(), self.cpu_base, self.beta_c, self.memory_base, self.beta_m
        )
    }
}

fn point(log: &SimLog) -> Result<ResourcePoint, AnalyticsError> {
    let span = (log.meta.end - log.meta.start) as f64 / 1000.0;
    if span <= 0.0 || log.bots.is_empty() {
        return Err(AnalyticsError::InvalidInput("log has no bots or zero duration".into()));
    }
    let n = log.bots.len() as f64;
    let sum = |f: fn(&crate::counters::ResourceCounters) -> u64| log.bots.iter().map(|b| f(&b.counters)).sum::<u64>() as f64;
    let issued = sum(|c| c.queries_issued);
    let served = sum(|c| c.queries_served);
    Ok(ResourcePoint {
        h: log.meta.h.as_secs_f64(),
        query_rate: issued / n / span,
        byte_rate: sum(|c| c.bytes_served) / n / span,
        cpu_proxy: (issued + served) / n / span,
        memory_proxy: sum(|c| c.messages_stored) / n,
    })
}

/// Slope through the origin of `y` against `x`.
fn origin_slope(xy: &[(f64, f64)]) -> f64 {
    let sxx: f64 = xy.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = xy.iter().map(|p| p.0 * p.1).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

fn rel(y: f64, fit: f64) -> f64 {
    if y == 0.0 {
        fit.abs()
    } else {
        (y - fit) / y
    }
}

pub fn resource_fit(logs: &[SimLog]) -> Result<ResourceReport, AnalyticsError> {
    let mut points = logs.iter().map(point).collect::<Result<Vec<_>, _>>()?;
    points.sort_by(|x, y| x.h.total_cmp(&y.h));
    let mut hs: Vec<f64> = points.iter().map(|p| p.h).collect();
    hs.dedup();
    if hs.len() < 3 {
        return Err(AnalyticsError::InvalidInput(format!("need at least 3 distinct h values, got {}", hs.len())));
    }
    let xq: Vec<(f64, f64)> = points.iter().map(|p| (1.0 / p.h, p.query_rate)).collect();
    let xs: Vec<(f64, f64)> = points.iter().map(|p| (1.0 / p.h, p.byte_rate)).collect();
    let beta_q = origin_slope(&xq).max(0.0);
    let beta_s = origin_slope(&xs).max(0.0);
    let line = |f: fn(&ResourcePoint) -> f64| {
        let pts: Vec<(f64, f64, f64)> = points.iter().map(|p| (1.0 / p.h, f(p), 1.0)).collect();
        weighted_line(&pts).map(|(s, i)| (i, s)).unwrap_or((pts[0].1, 0.0))
    };
    let (cpu_base, beta_c) = line(|p| p.cpu_proxy);
    let (memory_base, beta_m) = line(|p| p.memory_proxy);
    Ok(ResourceReport {
        query_residuals: xq.iter().map(|&(x, y)| rel(y, beta_q * x)).collect(),
        byte_residuals: xs.iter().map(|&(x, y)| rel(y, beta_s * x)).collect(),
        points,
        beta_q,
        beta_s,
        cpu_base,
        beta_c,
        memory_base,
        beta_m,
    })
}
