//! Analytical and empirical extra forwarding delay.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::model::FittedModel;
use super::quad::integrate;
use super::AnalyticsError;
use crate::harness::SimLog;
use crate::trace::ForwardForest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentMethod {
    Quadrature,
    /// Closed-form bracket whose constant term is off; kept as a cross-check.
    ClosedForm,
    MonteCarlo { seed: u64, n: usize },
}

fn check_h(h: f64) -> Result<(), AnalyticsError> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(AnalyticsError::InvalidInput(format!("query gap must be positive, got {h}")))
    }
}

/// `E[max{I, W} − I]` for `W ~ U[0, h]`, in seconds.
pub fn efd_segment_expectation(h: f64, model: &FittedModel, method: SegmentMethod) -> Result<f64, AnalyticsError> {
    check_h(h)?;
    model.validate()?;
    match method {
        SegmentMethod::Quadrature => {
            let hi = h.min(model.i_max);
            if hi <= model.i_min {
                return Ok(0.0);
            }
            // E[(W − i)+] = (h − i)² / 2h for i ≤ h
            let q = integrate(|i| model.delay_pdf(i) * (h - i).powi(2) / (2.0 * h), model.i_min, hi, 1e-9 * h);
            Ok(q.value)
        }
        SegmentMethod::ClosedForm => {
            let a = model.a;
            let k = 10f64.powf(model.b) / model.z_i;
            let p3 = (a + 1.0) * (a + 2.0) * (a + 3.0);
            let bracket = h.powf(a + 3.0) / p3 - h * h / (2.0 * (a + 1.0)) + h / (a + 2.0) - (2.0 - a * (a + 3.0)) / p3;
            Ok(k * bracket / h)
        }
        SegmentMethod::MonteCarlo { seed, n } => {
            if n == 0 {
                return Err(AnalyticsError::InvalidInput("Monte Carlo needs at least one sample".into()));
            }
            let law = model.delay_law();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sum = 0.0;
            for _ in 0..n {
                let i = law.sample(&mut rng);
                let w = rng.gen::<f64>() * h;
                sum += w.max(i) - i;
            }
            Ok(sum / n as f64)
        }
    }
}

/// `E[L] · E[max{I, W} − I]`.
pub fn predict_efd(h: f64, model: &FittedModel) -> Result<f64, AnalyticsError> {
    if model.mean_l.is_nan() || model.mean_l < 1.0 {
        return Err(AnalyticsError::InvalidModel(format!("mean_L must be at least 1, got {}", model.mean_l)));
    }
    Ok(model.mean_l * efd_segment_expectation(h, model, SegmentMethod::Quadrature)?)
}

/// `P(W ≤ I) = ∫ p(i) · min(i, h) / h di`: the chance one forwarding hop adds
/// no delay.
pub fn zero_efd_probability(h: f64, model: &FittedModel) -> Result<f64, AnalyticsError> {
    check_h(h)?;
    model.validate()?;
    let split = h.clamp(model.i_min, model.i_max);
    let below = integrate(|i| model.delay_pdf(i) * i / h, model.i_min, split, 1e-10).value;
    let above = integrate(|i| model.delay_pdf(i), split, model.i_max, 1e-10).value;
    Ok(below + above)
}

pub const DEFAULT_PERCENTILES: [u32; 4] = [50, 68, 90, 99];
pub const DEFAULT_THRESHOLDS: [f64; 3] = [60.0, 600.0, 3600.0];

#[derive(Debug, Clone, PartialEq)]
pub struct EfdReport {
    /// Query gap, seconds.
    pub h: f64,
    /// Mean end-to-end EFD over root-to-leaf chains.
    pub empirical_mean: f64,
    /// Mean over every forwarded message.
    pub per_forward_mean: f64,
    pub empirical_percentiles: BTreeMap<u32, f64>,
    /// Fraction of forwarded messages with exactly zero EFD.
    pub fraction_zero: f64,
    /// Fraction of forwarding hops that added no delay.
    pub edge_fraction_zero: f64,
    /// (threshold seconds, fraction of forwards at or below it).
    pub within: Vec<(f64, f64)>,
    pub analytical_mean: Option<f64>,
    pub relative_gap: Option<f64>,
    pub forwards: usize,
    pub chains: usize,
    /// Sorted per-forward EFD values, seconds.
    pub samples: Vec<f64>,
}

impl EfdReport {
    pub fn with_model(mut self, model: &FittedModel) -> Result<Self, AnalyticsError> {
        let ana = predict_efd(self.h, model)?;
        self.analytical_mean = Some(ana);
        self.relative_gap = Some(relative_gap(self.empirical_mean, ana));
        Ok(self)
    }

    /// Two columns, `efd_seconds,cumulative_fraction`, one row per distinct
    /// value.
    pub fn cdf_csv(&self) -> String {
        let mut out = String::from("efd_seconds,cumulative_fraction\n");
        let n = self.samples.len() as f64;
        let mut i = 0;
        while i < self.samples.len() {
            let v = self.samples[i];
            let mut j = i;
            while j < self.samples.len() && self.samples[j] == v {
                j += 1;
            }
            let _ = writeln!(out, "{v:.3},{:.6}", j as f64 / n);
            i = j;
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "h={:.3}", self.h);
        let _ = writeln!(s, "forwards={}", self.forwards);
        let _ = writeln!(s, "chains={}", self.chains);
        let _ = writeln!(s, "empirical_mean={:.6}", self.empirical_mean);
        let _ = writeln!(s, "per_forward_mean={:.6}", self.per_forward_mean);
        for (p, v) in &self.empirical_percentiles {
            let _ = writeln!(s, "p{p}={v:.3}");
        }
        let _ = writeln!(s, "fraction_zero={:.6}", self.fraction_zero);
        let _ = writeln!(s, "edge_fraction_zero={:.6}", self.edge_fraction_zero);
        for (t, f) in &self.within {
            let _ = writeln!(s, "within_{t}s={f:.6}");
        }
        if let (Some(a), Some(g)) = (self.analytical_mean, self.relative_gap) {
            let _ = writeln!(s, "analytical_mean={a:.6}");
            let _ = writeln!(s, "relative_gap={g:.6}");
        }
        s
    }
}

pub fn relative_gap(empirical: f64, analytical: f64) -> f64 {
    if analytical == 0.0 {
        if empirical == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (empirical - analytical) / analytical
    }
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], p: u32) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p as f64 / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Per-forward EFD is `T_posted − T_trace` of each forwarded message in the
/// forest. Every forward must have a posted record.
pub fn empirical_efd(log: &SimLog, forest: &ForwardForest) -> Result<EfdReport, AnalyticsError> {
    let posted: std::collections::HashMap<&str, i64> =
        log.messages.iter().map(|r| (r.mid.as_str(), (r.t_posted - r.t_trace))).collect();
    let mut missing = Vec::new();
    let mut efd_ms = vec![0i64; forest.nodes.len()];
    for (i, n) in forest.nodes.iter().enumerate() {
        match posted.get(n.mid.as_str()) {
            Some(&e) => efd_ms[i] = e,
            None if n.parent.is_some() => missing.push(n.mid.clone()),
            None => {}
        }
    }
    if !missing.is_empty() {
        return Err(AnalyticsError::MissingRecords(missing));
    }
    let mut samples = Vec::new();
    let mut zero = 0usize;
    let mut edge_zero = 0usize;
    for (i, n) in forest.nodes.iter().enumerate() {
        let Some(p) = n.parent else { continue };
        samples.push(efd_ms[i] as f64 / 1000.0);
        zero += (efd_ms[i] == 0) as usize;
        edge_zero += (efd_ms[i] - efd_ms[p] == 0) as usize;
    }
    samples.sort_by(f64::total_cmp);
    let leaves: Vec<f64> = forest.chain_leaves().map(|i| efd_ms[i] as f64 / 1000.0).collect();
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let frac = |k: usize| if samples.is_empty() { 0.0 } else { k as f64 / samples.len() as f64 };
    let within = DEFAULT_THRESHOLDS
        .iter()
        .map(|&t| (t, frac(samples.partition_point(|&x| x <= t))))
        .collect();
    Ok(EfdReport {
        h: log.meta.h.as_secs_f64(),
        empirical_mean: mean(&leaves),
        per_forward_mean: mean(&samples),
        empirical_percentiles: DEFAULT_PERCENTILES.iter().map(|&p| (p, percentile(&samples, p))).collect(),
        fraction_zero: frac(zero),
        edge_fraction_zero: frac(edge_zero),
        within,
        analytical_mean: None,
        relative_gap: None,
        forwards: samples.len(),
        chains: leaves.len(),
        samples,
    })
}
