//! Log-space least-squares fits of the delay and length histograms.

use std::collections::BTreeMap;

use super::dist::{normalize_z_i, normalize_z_l};
use super::AnalyticsError;

pub const MIN_FIT_SAMPLES: usize = 100;
pub const DEFAULT_BINS_PER_DECADE: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub a: f64,
    pub b: f64,
    pub z_i: f64,
    pub i_min: f64,
    pub i_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFit {
    pub c: f64,
    pub d: f64,
    pub z_l: f64,
}

/// Least-squares line `y = slope·x + intercept`, each point weighted.
pub(crate) fn weighted_line(points: &[(f64, f64, f64)]) -> Option<(f64, f64)> {
    let sw: f64 = points.iter().map(|p| p.2).sum();
    if points.len() < 2 || sw <= 0.0 {
        return None;
    }
    let mx = points.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = points.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= f64::EPSILON * sw {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Histogram with `bins_per_decade` logarithmic bins spanning the sample
/// range; regresses log10(count / bin width) on log10(geometric bin centre).
/// Each non-empty bin is weighted by its count, the inverse of the Poisson
/// variance of its log.
pub fn fit_power_law(samples: &[f64], bins_per_decade: u32) -> Result<PowerLawFit, AnalyticsError> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(AnalyticsError::InsufficientSamples { needed: MIN_FIT_SAMPLES, got: samples.len() });
    }
    if bins_per_decade == 0 {
        return Err(AnalyticsError::InvalidInput("bins per decade must be positive".into()));
    }
    if samples.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(AnalyticsError::InvalidInput("delays must be finite and positive".into()));
    }
    let i_min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let i_max = samples.iter().copied().fold(0.0, f64::max);
    if i_max <= i_min {
        return Err(AnalyticsError::ZeroWidthSupport(i_min));
    }
    let decades = (i_max / i_min).log10();
    let n_bins = ((decades * bins_per_decade as f64).ceil() as usize).max(1);
    let step = decades / n_bins as f64;
    let mut counts = vec![0u64; n_bins];
    for &s in samples {
        let k = (((s / i_min).log10() / step) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    let points: Vec<(f64, f64, f64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| {
            let lo = i_min * 10f64.powf(k as f64 * step);
            let hi = i_min * 10f64.powf((k + 1) as f64 * step);
            let centre = (lo * hi).sqrt();
            ((centre).log10(), (c as f64 / (hi - lo)).log10(), c as f64)
        })
        .collect();
    let (a, b) = weighted_line(&points).ok_or(AnalyticsError::DegenerateFit)?;
    let z_i = normalize_z_i(a, b, i_min, i_max)?;
    Ok(PowerLawFit { a, b, z_i, i_min, i_max })
}

/// Regresses log10(count) on length over lengths seen at least once, each
/// weighted by its count.
pub fn fit_exponential(samples: &[u32]) -> Result<ExponentialFit, AnalyticsError> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(AnalyticsError::InsufficientSamples { needed: MIN_FIT_SAMPLES, got: samples.len() });
    }
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    for &l in samples {
        *counts.entry(l).or_default() += 1;
    }
    let points: Vec<(f64, f64, f64)> =
        counts.iter().map(|(&l, &c)| (l as f64, (c as f64).log10(), c as f64)).collect();
    let (c, d) = weighted_line(&points).ok_or(AnalyticsError::DegenerateFit)?;
    let z_l = normalize_z_l(c, d)?;
    Ok(ExponentialFit { c, d, z_l })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::dist::{ChainLengthLaw, TruncatedPowerLaw};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn line_fit() {
        let pts: Vec<_> = (0..5).map(|x| (x as f64, 2.0 * x as f64 + 1.0, 1.0)).collect();
        let (m, q) = weighted_line(&pts).unwrap();
        assert!((m - 2.0).abs() < 1e-12 && (q - 1.0).abs() < 1e-12);
        assert!(weighted_line(&pts[..1]).is_none());
    }

    #[test]
    fn recovers_steep_power_law() {
        let law = TruncatedPowerLaw::new(-1.5, 1.0, 30265.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..100_000).map(|_| law.sample(&mut rng)).collect();
        let fit = fit_power_law(&xs, DEFAULT_BINS_PER_DECADE).unwrap();
        assert!((-1.55..=-1.45).contains(&fit.a), "{fit:?}");
    }

    #[test]
    fn recovers_length_slope() {
        let law = ChainLengthLaw::new(-0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ls: Vec<u32> = (0..100_000).map(|_| law.sample(&mut rng)).collect();
        let fit = fit_exponential(&ls).unwrap();
        assert!((-0.75..=-0.65).contains(&fit.c), "{fit:?}");
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(fit_power_law(&[5.0; 200], 30), Err(AnalyticsError::ZeroWidthSupport(5.0)));
        assert!(matches!(fit_power_law(&[1.0; 10], 30), Err(AnalyticsError::InsufficientSamples { .. })));
        assert_eq!(fit_exponential(&[1; 500]), Err(AnalyticsError::DegenerateFit));
        assert!(matches!(fit_exponential(&[1, 2]), Err(AnalyticsError::InsufficientSamples { .. })));
    }
}
