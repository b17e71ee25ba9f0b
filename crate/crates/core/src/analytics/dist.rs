//! The delay and chain-length laws.

use rand::Rng;

use super::AnalyticsError;

/// `∫_{i_min}^{i_max} i^a 10^b di`.
pub fn normalize_z_i(a: f64, b: f64, i_min: f64, i_max: f64) -> Result<f64, AnalyticsError> {
    if !(i_min > 0.0 && i_min < i_max && i_max.is_finite()) {
        return Err(AnalyticsError::InvalidModel(format!("need 0 < i_min < i_max, got [{i_min}, {i_max}]")));
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(AnalyticsError::InvalidModel("non-finite a or b".into()));
    }
    Ok(10f64.powf(b) * power_integral(a + 1.0, i_min, i_max))
}

/// `∫_lo^hi x^(k-1) dx`, the log branch at k = 0.
fn power_integral(k: f64, lo: f64, hi: f64) -> f64 {
    if k.abs() < 1e-12 {
        (hi / lo).ln()
    } else {
        (hi.powf(k) - lo.powf(k)) / k
    }
}

/// `∫_1^∞ 10^(c·l + d) dl`.
pub fn normalize_z_l(c: f64, d: f64) -> Result<f64, AnalyticsError> {
    if c.is_nan() || c >= 0.0 || !d.is_finite() {
        return Err(AnalyticsError::InvalidModel(format!("length slope must be negative, got c = {c}")));
    }
    Ok(-10f64.powf(c + d) / (c * std::f64::consts::LN_10))
}

/// Power law `∝ i^a` truncated to `[i_min, i_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedPowerLaw {
    pub a: f64,
    pub i_min: f64,
    pub i_max: f64,
    norm: f64,
}

impl TruncatedPowerLaw {
    pub fn new(a: f64, i_min: f64, i_max: f64) -> Result<Self, AnalyticsError> {
        let norm = normalize_z_i(a, 0.0, i_min, i_max)?;
        Ok(TruncatedPowerLaw { a, i_min, i_max, norm })
    }

    pub fn pdf(&self, i: f64) -> f64 {
        if i < self.i_min || i > self.i_max {
            0.0
        } else {
            i.powf(self.a) / self.norm
        }
    }

    pub fn cdf(&self, i: f64) -> f64 {
        if i <= self.i_min {
            0.0
        } else if i >= self.i_max {
            1.0
        } else {
            power_integral(self.a + 1.0, self.i_min, i) / self.norm
        }
    }

    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let k = self.a + 1.0;
        let x = if k.abs() < 1e-12 {
            self.i_min * (self.i_max / self.i_min).powf(u)
        } else {
            let lo = self.i_min.powf(k);
            (lo + u * (self.i_max.powf(k) - lo)).powf(1.0 / k)
        };
        x.clamp(self.i_min, self.i_max)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.inverse_cdf(rng.gen::<f64>())
    }
}

/// Geometric law on `{1, 2, ...}` with `P(L = l) ∝ 10^(c·l)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainLengthLaw {
    pub c: f64,
    ratio: f64,
}

impl ChainLengthLaw {
    pub fn new(c: f64) -> Result<Self, AnalyticsError> {
        if c.is_nan() || c >= 0.0 {
            return Err(AnalyticsError::InvalidModel(format!("length slope must be negative, got c = {c}")));
        }
        Ok(ChainLengthLaw { c, ratio: 10f64.powf(c) })
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn pmf(&self, l: u32) -> f64 {
        if l == 0 {
            0.0
        } else {
            (1.0 - self.ratio) * self.ratio.powi(l as i32 - 1)
        }
    }

    pub fn mean(&self) -> f64 {
        1.0 / (1.0 - self.ratio)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        // 1 - gen() lies in (0, 1], so the log is finite
        let u: f64 = 1.0 - rng.gen::<f64>();
        let extra = (u.ln() / self.ratio.ln()).floor();
        1 + extra.min(u32::MAX as f64 - 1.0) as u32
    }
}

/// `Σ_{l=1}^{n} 10^(c·l + d) / Z_l`, summed term by term.
pub fn discrete_length_mass(c: f64, d: f64, z_l: f64, n: u32) -> f64 {
    (1..=n).map(|l| 10f64.powf(c * l as f64 + d) / z_l).sum()
}
