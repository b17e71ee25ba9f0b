use std::fmt::Write as _;

use super::dist::{normalize_z_i, normalize_z_l, ChainLengthLaw, TruncatedPowerLaw};
use super::AnalyticsError;

/// Fitted delay law `p(i) = i^a 10^b / Z_i` on `[i_min, i_max]` and length
/// law `p(l) = 10^(c·l + d) / Z_l`, plus the directly averaged chain length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedModel {
    pub a: f64,
    pub b: f64,
    pub i_min: f64,
    pub i_max: f64,
    pub z_i: f64,
    pub c: f64,
    pub d: f64,
    pub z_l: f64,
    pub mean_l: f64,
}

impl FittedModel {
    /// Builds a model, deriving both normalizers.
    pub fn new(a: f64, b: f64, i_min: f64, i_max: f64, c: f64, d: f64, mean_l: f64) -> Result<Self, AnalyticsError> {
        let m = FittedModel {
            a,
            b,
            i_min,
            i_max,
            z_i: normalize_z_i(a, b, i_min, i_max)?,
            c,
            d,
            z_l: normalize_z_l(c, d)?,
            mean_l,
        };
        m.validate()?;
        Ok(m)
    }

    /// Constants fitted on the one-day microblog trace.
    pub fn baseline() -> Self {
        FittedModel::new(-1.03, 4.5, 1.0, 30265.0, -0.7, 4.2, 1.14).expect("baseline constants are valid")
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        let all = [self.a, self.b, self.i_min, self.i_max, self.z_i, self.c, self.d, self.z_l, self.mean_l];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(AnalyticsError::InvalidModel("non-finite parameter".into()));
        }
        if !(self.i_min > 0.0 && self.i_min < self.i_max) {
            return Err(AnalyticsError::InvalidModel(format!("need 0 < i_min < i_max, got [{}, {}]", self.i_min, self.i_max)));
        }
        if self.c.is_nan() || self.c >= 0.0 {
            return Err(AnalyticsError::InvalidModel(format!("c must be negative, got {}", self.c)));
        }
        if !(self.z_i > 0.0 && self.z_l > 0.0) {
            return Err(AnalyticsError::InvalidModel("normalizers must be positive".into()));
        }
        if self.mean_l < 0.0 {
            return Err(AnalyticsError::InvalidModel(format!("mean_L must be non-negative, got {}", self.mean_l)));
        }
        Ok(())
    }

    pub fn delay_law(&self) -> TruncatedPowerLaw {
        TruncatedPowerLaw::new(self.a, self.i_min, self.i_max).expect("validated bounds")
    }

    pub fn length_law(&self) -> ChainLengthLaw {
        ChainLengthLaw::new(self.c).expect("validated slope")
    }

    /// `p(i)` exactly as parameterized, `i^a 10^b / Z_i`.
    pub fn delay_pdf(&self, i: f64) -> f64 {
        if i < self.i_min || i > self.i_max {
            0.0
        } else {
            i.powf(self.a) * 10f64.powf(self.b) / self.z_i
        }
    }

    pub fn with_mean_l(mut self, mean_l: f64) -> Self {
        self.mean_l = mean_l;
        self
    }

    /// `key=value` lines, one parameter each.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    fn fields(&self) -> [(&'static str, f64); 9] {
        [
            ("a", self.a),
            ("b", self.b),
            ("i_min", self.i_min),
            ("i_max", self.i_max),
            ("z_i", self.z_i),
            ("c", self.c),
            ("d", self.d),
            ("z_l", self.z_l),
            ("mean_l", self.mean_l),
        ]
    }

    /// Parses `to_text` output. `z_i` and `z_l` may be omitted and are then
    /// derived; `#` lines are comments.
    pub fn from_text(text: &str) -> Result<Self, AnalyticsError> {
        let mut vals: std::collections::HashMap<&str, f64> = std::collections::HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| AnalyticsError::InvalidModel(format!("line {}: expected key=value", n + 1)))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| AnalyticsError::InvalidModel(format!("line {}: bad number {v:?}", n + 1)))?;
            vals.insert(k.trim(), v);
        }
        let get = |k: &str| vals.get(k).copied().ok_or_else(|| AnalyticsError::InvalidModel(format!("missing {k}")));
        let mut m = FittedModel::new(get("a")?, get("b")?, get("i_min")?, get("i_max")?, get("c")?, get("d")?, get("mean_l")?)?;
        if let Some(&z) = vals.get("z_i") {
            m.z_i = z;
        }
        if let Some(&z) = vals.get("z_l") {
            m.z_l = z;
        }
        m.validate()?;
        Ok(m)
    }
}
