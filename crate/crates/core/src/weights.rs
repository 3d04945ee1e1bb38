//! Edge-weight distributions.
//!
//! Weights are strictly positive. Each family exposes its quantile function,
//! which is how environments turn counter-based uniforms into weights, and a
//! pair of analytic flags the experiments consult: whether the minimum of the
//! 2d weights at a vertex has a finite d-th moment (the shape theorem's
//! moment condition, which for these families does not depend on d), and
//! whether the weight has a finite exponential moment.

use serde::{Deserialize, Serialize};

use crate::error::{FppError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightSpec {
    /// Exponential with the given rate; mean 1/rate.
    Exponential { rate: f64 },
    /// Uniform on [lo, hi] with 0 <= lo < hi.
    Uniform { lo: f64, hi: f64 },
    /// Shifted power law (Lomax): P(w > t) = (1 + t/scale)^(-alpha).
    /// Heavy tailed; no exponential moment for any alpha.
    ShiftedPower { alpha: f64, scale: f64 },
    /// Deterministic weight; the one non-continuous family.
    Constant { value: f64 },
}

impl WeightSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FppError::Config(msg));
        match *self {
            WeightSpec::Exponential { rate } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return bad(format!("exponential rate must be positive and finite, got {rate}"));
                }
            }
            WeightSpec::Uniform { lo, hi } => {
                if !(lo >= 0.0 && lo.is_finite() && hi.is_finite() && lo < hi) {
                    return bad(format!("uniform support must satisfy 0 <= lo < hi, got [{lo}, {hi}]"));
                }
            }
            WeightSpec::ShiftedPower { alpha, scale } => {
                if !(alpha > 0.0 && alpha.is_finite() && scale > 0.0 && scale.is_finite()) {
                    return bad(format!(
                        "shifted-power needs positive finite alpha and scale, got alpha={alpha}, scale={scale}"
                    ));
                }
            }
            WeightSpec::Constant { value } => {
                if !(value > 0.0 && value.is_finite()) {
                    return bad(format!("constant weight must be positive and finite, got {value}"));
                }
            }
        }
        Ok(())
    }

    /// Whether the distribution is atomless. Ties between edges then occur
    /// with probability zero and geodesics are almost surely unique.
    pub fn is_continuous(&self) -> bool {
        !matches!(self, WeightSpec::Constant { .. })
    }

    /// Whether E[Y^d] is finite for Y the minimum of 2d independent copies.
    /// For every family here the answer is the same for all d >= 1: the
    /// shifted power law has P(Y > t) ~ t^(-2 d alpha), so E[Y^d] is finite
    /// exactly when alpha > 1/2; the others have all moments.
    pub fn finite_min_moment(&self) -> bool {
        match *self {
            WeightSpec::ShiftedPower { alpha, .. } => alpha > 0.5,
            _ => true,
        }
    }

    /// Whether E[exp(a w)] is finite for some a > 0.
    pub fn finite_exponential_moment(&self) -> bool {
        !matches!(self, WeightSpec::ShiftedPower { .. })
    }

    /// Quantile function, defined on the open interval (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        debug_assert!(u > 0.0 && u < 1.0);
        match *self {
            // -ln(1-u)/rate, via ln_1p for accuracy near u = 0.
            WeightSpec::Exponential { rate } => -(-u).ln_1p() / rate,
            WeightSpec::Uniform { lo, hi } => lo + (hi - lo) * u,
            // scale * ((1-u)^(-1/alpha) - 1)
            WeightSpec::ShiftedPower { alpha, scale } => {
                scale * (-(-u).ln_1p() / alpha).exp_m1()
            }
            WeightSpec::Constant { value } => value,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            WeightSpec::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            WeightSpec::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            WeightSpec::ShiftedPower { alpha, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (1.0 + x / scale).powf(-alpha)
                }
            }
            WeightSpec::Constant { value } => {
                if x < value {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Mean weight; None when infinite (shifted power with alpha <= 1).
    pub fn mean(&self) -> Option<f64> {
        match *self {
            WeightSpec::Exponential { rate } => Some(1.0 / rate),
            WeightSpec::Uniform { lo, hi } => Some(0.5 * (lo + hi)),
            WeightSpec::ShiftedPower { alpha, scale } => {
                (alpha > 1.0).then(|| scale / (alpha - 1.0))
            }
            WeightSpec::Constant { value } => Some(value),
        }
    }

    /// Infimum of the support.
    pub fn support_min(&self) -> f64 {
        match *self {
            WeightSpec::Uniform { lo, .. } => lo,
            WeightSpec::Constant { value } => value,
            _ => 0.0,
        }
    }

    pub(crate) fn family_id(&self) -> u8 {
        match self {
            WeightSpec::Exponential { .. } => 0,
            WeightSpec::Uniform { .. } => 1,
            WeightSpec::ShiftedPower { .. } => 2,
            WeightSpec::Constant { .. } => 3,
        }
    }

    pub(crate) fn params(&self) -> (f64, f64) {
        match *self {
            WeightSpec::Exponential { rate } => (rate, 0.0),
            WeightSpec::Uniform { lo, hi } => (lo, hi),
            WeightSpec::ShiftedPower { alpha, scale } => (alpha, scale),
            WeightSpec::Constant { value } => (value, 0.0),
        }
    }

    pub(crate) fn from_parts(id: u8, p0: f64, p1: f64) -> Result<Self> {
        let spec = match id {
            0 => WeightSpec::Exponential { rate: p0 },
            1 => WeightSpec::Uniform { lo: p0, hi: p1 },
            2 => WeightSpec::ShiftedPower { alpha: p0, scale: p1 },
            3 => WeightSpec::Constant { value: p0 },
            _ => return Err(FppError::CorruptFile(format!("unknown weight family id {id}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Two-sided Kolmogorov-Smirnov statistic of a sample against the family cdf.
pub fn ks_statistic(samples: &[f64], spec: &WeightSpec) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = spec.cdf(x);
        d = d.max(((i + 1) as f64 / n - f).abs());
        d = d.max((f - i as f64 / n).abs());
    }
    d
}
