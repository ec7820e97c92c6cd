//! Canonical-link exponential families.
//!
//! The per-observation loss is `rho(y, a) = -y * a + b(a)` where `a = x' xi`
//! is the linear predictor and `b` the cumulant function. For canonical links
//! the second derivative in `a` does not depend on `y`.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Linear predictors are clamped to this range for binomial and poisson.
pub const PREDICTOR_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlmFamily {
    Gaussian,
    Binomial,
    Poisson,
}

impl fmt::Display for GlmFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GlmFamily::Gaussian => "gaussian",
            GlmFamily::Binomial => "binomial",
            GlmFamily::Poisson => "poisson",
        })
    }
}

impl FromStr for GlmFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(GlmFamily::Gaussian),
            "binomial" | "logistic" => Ok(GlmFamily::Binomial),
            "poisson" => Ok(GlmFamily::Poisson),
            other => Err(Error::Config(format!("unknown family '{other}'"))),
        }
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {v}")))
    }
}

/// Logistic function without overflow for large |a|.
#[inline]
pub fn logistic(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

impl GlmFamily {
    /// Clamp a linear predictor into the range where `b` and its derivatives
    /// are evaluated. Identity for the gaussian family.
    #[inline]
    pub fn clamp(self, a: f64) -> f64 {
        match self {
            GlmFamily::Gaussian => a,
            _ => a.clamp(-PREDICTOR_CLAMP, PREDICTOR_CLAMP),
        }
    }

    /// Cumulant function `b(a)`.
    #[inline]
    pub fn b(self, a: f64) -> f64 {
        let a = self.clamp(a);
        match self {
            GlmFamily::Gaussian => 0.5 * a * a,
            GlmFamily::Binomial => {
                if a <= 0.0 {
                    a.exp().ln_1p()
                } else {
                    a + (-a).exp().ln_1p()
                }
            }
            GlmFamily::Poisson => a.exp(),
        }
    }

    /// Mean function `b'(a)`.
    #[inline]
    pub fn mean(self, a: f64) -> f64 {
        let a = self.clamp(a);
        match self {
            GlmFamily::Gaussian => a,
            GlmFamily::Binomial => logistic(a),
            GlmFamily::Poisson => a.exp(),
        }
    }

    /// Variance function `b''(a)`.
    #[inline]
    pub fn variance(self, a: f64) -> f64 {
        let a = self.clamp(a);
        match self {
            GlmFamily::Gaussian => 1.0,
            GlmFamily::Binomial => {
                let m = logistic(a);
                m * (1.0 - m)
            }
            GlmFamily::Poisson => a.exp(),
        }
    }

    /// Unchecked loss; callers in hot loops have validated inputs already.
    #[inline]
    pub(crate) fn loss_raw(self, y: f64, a: f64) -> f64 {
        -y * self.clamp(a) + self.b(a)
    }

    #[inline]
    pub(crate) fn dloss_raw(self, y: f64, a: f64) -> f64 {
        -y + self.mean(a)
    }

    /// `rho(y, a) = -y a + b(a)`.
    pub fn loss(self, y: f64, a: f64) -> Result<f64> {
        check_finite("y", y)?;
        check_finite("a", a)?;
        Ok(self.loss_raw(y, a))
    }

    /// Derivative of the loss in the linear predictor, `-y + b'(a)`.
    pub fn dloss(self, y: f64, a: f64) -> Result<f64> {
        check_finite("y", y)?;
        check_finite("a", a)?;
        Ok(self.dloss_raw(y, a))
    }

    /// Second derivative of the loss in the linear predictor, `b''(a)`.
    pub fn d2loss(self, a: f64) -> Result<f64> {
        check_finite("a", a)?;
        Ok(self.variance(a))
    }

    /// Check that a response value is in the support of the family.
    pub fn validate_response(self, y: &[f64]) -> Result<()> {
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Data(format!("response row {i} is not finite")));
            }
            match self {
                GlmFamily::Binomial if v != 0.0 && v != 1.0 => {
                    return Err(Error::Data(format!(
                        "binomial response must be 0 or 1, row {i} has {v}"
                    )));
                }
                GlmFamily::Poisson if v < 0.0 => {
                    return Err(Error::Data(format!(
                        "poisson response must be nonnegative, row {i} has {v}"
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Intercept-only maximum likelihood estimate on the linear-predictor scale.
    pub fn null_intercept(self, y: &[f64]) -> Result<f64> {
        let n = y.len() as f64;
        let ybar = y.iter().sum::<f64>() / n;
        match self {
            GlmFamily::Gaussian => Ok(ybar),
            GlmFamily::Binomial => {
                if ybar <= 0.0 || ybar >= 1.0 {
                    Err(Error::Data(
                        "binomial response has a single class; the null model is degenerate".into(),
                    ))
                } else {
                    Ok((ybar / (1.0 - ybar)).ln())
                }
            }
            GlmFamily::Poisson => {
                if ybar <= 0.0 {
                    Err(Error::Data("poisson response is identically zero".into()))
                } else {
                    Ok(ybar.ln())
                }
            }
        }
    }
}
