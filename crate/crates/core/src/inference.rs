//! Wald intervals, regions and tests for linear combinations of de-biased
//! coefficients.
//!
//! For a contrast `alpha` the estimate is `alpha' b` with standard error
//! `sqrt(alpha' V alpha / n)`, where `V` is the fit's asymptotic variance.
//! A region for `A b` with `m` rows is the ellipsoid
//! `n (A b - a)' (A V A')^{-1} (A b - a) <= chi2_{m}(upper = 1 - level)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::debias::DebiasedFit;
use crate::error::{Error, Result};
use crate::stats::{chi2_upper_quantile, norm_sf, two_sided_z};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiResult {
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub alpha_n: Vec<f64>,
}

impl CiResult {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionResult {
    pub center: DVector<f64>,
    /// `n (A V A')^{-1}`.
    pub shape: DMatrix<f64>,
    pub threshold: f64,
    pub level: f64,
}

impl RegionResult {
    pub fn distance(&self, a: &DVector<f64>) -> f64 {
        let d = &self.center - a;
        d.dot(&(&self.shape * &d))
    }

    pub fn contains(&self, a: &DVector<f64>) -> bool {
        self.distance(a) <= self.threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    pub z: f64,
    pub p_value: f64,
}

fn check_contrast(fit: &DebiasedFit, alpha: &DVector<f64>) -> Result<()> {
    if alpha.len() != fit.dim() {
        return Err(Error::Domain(format!(
            "contrast has length {}, expected {}",
            alpha.len(),
            fit.dim()
        )));
    }
    if !(alpha.norm() > 0.0) {
        return Err(Error::Domain("contrast must be nonzero".into()));
    }
    Ok(())
}

/// `(alpha' b, sqrt(alpha' V alpha / n))`.
pub fn contrast_estimate(fit: &DebiasedFit, alpha: &DVector<f64>) -> Result<(f64, f64)> {
    check_contrast(fit, alpha)?;
    let q = alpha.dot(&(&fit.avar * alpha));
    if !(q > 0.0) {
        return Err(Error::Degenerate(format!(
            "contrast variance {q:.3e} is not positive"
        )));
    }
    Ok((alpha.dot(&fit.b_hat), (q / fit.n as f64).sqrt()))
}

pub fn wald_ci(fit: &DebiasedFit, alpha: &DVector<f64>, level: f64) -> Result<CiResult> {
    let z = two_sided_z(level)?;
    let (estimate, se) = contrast_estimate(fit, alpha)?;
    Ok(CiResult {
        estimate,
        se,
        lower: estimate - z * se,
        upper: estimate + z * se,
        level,
        alpha_n: alpha.as_slice().to_vec(),
    })
}

pub fn wald_test(fit: &DebiasedFit, alpha: &DVector<f64>, null_value: f64) -> Result<WaldTest> {
    let (estimate, se) = contrast_estimate(fit, alpha)?;
    let z = (estimate - null_value) / se;
    Ok(WaldTest {
        z,
        p_value: (2.0 * norm_sf(z.abs())).min(1.0),
    })
}

pub fn confidence_region(fit: &DebiasedFit, a: &DMatrix<f64>, level: f64) -> Result<RegionResult> {
    let m = a.nrows();
    if m == 0 || a.ncols() != fit.dim() {
        return Err(Error::Domain(format!(
            "contrast matrix is {}x{}, expected m x {}",
            m,
            a.ncols(),
            fit.dim()
        )));
    }
    if m > fit.dim() {
        return Err(Error::Domain("more contrast rows than coefficients".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level must lie in (0, 1), got {level}")));
    }
    let cov = a * &fit.avar * a.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    let eig = cov.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 1e-12 * hi) {
        return Err(Error::Degenerate(format!(
            "A V A' is rank deficient (eigenvalues {lo:.3e} .. {hi:.3e})"
        )));
    }
    let chol = nalgebra::Cholesky::new(cov)
        .ok_or_else(|| Error::Degenerate("A V A' is not positive definite (rank deficient)".into()))?;
    let inv = chol.inverse();
    let shape = (&inv + inv.transpose()) * (0.5 * fit.n as f64);
    Ok(RegionResult {
        center: a * &fit.b_hat,
        shape,
        threshold: chi2_upper_quantile(m, 1.0 - level)?,
        level,
    })
}

/// One line of a coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefRow {
    pub coef: String,
    pub est: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    pub p: f64,
}

/// Per-coefficient intervals and tests against zero.
pub fn coefficient_table(fit: &DebiasedFit, names: &[String], level: f64) -> Result<Vec<CoefRow>> {
    if names.len() != fit.dim() {
        return Err(Error::Domain("one name per coefficient required".into()));
    }
    let k = fit.dim();
    (0..k)
        .map(|j| {
            let mut e = DVector::zeros(k);
            e[j] = 1.0;
            let ci = wald_ci(fit, &e, level)?;
            let t = wald_test(fit, &e, 0.0)?;
            Ok(CoefRow {
                coef: names[j].clone(),
                est: ci.estimate,
                se: ci.se,
                lower: ci.lower,
                upper: ci.upper,
                p: t.p_value,
            })
        })
        .collect()
}
