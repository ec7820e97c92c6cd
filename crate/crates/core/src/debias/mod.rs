//! One-step de-biasing of a lasso fit.
//!
//! All variants share the form `b = xi_hat - M * score(xi_hat)` and differ in
//! the matrix `M` standing in for the inverse Hessian:
//!
//! * [`refine_debias`] inverts the sample Hessian directly (REF-DS).
//! * [`qp_debias_fit`] builds `M` row by row from the constrained program
//!   `min z' S z  s.t. ||S z - e_j||_inf <= mu`; at `mu = 0` it reproduces REF-DS.
//! * [`orig_debias`] uses the node-wise lasso estimate (ORIG-DS).

mod hessian;
mod nodewise;
mod qp;

pub use hessian::{condition_number, hessian, invert_hessian, HessianModel, MAX_CONDITION};
pub use nodewise::{nodewise_column, nodewise_from_design, nodewise_row, nodewise_theta, NodewiseColumn, NodewiseOptions, NodewiseTheta};
pub use qp::{qp_debias, qp_matrix, QpOptions};

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{CoefMap, Dataset};
use crate::error::{Error, Result};
use crate::family::GlmFamily;
use crate::lasso::{score, LassoFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "REF-DS")]
    RefDs,
    #[serde(rename = "ORIG-DS")]
    OrigDs,
    #[serde(rename = "QP")]
    Qp { mu: f64 },
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::RefDs => f.write_str("REF-DS"),
            Method::OrigDs => f.write_str("ORIG-DS"),
            Method::Qp { mu } => write!(f, "QP({mu})"),
        }
    }
}

/// A de-biased estimate together with its asymptotic variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasedFit {
    pub b_hat: DVector<f64>,
    /// The matrix `M` used in the correction step.
    pub theta_hat: DMatrix<f64>,
    /// Asymptotic variance of `sqrt(n) (b_hat - xi)`: `theta_hat` itself for
    /// REF-DS, `M S M'` otherwise.
    pub avar: DMatrix<f64>,
    pub method: Method,
    pub n: usize,
    pub xi_init: DVector<f64>,
    pub lambda: f64,
}

impl DebiasedFit {
    pub fn dim(&self) -> usize {
        self.b_hat.len()
    }

    /// Model-based standard errors, `sqrt(avar_jj / n)`.
    pub fn standard_errors(&self) -> DVector<f64> {
        let n = self.n as f64;
        DVector::from_iterator(self.dim(), (0..self.dim()).map(|j| (self.avar[(j, j)] / n).sqrt()))
    }

    /// Express the fit on the original covariate scale.
    ///
    /// Estimates map through `T`, variances through `T V T'`. `theta_hat` is
    /// left on the fitting scale.
    pub fn to_original(&self, map: &CoefMap) -> DebiasedFit {
        DebiasedFit {
            b_hat: map.to_original(&self.b_hat),
            avar: map.covariance_to_original(&self.avar),
            xi_init: map.to_original(&self.xi_init),
            ..self.clone()
        }
    }
}

fn check_fit(d: &Dataset, fit: &LassoFit) -> Result<()> {
    if fit.xi_hat.len() != d.x.ncols() {
        return Err(Error::Domain(format!(
            "fit has {} coefficients, design has {} columns",
            fit.xi_hat.len(),
            d.x.ncols()
        )));
    }
    if !fit.converged {
        return Err(Error::NonConvergence {
            iterations: fit.n_iter,
            reason: "initial lasso fit did not converge".into(),
            last_iterate: fit.xi_hat.as_slice().to_vec(),
        });
    }
    Ok(())
}

/// Sandwich `M S M'`, symmetrized.
pub fn sandwich(m: &DMatrix<f64>, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let v = m * sigma * m.transpose();
    (&v + v.transpose()) * 0.5
}

/// Refined de-biased estimator: `b = xi_hat - S^{-1} score(xi_hat)` with `S`
/// the sample Hessian at the lasso estimate.
pub fn refine_debias(d: &Dataset, family: GlmFamily, fit: &LassoFit) -> Result<DebiasedFit> {
    check_fit(d, fit)?;
    let h = hessian(d, family, &fit.xi_hat)?;
    let theta = invert_hessian(&h)?;
    let g = score(d, family, &fit.xi_hat);
    let b_hat = &fit.xi_hat - &theta * g;
    Ok(DebiasedFit {
        b_hat,
        avar: theta.clone(),
        theta_hat: theta,
        method: Method::RefDs,
        n: d.n(),
        xi_init: fit.xi_hat.clone(),
        lambda: fit.lambda,
    })
}

/// De-biasing with a node-wise lasso matrix (or any supplied `M`).
pub fn orig_debias(
    d: &Dataset,
    family: GlmFamily,
    fit: &LassoFit,
    theta_tilde: &DMatrix<f64>,
) -> Result<DebiasedFit> {
    check_fit(d, fit)?;
    let k = d.x.ncols();
    if theta_tilde.shape() != (k, k) {
        return Err(Error::Domain(format!(
            "theta has shape {:?}, expected ({k}, {k})",
            theta_tilde.shape()
        )));
    }
    let h = hessian(d, family, &fit.xi_hat)?;
    let g = score(d, family, &fit.xi_hat);
    let b_hat = &fit.xi_hat - theta_tilde * g;
    Ok(DebiasedFit {
        b_hat,
        avar: sandwich(theta_tilde, &h.sigma_hat),
        theta_hat: theta_tilde.clone(),
        method: Method::OrigDs,
        n: d.n(),
        xi_init: fit.xi_hat.clone(),
        lambda: fit.lambda,
    })
}

/// De-biasing with `M` assembled from the constrained program at `mu`.
pub fn qp_debias_fit(
    d: &Dataset,
    family: GlmFamily,
    fit: &LassoFit,
    mu: f64,
    opts: &QpOptions,
) -> Result<DebiasedFit> {
    check_fit(d, fit)?;
    let h = hessian(d, family, &fit.xi_hat)?;
    let m = qp_matrix(&h, mu, opts)?;
    let g = score(d, family, &fit.xi_hat);
    let b_hat = &fit.xi_hat - &m * g;
    // at mu = 0 the rows are the exact inverse and the variance is M itself
    let avar = if mu == 0.0 {
        m.clone()
    } else {
        sandwich(&m, &h.sigma_hat)
    };
    Ok(DebiasedFit {
        b_hat,
        avar,
        theta_hat: m,
        method: Method::Qp { mu },
        n: d.n(),
        xi_init: fit.xi_hat.clone(),
        lambda: fit.lambda,
    })
}
