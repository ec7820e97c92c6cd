//! Rows of an approximate inverse from
//! `min z' S z  subject to  ||S z - e_j||_inf <= mu`.
//!
//! For positive definite `S` the program has the same solution as the
//! unconstrained `min z' S z / 2 - z_j + mu ||z||_1`: its stationarity
//! condition `S z - e_j = -mu s` with `s` in the subdifferential of `||z||_1`
//! is exactly feasibility plus complementary slackness of the original
//! program. That penalized form is solved by cyclic coordinate descent.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::hessian::HessianModel;
use crate::error::{Error, Result};
use crate::lasso::soft_threshold;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpOptions {
    pub max_sweeps: usize,
    /// Stop once every optimality condition holds to this tolerance.
    pub tol: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            max_sweeps: 50_000,
            tol: 1e-10,
        }
    }
}

fn unit(k: usize, j: usize) -> DVector<f64> {
    let mut e = DVector::zeros(k);
    e[j] = 1.0;
    e
}

/// Row `j` of the constrained-program matrix at tuning level `mu`.
pub fn qp_debias(h: &HessianModel, j: usize, mu: f64, opts: &QpOptions) -> Result<DVector<f64>> {
    let k = h.dim();
    if j >= k {
        return Err(Error::Domain(format!("row {j} out of range for dimension {k}")));
    }
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("mu must be finite and >= 0, got {mu}")));
    }
    if mu == 0.0 {
        let l = h.chol.as_ref().ok_or_else(|| {
            Error::SingularHessian("mu = 0 needs a positive definite Hessian".into())
        })?;
        let y = l
            .solve_lower_triangular(&unit(k, j))
            .ok_or_else(|| Error::SingularHessian("zero pivot".into()))?;
        return l
            .tr_solve_lower_triangular(&y)
            .ok_or_else(|| Error::SingularHessian("zero pivot".into()));
    }
    let s = &h.sigma_hat;
    if (0..k).any(|i| !(s[(i, i)] > 0.0)) {
        return Err(Error::SingularHessian("nonpositive diagonal".into()));
    }

    let mut z = DVector::<f64>::zeros(k);
    // r = S z - e_j
    let mut r = -unit(k, j);
    for sweep in 1..=opts.max_sweeps {
        for c in 0..k {
            let scc = s[(c, c)];
            let old = z[c];
            let new = soft_threshold(scc * old - r[c], mu) / scc;
            let delta = new - old;
            if delta != 0.0 {
                z[c] = new;
                r.axpy(delta, &s.column(c), 1.0);
            }
        }
        let violation = (0..k)
            .map(|c| {
                if z[c] != 0.0 {
                    (r[c] + mu * z[c].signum()).abs()
                } else {
                    (r[c].abs() - mu).max(0.0)
                }
            })
            .fold(0.0, f64::max);
        if violation <= opts.tol {
            return Ok(z);
        }
        if sweep == opts.max_sweeps {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_sweeps,
        reason: format!("constrained inverse row {j} at mu = {mu}"),
        last_iterate: z.as_slice().to_vec(),
    })
}

/// Stack all rows into `M`.
pub fn qp_matrix(h: &HessianModel, mu: f64, opts: &QpOptions) -> Result<DMatrix<f64>> {
    let k = h.dim();
    let mut m = DMatrix::zeros(k, k);
    for j in 0..k {
        let row = qp_debias(h, j, mu, opts)?;
        m.set_row(j, &row.transpose());
    }
    Ok(m)
}
