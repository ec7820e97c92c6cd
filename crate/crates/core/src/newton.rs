//! Unpenalized maximum likelihood by Newton-Raphson with step halving.

use nalgebra::DVector;

use crate::data::Dataset;
use crate::debias::{hessian, invert_hessian};
use crate::error::{Error, Result};
use crate::family::GlmFamily;
use crate::lasso::{mean_loss, score};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub max_halvings: usize,
    /// Any coefficient beyond this in absolute value is taken as divergence
    /// (separation in logistic models).
    pub divergence_bound: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 200,
            tol: 1e-10,
            max_halvings: 30,
            divergence_bound: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub xi_hat: DVector<f64>,
    pub iterations: usize,
    /// Model-based standard errors from the inverse Hessian at the estimate.
    pub se: DVector<f64>,
}

pub fn fit_mle(d: &Dataset, family: GlmFamily, opts: &NewtonOptions) -> Result<MleFit> {
    family.validate_response(d.y.as_slice())?;
    let k = d.x.ncols();
    if k > d.n() {
        return Err(Error::Domain("maximum likelihood needs p + 1 <= n".into()));
    }
    let mut xi = DVector::zeros(k);
    xi[0] = family.null_intercept(d.y.as_slice()).unwrap_or(0.0);
    let mut f = mean_loss(d, family, &xi);
    for it in 1..=opts.max_iter {
        let h = hessian(d, family, &xi)?;
        let theta = invert_hessian(&h)?;
        let g = score(d, family, &xi);
        let step = &theta * &g;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = &xi - &step * t;
            let ft = mean_loss(d, family, &trial);
            if ft <= f + 1e-12 * f.abs().max(1.0) {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((next, fnew)) = accepted else {
            return Err(Error::NonConvergence {
                iterations: it,
                reason: "Newton step failed to decrease the loss".into(),
                last_iterate: xi.as_slice().to_vec(),
            });
        };
        let change = (&next - &xi).amax();
        xi = next;
        f = fnew;
        if xi.amax() > opts.divergence_bound {
            return Err(Error::NonConvergence {
                iterations: it,
                reason: format!("coefficients exceed {} (divergence)", opts.divergence_bound),
                last_iterate: xi.as_slice().to_vec(),
            });
        }
        if change < opts.tol {
            let h = hessian(d, family, &xi)?;
            let theta = invert_hessian(&h)?;
            let n = d.n() as f64;
            let se = theta.diagonal().map(|v| (v / n).sqrt());
            return Ok(MleFit {
                xi_hat: xi,
                iterations: it,
                se,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        reason: "Newton-Raphson iteration cap".into(),
        last_iterate: xi.as_slice().to_vec(),
    })
}
