use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::GlmFamily;

/// Inversion is refused above this 1-norm condition number.
pub const MAX_CONDITION: f64 = 1e12;

/// Sample Hessian of the mean loss at a coefficient vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianModel {
    /// `X' W^2 X / n`.
    pub sigma_hat: DMatrix<f64>,
    /// Square roots of the per-row curvatures, `w_i = b''(x_i' xi)^{1/2}`.
    pub weights: DVector<f64>,
    /// Lower Cholesky factor, if `sigma_hat` is numerically positive definite.
    pub chol: Option<DMatrix<f64>>,
    pub xi_at: DVector<f64>,
}

impl HessianModel {
    /// Build from an explicit symmetric matrix (no data behind it).
    pub fn from_matrix(sigma_hat: DMatrix<f64>) -> Result<Self> {
        if !sigma_hat.is_square() {
            return Err(Error::Domain("Hessian must be square".into()));
        }
        let k = sigma_hat.nrows();
        let chol = cholesky_lower(&sigma_hat);
        Ok(HessianModel {
            sigma_hat,
            weights: DVector::zeros(0),
            chol,
            xi_at: DVector::zeros(k),
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma_hat.nrows()
    }

    /// The weighted design `W X`.
    pub fn weighted_design(&self, d: &Dataset) -> DMatrix<f64> {
        let mut xw = d.x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= self.weights[i];
        }
        xw
    }
}

fn cholesky_lower(s: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::Cholesky::new(s.clone()).map(|c| c.unpack())
}

/// `S = n^{-1} sum_i b''(x_i' xi) x_i x_i'`, with a Cholesky attempt.
pub fn hessian(d: &Dataset, family: GlmFamily, xi: &DVector<f64>) -> Result<HessianModel> {
    if xi.len() != d.x.ncols() {
        return Err(Error::Domain(format!(
            "coefficient length {} does not match {} design columns",
            xi.len(),
            d.x.ncols()
        )));
    }
    if xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("coefficients must be finite".into()));
    }
    let eta = &d.x * xi;
    let weights = eta.map(|a| family.variance(a).sqrt());
    let mut xw = d.x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= weights[i];
    }
    let mut sigma = xw.transpose() * &xw / d.n() as f64;
    symmetrize_from_lower(&mut sigma);
    let chol = cholesky_lower(&sigma);
    Ok(HessianModel {
        sigma_hat: sigma,
        weights,
        chol,
        xi_at: xi.clone(),
    })
}

fn symmetrize_from_lower(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for j in 0..k {
        for i in (j + 1)..k {
            m[(j, i)] = m[(i, j)];
        }
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Exact 1-norm condition number given a matrix and its inverse.
pub fn condition_number(m: &DMatrix<f64>, inv: &DMatrix<f64>) -> f64 {
    one_norm(m) * one_norm(inv)
}

/// `S^{-1}` through the stored Cholesky factor: a forward and a backward
/// triangular solve per unit vector, then symmetrized.
pub fn invert_hessian(h: &HessianModel) -> Result<DMatrix<f64>> {
    let l = h.chol.as_ref().ok_or_else(|| {
        Error::SingularHessian("Cholesky factorization failed (not positive definite)".into())
    })?;
    let k = h.dim();
    let ident = DMatrix::<f64>::identity(k, k);
    let y = l
        .solve_lower_triangular(&ident)
        .ok_or_else(|| Error::SingularHessian("zero pivot in Cholesky factor".into()))?;
    let theta = l
        .tr_solve_lower_triangular(&y)
        .ok_or_else(|| Error::SingularHessian("zero pivot in Cholesky factor".into()))?;
    let theta = (&theta + theta.transpose()) * 0.5;
    let cond = condition_number(&h.sigma_hat, &theta);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularHessian(format!(
            "condition number {cond:.3e} exceeds {MAX_CONDITION:.0e}"
        )));
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, Purpose};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_pd(k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = seeded(seed, Purpose::User);
        let a = DMatrix::from_fn(k + 5, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        a.tr_mul(&a) / (k + 5) as f64 + DMatrix::identity(k, k) * 0.1
    }

    fn dataset(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = seeded(seed, Purpose::User);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = (0..n).map(|_| f64::from(rng.random::<bool>())).collect();
        Dataset::new(y, &x, (0..p).map(|j| format!("x{j}")).collect()).unwrap()
    }

    #[test]
    fn gaussian_hessian_is_gram() {
        let d = dataset(40, 4, 1);
        let xi = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.0, 0.5]);
        let h = hessian(&d, GlmFamily::Gaussian, &xi).unwrap();
        let gram = d.x.tr_mul(&d.x) / 40.0;
        assert!((&h.sigma_hat - gram).amax() < 1e-12);
    }

    #[test]
    fn binomial_at_zero_is_quarter_gram() {
        let d = dataset(40, 4, 2);
        let h = hessian(&d, GlmFamily::Binomial, &DVector::zeros(5)).unwrap();
        let gram = d.x.tr_mul(&d.x) * (0.25 / 40.0);
        assert!((&h.sigma_hat - gram).amax() < 1e-12);
    }

    #[test]
    fn matches_naive_double_loop() {
        let d = dataset(50, 3, 3);
        let xi = DVector::from_vec(vec![0.2, 0.7, -0.4, 1.1]);
        let h = hessian(&d, GlmFamily::Binomial, &xi).unwrap();
        let mut naive = DMatrix::zeros(4, 4);
        for i in 0..50 {
            let a: f64 = (0..4).map(|j| d.x[(i, j)] * xi[j]).sum();
            let p = 1.0 / (1.0 + (-a).exp());
            let w = p * (1.0 - p);
            for r in 0..4 {
                for c in 0..4 {
                    naive[(r, c)] += w * d.x[(i, r)] * d.x[(i, c)] / 50.0;
                }
            }
        }
        assert!((&h.sigma_hat - naive).amax() < 1e-12);
        let xw = h.weighted_design(&d);
        assert!((xw.tr_mul(&xw) / 50.0 - &h.sigma_hat).amax() < 1e-12);
        let l = h.chol.as_ref().unwrap();
        let rec = l * l.transpose();
        assert!((rec - &h.sigma_hat).norm() / h.sigma_hat.norm() < 1e-10);
    }

    #[test]
    fn invert_simple_matrices() {
        let h = HessianModel::from_matrix(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(invert_hessian(&h).unwrap(), DMatrix::identity(3, 3));
        let h = HessianModel::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]))).unwrap();
        let t = invert_hessian(&h).unwrap();
        assert!((t[(0, 0)] - 0.5).abs() < 1e-15 && (t[(1, 1)] - 0.25).abs() < 1e-15);
        assert_eq!(t[(0, 1)], 0.0);
    }

    #[test]
    fn invert_random_pd_multiplies_back() {
        let s = random_pd(20, 4);
        let h = HessianModel::from_matrix(s.clone()).unwrap();
        let t = invert_hessian(&h).unwrap();
        assert!((&t * &s - DMatrix::identity(20, 20)).amax() < 1e-9);
        assert!((&t - t.transpose()).amax() < 1e-9);
        assert!(t.diagonal().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn singular_and_ill_conditioned_are_errors() {
        let mut s = DMatrix::identity(3, 3);
        s[(2, 2)] = 0.0;
        let h = HessianModel::from_matrix(s).unwrap();
        assert!(h.chol.is_none());
        assert!(matches!(invert_hessian(&h), Err(Error::SingularHessian(_))));
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-13]));
        let h = HessianModel::from_matrix(s).unwrap();
        assert!(matches!(invert_hessian(&h), Err(Error::SingularHessian(_))));
    }
}
