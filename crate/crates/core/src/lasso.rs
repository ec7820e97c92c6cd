//! l1-penalized GLM fitting with an unpenalized intercept.
//!
//! The objective is `P_n rho(xi) + lambda * ||beta||_1`, where `P_n` is the
//! empirical mean over rows and `beta` excludes the intercept. The solver is
//! the usual IRLS outer loop around cyclic coordinate descent on the
//! penalized weighted least-squares approximation, with step halving when
//! an outer step fails to decrease the objective.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::GlmFamily;
use crate::rng::{seeded, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Outer loop stops when the largest coefficient change falls below this.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Coordinate descent stops when the largest coefficient change in a sweep
    /// falls below this.
    pub inner_tol: f64,
    pub max_sweeps: usize,
    pub max_backtracks: usize,
    /// IRLS weights are floored here for saturated fitted values.
    pub weight_floor: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            outer_tol: 1e-8,
            max_outer: 100,
            inner_tol: 1e-10,
            max_sweeps: 10_000,
            max_backtracks: 20,
            weight_floor: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    /// Intercept first.
    pub xi_hat: DVector<f64>,
    pub lambda: f64,
    /// Outer IRLS iterations.
    pub n_iter: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    /// Penalized objective after each accepted outer step, starting point first.
    pub objective_trace: Vec<f64>,
}

impl LassoFit {
    pub fn n_nonzero(&self) -> usize {
        self.xi_hat.iter().skip(1).filter(|v| **v != 0.0).count()
    }

    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }
}

/// Linear predictor `X xi`.
pub fn linear_predictor(d: &Dataset, xi: &DVector<f64>) -> DVector<f64> {
    &d.x * xi
}

/// Mean loss `P_n rho` at `xi`.
pub fn mean_loss(d: &Dataset, family: GlmFamily, xi: &DVector<f64>) -> f64 {
    let eta = linear_predictor(d, xi);
    mean_loss_at(d, family, &eta)
}

fn mean_loss_at(d: &Dataset, family: GlmFamily, eta: &DVector<f64>) -> f64 {
    let n = d.n() as f64;
    d.y.iter()
        .zip(eta.iter())
        .map(|(&y, &a)| family.loss_raw(y, a))
        .sum::<f64>()
        / n
}

/// Penalized objective `P_n rho + lambda ||beta||_1`.
pub fn objective(d: &Dataset, family: GlmFamily, xi: &DVector<f64>, lambda: f64) -> f64 {
    mean_loss(d, family, xi) + lambda * l1_norm(xi)
}

fn l1_norm(xi: &DVector<f64>) -> f64 {
    xi.iter().skip(1).map(|v| v.abs()).sum()
}

/// Gradient of the mean loss, `P_n rho_dot = X' (b'(X xi) - y) / n`.
pub fn score(d: &Dataset, family: GlmFamily, xi: &DVector<f64>) -> DVector<f64> {
    let eta = linear_predictor(d, xi);
    let resid = DVector::from_iterator(
        d.n(),
        d.y.iter().zip(eta.iter()).map(|(&y, &a)| family.dloss_raw(y, a)),
    );
    d.x.tr_mul(&resid) / d.n() as f64
}

/// Largest violation of the lasso KKT conditions given the score at `xi`.
pub fn kkt_residual(score: &DVector<f64>, xi: &DVector<f64>, lambda: f64) -> f64 {
    let mut worst = score[0].abs();
    for j in 1..xi.len() {
        let v = if xi[j] != 0.0 {
            (score[j] + lambda * xi[j].signum()).abs()
        } else {
            (score[j].abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Penalized weighted least squares,
/// `sum_i w_i (z_i - x_i' xi)^2 / (2n) + lambda ||beta||_1`,
/// by cyclic coordinate descent starting from `xi` (updated in place).
///
/// Works in covariance form: `grad = c - G xi` with `c = X'Wz/n` and
/// `G = X'WX/n`. Columns of `G` are built only for coordinates that move, so
/// a sweep costs O(k) plus O(k) per changed coordinate.
struct WeightedCd<'a> {
    x: &'a DMatrix<f64>,
    n: usize,
    k: usize,
    w: &'a [f64],
    c: Vec<f64>,
    /// `G xi`
    q: Vec<f64>,
    diag: Vec<f64>,
    cols: Vec<Option<Vec<f64>>>,
}

impl<'a> WeightedCd<'a> {
    fn new(d: &'a Dataset, w: &'a [f64], z: &[f64], xi: &DVector<f64>) -> Self {
        let n = d.n();
        let k = d.x.ncols();
        let nf = n as f64;
        let wz = DVector::from_iterator(n, w.iter().zip(z).map(|(w, z)| w * z));
        let c = (d.x.tr_mul(&wz) / nf).as_slice().to_vec();
        let xs = d.x.as_slice();
        let diag = (0..k)
            .map(|j| {
                let col = &xs[j * n..(j + 1) * n];
                col.iter().zip(w).map(|(v, w)| w * v * v).sum::<f64>() / nf
            })
            .collect();
        let mut cd = WeightedCd {
            x: &d.x,
            n,
            k,
            w,
            c,
            q: vec![0.0; k],
            diag,
            cols: vec![None; k],
        };
        let nz: Vec<usize> = (0..k).filter(|&j| xi[j] != 0.0).collect();
        cd.fill(&nz);
        for j in nz {
            let col = cd.cols[j].as_ref().expect("just built");
            for (q, g) in cd.q.iter_mut().zip(col) {
                *q += g * xi[j];
            }
        }
        cd
    }

    /// Columns `idx` of `G` through one matrix product.
    fn fill(&mut self, idx: &[usize]) {
        if idx.is_empty() {
            return;
        }
        let mut xw = self.x.select_columns(idx);
        for mut col in xw.column_iter_mut() {
            for (v, w) in col.iter_mut().zip(self.w) {
                *v *= w;
            }
        }
        let g = self.x.transpose() * &xw / self.n as f64;
        for (c, &j) in idx.iter().enumerate() {
            self.cols[j] = Some(g.column(c).as_slice().to_vec());
        }
    }

    fn ensure(&mut self, j: usize) {
        if self.cols[j].is_some() {
            return;
        }
        let wx = DVector::from_iterator(self.n, self.x.column(j).iter().zip(self.w).map(|(v, w)| v * w));
        self.cols[j] = Some((self.x.tr_mul(&wx) / self.n as f64).as_slice().to_vec());
    }

    #[inline]
    fn update(&mut self, j: usize, xi: &mut DVector<f64>, lambda: f64) -> f64 {
        let denom = self.diag[j];
        if denom <= 0.0 {
            return 0.0;
        }
        let old = xi[j];
        let g = self.c[j] - self.q[j];
        let new = if j == 0 {
            old + g / denom
        } else {
            soft_threshold(g + denom * old, lambda) / denom
        };
        let delta = new - old;
        if delta != 0.0 {
            xi[j] = new;
            self.ensure(j);
            let col = self.cols[j].as_ref().expect("just built");
            for (q, g) in self.q.iter_mut().zip(col) {
                *q += delta * g;
            }
        }
        delta.abs()
    }

    /// Returns the number of sweeps used.
    fn solve(&mut self, xi: &mut DVector<f64>, lambda: f64, tol: f64, max_sweeps: usize) -> Result<usize> {
        let mut sweeps = 0;
        loop {
            // full sweep
            let mut max_delta = 0.0f64;
            for j in 0..self.k {
                max_delta = max_delta.max(self.update(j, xi, lambda));
            }
            sweeps += 1;
            if max_delta < tol {
                return Ok(sweeps);
            }
            // iterate on the active set until it settles
            let active: Vec<usize> = (0..self.k).filter(|&j| j == 0 || xi[j] != 0.0).collect();
            loop {
                if sweeps >= max_sweeps {
                    return Err(Error::NonConvergence {
                        iterations: sweeps,
                        reason: "coordinate descent sweep cap reached".into(),
                        last_iterate: xi.as_slice().to_vec(),
                    });
                }
                let mut max_delta = 0.0f64;
                for &j in &active {
                    max_delta = max_delta.max(self.update(j, xi, lambda));
                }
                sweeps += 1;
                if max_delta < tol {
                    break;
                }
            }
            if sweeps >= max_sweeps {
                return Err(Error::NonConvergence {
                    iterations: sweeps,
                    reason: "coordinate descent sweep cap reached".into(),
                    last_iterate: xi.as_slice().to_vec(),
                });
            }
        }
    }
}

/// Fit at a single penalty level with default options.
pub fn fit_lasso(
    d: &Dataset,
    family: GlmFamily,
    lambda: f64,
    warm: Option<&DVector<f64>>,
) -> Result<LassoFit> {
    fit_lasso_with(d, family, lambda, warm, &LassoOptions::default())
}

pub fn fit_lasso_with(
    d: &Dataset,
    family: GlmFamily,
    lambda: f64,
    warm: Option<&DVector<f64>>,
    opts: &LassoOptions,
) -> Result<LassoFit> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let n = d.n();
    let k = d.x.ncols();
    if lambda == 0.0 && k > n {
        return Err(Error::Domain(format!(
            "lambda = 0 needs a full-rank design, but p+1 = {k} exceeds n = {n}"
        )));
    }
    let mut xi = match warm {
        Some(w) if w.len() == k => w.clone(),
        Some(w) => {
            return Err(Error::Domain(format!(
                "warm start has length {}, expected {k}",
                w.len()
            )))
        }
        None => {
            let mut xi = DVector::zeros(k);
            xi[0] = family.null_intercept(d.y.as_slice()).unwrap_or(0.0);
            xi
        }
    };

    let mut f_old = objective(d, family, &xi, lambda);
    let mut trace = vec![f_old];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut converged = false;
    let mut iters = 0;
    while iters < opts.max_outer {
        iters += 1;
        let eta = linear_predictor(d, &xi);
        for i in 0..n {
            let a = eta[i];
            let wi = family.variance(a).max(opts.weight_floor);
            w[i] = wi;
            z[i] = a + (d.y[i] - family.mean(a)) / wi;
        }
        let mut candidate = xi.clone();
        let mut cd = WeightedCd::new(d, &w, &z, &candidate);
        cd.solve(&mut candidate, lambda, opts.inner_tol, opts.max_sweeps)?;

        // gaussian: the quadratic model is exact, one pass solves the problem
        if family == GlmFamily::Gaussian {
            let f_new = objective(d, family, &candidate, lambda);
            xi = candidate;
            trace.push(f_new);
            converged = true;
            break;
        }

        let direction = &candidate - &xi;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let trial = &xi + &direction * step;
            let f_new = objective(d, family, &trial, lambda);
            if f_new <= f_old + 1e-12 * f_old.abs().max(1.0) {
                accepted = Some((trial, f_new));
                break;
            }
            step *= 0.5;
        }
        let Some((next, f_new)) = accepted else {
            return Err(Error::NonConvergence {
                iterations: iters,
                reason: format!(
                    "objective increased after {} step halvings",
                    opts.max_backtracks
                ),
                last_iterate: xi.as_slice().to_vec(),
            });
        };
        let change = (&next - &xi).amax();
        xi = next;
        // never let the trace go up from rounding in the acceptance slack
        trace.push(f_new.min(f_old));
        f_old = f_new;
        if change < opts.outer_tol {
            converged = true;
            break;
        }
    }

    let g = score(d, family, &xi);
    Ok(LassoFit {
        kkt_residual: kkt_residual(&g, &xi, lambda),
        xi_hat: xi,
        lambda,
        n_iter: iters,
        converged,
        objective_trace: trace,
    })
}

/// Smallest penalty at which every non-intercept coefficient is zero.
pub fn lambda_max(d: &Dataset, family: GlmFamily) -> Result<f64> {
    family.validate_response(d.y.as_slice())?;
    let b0 = family.null_intercept(d.y.as_slice())?;
    let mu = family.mean(b0);
    let resid = d.y.map(|y| y - mu);
    let g = d.x.tr_mul(&resid) / d.n() as f64;
    let gmax = g.iter().skip(1).fold(0.0f64, |m, v| m.max(v.abs()));
    // nudge past rounding in the coordinate updates so the all-zero fit is
    // reproduced at exactly this value
    Ok(gmax * (1.0 + 1e-10))
}

/// Geometric grid from `lmax` down to `ratio * lmax`.
pub fn lambda_path(lmax: f64, n_lambda: usize, ratio: f64) -> Result<Vec<f64>> {
    if n_lambda < 2 {
        return Err(Error::Domain(format!("n_lambda must be at least 2, got {n_lambda}")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Domain(format!("ratio must lie in (0, 1), got {ratio}")));
    }
    if !(lmax > 0.0) || !lmax.is_finite() {
        return Err(Error::Domain(format!("lambda_max must be positive, got {lmax}")));
    }
    let step = ratio.ln() / (n_lambda - 1) as f64;
    Ok((0..n_lambda)
        .map(|i| {
            if i == 0 {
                lmax
            } else if i == n_lambda - 1 {
                lmax * ratio
            } else {
                lmax * (step * i as f64).exp()
            }
        })
        .collect())
}

/// Fit along a descending grid with warm starts.
pub fn fit_path(d: &Dataset, family: GlmFamily, grid: &[f64]) -> Result<Vec<LassoFit>> {
    let mut out: Vec<LassoFit> = Vec::with_capacity(grid.len());
    for &lam in grid {
        let warm = out.last().map(|f| f.xi_hat.clone());
        out.push(fit_lasso(d, family, lam, warm.as_ref())?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda_grid: Vec<f64>,
    pub mean_deviance: Vec<f64>,
    pub se_deviance: Vec<f64>,
    pub lambda_min: f64,
    /// Index of `lambda_min` in the grid.
    pub index_min: usize,
    pub fold_assignment: Vec<usize>,
}

/// Seeded fold labels. Rows are permuted and cut into contiguous blocks;
/// for the binomial family each class is permuted and cut separately so
/// every fold holds both classes.
pub fn fold_assignment(
    y: &[f64],
    family: GlmFamily,
    n_folds: usize,
    rng: &mut impl rand::Rng,
) -> Result<Vec<usize>> {
    let n = y.len();
    if n_folds < 2 {
        return Err(Error::Domain(format!("need at least 2 folds, got {n_folds}")));
    }
    if n_folds > n {
        return Err(Error::Domain(format!("{n_folds} folds for {n} rows")));
    }
    let strata: Vec<Vec<usize>> = if family == GlmFamily::Binomial {
        let zeros: Vec<usize> = (0..n).filter(|&i| y[i] == 0.0).collect();
        let ones: Vec<usize> = (0..n).filter(|&i| y[i] != 0.0).collect();
        if zeros.len() < n_folds || ones.len() < n_folds {
            return Err(Error::Data(format!(
                "cannot stratify {} zeros and {} ones into {n_folds} folds",
                zeros.len(),
                ones.len()
            )));
        }
        vec![zeros, ones]
    } else {
        vec![(0..n).collect()]
    };
    let mut folds = vec![0; n];
    for mut idx in strata {
        idx.shuffle(rng);
        let m = idx.len();
        for (pos, i) in idx.into_iter().enumerate() {
            folds[i] = pos * n_folds / m;
        }
    }
    Ok(folds)
}

/// K-fold cross-validation of the out-of-fold mean loss along `grid`.
pub fn cross_validate(
    d: &Dataset,
    family: GlmFamily,
    n_folds: usize,
    grid: &[f64],
    seed: u64,
) -> Result<CvResult> {
    let mut rng = seeded(seed, Purpose::LassoFolds);
    let folds = fold_assignment(d.y.as_slice(), family, n_folds, &mut rng)?;
    cross_validate_with_folds(d, family, &folds, grid)
}

/// Cross-validation with a caller-supplied fold assignment.
pub fn cross_validate_with_folds(
    d: &Dataset,
    family: GlmFamily,
    folds: &[usize],
    grid: &[f64],
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::Domain("empty lambda grid".into()));
    }
    if folds.len() != d.n() {
        return Err(Error::Domain("fold assignment length differs from n".into()));
    }
    let n_folds = folds.iter().max().map_or(0, |m| m + 1);
    if n_folds < 2 {
        return Err(Error::Domain("need at least 2 folds".into()));
    }

    let fold_losses = |k: usize| -> Result<(f64, Vec<f64>)> {
        let train: Vec<usize> = (0..d.n()).filter(|&i| folds[i] != k).collect();
        let test: Vec<usize> = (0..d.n()).filter(|&i| folds[i] == k).collect();
        if test.is_empty() {
            return Err(Error::Domain(format!("fold {k} is empty")));
        }
        let dt = d.select_rows(&train);
        let dv = d.select_rows(&test);
        if family == GlmFamily::Binomial {
            let s: f64 = dt.y.iter().sum();
            if s == 0.0 || s == dt.n() as f64 {
                return Err(Error::Data(format!("training fold {k} has a single class")));
            }
        }
        let fits = fit_path(&dt, family, grid)?;
        Ok((
            test.len() as f64,
            fits.iter().map(|f| mean_loss(&dv, family, &f.xi_hat)).collect(),
        ))
    };

    #[cfg(feature = "parallel")]
    let per_fold: Vec<Result<(f64, Vec<f64>)>> = {
        use rayon::prelude::*;
        (0..n_folds).into_par_iter().map(fold_losses).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_fold: Vec<Result<(f64, Vec<f64>)>> = (0..n_folds).map(fold_losses).collect();
    let per_fold = per_fold.into_iter().collect::<Result<Vec<_>>>()?;

    let total: f64 = per_fold.iter().map(|(m, _)| m).sum();
    let mut mean = vec![0.0; grid.len()];
    let mut se = vec![0.0; grid.len()];
    for l in 0..grid.len() {
        // fold index order, so the sum is reproducible
        let m = per_fold.iter().map(|(w, v)| w * v[l]).sum::<f64>() / total;
        let var = per_fold
            .iter()
            .map(|(w, v)| w * (v[l] - m).powi(2))
            .sum::<f64>()
            / total;
        mean[l] = m;
        se[l] = (var / (n_folds as f64 - 1.0)).sqrt();
    }
    let mut best = 0;
    for l in 1..grid.len() {
        if mean[l] < mean[best] {
            best = l;
        }
    }
    Ok(CvResult {
        lambda_grid: grid.to_vec(),
        mean_deviance: mean,
        se_deviance: se,
        lambda_min: grid[best],
        index_min: best,
        fold_assignment: folds.to_vec(),
    })
}

/// Cross-validate on the default path and refit on all rows at `lambda_min`,
/// warm-starting down the grid.
pub fn fit_cv(
    d: &Dataset,
    family: GlmFamily,
    n_folds: usize,
    n_lambda: usize,
    ratio: f64,
    seed: u64,
) -> Result<(LassoFit, CvResult)> {
    let lmax = lambda_max(d, family)?;
    let grid = lambda_path(lmax, n_lambda, ratio)?;
    let cv = cross_validate(d, family, n_folds, &grid, seed)?;
    let fits = fit_path(d, family, &grid[..=cv.index_min])?;
    let fit = fits.into_iter().last().expect("grid is nonempty");
    Ok((fit, cv))
}

pub const DEFAULT_N_LAMBDA: usize = 100;
pub const DEFAULT_RATIO: f64 = 1e-4;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::standardize;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_data(n: usize, p: usize, family: GlmFamily, seed: u64) -> Dataset {
        let mut rng = seeded(seed, Purpose::User);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let a = 0.3 + x[(i, 0)] - 0.5 * x[(i, 1.min(p - 1))];
                match family {
                    GlmFamily::Gaussian => a + rng.sample::<f64, _>(StandardNormal),
                    GlmFamily::Binomial => f64::from(rng.random::<f64>() < crate::family::logistic(a)),
                    GlmFamily::Poisson => {
                        let lam = (0.5 * a).exp();
                        rand_distr::Distribution::sample(&rand_distr::Poisson::new(lam).unwrap(), &mut rng)
                    }
                }
            })
            .collect();
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        let d = Dataset::new(y, &x, names).unwrap();
        standardize(&d).unwrap().0
    }

    #[test]
    fn path_examples() {
        let g = lambda_path(1.0, 3, 0.01).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-15 && (g[1] - 0.1).abs() < 1e-15 && (g[2] - 0.01).abs() < 1e-15);
        assert_eq!(lambda_path(2.0, 2, 0.5).unwrap(), vec![2.0, 1.0]);
        let g = lambda_path(1.0, 100, 1e-4).unwrap();
        assert_eq!(g.len(), 100);
        let r0 = g[1] / g[0];
        assert!(g.windows(2).all(|w| (w[1] / w[0] - r0).abs() < 1e-12));
        assert!(lambda_path(1.0, 10, 1.5).is_err());
        assert!(lambda_path(1.0, 1, 0.5).is_err());
    }

    #[test]
    fn negative_lambda_rejected() {
        let d = random_data(30, 3, GlmFamily::Gaussian, 1);
        assert!(matches!(fit_lasso(&d, GlmFamily::Gaussian, -0.1, None), Err(Error::Domain(_))));
    }

    #[test]
    fn null_model_at_lambda_max() {
        for (fam, seed) in [(GlmFamily::Gaussian, 2), (GlmFamily::Binomial, 3), (GlmFamily::Poisson, 4)] {
            let d = random_data(120, 6, fam, seed);
            let lmax = lambda_max(&d, fam).unwrap();
            let fit = fit_lasso(&d, fam, lmax, None).unwrap();
            assert_eq!(fit.n_nonzero(), 0, "{fam}");
            let b0 = fam.null_intercept(d.y.as_slice()).unwrap();
            assert!((fit.xi_hat[0] - b0).abs() < 1e-8, "{fam}");
            let below = fit_lasso(&d, fam, 0.99 * lmax, None).unwrap();
            assert!(below.n_nonzero() > 0, "{fam}");
            assert!(fit.kkt_residual <= 1e-7 && below.kkt_residual <= 1e-7);
        }
    }

    #[test]
    fn single_class_binomial_lambda_max_errors() {
        let x = DMatrix::from_fn(6, 2, |i, j| (i + j * 2) as f64);
        let d = Dataset::new(vec![1.0; 6], &x, vec!["a".into(), "b".into()]).unwrap();
        assert!(lambda_max(&d, GlmFamily::Binomial).is_err());
    }

    #[test]
    fn objective_never_increases_and_kkt_holds() {
        for (fam, seed) in [(GlmFamily::Binomial, 5), (GlmFamily::Poisson, 6)] {
            let d = random_data(200, 8, fam, seed);
            let lmax = lambda_max(&d, fam).unwrap();
            for frac in [0.5, 0.1, 0.01] {
                let fit = fit_lasso(&d, fam, frac * lmax, None).unwrap();
                assert!(fit.converged);
                assert!(fit.kkt_residual <= 1e-7, "{fam} {frac} {}", fit.kkt_residual);
                assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            }
        }
    }

    fn family() -> impl proptest::strategy::Strategy<Value = GlmFamily> {
        proptest::prop_oneof![
            proptest::strategy::Just(GlmFamily::Gaussian),
            proptest::strategy::Just(GlmFamily::Binomial),
            proptest::strategy::Just(GlmFamily::Poisson),
        ]
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn kkt_and_descent_hold_anywhere_on_the_path(
            fam in family(),
            seed in 0u64..10_000,
            n in 60usize..160,
            p in 2usize..12,
            frac in 0.01f64..1.2,
        ) {
            let d = random_data(n, p, fam, seed);
            let lmax = lambda_max(&d, fam).unwrap();
            let fit = fit_lasso(&d, fam, frac * lmax, None).unwrap();
            proptest::prop_assert!(fit.converged);
            proptest::prop_assert!(fit.kkt_residual <= 1e-7, "kkt {}", fit.kkt_residual);
            proptest::prop_assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            if frac >= 1.0 {
                proptest::prop_assert_eq!(fit.n_nonzero(), 0);
            }
        }
    }

    #[test]
    fn warm_and_cold_starts_agree() {
        let fam = GlmFamily::Binomial;
        let d = random_data(150, 10, fam, 7);
        let lmax = lambda_max(&d, fam).unwrap();
        let cold = fit_lasso(&d, fam, 0.05 * lmax, None).unwrap();
        let start = fit_lasso(&d, fam, 0.3 * lmax, None).unwrap();
        let warm = fit_lasso(&d, fam, 0.05 * lmax, Some(&start.xi_hat)).unwrap();
        assert!((cold.objective() - warm.objective()).abs() < 1e-6);
    }

    #[test]
    fn stratified_folds_hold_both_classes() {
        let y: Vec<f64> = (0..53).map(|i| f64::from(i % 5 == 0)).collect();
        let mut rng = seeded(3, Purpose::LassoFolds);
        let f = fold_assignment(&y, GlmFamily::Binomial, 10, &mut rng).unwrap();
        for k in 0..10 {
            let ys: Vec<f64> = (0..53).filter(|&i| f[i] == k).map(|i| y[i]).collect();
            assert!(ys.contains(&0.0) && ys.contains(&1.0), "fold {k}");
        }
        let mut rng = seeded(3, Purpose::LassoFolds);
        assert!(fold_assignment(&y[..20], GlmFamily::Binomial, 10, &mut rng).is_err());
    }

    #[test]
    fn cv_single_lambda_grid() {
        let fam = GlmFamily::Gaussian;
        let d = random_data(60, 4, fam, 8);
        let cv = cross_validate(&d, fam, 5, &[0.1], 1).unwrap();
        assert_eq!(cv.lambda_min, 0.1);
        assert_eq!(cv.mean_deviance.len(), 1);
    }

    #[test]
    fn cv_prefers_larger_lambda_on_ties() {
        // two identical grid values produce identical deviances
        let fam = GlmFamily::Gaussian;
        let d = random_data(60, 4, fam, 9);
        let lmax = lambda_max(&d, fam).unwrap();
        let cv = cross_validate(&d, fam, 5, &[2.0 * lmax, 1.5 * lmax], 1).unwrap();
        assert_eq!(cv.index_min, 0);
    }
}
