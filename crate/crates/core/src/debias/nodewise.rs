//! Node-wise lasso estimate of the inverse Hessian.
//!
//! Column `j` of the weighted design `X_w = W X` is regressed on the other
//! columns with an l1 penalty,
//! `gamma_j = argmin ||X_w[, j] - X_w[, -j] g||^2 / (2n) + lambda_j ||g||_1`,
//! and row `j` of the estimate is `(e_j - gamma_j) / tau_j^2` with
//! `tau_j^2 = ||X_w[, j] - X_w[, -j] gamma_j||^2 / n + lambda_j ||gamma_j||_1`.
//!
//! Everything here depends on the data only through Gram matrices of `X_w`,
//! so the regressions and their cross-validation run on `(p+1) x (p+1)`
//! matrices rather than on the rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::hessian::hessian;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::GlmFamily;
use crate::lasso::{fold_assignment, lambda_path, soft_threshold, LassoFit};
use crate::rng::{seeded, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodewiseOptions {
    pub n_folds: usize,
    pub n_lambda: usize,
    pub ratio: f64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for NodewiseOptions {
    fn default() -> Self {
        NodewiseOptions {
            n_folds: 5,
            n_lambda: 100,
            ratio: 1e-4,
            tol: 1e-10,
            max_sweeps: 10_000,
        }
    }
}

/// One node-wise regression.
#[derive(Debug, Clone, PartialEq)]
pub struct NodewiseColumn {
    /// Full-length coefficient vector with a structural zero at `j`.
    pub gamma: DVector<f64>,
    pub tau2: f64,
    pub lambda: f64,
}

impl NodewiseColumn {
    /// Row `j` of the estimate, `(e_j - gamma) / tau^2`.
    pub fn theta_row(&self, j: usize) -> DVector<f64> {
        let mut v = -&self.gamma;
        v[j] = 1.0;
        v / self.tau2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodewiseTheta {
    pub theta: DMatrix<f64>,
    /// Penalty chosen for each column.
    pub lambdas: Vec<f64>,
    pub tau2: Vec<f64>,
}

/// Lasso on Gram form, `g' A g / 2 - b' g + lambda ||g||_1` with
/// `A = G[-j, -j]` and `b = G[-j, j]`, updating `gamma` in place.
/// `grad` tracks `b - A gamma` over all indices.
struct GramLasso<'a> {
    gram: &'a DMatrix<f64>,
    j: usize,
    grad: DVector<f64>,
}

impl<'a> GramLasso<'a> {
    fn new(gram: &'a DMatrix<f64>, j: usize, gamma: &DVector<f64>) -> Self {
        let grad = gram.column(j) - gram * gamma;
        GramLasso { gram, j, grad }
    }

    #[inline]
    fn update(&mut self, l: usize, gamma: &mut DVector<f64>, lambda: f64) -> f64 {
        let all = self.gram[(l, l)];
        if all <= 0.0 {
            return 0.0;
        }
        let old = gamma[l];
        let new = soft_threshold(self.grad[l] + all * old, lambda) / all;
        let delta = new - old;
        if delta != 0.0 {
            gamma[l] = new;
            self.grad.axpy(-delta, &self.gram.column(l), 1.0);
        }
        delta.abs()
    }

    fn solve(&mut self, gamma: &mut DVector<f64>, lambda: f64, tol: f64, max_sweeps: usize) -> Result<()> {
        let k = gamma.len();
        let j = self.j;
        let mut sweeps = 0;
        loop {
            let mut max_delta = 0.0f64;
            for l in (0..k).filter(|&l| l != j) {
                max_delta = max_delta.max(self.update(l, gamma, lambda));
            }
            sweeps += 1;
            if max_delta < tol {
                return Ok(());
            }
            let active: Vec<usize> = (0..k).filter(|&l| l != j && gamma[l] != 0.0).collect();
            loop {
                let mut max_delta = 0.0f64;
                for &l in &active {
                    max_delta = max_delta.max(self.update(l, gamma, lambda));
                }
                sweeps += 1;
                if max_delta < tol {
                    break;
                }
                if sweeps >= max_sweeps {
                    break;
                }
            }
            if sweeps >= max_sweeps {
                return Err(Error::NonConvergence {
                    iterations: sweeps,
                    reason: format!("node-wise regression for column {}", self.j),
                    last_iterate: gamma.as_slice().to_vec(),
                });
            }
        }
    }
}

fn support(gamma: &DVector<f64>, j: usize) -> Vec<usize> {
    let mut s: Vec<usize> = (0..gamma.len()).filter(|&l| l == j || gamma[l] != 0.0).collect();
    s.sort_unstable();
    s
}

/// `||X_w[, j] - X_w[, -j] gamma||^2 / n` for the rows behind `gram`.
fn residual_ms(gram: &DMatrix<f64>, j: usize, gamma: &DVector<f64>) -> f64 {
    let s = support(gamma, j);
    let coef = |l: usize| if l == j { 1.0 } else { -gamma[l] };
    let mut acc = 0.0;
    for &a in &s {
        let ca = coef(a);
        for &b in &s {
            acc += ca * coef(b) * gram[(a, b)];
        }
    }
    acc
}

fn column_lambda_max(gram: &DMatrix<f64>, j: usize) -> f64 {
    let m = (0..gram.nrows())
        .filter(|&l| l != j)
        .map(|l| gram[(l, j)].abs())
        .fold(0.0, f64::max);
    m * (1.0 + 1e-10)
}

fn finish_column(gram: &DMatrix<f64>, j: usize, gamma: DVector<f64>, lambda: f64) -> Result<NodewiseColumn> {
    let l1: f64 = gamma.iter().map(|v| v.abs()).sum();
    let tau2 = residual_ms(gram, j, &gamma) + lambda * l1;
    if !(tau2 >= 1e-12) {
        return Err(Error::DegenerateColumn {
            column: j,
            reason: format!("node-wise residual variance {tau2:.3e} is below 1e-12"),
        });
    }
    Ok(NodewiseColumn { gamma, tau2, lambda })
}

/// Node-wise regression of column `j` at a fixed penalty, from the Gram
/// matrix `X_w' X_w / n`.
pub fn nodewise_column(
    gram: &DMatrix<f64>,
    j: usize,
    lambda: f64,
    opts: &NodewiseOptions,
) -> Result<NodewiseColumn> {
    let k = gram.nrows();
    if j >= k {
        return Err(Error::Domain(format!("column {j} out of range")));
    }
    let mut gamma = DVector::zeros(k);
    GramLasso::new(gram, j, &gamma).solve(&mut gamma, lambda, opts.tol, opts.max_sweeps)?;
    finish_column(gram, j, gamma, lambda)
}

struct FoldGrams {
    train: Vec<DMatrix<f64>>,
    val: Vec<DMatrix<f64>>,
    sizes: Vec<f64>,
}

fn fold_grams(xw: &DMatrix<f64>, folds: &[usize], n_folds: usize) -> FoldGrams {
    let n = xw.nrows();
    let mut raw = Vec::with_capacity(n_folds);
    let mut sizes = Vec::with_capacity(n_folds);
    for f in 0..n_folds {
        let rows: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
        let sub = xw.select_rows(&rows);
        raw.push(sub.transpose() * &sub);
        sizes.push(rows.len() as f64);
    }
    let total = raw.iter().fold(DMatrix::zeros(xw.ncols(), xw.ncols()), |acc, m| acc + m);
    let nf = n as f64;
    let train = raw
        .iter()
        .zip(&sizes)
        .map(|(m, s)| (&total - m) / (nf - s))
        .collect();
    let val = raw.into_iter().zip(&sizes).map(|(m, s)| m / *s).collect();
    FoldGrams { train, val, sizes }
}

fn select_column_lambda(
    j: usize,
    full: &DMatrix<f64>,
    grams: &FoldGrams,
    opts: &NodewiseOptions,
) -> Result<NodewiseColumn> {
    let k = full.nrows();
    let grid = lambda_path(column_lambda_max(full, j).max(f64::MIN_POSITIVE), opts.n_lambda, opts.ratio)?;
    let total: f64 = grams.sizes.iter().sum();
    let mut cv = vec![0.0; grid.len()];
    for (f, (train, val)) in grams.train.iter().zip(&grams.val).enumerate() {
        let mut gamma = DVector::zeros(k);
        let mut solver = GramLasso::new(train, j, &gamma);
        for (l, &lam) in grid.iter().enumerate() {
            solver.solve(&mut gamma, lam, opts.tol, opts.max_sweeps)?;
            cv[l] += grams.sizes[f] * residual_ms(val, j, &gamma) / total;
        }
    }
    let mut best = 0;
    for l in 1..grid.len() {
        if cv[l] < cv[best] {
            best = l;
        }
    }
    let mut gamma = DVector::zeros(k);
    let mut solver = GramLasso::new(full, j, &gamma);
    for &lam in &grid[..=best] {
        solver.solve(&mut gamma, lam, opts.tol, opts.max_sweeps)?;
    }
    finish_column(full, j, gamma, grid[best])
}

/// Node-wise estimate from a weighted design and a fold assignment.
pub fn nodewise_from_design(
    xw: &DMatrix<f64>,
    folds: &[usize],
    opts: &NodewiseOptions,
) -> Result<NodewiseTheta> {
    let n = xw.nrows();
    let k = xw.ncols();
    let n_folds = folds.iter().max().map_or(0, |m| m + 1);
    if folds.len() != n || n_folds < 2 {
        return Err(Error::Domain("invalid fold assignment".into()));
    }
    let full = {
        let g = xw.transpose() * xw / n as f64;
        (&g + g.transpose()) * 0.5
    };
    let grams = fold_grams(xw, folds, n_folds);

    let solve = |j: usize| select_column_lambda(j, &full, &grams, opts);
    #[cfg(feature = "parallel")]
    let cols: Vec<Result<NodewiseColumn>> = {
        use rayon::prelude::*;
        (0..k).into_par_iter().map(solve).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let cols: Vec<Result<NodewiseColumn>> = (0..k).map(solve).collect();

    let mut theta = DMatrix::zeros(k, k);
    let mut lambdas = Vec::with_capacity(k);
    let mut tau2 = Vec::with_capacity(k);
    for (j, c) in cols.into_iter().enumerate() {
        let c = c?;
        theta.set_row(j, &c.theta_row(j).transpose());
        lambdas.push(c.lambda);
        tau2.push(c.tau2);
    }
    Ok(NodewiseTheta { theta, lambdas, tau2 })
}

fn fit_folds(d: &Dataset, seed: u64, opts: &NodewiseOptions) -> Result<Vec<usize>> {
    let mut rng = seeded(seed, Purpose::NodewiseFolds);
    fold_assignment(d.y.as_slice(), GlmFamily::Gaussian, opts.n_folds, &mut rng)
}

/// Node-wise estimate at the lasso fit, with per-column penalties chosen by
/// `opts.n_folds`-fold cross-validation on seeded folds.
pub fn nodewise_theta(
    d: &Dataset,
    family: GlmFamily,
    fit: &LassoFit,
    seed: u64,
    opts: &NodewiseOptions,
) -> Result<NodewiseTheta> {
    let h = hessian(d, family, &fit.xi_hat)?;
    let xw = h.weighted_design(d);
    nodewise_from_design(&xw, &fit_folds(d, seed, opts)?, opts)
}

/// Row `j` of [`nodewise_theta`] alone, computed identically.
pub fn nodewise_row(
    d: &Dataset,
    family: GlmFamily,
    fit: &LassoFit,
    j: usize,
    seed: u64,
    opts: &NodewiseOptions,
) -> Result<NodewiseColumn> {
    let h = hessian(d, family, &fit.xi_hat)?;
    let xw = h.weighted_design(d);
    let n = xw.nrows();
    if j >= xw.ncols() {
        return Err(Error::Domain(format!("column {j} out of range")));
    }
    let folds = fit_folds(d, seed, opts)?;
    let n_folds = folds.iter().max().map_or(0, |m| m + 1);
    let full = {
        let g = xw.transpose() * &xw / n as f64;
        (&g + g.transpose()) * 0.5
    };
    select_column_lambda(j, &full, &fold_grams(&xw, &folds, n_folds), opts)
}
