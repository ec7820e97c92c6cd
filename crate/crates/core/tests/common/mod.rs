//! Independent dense reference computations shared by the integration tests.
//! Nothing here calls into the crate's numerical routines.

#![allow(dead_code)]

use glmdebias::rng::{seeded, Purpose};
use glmdebias::{Dataset, GlmFamily};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

/// Solve `a x = b` by Gauss-Jordan elimination with partial pivoting.
pub fn gj_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let k = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    for c in 0..k {
        let piv = (c..k)
            .max_by(|&i, &j| m[i][c].abs().partial_cmp(&m[j][c].abs()).unwrap())
            .unwrap();
        m.swap(c, piv);
        let d = m[c][c];
        assert!(d.abs() > 1e-300, "singular system");
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..k {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for col in c..=k {
                        m[r][col] -= f * m[c][col];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[k]).collect()
}

/// Inverse by solving against each unit vector.
pub fn gj_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = a.len();
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            gj_solve(a, &e)
        })
        .collect();
    (0..k).map(|i| (0..k).map(|j| cols[j][i]).collect()).collect()
}

pub fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Mean and variance functions written out per family.
pub fn mean_var(family: GlmFamily, a: f64) -> (f64, f64) {
    match family {
        GlmFamily::Gaussian => (a, 1.0),
        GlmFamily::Binomial => {
            let m = sigmoid(a);
            (m, m * (1.0 - m))
        }
        GlmFamily::Poisson => {
            let m = a.exp();
            (m, m)
        }
    }
}

/// Score `X'(mu - y)/n` and Hessian `X'VX/n` by explicit loops.
pub fn score_hessian(x: &[Vec<f64>], y: &[f64], family: GlmFamily, xi: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = x.len();
    let k = xi.len();
    let mut g = vec![0.0; k];
    let mut h = vec![vec![0.0; k]; k];
    for i in 0..n {
        let a: f64 = x[i].iter().zip(xi).map(|(u, v)| u * v).sum();
        let (m, v) = mean_var(family, a);
        for r in 0..k {
            g[r] += x[i][r] * (m - y[i]) / n as f64;
            for c in 0..k {
                h[r][c] += v * x[i][r] * x[i][c] / n as f64;
            }
        }
    }
    (g, h)
}

/// Unpenalized MLE by plain Newton iterations from zero.
pub fn newton_mle(x: &[Vec<f64>], y: &[f64], family: GlmFamily) -> Vec<f64> {
    let k = x[0].len();
    let mut xi = vec![0.0; k];
    for _ in 0..100 {
        let (g, h) = score_hessian(x, y, family, &xi);
        let step = gj_solve(&h, &g);
        let mut big = 0.0f64;
        for (v, s) in xi.iter_mut().zip(&step) {
            *v -= s;
            big = big.max(s.abs());
        }
        if big < 1e-13 {
            break;
        }
    }
    xi
}

/// OLS via normal equations.
pub fn ols(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = x[0].len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (row, &yi) in x.iter().zip(y) {
        for r in 0..k {
            xty[r] += row[r] * yi;
            for c in 0..k {
                xtx[r][c] += row[r] * row[c];
            }
        }
    }
    gj_solve(&xtx, &xty)
}

/// Random GLM data with iid standard normal covariates and a sparse truth.
pub fn random_dataset(n: usize, p: usize, family: GlmFamily, seed: u64) -> Dataset {
    let mut rng = seeded(seed, Purpose::User);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut beta = vec![0.0; p];
    for (j, b) in beta.iter_mut().enumerate().take(4) {
        *b = [0.8, -0.5, 0.4, 0.3][j] * if family == GlmFamily::Poisson { 0.4 } else { 1.0 };
    }
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let a: f64 = 0.2 + (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>();
            match family {
                GlmFamily::Gaussian => a + rng.sample::<f64, _>(StandardNormal),
                GlmFamily::Binomial => f64::from(rng.random::<f64>() < sigmoid(a)),
                GlmFamily::Poisson => Poisson::new(a.exp()).unwrap().sample(&mut rng),
            }
        })
        .collect();
    Dataset::new(y, &x, (1..=p).map(|j| format!("x{j}")).collect()).unwrap()
}

/// Random symmetric positive definite matrix with moderate conditioning.
pub fn random_pd(k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded(seed, Purpose::User);
    let a = DMatrix::from_fn(k + 5, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let m = a.transpose() * &a / (k + 5) as f64 + DMatrix::identity(k, k) * 0.05;
    (&m + m.transpose()) * 0.5
}

pub fn max_abs_diff(a: &DVector<f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}
