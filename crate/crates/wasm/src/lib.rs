//! Browser bindings for three interactive views: per-coefficient intervals on
//! one simulated data set, a joint confidence ellipse for two coefficients,
//! and a small coverage sweep. Inputs and outputs are JSON strings so the
//! page needs no generated type bindings beyond the three entry points.

use glmdebias::debias::{nodewise_theta, orig_debias, NodewiseOptions};
use glmdebias::inference::{confidence_region, wald_ci};
use glmdebias::lasso::fit_cv;
use glmdebias::newton::{fit_mle, NewtonOptions};
use glmdebias::rng::{Purpose, StreamKey};
use glmdebias::simulate::{gen_covariates, gen_response, run_replicates, CovStructure, SimConfig, SimMethod};
use glmdebias::{refine_debias, standardize, Dataset, DebiasedFit, GlmFamily};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// One simulated data set.
#[derive(Debug, Clone, Deserialize)]
pub struct Scenario {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub beta1: f64,
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Serialize)]
pub struct Interval {
    pub method: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Serialize)]
pub struct CoefIntervals {
    pub name: String,
    pub truth: f64,
    pub intervals: Vec<Interval>,
}

#[derive(Debug, Serialize)]
pub struct IntervalsOut {
    pub lambda: f64,
    pub coefs: Vec<CoefIntervals>,
}

#[derive(Debug, Serialize)]
pub struct Ellipse {
    pub method: String,
    pub center: [f64; 2],
    pub boundary: Vec<[f64; 2]>,
    pub covers_truth: bool,
}

#[derive(Debug, Serialize)]
pub struct RegionOut {
    pub truth: [f64; 2],
    pub ellipses: Vec<Ellipse>,
}

#[derive(Debug, Deserialize)]
pub struct SweepIn {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub beta1_grid: Vec<f64>,
    pub n_replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub beta1: f64,
    pub method: String,
    pub coverage: Option<f64>,
    pub bias: Option<f64>,
    pub n_failed: usize,
}

struct Fitted {
    truth: Vec<f64>,
    names: Vec<String>,
    fits: Vec<DebiasedFit>,
    lambda: f64,
    mle: Option<(DVector<f64>, DVector<f64>)>,
}

fn check(s: &Scenario) -> Result<(), String> {
    if s.p < 5 || s.p > 60 {
        return Err("p must lie in 5..=60".into());
    }
    if s.n <= s.p + 10 || s.n > 2000 {
        return Err("n must exceed p + 10 and be at most 2000".into());
    }
    if !(s.rho > -1.0 && s.rho < 1.0) {
        return Err("rho must lie in (-1, 1)".into());
    }
    Ok(())
}

fn fit_scenario(s: &Scenario) -> Result<Fitted, String> {
    check(s)?;
    let key = StreamKey::new(s.seed, 0, 0, Purpose::Covariates);
    let x = gen_covariates(s.n, s.p, CovStructure::Ar1 { rho: s.rho }, 6.0, &mut key.rng()).map_err(|e| e.to_string())?;
    let truth = glmdebias::simulate::default_xi0(s.p, s.beta1).map_err(|e| e.to_string())?;
    let mut design = DMatrix::from_element(s.n, s.p + 1, 1.0);
    design.view_mut((0, 1), (s.n, s.p)).copy_from(&x);
    let y = gen_response(
        &design,
        &DVector::from_vec(truth.clone()),
        GlmFamily::Binomial,
        &mut key.with_purpose(Purpose::Response).rng(),
    )
    .map_err(|e| e.to_string())?;
    let names: Vec<String> = (1..=s.p).map(|j| format!("x{j}")).collect();
    let raw = Dataset::new(y, &x, names).map_err(|e| e.to_string())?;
    let (d, map) = standardize(&raw).map_err(|e| e.to_string())?;
    let fam = GlmFamily::Binomial;
    let (fit, _) = fit_cv(&d, fam, 10, 60, 1e-3, s.seed).map_err(|e| e.to_string())?;
    let ref_ds = refine_debias(&d, fam, &fit).map_err(|e| e.to_string())?.to_original(&map);
    let opts = NodewiseOptions {
        n_lambda: 40,
        ratio: 1e-3,
        ..NodewiseOptions::default()
    };
    let orig = nodewise_theta(&d, fam, &fit, s.seed, &opts)
        .and_then(|nt| orig_debias(&d, fam, &fit, &nt.theta))
        .map(|f| f.to_original(&map));
    let mle = fit_mle(&d, fam, &NewtonOptions::default()).ok().map(|m| {
        let est = map.to_original(&m.xi_hat);
        let se = DVector::from_iterator(m.se.len(), (0..m.se.len()).map(|j| m.se[j] / map.scales[j].scale));
        (est, se)
    });
    let mut fits = vec![ref_ds];
    if let Ok(o) = orig {
        fits.push(o);
    }
    Ok(Fitted {
        truth,
        names: d.col_names.clone(),
        fits,
        lambda: fit.lambda,
        mle,
    })
}

/// Intervals for the first six covariates from every method.
pub fn intervals_json(input: &str) -> Result<String, String> {
    let s: Scenario = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let f = fit_scenario(&s)?;
    let z = glmdebias::stats::two_sided_z(s.level).map_err(|e| e.to_string())?;
    let k = f.truth.len();
    let coefs = (1..k.min(7))
        .map(|j| {
            let mut e = DVector::zeros(k);
            e[j] = 1.0;
            let mut intervals: Vec<Interval> = f
                .fits
                .iter()
                .filter_map(|fit| {
                    wald_ci(fit, &e, s.level).ok().map(|ci| Interval {
                        method: fit.method.to_string(),
                        estimate: ci.estimate,
                        lower: ci.lower,
                        upper: ci.upper,
                    })
                })
                .collect();
            if let Some((est, se)) = &f.mle {
                intervals.push(Interval {
                    method: "MLE".into(),
                    estimate: est[j],
                    lower: est[j] - z * se[j],
                    upper: est[j] + z * se[j],
                });
            }
            CoefIntervals {
                name: f.names[j].clone(),
                truth: f.truth[j],
                intervals,
            }
        })
        .collect();
    serde_json::to_string(&IntervalsOut { lambda: f.lambda, coefs }).map_err(|e| e.to_string())
}

/// Boundary of `{x : (x - c)' S (x - c) = t}` for a 2x2 positive definite `S`.
fn ellipse_boundary(c: &DVector<f64>, shape: &DMatrix<f64>, t: f64, points: usize) -> Vec<[f64; 2]> {
    let eig = shape.clone().symmetric_eigen();
    (0..=points)
        .map(|i| {
            let th = 2.0 * std::f64::consts::PI * i as f64 / points as f64;
            let u = [th.cos(), th.sin()];
            let mut p = [c[0], c[1]];
            for a in 0..2 {
                let r = (t / eig.eigenvalues[a]).sqrt() * u[a];
                p[0] += r * eig.eigenvectors[(0, a)];
                p[1] += r * eig.eigenvectors[(1, a)];
            }
            p
        })
        .collect()
}

/// Joint region for the first two covariate coefficients.
pub fn region_json(input: &str) -> Result<String, String> {
    let s: Scenario = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let f = fit_scenario(&s)?;
    let k = f.truth.len();
    let mut a = DMatrix::zeros(2, k);
    a[(0, 1)] = 1.0;
    a[(1, 2)] = 1.0;
    let truth = DVector::from_vec(vec![f.truth[1], f.truth[2]]);
    let ellipses = f
        .fits
        .iter()
        .filter_map(|fit| {
            let r = confidence_region(fit, &a, s.level).ok()?;
            Some(Ellipse {
                method: fit.method.to_string(),
                center: [r.center[0], r.center[1]],
                boundary: ellipse_boundary(&r.center, &r.shape, r.threshold, 96),
                covers_truth: r.contains(&truth),
            })
        })
        .collect();
    serde_json::to_string(&RegionOut {
        truth: [truth[0], truth[1]],
        ellipses,
    })
    .map_err(|e| e.to_string())
}

/// Coverage and bias of the first covariate over a grid of true values.
pub fn sweep_json(input: &str) -> Result<String, String> {
    let s: SweepIn = serde_json::from_str(input).map_err(|e| e.to_string())?;
    check(&Scenario {
        n: s.n,
        p: s.p,
        rho: s.rho,
        beta1: 0.0,
        seed: s.seed,
        level: 0.95,
    })?;
    if s.n_replicates == 0 || s.n_replicates > 200 || s.beta1_grid.is_empty() || s.beta1_grid.len() > 8 {
        return Err("use 1..=200 replicates and 1..=8 grid points".into());
    }
    let cfg = SimConfig {
        n: s.n,
        p: s.p,
        structure: CovStructure::Ar1 { rho: s.rho },
        truncation: 6.0,
        family: GlmFamily::Binomial,
        xi0: None,
        beta1_grid: s.beta1_grid,
        n_replicates: s.n_replicates,
        methods: vec![SimMethod::Mle, SimMethod::OrigDs, SimMethod::RefDs],
        level: 0.95,
        seed: s.seed,
        target: 1,
        standardize: true,
        lasso_folds: 5,
        n_lambda: 40,
        lambda_ratio: 1e-3,
        nodewise: NodewiseOptions {
            n_lambda: 30,
            ratio: 1e-3,
            ..NodewiseOptions::default()
        },
    };
    let summary = run_replicates(&cfg).map_err(|e| e.to_string())?;
    let points: Vec<SweepPoint> = summary
        .rows
        .iter()
        .map(|r| SweepPoint {
            beta1: r.beta1,
            method: r.method.to_string(),
            coverage: r.coverage,
            bias: r.mean_bias,
            n_failed: r.n_failed,
        })
        .collect();
    serde_json::to_string(&points).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn intervals(input: &str) -> Result<String, JsValue> {
    intervals_json(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn region(input: &str) -> Result<String, JsValue> {
    region_json(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn sweep(input: &str) -> Result<String, JsValue> {
    sweep_json(input).map_err(|e| JsValue::from_str(&e))
}
