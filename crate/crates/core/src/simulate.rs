//! Monte-Carlo study of bias and coverage for a single tracked coefficient.
//!
//! Each replicate draws truncated Gaussian covariates and a GLM response from
//! its own keyed random stream, fits every requested estimator and records the
//! estimate and model-based standard error of the tracked coefficient on the
//! original covariate scale. Replicates are independent, so they run in
//! parallel and are written into fixed slots; aggregation happens afterwards
//! in index order.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{standardize, CoefMap, Dataset};
use crate::debias::{hessian, invert_hessian, nodewise_row, qp_debias, NodewiseOptions, QpOptions};
use crate::error::{Error, Result};
use crate::family::{logistic, GlmFamily};
use crate::lasso::{fit_cv, score};
use crate::newton::{fit_mle, NewtonOptions};
use crate::rng::{Purpose, StreamKey};
use crate::stats::two_sided_z;

/// Covariance of the simulated covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CovStructure {
    Identity,
    /// `Sigma_ij = rho^|i-j|`
    Ar1 { rho: f64 },
    /// `Sigma_ij = rho` off the diagonal, 1 on it.
    Cs { rho: f64 },
}

impl CovStructure {
    pub fn matrix(&self, p: usize) -> Result<DMatrix<f64>> {
        match *self {
            CovStructure::Identity => Ok(DMatrix::identity(p, p)),
            CovStructure::Ar1 { rho } => {
                check_rho(rho)?;
                Ok(DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32)))
            }
            CovStructure::Cs { rho } => {
                check_rho(rho)?;
                if p > 1 && rho <= -1.0 / (p as f64 - 1.0) {
                    return Err(Error::Config(format!(
                        "compound symmetry with rho = {rho} is not positive definite for p = {p}"
                    )));
                }
                Ok(DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho }))
            }
        }
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > -1.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("correlation must lie in (-1, 1), got {rho}")))
    }
}

/// Estimators compared in a study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimMethod {
    Mle,
    OrigDs,
    RefDs,
    Qp(f64),
}

impl fmt::Display for SimMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimMethod::Mle => f.write_str("MLE"),
            SimMethod::OrigDs => f.write_str("ORIG-DS"),
            SimMethod::RefDs => f.write_str("REF-DS"),
            SimMethod::Qp(mu) => write!(f, "QP({mu})"),
        }
    }
}

impl FromStr for SimMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_uppercase().as_str() {
            "MLE" => return Ok(SimMethod::Mle),
            "ORIG-DS" | "ORIG" => return Ok(SimMethod::OrigDs),
            "REF-DS" | "REF" => return Ok(SimMethod::RefDs),
            _ => {}
        }
        let inner = t
            .strip_prefix("QP(")
            .or_else(|| t.strip_prefix("qp("))
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::Config(format!("unknown method '{t}'")))?;
        let mu: f64 = inner
            .parse()
            .map_err(|_| Error::Config(format!("bad mu in '{t}'")))?;
        if !(mu >= 0.0) {
            return Err(Error::Config(format!("mu must be >= 0 in '{t}'")));
        }
        Ok(SimMethod::Qp(mu))
    }
}

impl Serialize for SimMethod {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SimMethod {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_truncation() -> f64 {
    6.0
}
fn default_level() -> f64 {
    0.95
}
fn default_target() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_lasso_folds() -> usize {
    10
}
fn default_n_lambda() -> usize {
    crate::lasso::DEFAULT_N_LAMBDA
}
fn default_ratio() -> f64 {
    crate::lasso::DEFAULT_RATIO
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub structure: CovStructure,
    #[serde(default = "default_truncation")]
    pub truncation: f64,
    pub family: GlmFamily,
    /// Full true coefficient vector (intercept first). The tracked entry is
    /// overwritten by each grid value. Defaults to [`default_xi0`].
    #[serde(default)]
    pub xi0: Option<Vec<f64>>,
    pub beta1_grid: Vec<f64>,
    pub n_replicates: usize,
    pub methods: Vec<SimMethod>,
    #[serde(default = "default_level")]
    pub level: f64,
    pub seed: u64,
    /// Index of the tracked coefficient (1 = first covariate).
    #[serde(default = "default_target")]
    pub target: usize,
    /// Standardize covariates inside each replicate before fitting.
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default = "default_lasso_folds")]
    pub lasso_folds: usize,
    #[serde(default = "default_n_lambda")]
    pub n_lambda: usize,
    #[serde(default = "default_ratio")]
    pub lambda_ratio: f64,
    #[serde(default)]
    pub nodewise: NodewiseOptions,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta1_grid.is_empty() {
            return Err(Error::Config("beta1_grid is empty".into()));
        }
        if self.n_replicates == 0 {
            return Err(Error::Config("n_replicates must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        if self.target == 0 || self.target > self.p {
            return Err(Error::Config(format!(
                "target must index a covariate in 1..={}, got {}",
                self.p, self.target
            )));
        }
        if !(self.truncation > 0.0) {
            return Err(Error::Config("truncation must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config("level must lie in (0, 1)".into()));
        }
        if self.n < 2 || self.p < 1 {
            return Err(Error::Config("need n >= 2 and p >= 1".into()));
        }
        self.structure.matrix(self.p.min(2).max(1))?;
        if let CovStructure::Cs { .. } = self.structure {
            self.structure.matrix(self.p)?;
        }
        self.base_xi0()?;
        Ok(())
    }

    fn base_xi0(&self) -> Result<Vec<f64>> {
        match &self.xi0 {
            Some(v) if v.len() == self.p + 1 => Ok(v.clone()),
            Some(v) => Err(Error::Config(format!(
                "xi0 has length {}, expected p + 1 = {}",
                v.len(),
                self.p + 1
            ))),
            None => default_xi0(self.p, 0.0),
        }
    }

    /// True coefficients at grid point `b`.
    pub fn truth(&self, b: usize) -> Result<Vec<f64>> {
        let mut xi = self.base_xi0()?;
        xi[self.target] = self.beta1_grid[b];
        Ok(xi)
    }
}

/// Default truth: zero intercept, the tracked coefficient at `beta1`, entries
/// 2 and 3 at 1.0, entries 4 and 5 at 0.5, all others zero.
pub fn default_xi0(p: usize, beta1: f64) -> Result<Vec<f64>> {
    if p < 5 {
        return Err(Error::Config(format!("default truth needs p >= 5, got {p}")));
    }
    let mut xi = vec![0.0; p + 1];
    xi[1] = beta1;
    xi[2] = 1.0;
    xi[3] = 1.0;
    xi[4] = 0.5;
    xi[5] = 0.5;
    Ok(xi)
}

/// Rows from `N(0, Sigma)` via the Cholesky factor of `Sigma`, clipped
/// elementwise to `[-truncation, truncation]`.
pub fn gen_covariates(
    n: usize,
    p: usize,
    structure: CovStructure,
    truncation: f64,
    rng: &mut impl Rng,
) -> Result<DMatrix<f64>> {
    let sigma = structure.matrix(p)?;
    let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = match structure {
        CovStructure::Identity => z,
        _ => {
            let l = nalgebra::Cholesky::new(sigma)
                .ok_or_else(|| Error::Config("covariance is not positive definite".into()))?
                .unpack();
            z * l.transpose()
        }
    };
    Ok(x.map(|v| v.clamp(-truncation, truncation)))
}

/// Responses from the GLM with linear predictor `x_i' xi0`; gaussian noise
/// has unit variance.
pub fn gen_response(
    x: &DMatrix<f64>,
    xi0: &DVector<f64>,
    family: GlmFamily,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if x.ncols() != xi0.len() {
        return Err(Error::Domain("design and coefficient dimensions differ".into()));
    }
    let eta = x * xi0;
    eta.iter()
        .map(|&a| match family {
            GlmFamily::Gaussian => Ok(a + rng.sample::<f64, _>(StandardNormal)),
            GlmFamily::Binomial => Ok(f64::from(rng.random::<f64>() < logistic(a))),
            GlmFamily::Poisson => {
                let mean = family.mean(a);
                Poisson::new(mean)
                    .map(|d| d.sample(rng))
                    .map_err(|e| Error::Domain(format!("poisson mean {mean}: {e}")))
            }
        })
        .collect()
}

/// What one estimator produced for the tracked coefficient in one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Ok { estimate: f64, se: f64 },
    Failed { kind: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub beta1_index: usize,
    pub replicate: usize,
    pub truth: f64,
    /// Same order as the config's methods.
    pub outcomes: Vec<Outcome>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub beta1: f64,
    pub method: SimMethod,
    pub mean_bias: Option<f64>,
    pub coverage: Option<f64>,
    /// Standard deviation of the estimates; absent with fewer than two.
    pub empirical_se: Option<f64>,
    pub model_se: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
}

impl SummaryRow {
    /// `model_se / empirical_se`.
    pub fn se_ratio(&self) -> Option<f64> {
        match (self.model_se, self.empirical_se) {
            (Some(m), Some(e)) if e > 0.0 => Some(m / e),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub rows: Vec<SummaryRow>,
    pub records: Vec<ReplicateRecord>,
}

impl SimSummary {
    pub fn row(&self, beta1: f64, method: SimMethod) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.beta1 == beta1 && r.method == method)
    }

    /// `(estimate - truth) / se` for every successful replicate of `method`
    /// at grid point `beta1_index`.
    pub fn standardized_stats(&self, beta1_index: usize, method: SimMethod, methods: &[SimMethod]) -> Vec<f64> {
        let Some(m) = methods.iter().position(|x| *x == method) else {
            return Vec::new();
        };
        self.records
            .iter()
            .filter(|r| r.beta1_index == beta1_index)
            .filter_map(|r| match r.outcomes[m] {
                Outcome::Ok { estimate, se } if se > 0.0 => Some((estimate - r.truth) / se),
                _ => None,
            })
            .collect()
    }
}

fn target_on_original(map: &CoefMap, j: usize, est: f64, se: f64) -> (f64, f64) {
    let s = map.scales[j].scale;
    (est / s, se / s)
}

/// Estimate and standard error of coefficient `j` for each method in one
/// replicate. Errors in one method never affect the others.
pub fn run_one(cfg: &SimConfig, beta1_index: usize, replicate: usize) -> Result<ReplicateRecord> {
    let key = StreamKey::new(cfg.seed, beta1_index as u64, replicate as u64, Purpose::Covariates);
    let truth_vec = cfg.truth(beta1_index)?;
    let truth = truth_vec[cfg.target];
    let x = gen_covariates(cfg.n, cfg.p, cfg.structure, cfg.truncation, &mut key.rng())?;
    let names: Vec<String> = (1..=cfg.p).map(|j| format!("x{j}")).collect();
    let fail_all = |kind: &str, lambda| ReplicateRecord {
        beta1_index,
        replicate,
        truth,
        outcomes: vec![Outcome::Failed { kind: kind.to_string() }; cfg.methods.len()],
        lambda,
    };
    let mut design = DMatrix::from_element(cfg.n, cfg.p + 1, 1.0);
    design.view_mut((0, 1), (cfg.n, cfg.p)).copy_from(&x);
    let y = gen_response(
        &design,
        &DVector::from_vec(truth_vec),
        cfg.family,
        &mut key.with_purpose(Purpose::Response).rng(),
    )?;
    let raw = match Dataset::new(y, &x, names) {
        Ok(d) => d,
        Err(e) => return Ok(fail_all(e.kind(), None)),
    };
    let (d, map) = if cfg.standardize {
        match standardize(&raw) {
            Ok(v) => v,
            Err(e) => return Ok(fail_all(e.kind(), None)),
        }
    } else {
        let k = raw.x.ncols();
        (raw, CoefMap::identity(k))
    };
    let j = cfg.target;
    let fam = cfg.family;

    let needs_lasso = cfg.methods.iter().any(|m| *m != SimMethod::Mle);
    let lasso_seed: u64 = key.with_purpose(Purpose::LassoFolds).rng().random();
    let nodewise_seed: u64 = key.with_purpose(Purpose::NodewiseFolds).rng().random();

    struct Prepared {
        xi: DVector<f64>,
        g: DVector<f64>,
        h: crate::debias::HessianModel,
        lambda: f64,
    }
    let prepared: std::result::Result<Prepared, Error> = if needs_lasso {
        fit_cv(&d, fam, cfg.lasso_folds, cfg.n_lambda, cfg.lambda_ratio, lasso_seed).and_then(|(fit, _)| {
            if !fit.converged {
                return Err(Error::NonConvergence {
                    iterations: fit.n_iter,
                    reason: "lasso".into(),
                    last_iterate: Vec::new(),
                });
            }
            let h = hessian(&d, fam, &fit.xi_hat)?;
            let g = score(&d, fam, &fit.xi_hat);
            Ok(Prepared {
                lambda: fit.lambda,
                xi: fit.xi_hat,
                g,
                h,
            })
        })
    } else {
        Err(Error::Config("unused".into()))
    };

    let mut theta_cache: Option<Result<DMatrix<f64>>> = None;
    let n = d.n() as f64;
    let mut outcomes = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let res: Result<(f64, f64)> = match method {
            SimMethod::Mle => fit_mle(&d, fam, &NewtonOptions::default()).map(|m| (m.xi_hat[j], m.se[j])),
            _ => match &prepared {
                Err(e) => Err(Error::Degenerate(format!("lasso stage failed: {}", e.kind()))),
                Ok(pr) => match method {
                    SimMethod::RefDs => {
                        let theta = theta_cache.get_or_insert_with(|| invert_hessian(&pr.h));
                        match theta {
                            Ok(t) => {
                                let row = t.row(j);
                                let est = pr.xi[j] - row.dot(&pr.g.transpose());
                                Ok((est, (t[(j, j)] / n).sqrt()))
                            }
                            Err(e) => Err(Error::SingularHessian(e.to_string())),
                        }
                    }
                    SimMethod::Qp(mu) => qp_debias(&pr.h, j, mu, &QpOptions::default()).map(|row| {
                        let est = pr.xi[j] - row.dot(&pr.g);
                        let var = if mu == 0.0 {
                            row[j]
                        } else {
                            row.dot(&(&pr.h.sigma_hat * &row))
                        };
                        (est, (var.max(0.0) / n).sqrt())
                    }),
                    SimMethod::OrigDs => {
                        let fit = crate::lasso::LassoFit {
                            xi_hat: pr.xi.clone(),
                            lambda: pr.lambda,
                            n_iter: 0,
                            kkt_residual: 0.0,
                            converged: true,
                            objective_trace: Vec::new(),
                        };
                        nodewise_row(&d, fam, &fit, j, nodewise_seed, &cfg.nodewise).map(|c| {
                            let row = c.theta_row(j);
                            let est = pr.xi[j] - row.dot(&pr.g);
                            let var = row.dot(&(&pr.h.sigma_hat * &row));
                            (est, (var.max(0.0) / n).sqrt())
                        })
                    }
                    SimMethod::Mle => unreachable!(),
                },
            },
        };
        outcomes.push(match res {
            Ok((est, se)) if est.is_finite() && se.is_finite() => {
                let (estimate, se) = target_on_original(&map, j, est, se);
                Outcome::Ok { estimate, se }
            }
            Ok(_) => Outcome::Failed { kind: "non_finite".into() },
            Err(e) => Outcome::Failed { kind: e.kind().into() },
        });
    }
    Ok(ReplicateRecord {
        beta1_index,
        replicate,
        truth,
        outcomes,
        lambda: prepared.as_ref().ok().map(|p| p.lambda),
    })
}

/// Run every replicate of every grid point and aggregate.
pub fn run_replicates(cfg: &SimConfig) -> Result<SimSummary> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.beta1_grid.len())
        .flat_map(|b| (0..cfg.n_replicates).map(move |r| (b, r)))
        .collect();
    #[cfg(feature = "parallel")]
    let records: Vec<Result<ReplicateRecord>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(|&(b, r)| run_one(cfg, b, r)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let records: Vec<Result<ReplicateRecord>> = jobs.iter().map(|&(b, r)| run_one(cfg, b, r)).collect();
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    let rows = summarize(cfg, &records)?;
    Ok(SimSummary { rows, records })
}

pub fn summarize(cfg: &SimConfig, records: &[ReplicateRecord]) -> Result<Vec<SummaryRow>> {
    let z = two_sided_z(cfg.level)?;
    let mut rows = Vec::new();
    for (b, &beta1) in cfg.beta1_grid.iter().enumerate() {
        for (m, &method) in cfg.methods.iter().enumerate() {
            let mut ests = Vec::new();
            let mut ses = Vec::new();
            let mut covered = 0usize;
            let mut failed = 0usize;
            for r in records.iter().filter(|r| r.beta1_index == b) {
                match r.outcomes[m] {
                    Outcome::Ok { estimate, se } => {
                        if (estimate - r.truth).abs() <= z * se {
                            covered += 1;
                        }
                        ests.push(estimate - r.truth);
                        ses.push(se);
                    }
                    Outcome::Failed { .. } => failed += 1,
                }
            }
            let k = ests.len();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let (bias, cov, emp, model) = if k == 0 {
                (None, None, None, None)
            } else {
                let bias = mean(&ests);
                let emp = (k >= 2).then(|| {
                    (ests.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / (k as f64 - 1.0)).sqrt()
                });
                (Some(bias), Some(covered as f64 / k as f64), emp, Some(mean(&ses)))
            };
            rows.push(SummaryRow {
                beta1,
                method,
                mean_bias: bias,
                coverage: cov,
                empirical_se: emp,
                model_se: model,
                n_ok: k,
                n_failed: failed,
            });
        }
    }
    Ok(rows)
}

/// Sweep the constrained-program tuning level. REF-DS runs alongside so the
/// `mu = 0` rows can be compared with it directly.
pub fn mu_sweep(cfg: &SimConfig, mu_grid: &[f64]) -> Result<MuSweep> {
    if mu_grid.is_empty() {
        return Err(Error::Config("empty mu grid".into()));
    }
    let mut c = cfg.clone();
    c.methods = std::iter::once(SimMethod::RefDs)
        .chain(mu_grid.iter().map(|&m| SimMethod::Qp(m)))
        .collect();
    let summary = run_replicates(&c)?;
    Ok(MuSweep {
        mu_grid: mu_grid.to_vec(),
        methods: c.methods,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuSweep {
    pub mu_grid: Vec<f64>,
    pub methods: Vec<SimMethod>,
    pub summary: SimSummary,
}

impl MuSweep {
    /// Summary rows for one tuning level.
    pub fn rows_for(&self, mu: f64) -> Vec<&SummaryRow> {
        self.summary
            .rows
            .iter()
            .filter(|r| r.method == SimMethod::Qp(mu))
            .collect()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

/// Panel CSV: `beta1,method,bias,coverage,emp_se,model_se,n_failed`.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut w: W) -> Result<()> {
    writeln!(w, "beta1,method,bias,coverage,emp_se,model_se,n_failed")?;
    for r in rows {
        writeln!(
            w,
            "{:.16e},{},{},{},{},{},{}",
            r.beta1,
            r.method,
            fmt_opt(r.mean_bias),
            fmt_opt(r.coverage),
            fmt_opt(r.empirical_se),
            fmt_opt(r.model_se),
            r.n_failed
        )?;
    }
    Ok(())
}

/// Tuning-level CSV: `mu,beta1,bias,coverage,se_ratio,n_failed`.
pub fn write_mu_csv<W: Write>(sweep: &MuSweep, mut w: W) -> Result<()> {
    writeln!(w, "mu,beta1,bias,coverage,se_ratio,n_failed")?;
    for &mu in &sweep.mu_grid {
        for r in sweep.rows_for(mu) {
            writeln!(
                w,
                "{:.16e},{:.16e},{},{},{},{}",
                mu,
                r.beta1,
                fmt_opt(r.mean_bias),
                fmt_opt(r.coverage),
                fmt_opt(r.se_ratio()),
                r.n_failed
            )?;
        }
    }
    Ok(())
}

/// Per-replicate CSV: `beta1,replicate,method,estimate,se,status`.
pub fn write_records_csv<W: Write>(cfg: &SimConfig, records: &[ReplicateRecord], mut w: W) -> Result<()> {
    writeln!(w, "beta1,replicate,method,estimate,se,status")?;
    for r in records {
        for (m, o) in cfg.methods.iter().zip(&r.outcomes) {
            match o {
                Outcome::Ok { estimate, se } => writeln!(
                    w,
                    "{:.16e},{},{},{:.16e},{:.16e},ok",
                    cfg.beta1_grid[r.beta1_index], r.replicate, m, estimate, se
                )?,
                Outcome::Failed { kind } => writeln!(
                    w,
                    "{:.16e},{},{},,,{}",
                    cfg.beta1_grid[r.beta1_index], r.replicate, m, kind
                )?,
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn small_cfg(family: GlmFamily, methods: Vec<SimMethod>) -> SimConfig {
        SimConfig {
            n: 150,
            p: 6,
            structure: CovStructure::Ar1 { rho: 0.5 },
            truncation: 6.0,
            family,
            xi0: None,
            beta1_grid: vec![0.0, 0.5],
            n_replicates: 3,
            methods,
            level: 0.95,
            seed: 42,
            target: 1,
            standardize: true,
            lasso_folds: 5,
            n_lambda: 30,
            lambda_ratio: 1e-3,
            nodewise: NodewiseOptions {
                n_lambda: 20,
                ..NodewiseOptions::default()
            },
        }
    }

    fn sample_corr(x: &DMatrix<f64>, a: usize, b: usize) -> f64 {
        let n = x.nrows() as f64;
        let (ca, cb) = (x.column(a), x.column(b));
        let (ma, mb) = (ca.mean(), cb.mean());
        let cov = ca.iter().zip(cb.iter()).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / n;
        let va = ca.iter().map(|u| (u - ma).powi(2)).sum::<f64>() / n;
        let vb = cb.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
        cov / (va * vb).sqrt()
    }

    #[test]
    fn default_truth() {
        assert_eq!(default_xi0(5, 0.0).unwrap(), vec![0.0, 0.0, 1.0, 1.0, 0.5, 0.5]);
        let xi = default_xi0(100, 1.5).unwrap();
        assert_eq!(xi.iter().skip(1).filter(|v| **v != 0.0).count(), 5);
        assert!(default_xi0(4, 0.0).is_err());
    }

    #[test]
    fn identity_covariates_uncorrelated() {
        let x = gen_covariates(100_000, 2, CovStructure::Identity, 6.0, &mut seeded(1, Purpose::User)).unwrap();
        assert!(sample_corr(&x, 0, 1).abs() < 0.01);
    }

    #[test]
    fn ar1_lag_two_correlation() {
        let x = gen_covariates(100_000, 3, CovStructure::Ar1 { rho: 0.7 }, 6.0, &mut seeded(2, Purpose::User)).unwrap();
        assert!((sample_corr(&x, 0, 2) - 0.49).abs() < 0.02);
        assert!(x.iter().all(|v| v.abs() <= 6.0));
    }

    #[test]
    fn truncation_clips() {
        let x = gen_covariates(2000, 4, CovStructure::Cs { rho: 0.3 }, 1.0, &mut seeded(3, Purpose::User)).unwrap();
        assert!(x.iter().all(|v| v.abs() <= 1.0));
        assert!(x.iter().any(|v| v.abs() == 1.0));
    }

    #[test]
    fn cs_must_be_positive_definite() {
        assert!(CovStructure::Cs { rho: -0.3 }.matrix(5).is_err());
        assert!(CovStructure::Cs { rho: -0.2 }.matrix(5).is_ok());
        assert!(CovStructure::Ar1 { rho: 1.0 }.matrix(3).is_err());
    }

    #[test]
    fn response_means() {
        let n = 100_000;
        let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { 0.0 });
        let y = gen_response(&x, &DVector::zeros(2), GlmFamily::Binomial, &mut seeded(4, Purpose::User)).unwrap();
        let m = y.iter().sum::<f64>() / n as f64;
        assert!((m - 0.5).abs() < 0.005);
        let xi = DVector::from_vec(vec![2f64.ln(), 0.0]);
        let y = gen_response(&x, &xi, GlmFamily::Poisson, &mut seeded(5, Purpose::User)).unwrap();
        let m = y.iter().sum::<f64>() / n as f64;
        assert!((m - 2.0).abs() < 0.05);
        let again = gen_response(&x, &xi, GlmFamily::Poisson, &mut seeded(5, Purpose::User)).unwrap();
        assert_eq!(y, again);
    }

    #[test]
    fn method_names_round_trip() {
        for m in [SimMethod::Mle, SimMethod::OrigDs, SimMethod::RefDs, SimMethod::Qp(0.01)] {
            let s = m.to_string();
            assert_eq!(s.parse::<SimMethod>().unwrap(), m);
            let j = serde_json::to_string(&m).unwrap();
            assert_eq!(serde_json::from_str::<SimMethod>(&j).unwrap(), m);
        }
        assert!("QP(-1)".parse::<SimMethod>().is_err());
        assert!("LASSO".parse::<SimMethod>().is_err());
    }

    #[test]
    fn single_replicate_has_no_empirical_se() {
        let mut cfg = small_cfg(GlmFamily::Binomial, vec![SimMethod::RefDs]);
        cfg.n_replicates = 1;
        cfg.beta1_grid = vec![0.5];
        let s = run_replicates(&cfg).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert!(s.rows[0].empirical_se.is_none());
        assert!(s.rows[0].model_se.is_some());
    }

    #[test]
    fn gaussian_ref_ds_matches_mle_per_replicate() {
        let cfg = small_cfg(GlmFamily::Gaussian, vec![SimMethod::Mle, SimMethod::RefDs]);
        let s = run_replicates(&cfg).unwrap();
        for r in &s.records {
            match (&r.outcomes[0], &r.outcomes[1]) {
                (Outcome::Ok { estimate: a, se: sa }, Outcome::Ok { estimate: b, se: sb }) => {
                    assert!((a - b).abs() < 1e-8 && (sa - sb).abs() < 1e-8);
                }
                other => panic!("{other:?}"),
            }
        }
        let m = s.row(0.5, SimMethod::Mle).unwrap();
        let d = s.row(0.5, SimMethod::RefDs).unwrap();
        assert_eq!(m.coverage, d.coverage);
    }

    #[test]
    fn mu_sweep_structure_and_zero_row() {
        let cfg = small_cfg(GlmFamily::Binomial, vec![SimMethod::RefDs]);
        let sweep = mu_sweep(&cfg, &[0.0, 0.01, 0.1, 1.0]).unwrap();
        assert_eq!(sweep.mu_grid.len(), 4);
        for &mu in &sweep.mu_grid {
            assert_eq!(sweep.rows_for(mu).len(), cfg.beta1_grid.len());
        }
        for (q, r) in sweep.rows_for(0.0).iter().zip(
            sweep.summary.rows.iter().filter(|r| r.method == SimMethod::RefDs),
        ) {
            assert!((q.mean_bias.unwrap() - r.mean_bias.unwrap()).abs() < 1e-10);
            assert!((q.model_se.unwrap() - r.model_se.unwrap()).abs() < 1e-10);
            assert_eq!(q.coverage, r.coverage);
        }
        let mut buf = Vec::new();
        write_mu_csv(&sweep, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 4 * 2);
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_cfg(GlmFamily::Binomial, vec![SimMethod::RefDs]);
        cfg.beta1_grid.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg(GlmFamily::Binomial, vec![SimMethod::RefDs]);
        cfg.xi0 = Some(vec![0.0; 3]);
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg(GlmFamily::Binomial, vec![SimMethod::RefDs]);
        cfg.target = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let cfg: SimConfig = serde_json::from_str(
            r#"{"n": 100, "p": 10, "structure": {"type": "ar1", "rho": 0.7}, "family": "binomial",
                "beta1_grid": [0.0], "n_replicates": 2, "methods": ["REF-DS", "QP(0.1)"], "seed": 1}"#,
        )
        .unwrap();
        assert_eq!(cfg.truncation, 6.0);
        assert_eq!(cfg.lasso_folds, 10);
        assert_eq!(cfg.nodewise.n_folds, 5);
        assert_eq!(cfg.methods[1], SimMethod::Qp(0.1));
    }
}
