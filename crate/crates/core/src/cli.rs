//! Command-line front end: `fit`, `debias`, `ci` and `simulate`.
//!
//! Exit codes: 0 on success, 2 for usage, configuration and data errors,
//! 3 for numerical failures. Errors are written to stderr as one JSON object.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{load_csv, standardize, CoefMap, CsvOptions, Dataset};
use crate::debias::{condition_number, hessian, invert_hessian, nodewise_theta, orig_debias, qp_debias_fit, refine_debias, DebiasedFit, NodewiseOptions, QpOptions};
use crate::error::{Error, Result};
use crate::family::GlmFamily;
use crate::inference::{coefficient_table, wald_ci, wald_test, CiResult, CoefRow};
use crate::lasso::{fit_cv, fit_lasso, LassoFit, DEFAULT_N_LAMBDA, DEFAULT_RATIO};
use crate::simulate::{mu_sweep, run_replicates, write_mu_csv, write_records_csv, write_summary_csv, SimConfig};

/// Version of the JSON layouts written by this tool.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "glmdebias", version = concat!(env!("CARGO_PKG_VERSION"), " (output format 1)"))]
#[command(about = "De-biased lasso inference for generalized linear models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an l1-penalized GLM and write the coefficients as JSON.
    Fit(FitArgs),
    /// Fit, de-bias and write estimates, covariance and a coefficient table.
    Debias(DebiasArgs),
    /// Confidence intervals from a saved `debias` output.
    Ci(CiArgs),
    /// Run a Monte-Carlo study described by a JSON config.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Ref,
    Orig,
    Qp,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<String>,
    /// Columns to ignore; repeat or separate with commas.
    #[arg(long, value_delimiter = ',')]
    pub drop: Vec<String>,
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long)]
    pub family: Option<GlmFamily>,
    /// Fixed penalty level on the standardized scale.
    #[arg(long, conflicts_with = "cv")]
    pub lambda: Option<f64>,
    /// Number of cross-validation folds (default 10).
    #[arg(long)]
    pub cv: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output JSON path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with defaults for any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DebiasArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Tuning level of the constrained program (method qp).
    #[arg(long)]
    pub mu: Option<f64>,
    /// Folds for the node-wise regressions (method orig).
    #[arg(long)]
    pub nodewise_cv: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CiArgs {
    /// JSON written by `debias`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Comma-separated contrast on the original covariate scale, intercept first.
    #[arg(long, conflicts_with = "coef", allow_hyphen_values = true)]
    pub contrast: Option<String>,
    /// Index or name of a single coefficient.
    #[arg(long)]
    pub coef: Option<String>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

/// Settings shared by `fit` and `debias`, after merging flags over a config
/// file over defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    pub data: Option<PathBuf>,
    pub response: Option<String>,
    pub drop: Vec<String>,
    pub standardize: Option<bool>,
    pub family: Option<GlmFamily>,
    pub lambda: Option<f64>,
    pub cv: Option<usize>,
    pub seed: Option<u64>,
    pub method: Option<MethodArg>,
    pub mu: Option<f64>,
    pub nodewise_cv: Option<usize>,
    pub level: Option<f64>,
}

impl FitSettings {
    fn overlay(mut self, top: FitSettings) -> FitSettings {
        macro_rules! take {
            ($($f:ident),*) => { $( if top.$f.is_some() { self.$f = top.$f; } )* };
        }
        take!(data, response, standardize, family, lambda, cv, seed, method, mu, nodewise_cv, level);
        if !top.drop.is_empty() {
            self.drop = top.drop;
        }
        // an explicit lambda on the command line wins over a cv count from the file
        if top.lambda.is_some() {
            self.cv = None;
        } else if top.cv.is_some() {
            self.lambda = None;
        }
        self
    }

    fn from_flags(a: &FitArgs) -> FitSettings {
        FitSettings {
            data: a.data.clone(),
            response: a.response.clone(),
            drop: a.drop.clone(),
            standardize: a.no_standardize.then_some(false),
            family: a.family,
            lambda: a.lambda,
            cv: a.cv,
            seed: a.seed,
            ..FitSettings::default()
        }
    }

    fn resolve(a: &FitArgs, extra: FitSettings) -> Result<FitSettings> {
        let base = match &a.config {
            Some(p) => serde_json::from_str::<FitSettings>(&fs::read_to_string(p)?)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => FitSettings::default(),
        };
        let mut flags = FitSettings::from_flags(a);
        flags.method = extra.method;
        flags.mu = extra.mu;
        flags.nodewise_cv = extra.nodewise_cv;
        flags.level = extra.level;
        let s = base.overlay(flags);
        if s.data.is_none() {
            return Err(Error::Config("missing required flag --data".into()));
        }
        if s.response.is_none() {
            return Err(Error::Config("missing required flag --response".into()));
        }
        if s.family.is_none() {
            return Err(Error::Config("missing required flag --family".into()));
        }
        if let Some(l) = s.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("--lambda must be finite and >= 0, got {l}")));
            }
        }
        if let Some(k) = s.cv {
            if k < 2 {
                return Err(Error::Config("--cv needs at least 2 folds".into()));
            }
        }
        if let Some(mu) = s.mu {
            if !(mu >= 0.0 && mu.is_finite()) {
                return Err(Error::Config(format!("--mu must be finite and >= 0, got {mu}")));
            }
        }
        if let Some(l) = s.level {
            if !(l > 0.0 && l < 1.0) {
                return Err(Error::Config(format!("--level must lie in (0, 1), got {l}")));
            }
        }
        Ok(s)
    }

    fn data(&self) -> &Path {
        self.data.as_deref().expect("checked in resolve")
    }
    fn family(&self) -> GlmFamily {
        self.family.expect("checked in resolve")
    }
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub format_version: u32,
    /// SHA-256 of the input file.
    pub input_sha256: Option<String>,
    pub duration_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub notes: Option<serde_json::Value>,
}

impl RunManifest {
    fn new(sub: &str, config: &impl Serialize, seed: Option<u64>, input: Option<&Path>, start: Instant) -> Result<Self> {
        Ok(RunManifest {
            subcommand: sub.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            format_version: FORMAT_VERSION,
            input_sha256: input.map(sha256_file).transpose()?,
            duration_secs: start.elapsed().as_secs_f64(),
            notes: None,
        })
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub family: GlmFamily,
    pub col_names: Vec<String>,
    pub lambda: f64,
    pub standardized: bool,
    /// Coefficients on the original covariate scale.
    pub xi_hat: Vec<f64>,
    /// Coefficients on the fitting scale.
    pub xi_standardized: Vec<f64>,
    pub converged: bool,
    pub kkt_residual: f64,
    pub n_iter: usize,
    pub cv: Option<CvSummary>,
    pub manifest: RunManifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub n_folds: usize,
    pub lambda_grid: Vec<f64>,
    pub mean_deviance: Vec<f64>,
    pub index_min: usize,
}

/// Written by `debias`, read by `ci`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasOutput {
    pub family: GlmFamily,
    pub col_names: Vec<String>,
    pub level: f64,
    /// Estimates and covariance on the original covariate scale.
    pub fit: DebiasedFit,
    /// Standard errors of `fit.b_hat`.
    pub se: Vec<f64>,
    pub table: Vec<CoefRow>,
    pub diagnostics: Diagnostics,
    pub manifest: RunManifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub kkt_residual: f64,
    /// 1-norm condition number of the Hessian at the lasso fit.
    pub hessian_condition: f64,
    /// Penalty chosen for each node-wise regression (method orig).
    pub nodewise_lambdas: Option<Vec<f64>>,
}

fn load(s: &FitSettings) -> Result<(Dataset, CoefMap)> {
    let opts = CsvOptions {
        response: s.response.as_deref().expect("checked in resolve"),
        drop: &s.drop,
    };
    let raw = load_csv(s.data(), &opts)?;
    s.family().validate_response(raw.y.as_slice())?;
    if s.standardize.unwrap_or(true) {
        standardize(&raw)
    } else {
        let k = raw.x.ncols();
        Ok((raw, CoefMap::identity(k)))
    }
}

fn lasso(d: &Dataset, s: &FitSettings) -> Result<(LassoFit, Option<CvSummary>)> {
    let fit_and_cv = match s.lambda {
        Some(l) => (fit_lasso(d, s.family(), l, None)?, None),
        None => {
            let k = s.cv.unwrap_or(10);
            let (fit, cv) = fit_cv(d, s.family(), k, DEFAULT_N_LAMBDA, DEFAULT_RATIO, s.seed())?;
            let summary = CvSummary {
                n_folds: k,
                lambda_grid: cv.lambda_grid,
                mean_deviance: cv.mean_deviance,
                index_min: cv.index_min,
            };
            (fit, Some(summary))
        }
    };
    if !fit_and_cv.0.converged {
        return Err(Error::NonConvergence {
            iterations: fit_and_cv.0.n_iter,
            reason: format!("lasso at lambda = {}", fit_and_cv.0.lambda),
            last_iterate: fit_and_cv.0.xi_hat.iter().copied().collect(),
        });
    }
    Ok(fit_and_cv)
}

fn write_json(out: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text + "\n")?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let start = Instant::now();
    let s = FitSettings::resolve(a, FitSettings::default())?;
    let (d, map) = load(&s)?;
    let (fit, cv) = lasso(&d, &s)?;
    let out = FitOutput {
        family: s.family(),
        col_names: d.col_names.clone(),
        lambda: fit.lambda,
        standardized: s.standardize.unwrap_or(true),
        xi_hat: map.to_original(&fit.xi_hat).iter().copied().collect(),
        xi_standardized: fit.xi_hat.iter().copied().collect(),
        converged: fit.converged,
        kkt_residual: fit.kkt_residual,
        n_iter: fit.n_iter,
        cv,
        manifest: RunManifest::new("fit", &s, Some(s.seed()), Some(s.data()), start)?,
    };
    write_json(a.out.as_deref(), &out)
}

/// The full `debias` pipeline, returned rather than written. The fit is on
/// the original covariate scale.
pub fn run_debias(s: &FitSettings) -> Result<(DebiasedFit, Vec<String>, Diagnostics)> {
    let (d, map) = load(s)?;
    let (fit, _) = lasso(&d, s)?;
    let family = s.family();
    let h = hessian(&d, family, &fit.xi_hat)?;
    let hessian_condition = match invert_hessian(&h) {
        Ok(inv) => condition_number(&h.sigma_hat, &inv),
        Err(_) => f64::INFINITY,
    };
    let mut nodewise_lambdas = None;
    let db = match s.method.unwrap_or(MethodArg::Ref) {
        MethodArg::Ref => refine_debias(&d, family, &fit)?,
        MethodArg::Qp => qp_debias_fit(&d, family, &fit, s.mu.unwrap_or(0.0), &QpOptions::default())?,
        MethodArg::Orig => {
            let opts = NodewiseOptions {
                n_folds: s.nodewise_cv.unwrap_or(NodewiseOptions::default().n_folds),
                ..NodewiseOptions::default()
            };
            let nt = nodewise_theta(&d, family, &fit, s.seed(), &opts)?;
            nodewise_lambdas = Some(nt.lambdas.clone());
            orig_debias(&d, family, &fit, &nt.theta)?
        }
    };
    let diag = Diagnostics {
        kkt_residual: fit.kkt_residual,
        hessian_condition,
        nodewise_lambdas,
    };
    Ok((db.to_original(&map), d.col_names.clone(), diag))
}

fn cmd_debias(a: &DebiasArgs) -> Result<()> {
    let start = Instant::now();
    let extra = FitSettings {
        method: a.method,
        mu: a.mu,
        nodewise_cv: a.nodewise_cv,
        level: a.level,
        ..FitSettings::default()
    };
    let s = FitSettings::resolve(&a.fit, extra)?;
    let (fit, names, diagnostics) = run_debias(&s)?;
    let level = s.level.unwrap_or(0.95);
    let table = coefficient_table(&fit, &names, level)?;
    let out = DebiasOutput {
        family: s.family(),
        col_names: names,
        level,
        se: fit.standard_errors().iter().copied().collect(),
        fit,
        table,
        diagnostics,
        manifest: RunManifest::new("debias", &s, Some(s.seed()), Some(s.data()), start)?,
    };
    write_json(a.fit.out.as_deref(), &out)
}

fn parse_contrast(text: &str, k: usize) -> Result<DVector<f64>> {
    let v: Vec<f64> = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad contrast entry '{}'", t.trim())))
        })
        .collect::<Result<_>>()?;
    if v.len() != k {
        return Err(Error::Config(format!(
            "contrast has {} entries, expected {k} (intercept first)",
            v.len()
        )));
    }
    Ok(DVector::from_vec(v))
}

fn resolve_coef(key: &str, names: &[String]) -> Result<usize> {
    if let Ok(j) = key.parse::<usize>() {
        return if j < names.len() {
            Ok(j)
        } else {
            Err(Error::Config(format!("--coef {j} out of range 0..{}", names.len())))
        };
    }
    names
        .iter()
        .position(|n| n == key)
        .ok_or_else(|| Error::Config(format!("no coefficient named '{key}'")))
}

fn csv_row(fields: &[String]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(fields).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

fn f17(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV table `coef,est,se,lower,upper,p`.
pub fn table_csv(rows: &[CoefRow]) -> String {
    let mut s = String::from("coef,est,se,lower,upper,p\n");
    for r in rows {
        s += &csv_row(&[r.coef.clone(), f17(r.est), f17(r.se), f17(r.lower), f17(r.upper), f17(r.p)]);
    }
    s
}

fn ci_csv(label: &str, ci: &CiResult, p: f64) -> String {
    let mut s = String::from("contrast,est,se,lower,upper,p\n");
    s += &csv_row(&[label.to_string(), f17(ci.estimate), f17(ci.se), f17(ci.lower), f17(ci.upper), f17(p)]);
    s
}

fn cmd_ci(a: &CiArgs) -> Result<()> {
    let text = fs::read_to_string(&a.fit)?;
    let saved: DebiasOutput = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{} is not a debias output: {e}", a.fit.display())))?;
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(Error::Config(format!("--level must lie in (0, 1), got {}", a.level)));
    }
    let k = saved.fit.dim();
    let body = match (&a.contrast, &a.coef) {
        (Some(c), _) => {
            let alpha = parse_contrast(c, k)?;
            let ci = wald_ci(&saved.fit, &alpha, a.level)?;
            let t = wald_test(&saved.fit, &alpha, 0.0)?;
            ci_csv(c, &ci, t.p_value)
        }
        (None, Some(c)) => {
            let j = resolve_coef(c, &saved.col_names)?;
            let table = coefficient_table(&saved.fit, &saved.col_names, a.level)?;
            table_csv(&table[j..=j])
        }
        (None, None) => table_csv(&coefficient_table(&saved.fit, &saved.col_names, a.level)?),
    };
    match &a.out {
        Some(p) => fs::write(p, body)?,
        None => std::io::stdout().write_all(body.as_bytes())?,
    }
    Ok(())
}

/// Config file for `simulate`: a study plus an optional tuning-level sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateFile {
    #[serde(flatten)]
    pub study: SimConfig,
    #[serde(default)]
    pub mu_grid: Option<Vec<f64>>,
}

/// Run a study and write `panel.csv`, `replicates.csv`, optionally `mu.csv`,
/// and `manifest.json` into `out`.
pub fn run_simulate(cfg: &SimulateFile, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let summary = run_replicates(&cfg.study)?;
    write_summary_csv(&summary.rows, fs::File::create(out.join("panel.csv"))?)?;
    write_records_csv(&cfg.study, &summary.records, fs::File::create(out.join("replicates.csv"))?)?;
    if let Some(grid) = &cfg.mu_grid {
        let sweep = mu_sweep(&cfg.study, grid)?;
        write_mu_csv(&sweep, fs::File::create(out.join("mu.csv"))?)?;
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let start = Instant::now();
    let text = fs::read_to_string(&a.config)?;
    let cfg: SimulateFile = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", a.config.display())))?;
    cfg.study.validate()?;
    if a.workers == Some(0) {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = a.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_simulate(&cfg, &a.out))?;
    let mut m = RunManifest::new("simulate", &cfg, Some(cfg.study.seed), Some(&a.config), start)?;
    let truth = cfg.study.truth(0)?;
    m.notes = Some(serde_json::json!({
        "nonzero_positions": (1..truth.len()).filter(|&j| j != cfg.study.target && truth[j] != 0.0).collect::<Vec<_>>(),
        "target": cfg.study.target,
        "standardize_per_replicate": cfg.study.standardize,
        "workers": pool.current_num_threads(),
    }));
    write_json(Some(&a.out.join("manifest.json")), &m)
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

/// Parse `argv`, run, and return the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let res = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Debias(a) => cmd_debias(a),
        Command::Ci(a) => cmd_ci(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            let code = exit_code(&e);
            let report = ErrorReport {
                error: e.kind(),
                message: e.to_string(),
                exit_code: code,
            };
            eprintln!("{}", serde_json::to_string(&report).expect("plain struct"));
            code
        }
    }
}

pub fn main() -> i32 {
    main_with(std::env::args_os())
}
