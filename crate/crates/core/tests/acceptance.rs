//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. `ACCEPTANCE_ONLY=1,4,5` restricts the run.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use glmdebias::debias::{invert_hessian, qp_debias, HessianModel, QpOptions};
use glmdebias::lasso::{fit_cv, fit_lasso, fit_path, lambda_max, lambda_path};
use glmdebias::simulate::{mu_sweep, run_replicates, write_records_csv, write_summary_csv, CovStructure, SimConfig, SimMethod, SimSummary};
use glmdebias::stats::{ks_test, norm_cdf};
use glmdebias::{refine_debias, Dataset, GlmFamily, LassoFit};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Every lasso fit produced directly by the suite, for the solver checks.
#[derive(Default)]
struct FitLog {
    worst_kkt: f64,
    max_increase: f64,
    count: usize,
}

impl FitLog {
    fn record(&mut self, f: &LassoFit) {
        self.count += 1;
        self.worst_kkt = self.worst_kkt.max(f.kkt_residual);
        for w in f.objective_trace.windows(2) {
            self.max_increase = self.max_increase.max(w[1] - w[0]);
        }
    }
}

fn criterion1(log: &mut FitLog) -> Check {
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let (n, p) = if i < 25 { (50, 10) } else { (200, 50) };
        let d = random_dataset(n, p, GlmFamily::Gaussian, 1000 + i);
        let beta = ols(&rows(&d.x), d.y.as_slice());
        let (cv_fit, _) = fit_cv(&d, GlmFamily::Gaussian, 10, 100, 1e-4, i).map_err(|e| e.to_string())?;
        let lmax = lambda_max(&d, GlmFamily::Gaussian).map_err(|e| e.to_string())?;
        let half = fit_lasso(&d, GlmFamily::Gaussian, lmax / 2.0, None).map_err(|e| e.to_string())?;
        let zero = fit_lasso(&d, GlmFamily::Gaussian, 0.0, None).map_err(|e| e.to_string())?;
        for fit in [zero, cv_fit, half] {
            log.record(&fit);
            let db = refine_debias(&d, GlmFamily::Gaussian, &fit).map_err(|e| e.to_string())?;
            worst = worst.max(max_abs_diff(&db.b_hat, &beta));
        }
    }
    ensure(worst < 1e-8, format!("max |b_hat - OLS| = {worst:.2e} over 150 fits"))
}

fn criterion2(log: &mut FitLog) -> Check {
    let mut worst = 0.0f64;
    for fam in [GlmFamily::Binomial, GlmFamily::Poisson] {
        for i in 0..20u64 {
            let d = random_dataset(500, 10, fam, 2000 + i);
            let fit = fit_lasso(&d, fam, 0.0, None).map_err(|e| e.to_string())?;
            log.record(&fit);
            let db = refine_debias(&d, fam, &fit).map_err(|e| e.to_string())?;
            worst = worst.max((&db.b_hat - &fit.xi_hat).amax());
        }
    }
    ensure(worst < 1e-6, format!("max |b_hat - xi_hat| = {worst:.2e} over 40 fits"))
}

fn criterion3(log: &mut FitLog) -> Check {
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let d = random_dataset(200, 10, GlmFamily::Binomial, 3000 + i);
        let (fit, _) = fit_cv(&d, GlmFamily::Binomial, 10, 100, 1e-4, i).map_err(|e| e.to_string())?;
        log.record(&fit);
        let db = refine_debias(&d, GlmFamily::Binomial, &fit).map_err(|e| e.to_string())?;
        let xi = fit.xi_hat.as_slice();
        let (g, h) = score_hessian(&rows(&d.x), d.y.as_slice(), GlmFamily::Binomial, xi);
        let step = gj_solve(&h, &g);
        let oracle: Vec<f64> = xi.iter().zip(&step).map(|(a, s)| a - s).collect();
        worst = worst.max(max_abs_diff(&db.b_hat, &oracle));
    }
    ensure(worst < 1e-8, format!("max |REF-DS - Newton step| = {worst:.2e} over 20 fits"))
}

fn criterion4() -> Check {
    let mut worst = 0.0f64;
    for i in 0..20usize {
        let k = 3 + i * 47 / 19;
        let m = random_pd(k, 4000 + i as u64);
        let h = HessianModel::from_matrix(m).map_err(|e| e.to_string())?;
        let inv = invert_hessian(&h).map_err(|e| e.to_string())?;
        for j in 0..k {
            let row = qp_debias(&h, j, 0.0, &QpOptions::default()).map_err(|e| e.to_string())?;
            worst = worst.max((row.transpose() - inv.row(j)).amax());
        }
    }
    ensure(worst < 1e-8, format!("max |qp row - inverse row| = {worst:.2e}, sizes 3..50"))
}

fn criterion5(log: &mut FitLog) -> Check {
    let mut worst = 0.0f64;
    for i in 0..10u64 {
        let n = 100;
        let base = random_dataset(n, 12, GlmFamily::Gaussian, 5000 + i);
        let mut q = base.x.clone().qr().q() * (n as f64).sqrt();
        if q[(0, 0)] < 0.0 {
            q.column_mut(0).neg_mut();
        }
        q.column_mut(0).fill(1.0);
        let d = Dataset::from_design(base.y.clone(), q, base.col_names.clone()).map_err(|e| e.to_string())?;
        let z = d.x.transpose() * &d.y / n as f64;
        let lmax = lambda_max(&d, GlmFamily::Gaussian).map_err(|e| e.to_string())?;
        for frac in [0.01, 0.2, 0.5, 0.9] {
            let fit = fit_lasso(&d, GlmFamily::Gaussian, lmax * frac, None).map_err(|e| e.to_string())?;
            log.record(&fit);
            worst = worst.max((fit.xi_hat[0] - z[0]).abs());
            for j in 1..d.x.ncols() {
                let st = z[j].signum() * (z[j].abs() - lmax * frac).max(0.0);
                worst = worst.max((fit.xi_hat[j] - st).abs());
            }
        }
    }
    // logged paths for the non-gaussian families
    for (s, fam) in [(5100, GlmFamily::Binomial), (5101, GlmFamily::Poisson)] {
        let d = random_dataset(300, 30, fam, s);
        let lmax = lambda_max(&d, fam).map_err(|e| e.to_string())?;
        for f in fit_path(&d, fam, &lambda_path(lmax, 100, 1e-4).map_err(|e| e.to_string())?).map_err(|e| e.to_string())? {
            log.record(&f);
        }
    }
    ensure(
        worst < 1e-8 && log.worst_kkt <= 1e-7 && log.max_increase <= 1e-12,
        format!(
            "soft-threshold error {worst:.2e}; over {} fits worst KKT {:.2e}, largest objective increase {:.2e}",
            log.count, log.worst_kkt, log.max_increase
        ),
    )
}

fn coverage_config() -> SimConfig {
    SimConfig {
        n: 1000,
        p: 100,
        structure: CovStructure::Ar1 { rho: 0.7 },
        truncation: 6.0,
        family: GlmFamily::Binomial,
        xi0: None,
        beta1_grid: vec![0.0, 0.75, 1.5],
        n_replicates: 200,
        methods: vec![SimMethod::Mle, SimMethod::OrigDs, SimMethod::RefDs],
        level: 0.95,
        seed: 20240601,
        target: 1,
        standardize: true,
        lasso_folds: 10,
        n_lambda: 100,
        lambda_ratio: 1e-4,
        nodewise: Default::default(),
    }
}

fn csv_of(cfg: &SimConfig, s: &SimSummary) -> (Vec<u8>, Vec<u8>) {
    let mut panel = Vec::new();
    write_summary_csv(&s.rows, &mut panel).unwrap();
    let mut recs = Vec::new();
    write_records_csv(cfg, &s.records, &mut recs).unwrap();
    (panel, recs)
}

fn run_with_workers(cfg: &SimConfig, workers: usize) -> Result<SimSummary, String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| e.to_string())?
        .install(|| run_replicates(cfg))
        .map_err(|e| e.to_string())
}

fn criterion6(cfg: &SimConfig, s: &SimSummary) -> Check {
    let mut lines = Vec::new();
    let mut ok = true;
    for &b in &cfg.beta1_grid {
        let r = s.row(b, SimMethod::RefDs).ok_or("missing REF-DS row")?;
        let o = s.row(b, SimMethod::OrigDs).ok_or("missing ORIG-DS row")?;
        let m = s.row(b, SimMethod::Mle).ok_or("missing MLE row")?;
        let cov = r.coverage.unwrap_or(f64::NAN);
        ok &= (0.91..=0.99).contains(&cov);
        lines.push(format!(
            "b1={b}: REF cov {cov:.3} bias {:+.4}; ORIG cov {:.3} bias {:+.4}; MLE cov {:.3} bias {:+.4} failed {}",
            r.mean_bias.unwrap_or(f64::NAN),
            o.coverage.unwrap_or(f64::NAN),
            o.mean_bias.unwrap_or(f64::NAN),
            m.coverage.unwrap_or(f64::NAN),
            m.mean_bias.unwrap_or(f64::NAN),
            m.n_failed
        ));
    }
    let r = s.row(1.5, SimMethod::RefDs).and_then(|r| r.mean_bias).unwrap_or(f64::NAN);
    let o = s.row(1.5, SimMethod::OrigDs).and_then(|r| r.mean_bias).unwrap_or(f64::NAN);
    ok &= r.abs() <= 0.5 * o.abs();
    // Monte-Carlo standard error of each mean bias, for reading the bias clause
    let mc = |m: SimMethod| {
        s.row(1.5, m)
            .and_then(|r| Some(r.empirical_se? / (r.n_ok as f64).sqrt()))
            .unwrap_or(f64::NAN)
    };
    lines.push(format!(
        "b1=1.5: |REF bias| {:.4} vs half |ORIG bias| {:.4} (MC se of mean bias: REF {:.4}, ORIG {:.4})",
        r.abs(),
        0.5 * o.abs(),
        mc(SimMethod::RefDs),
        mc(SimMethod::OrigDs)
    ));
    ensure(ok, lines.join("; "))
}

fn criterion7(cfg: &SimConfig, s: &SimSummary) -> Check {
    let z = s.standardized_stats(0, SimMethod::RefDs, &cfg.methods);
    let (d, p) = ks_test(&z, norm_cdf).map_err(|e| e.to_string())?;
    ensure(p >= 0.01 && z.len() == 200, format!("{} statistics, D = {d:.4}, p = {p:.4}", z.len()))
}

fn criterion8() -> Check {
    let mut cfg = coverage_config();
    cfg.n = 500;
    cfg.n_replicates = 100;
    cfg.beta1_grid = vec![1.0];
    cfg.seed = 20240602;
    let sweep = mu_sweep(&cfg, &[0.0, 0.01, 0.1, 1.0]).map_err(|e| e.to_string())?;
    let bias = |mu: f64| sweep.rows_for(mu)[0].mean_bias.unwrap_or(f64::NAN);
    let zero = sweep.rows_for(0.0)[0];
    let reference = sweep.summary.row(1.0, SimMethod::RefDs).ok_or("missing REF-DS row")?;
    let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-10,
        (None, None) => true,
        _ => false,
    };
    let same = close(zero.mean_bias, reference.mean_bias)
        && close(zero.coverage, reference.coverage)
        && close(zero.empirical_se, reference.empirical_se)
        && close(zero.model_se, reference.model_se);
    let detail = sweep
        .mu_grid
        .iter()
        .map(|&mu| {
            let r = sweep.rows_for(mu)[0];
            format!(
                "mu={mu}: bias {:+.4} cov {:.2} se ratio {:.3}",
                r.mean_bias.unwrap_or(f64::NAN),
                r.coverage.unwrap_or(f64::NAN),
                r.se_ratio().unwrap_or(f64::NAN)
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    ensure(
        bias(0.0).abs() <= bias(1.0).abs() + 0.02 && same,
        format!("{detail}; mu=0 equals REF-DS: {same}"),
    )
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |c: u32| only.as_ref().is_none_or(|o| o.contains(&c));
    let mut failed = 0;
    let mut report = |id: u32, secs: f64, res: Check| {
        let (tag, msg) = match res {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!("criterion {id}: {tag} ({secs:.1} s) {msg}");
    };
    let timed = |f: &mut dyn FnMut() -> Check| {
        let t = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        (t.elapsed().as_secs_f64(), r)
    };

    let mut log = FitLog::default();
    if wanted(1) {
        let (s, r) = timed(&mut || criterion1(&mut log));
        report(1, s, r.and_then(|m| ensure(s < 10.0, format!("{m}; runtime limit 10 s"))));
    }
    if wanted(2) {
        let (s, r) = timed(&mut || criterion2(&mut log));
        report(2, s, r.and_then(|m| ensure(s < 10.0, format!("{m}; runtime limit 10 s"))));
    }
    if wanted(3) {
        let (s, r) = timed(&mut || criterion3(&mut log));
        report(3, s, r.and_then(|m| ensure(s < 5.0, format!("{m}; runtime limit 5 s"))));
    }
    if wanted(4) {
        let (s, r) = timed(&mut criterion4);
        report(4, s, r.and_then(|m| ensure(s < 10.0, format!("{m}; runtime limit 10 s"))));
    }
    if wanted(5) {
        let (s, r) = timed(&mut || criterion5(&mut log));
        report(5, s, r);
    }

    let cfg = coverage_config();
    let mut first: Option<SimSummary> = None;
    if wanted(6) || wanted(7) || wanted(9) {
        let (s, r) = timed(&mut || {
            let sum = run_with_workers(&cfg, 3)?;
            let out = criterion6(&cfg, &sum);
            first = Some(sum);
            out
        });
        if wanted(6) {
            report(6, s, r);
        }
        if wanted(7) {
            let (s, r) = timed(&mut || criterion7(&cfg, first.as_ref().ok_or("coverage run failed")?));
            report(7, s, r);
        }
    }
    if wanted(8) {
        let (s, r) = timed(&mut criterion8);
        report(8, s, r.and_then(|m| ensure(s < 900.0, format!("{m}; runtime limit 900 s"))));
    }
    if wanted(9) {
        let (s, r) = timed(&mut || {
            let a = first.as_ref().ok_or("coverage run failed")?;
            let b = run_with_workers(&cfg, 1)?;
            let (pa, ra) = csv_of(&cfg, a);
            let (pb, rb) = csv_of(&cfg, &b);
            ensure(
                pa == pb && ra == rb,
                format!("3 workers vs 1 worker: panel {} bytes identical={}, replicate table identical={}", pa.len(), pa == pb, ra == rb),
            )
        });
        report(9, s, r);
    }
    if failed > 0 {
        println!("{failed} criterion check(s) failed");
        std::process::exit(1);
    }
}
