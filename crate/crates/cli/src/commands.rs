//! Command implementations. Each writes its files into the output directory
//! and returns a verdict.

use std::sync::Arc;

use gmc_core::asymptotics::{
    estimate_tail, fit_power_law, laplace_log, laplace_sq, tauberian_counterexample, CoefficientFit, ExponentMode, LaplaceKind, TailScan,
};
use gmc_core::bessel::{last_hit_bes3, path_decomposition_sample, radnik_weight, run_to_first_hit, sample_bm, williams_reverse};
use gmc_core::field::FieldSampler;
use gmc_core::fusion::{lhs_estimates, limit_result_check, rhs_estimates, suggest_x_max, ToyConfig};
use gmc_core::gmc::{critical_tail_coeff, seneta_heyde_norm, subcritical_tail_coeff, MassFunctional};
use gmc_core::io::{
    encode_gmcf, fields_to_gmcf, fmt_f64, laplace_scan_rows, tail_scan_rows, write_field_csv, write_mass_csv, write_scan_csv, write_toy_csv,
    MassRow, ScanRow, ToyRow,
};
use gmc_core::kernels::{eval_sd, raw_cov_entries, KernelDescriptor};
use gmc_core::rng::{RngPolicy, Stream};
use gmc_core::special::bes3_cdf;
use gmc_core::stats::{ks_one_sample, ks_two_sample, ks_weighted_one_sample, Estimate};
use serde::Serialize;

use crate::config::{ExperimentConfig, RegimeConfig};
use crate::output::Output;
use crate::{CliError, Command};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub command: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Command-specific numbers (fits, targets, test statistics).
    pub details: serde_json::Value,
}

impl Verdict {
    fn new(command: &str, checks: Vec<Check>, details: serde_json::Value) -> Self {
        Self { command: command.into(), passed: checks.iter().all(|c| c.passed), checks, details }
    }
}

fn check(name: impl Into<String>, passed: bool, detail: String) -> Check {
    Check { name: name.into(), passed, detail }
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

pub fn dispatch(cmd: &Command, cfg: &ExperimentConfig, out: &mut Output) -> Result<Verdict, CliError> {
    match cmd {
        Command::KernelTable(_) => kernel_table(cfg, out),
        Command::SampleField(_) => sample_field(cfg, out),
        Command::TailScan(_) => tail_scan(cfg, out),
        Command::LaplaceScan(_) => laplace_scan(cfg, out),
        Command::FusionCheck(_) => fusion_check(cfg, out),
        Command::TauberianDemo(_) => tauberian_demo(cfg, out),
        Command::BesselCheck(_) => bessel_check(cfg, out),
        Command::Universality(_) => universality(cfg, out),
    }
}

fn kernel_table(cfg: &ExperimentConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let k = cfg.kernel()?;
    let eps = cfg.ladder()?[0];
    let grid = cfg.grid()?.build(eps)?;
    if grid.len() > 2000 {
        return Err(CliError::Resource(format!("kernel table over {} points would have {} rows; use a coarser grid", grid.len(), grid.len() * grid.len())));
    }
    let entries = raw_cov_entries(k, grid.coords(), eps)?;
    let n = grid.len();
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Run(e.to_string());
    w.write_record(["i", "j", "distance", "value"]).map_err(csv_err)?;
    for i in 0..n {
        for j in i..n {
            let dist = gmc_core::geometry::dist(grid.point(i), grid.point(j));
            w.write_record([i.to_string(), j.to_string(), fmt_f64(dist), fmt_f64(entries[i * n + j])]).map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Run(e.to_string()))?;
    out.write("kernel_table.csv", &bytes)?;

    let mut checks = Vec::new();
    let mut details = serde_json::json!({ "points": n, "epsilon": eps });
    if k.d >= 2 {
        let m = cfg.kernel_table.as_ref().map_or(100, |t| t.ratios).max(1);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["c", "s_d"]).map_err(csv_err)?;
        let mut worst: f64 = 0.0;
        for i in 1..=m {
            let c = i as f64 / m as f64;
            let s = eval_sd(k.d, c, &cfg.quadrature)?;
            worst = worst.max(s.abs());
            w.write_record([fmt_f64(c), fmt_f64(s)]).map_err(csv_err)?;
        }
        out.write("sd_table.csv", &w.into_inner().map_err(|e| CliError::Run(e.to_string()))?)?;
        details["max_abs_sd"] = worst.into();
        if k.d == 2 {
            checks.push(check("s2_vanishes", worst <= 1e-10, format!("max |S_2| = {worst:.3e}, tolerance 1e-10")));
        }
    }
    Ok(Verdict::new("kernel-table", checks, details))
}

fn sample_field(cfg: &ExperimentConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let k = cfg.kernel()?;
    let eps = cfg.ladder()?[0];
    let grid = Arc::new(cfg.grid()?.build(eps)?);
    let s = FieldSampler::new(k, grid.clone(), eps, RngPolicy::new(cfg.seed))?;
    let fields = s.sample_range(0..cfg.samples as u64);
    out.write_csv("field.csv", |b| write_field_csv(b, &fields))?;
    out.write("field.gmcf", &encode_gmcf(&fields_to_gmcf(&fields)?)?)?;
    // Pointwise variance against the covariance diagonal.
    let n = fields.len() as f64;
    let worst_z = (0..grid.len())
        .map(|i| {
            let m2 = fields.iter().map(|f| f.values[i] * f.values[i]).sum::<f64>() / n;
            let v = s.variance[i];
            if v > 0.0 {
                (m2 - v).abs() / (v * (2.0 / n).sqrt())
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    let details = serde_json::json!({
        "points": grid.len(),
        "epsilon": eps,
        "replicas": fields.len(),
        "warnings": s.warnings,
        "max_variance_z": worst_z,
    });
    Ok(Verdict::new("sample-field", vec![], details))
}

/// Masses of the configured set for one kernel and ε.
fn masses(cfg: &ExperimentConfig, k: &KernelDescriptor, eps: f64, regime: RegimeConfig, policy: RngPolicy) -> Result<(Vec<f64>, Vec<String>), CliError> {
    let grid = Arc::new(cfg.grid()?.build(eps)?);
    let s = FieldSampler::new(k, grid.clone(), eps, policy)?;
    let m = MassFunctional::new(&grid, Arc::new(cfg.set()?.clone()), Arc::new(cfg.density.clone()))?;
    let n = cfg.samples as u64;
    let vals = match regime {
        RegimeConfig::Critical => {
            let norm = seneta_heyde_norm(eps)?;
            s.map_replicas(0..n, |_, v| m.critical_value_with_norm(v, &s.variance, norm))
        }
        RegimeConfig::Subcritical { gamma } => {
            if gamma * gamma >= 2.0 * k.d as f64 {
                return Err(CliError::Config(format!("gamma = {gamma} is not subcritical in d = {}", k.d)));
            }
            s.map_replicas(0..n, |_, v| m.subcritical_value(v, &s.variance, gamma))
        }
    };
    Ok((vals, s.warnings.clone()))
}

/// Coefficient and exponent of the leading tail term.
fn tail_target(cfg: &ExperimentConfig, k: &KernelDescriptor, regime: RegimeConfig) -> Result<(f64, f64), CliError> {
    let set = cfg.set()?;
    Ok(match regime {
        RegimeConfig::Critical => (critical_tail_coeff(k.d, &cfg.density, set, &cfg.quadrature)?, 1.0),
        RegimeConfig::Subcritical { gamma } => {
            subcritical_tail_coeff(gamma, k.d, |v| k.smooth_part(v, v).unwrap_or(0.0), &cfg.density, set, &cfg.quadrature)?
        }
    })
}

fn regime_label(r: RegimeConfig) -> String {
    match r {
        RegimeConfig::Critical => "critical".into(),
        RegimeConfig::Subcritical { gamma } => fmt_f64(gamma),
    }
}

#[derive(Debug, Serialize)]
struct LadderFit {
    epsilon: f64,
    fit: Option<CoefficientFit>,
    error: Option<String>,
    ratio_to_target: Option<f64>,
    warnings: Vec<String>,
}

fn fit_scan(scan: &TailScan, mode: ExponentMode, target: f64) -> (Option<CoefficientFit>, Option<String>, Option<f64>) {
    match fit_power_law(scan, mode) {
        Ok(f) => {
            let r = f.c_hat / target;
            (Some(f), None, Some(r))
        }
        Err(e) => (None, Some(e.to_string()), None),
    }
}

fn tail_scan(cfg: &ExperimentConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let k = cfg.kernel()?;
    let regime = cfg.regime()?;
    let t_grid = cfg.t_grid()?;
    let (target, q) = tail_target(cfg, k, regime)?;
    let mode = cfg.exponent.unwrap_or(ExponentMode::Fixed { q });
    let mut mass_rows = Vec::new();
    let mut scan_rows = Vec::new();
    let mut ladder = Vec::new();
    for (j, &eps) in cfg.ladder()?.iter().enumerate() {
        let (vals, warnings) = masses(cfg, k, eps, regime, RngPolicy::new(cfg.seed).derive(j as u64))?;
        let label = regime_label(regime);
        mass_rows.extend(vals.iter().enumerate().map(|(i, &v)| MassRow { replica: i as u64, epsilon: eps, gamma_or_critical: label.clone(), value: v }));
        let scan = estimate_tail(&vals, &t_grid)?;
        scan_rows.extend(tail_scan_rows(&format!("tail_eps{j}"), &scan));
        let (fit, error, ratio) = fit_scan(&scan, mode, target);
        ladder.push(LadderFit { epsilon: eps, fit, error, ratio_to_target: ratio, warnings });
    }
    out.write_csv("masses.csv", |b| write_mass_csv(b, &mass_rows))?;
    out.write_csv("tail_scan.csv", |b| write_scan_csv(b, &scan_rows))?;

    let last = ladder.last().expect("nonempty ladder");
    let mut checks = Vec::new();
    match (&last.fit, mode) {
        (None, _) => checks.push(check("fit", false, last.error.clone().unwrap_or_default())),
        (Some(f), ExponentMode::Free) => {
            let (slope, se) = f.slope.unwrap_or((f64::NAN, f64::NAN));
            checks.push(check("free_slope", (slope + q).abs() <= 0.1 * q, format!("slope {slope:.3} ± {se:.3} vs {:.3}, tolerance 10%", -q)));
        }
        (Some(f), ExponentMode::Fixed { .. }) => {
            let r = f.c_hat / target;
            checks.push(check("coefficient", (0.5..=2.0).contains(&r), format!("c = {:.4}, target {target:.4}, ratio {r:.3}, need [0.5, 2]", f.c_hat)));
        }
    }
    let details = serde_json::json!({ "target": target, "exponent": q, "mode": to_value(&mode), "ladder": to_value(&ladder) });
    Ok(Verdict::new("tail-scan", checks, details))
}

fn laplace_scan(cfg: &ExperimentConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let k = cfg.kernel()?;
    let regime = cfg.regime()?;
    let kind = cfg.laplace.unwrap_or(LaplaceKind::Sq);
    if cfg.lambdas.is_empty() {
        return Err(CliError::Config("laplace-scan needs a nonempty \"lambdas\" list".into()));
    }
    let mut rows: Vec<ScanRow> = Vec::new();
    let mut finals = Vec::new();
    for (j, &eps) in cfg.ladder()?.iter().enumerate() {
        let (vals, _) = masses(cfg, k, eps, regime, RngPolicy::new(cfg.seed).derive(j as u64))?;
        let scan = match kind {
            LaplaceKind::Sq => laplace_sq(&vals, &cfg.lambdas)?,
            LaplaceKind::Log => laplace_log(&vals, &cfg.lambdas)?,
        };
        rows.extend(laplace_scan_rows(Some(&format!("laplace_eps{j}")), &scan));
        finals.push(*scan.estimates.last().expect("nonempty lambdas"));
    }
    out.write_csv("laplace_scan.csv", |b| write_scan_csv(b, &rows))?;
    let mut checks = Vec::new();
    let mut details = serde_json::json!({ "kind": to_value(&kind), "final_estimates": to_value(&finals) });
    if regime == RegimeConfig::Critical {
        // With P(U > t) ~ C/t the square functional tends to C·√π and the
        // log functional to C.
        let c = critical_tail_coeff(k.d, &cfg.density, cfg.set()?, &cfg.quadrature)?;
        let target = match kind {
            LaplaceKind::Sq => c * std::f64::consts::PI.sqrt(),
            LaplaceKind::Log => c,
        };
        let v = finals.last().expect("nonempty ladder").mean;
        let r = v / target;
        details["target"] = target.into();
        checks.push(check("smallest_lambda", (0.5..=2.0).contains(&r), format!("{v:.4} vs {target:.4}, ratio {r:.3}, need [0.5, 2]")));
    }
    Ok(Verdict::new("laplace-scan", checks, details))
}

fn fusion_check(cfg: &ExperimentConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let f = cfg.section(&cfg.fusion, "fusion")?;
    let policy = RngPolicy::new(cfg.seed);
    let base = |lambda: f64, t: f64| ToyConfig { h: f.h, v: f.v, w: f.w, ptol: f.ptol, ..ToyConfig::new(f.d, lambda, t) };
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut details = serde_json::json!({});
    if !f.lambdas.is_empty() && !f.t.is_empty() {
        let lmin = f.lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut cfgs = Vec::new();
        for &l in &f.lambdas {
            for &t in &f.t {
                cfgs.push(ToyConfig { x_max: suggest_x_max(lmin, f.d), ..base(l, t) });
            }
        }
        let lhs = lhs_estimates(&cfgs, f.n, &policy.derive(1))?;
        let rhs = rhs_estimates(&cfgs, f.n_inner, &policy.derive(2))?;
        let mut worst: f64 = 0.0;
        let mut pairs = Vec::new();
        for ((c, l), r) in cfgs.iter().zip(&lhs).zip(&rhs) {
            let z = l.z_distance(&r.estimate);
            worst = worst.max(z.abs());
            rows.push(ToyRow { quantity: format!("lhs_t{}", fmt_f64(c.t)), lambda_or_x: c.lambda, estimate: l.mean, stderr: l.stderr, truncation: 0.0 });
            rows.push(ToyRow { quantity: format!("rhs_t{}", fmt_f64(c.t)), lambda_or_x: c.lambda, estimate: r.estimate.mean, stderr: r.estimate.stderr, truncation: r.truncation });
            pairs.push(serde_json::json!({ "lambda": c.lambda, "t": c.t, "z": z }));
        }
        details["identity"] = pairs.into();
        checks.push(check("toy_identity", worst <= 3.0, format!("max |z| = {worst:.2} over {} configurations, tolerance 3", cfgs.len())));
    }
    if !f.limit_lambdas.is_empty() {
        let lmin = f.limit_lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
        let c = ToyConfig { x_max: suggest_x_max(lmin, f.d), ..base(0.0, 100.0 * f.h) };
        let r = limit_result_check(&f.limit_lambdas, &c, f.limit_n.unwrap_or(f.n), &policy.derive(3))?;
        for row in &r.rows {
            rows.push(ToyRow { quantity: "limit".into(), lambda_or_x: row.lambda, estimate: row.value.mean, stderr: row.value.stderr, truncation: row.truncation });
        }
        checks.push(check(
            "limit_trend",
            r.monotone && r.final_relative_error <= 0.15,
            format!("monotone = {}, final relative error {:.3} toward {:.4}, tolerance 0.15", r.monotone, r.final_relative_error, r.target),
        ));
        details["limit"] = to_value(&r);
    }
    if checks.is_empty() {
        return Err(CliError::Config("fusion needs lambdas and t, or limit_lambdas".into()));
    }
    out.write_csv("toy.csv", |b| write_toy_csv(b, &rows))?;
    Ok(Verdict::new("fusion-check", checks, details))
}

fn tauberian_demo(cfg: &ExperimentConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let t = cfg.section(&cfg.tauberian, "tauberian")?;
    if t.lambdas.is_empty() {
        return Err(CliError::Config("tauberian.lambdas is empty".into()));
    }
    let r = tauberian_counterexample(t.a, &t.lambdas, &t.t_grid.build()?, &cfg.quadrature)?;
    let mut rows: Vec<ScanRow> = r
        .laplace
        .iter()
        .map(|&(l, v, ratio)| ScanRow { quantity: "laplace_ratio".into(), lambda_or_t: l, estimate: ratio, stderr_or_ci_lo: v, ci_hi: None })
        .collect();
    rows.extend(r.tail.iter().map(|&(tt, tp)| ScanRow { quantity: "t_tail".into(), lambda_or_t: tt, estimate: tp, stderr_or_ci_lo: 0.0, ci_hi: None }));
    out.write_csv("tauberian.csv", |b| write_scan_csv(b, &rows))?;
    let (lmin, _, ratio) = *r.laplace.iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("nonempty");
    let checks = vec![
        check("laplace_ratio", (0.99..=1.01).contains(&ratio), format!("ratio {ratio:.5} at lambda {lmin:e}, need [0.99, 1.01]")),
        check("tail_band", r.band <= t.a.abs() * (1.0 + 1e-12), format!("max |tP - 1| = {:.6e}, amplitude {:e}", r.band, t.a)),
    ];
    Ok(Verdict::new("tauberian-demo", checks, to_value(&r)))
}

fn bessel_check(cfg: &ExperimentConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let b = cfg.section(&cfg.bessel, "bessel")?;
    if !(b.x > 0.0) || !(b.t > 0.0) || b.n < 2 {
        return Err(CliError::Config("bessel needs x > 0, t > 0 and n >= 2".into()));
    }
    let policy = RngPolicy::new(cfg.seed);
    let n = b.n as u64;
    let c = 2f64.sqrt();
    use rayon::prelude::*;
    let rev: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| Ok(williams_reverse(&run_to_first_hit(b.x, b.h, &mut policy.stream(Stream::Brownian, i), 1e15)?.0)?.exp_functional(c)))
        .collect::<gmc_core::Result<_>>()?;
    let last: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| Ok(last_hit_bes3(b.x, b.h, b.ptol, &mut policy.stream(Stream::Bessel, i))?.0.exp_functional(c)))
        .collect::<gmc_core::Result<_>>()?;
    let ks_rev = ks_two_sample(&rev, &last)?;
    let ends: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| Ok(path_decomposition_sample(b.x, b.h, b.t, &mut policy.stream(Stream::Decomposition, i))?.path.last()))
        .collect::<gmc_core::Result<_>>()?;
    let ks_dec = ks_one_sample(&ends, |y| bes3_cdf(b.x, y, b.t))?;
    let wy: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = sample_bm(b.t, b.h.max(b.t / 1000.0), 0.0, &mut policy.stream(Stream::Custom, i))?;
            Ok((radnik_weight(&p, b.x, p.len() - 1)?, b.x - p.last()))
        })
        .collect::<gmc_core::Result<_>>()?;
    let ws: Vec<f64> = wy.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = wy.iter().map(|p| p.1).collect();
    let w = Estimate::from_samples(&ws)?;
    let z = (w.mean - 1.0) / w.stderr;
    let ks_law = ks_weighted_one_sample(&ys, &ws, |y| bes3_cdf(b.x, y, b.t))?;

    let mut wtr = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Run(e.to_string());
    wtr.write_record(["check", "statistic", "p_value"]).map_err(csv_err)?;
    for (name, s, p) in [
        ("reversal_ks", ks_rev.statistic, ks_rev.p_value),
        ("decomposition_ks", ks_dec.statistic, ks_dec.p_value),
        ("weight_mean_z", z, f64::NAN),
        ("weighted_law_ks", ks_law.statistic, ks_law.p_value),
    ] {
        wtr.write_record([name.to_string(), fmt_f64(s), if p.is_nan() { String::new() } else { fmt_f64(p) }]).map_err(csv_err)?;
    }
    out.write("bessel_check.csv", &wtr.into_inner().map_err(|e| CliError::Run(e.to_string()))?)?;
    let checks = vec![
        check("williams_reversal", ks_rev.p_value > 0.01, format!("KS p = {:.4}, need > 0.01", ks_rev.p_value)),
        check("path_decomposition", ks_dec.p_value > 0.01, format!("KS p = {:.4}, need > 0.01", ks_dec.p_value)),
        check("radnik_mean", z.abs() <= 3.0, format!("mean {:.4} ± {:.4}, |z| = {:.2}, need <= 3", w.mean, w.stderr, z.abs())),
    ];
    let details = serde_json::json!({ "weighted_law_ks_p": ks_law.p_value, "weight_mean": to_value(&w) });
    Ok(Verdict::new("bessel-check", checks, details))
}

fn universality(cfg: &ExperimentConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let u = cfg.section(&cfg.universality, "universality")?;
    if u.kernels.len() < 2 {
        return Err(CliError::Config("universality needs at least two kernels".into()));
    }
    let t_grid = cfg.t_grid()?;
    let eps = *cfg.ladder()?.last().expect("nonempty");
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for (j, k) in u.kernels.iter().enumerate() {
        let (vals, _) = masses(cfg, k, eps, RegimeConfig::Critical, RngPolicy::new(cfg.seed).derive(j as u64))?;
        let scan = estimate_tail(&vals, &t_grid)?;
        rows.extend(tail_scan_rows(&format!("tail_k{j}"), &scan));
        let target = critical_tail_coeff(k.d, &cfg.density, cfg.set()?, &cfg.quadrature)?;
        fits.push((fit_scan(&scan, ExponentMode::Fixed { q: 1.0 }, target), target));
    }
    out.write_csv("universality.csv", |b| write_scan_csv(b, &rows))?;
    let mut checks = Vec::new();
    let base = fits[0].0 .0.as_ref().map(|f| f.c_hat);
    for (j, ((fit, err, ratio), target)) in fits.iter().enumerate() {
        match (fit, base) {
            (Some(f), Some(b0)) => {
                if j > 0 {
                    let r = f.c_hat / b0;
                    checks.push(check(format!("kernel_{j}_vs_0"), (0.8..=1.25).contains(&r), format!("coefficient ratio {r:.3}, need [0.8, 1.25]")));
                }
                let r = ratio.unwrap_or(f64::NAN);
                checks.push(check(format!("kernel_{j}_target"), (0.5..=2.0).contains(&r), format!("c = {:.4} vs {target:.4}, need factor 2", f.c_hat)));
            }
            _ => checks.push(check(format!("kernel_{j}_fit"), false, err.clone().unwrap_or_else(|| "baseline fit failed".into()))),
        }
    }
    let details = serde_json::json!({
        "epsilon": eps,
        "fits": fits.iter().map(|((f, e, r), t)| serde_json::json!({ "fit": to_value(f), "error": e, "ratio_to_target": r, "target": t })).collect::<Vec<_>>(),
    });
    Ok(Verdict::new("universality", checks, details))
}
