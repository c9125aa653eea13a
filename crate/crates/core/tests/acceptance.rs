#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.
//!
//! Run alone with `cargo test --release -p gmc-core --test acceptance`.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use gmc_core::asymptotics::{estimate_tail, fit_power_law, log_grid, splitting_check, tauberian_counterexample, CoefficientFit, ExponentMode};
use gmc_core::bessel::{last_hit_bes3, path_decomposition_sample, radnik_weight, run_to_first_hit, sample_bm, williams_reverse};
use gmc_core::field::FieldSampler;
use gmc_core::fusion::{lhs_estimates, limit_result_check, rhs_estimates, suggest_x_max, ToyConfig};
use gmc_core::geometry::{DensitySpec, GridSpec, SetSpec};
use gmc_core::gmc::{cbar_subcritical, seneta_heyde_norm, MassFunctional};
use gmc_core::kernels::{eval_sd, eval_yhat_cov, KernelDescriptor};
use gmc_core::quad::QuadratureConfig;
use gmc_core::rng::{RngPolicy, Stream};
use gmc_core::special::bes3_cdf;
use gmc_core::stats::{ks_one_sample, ks_two_sample, ks_weighted_one_sample, weighted_line_fit, Estimate};
use gmc_core::Result;
use rand::Rng;
use rand_distr::StandardNormal;

const SEED: u64 = 20_240_601;
const N_MC: u64 = 100_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

/// Critical masses on `[0,1]` and its two halves from one batch of fields.
struct CriticalBatch {
    whole: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

fn critical_batch(l: f64, eps: f64, n: u64, policy: RngPolicy) -> Result<CriticalBatch> {
    let grid = Arc::new(GridSpec::cube(1, 0.0, 1.0, 2.0 * eps)?);
    let s = FieldSampler::new(&KernelDescriptor::l_exact(1, l), grid.clone(), eps, policy)?;
    let one = Arc::new(DensitySpec::constant(1.0));
    let m = |a: f64, b: f64| MassFunctional::new(&grid, Arc::new(SetSpec::interval(a, b)), one.clone());
    let (mw, ml, mr) = (m(0.0, 1.0)?, m(0.0, 0.5)?, m(0.5, 1.0)?);
    let norm = seneta_heyde_norm(eps)?;
    let rows = s.map_replicas(0..n, |_, v| {
        [
            mw.critical_value_with_norm(v, &s.variance, norm),
            ml.critical_value_with_norm(v, &s.variance, norm),
            mr.critical_value_with_norm(v, &s.variance, norm),
        ]
    });
    Ok(CriticalBatch {
        whole: rows.iter().map(|r| r[0]).collect(),
        left: rows.iter().map(|r| r[1]).collect(),
        right: rows.iter().map(|r| r[2]).collect(),
    })
}

fn tail_grid() -> Vec<f64> {
    log_grid(0.5, 2000.0, 30).expect("valid grid")
}

fn criterion_1() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for d in [1usize, 2] {
        let v = cbar_subcritical((2.0 * d as f64).sqrt() - 1e-4, d)?;
        worst = worst.max((v - 1.0).abs());
        parts.push(format!("d={d}: {v:.6}"));
    }
    outcome(worst <= 1e-2, format!("{} (max |C-1| = {worst:.2e}, tol 1e-2)", parts.join(", ")))
}

fn criterion_2() -> Result<Outcome> {
    let quad = QuadratureConfig::default();
    let mut worst: f64 = 0.0;
    for i in 1..=100 {
        worst = worst.max(eval_sd(2, i as f64 / 100.0, &quad)?.abs());
    }
    outcome(worst <= 1e-10, format!("max |S_2| over 100 ratios = {worst:.2e} (tol 1e-10)"))
}

fn criterion_3() -> Result<Outcome> {
    let quad = QuadratureConfig::default();
    let mut rng = RngPolicy::new(SEED).stream(Stream::Custom, 3);
    let mut worst: f64 = 0.0;
    for d in [2usize, 3] {
        let reference = KernelDescriptor::reference(d);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            let lhs = (-nx.ln()).min(-ny.ln()) + eval_yhat_cov(d, &x, &y, &quad)?;
            worst = worst.max((lhs - reference.eval(&x, &y)?).abs());
        }
    }
    outcome(worst <= 1e-8, format!("max discrepancy over 2000 pairs = {worst:.2e} (tol 1e-8)"))
}

fn criterion_4() -> Result<Outcome> {
    let a = 1e-4;
    let quad = QuadratureConfig::default();
    // The grid contains the extremal points e^{π/2 + kπ} of sin(log t).
    let mut t_grid: Vec<f64> = (0..40).map(|k| (std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI).exp()).collect();
    t_grid.extend((0..400).map(|k| 10f64.powf(k as f64 / 40.0)));
    t_grid.sort_by(f64::total_cmp);
    t_grid.dedup();
    let r = tauberian_counterexample(a, &[1e-8], &t_grid, &quad)?;
    let ratio = r.laplace[0].2;
    let band_ok = (r.band - a).abs() <= 1e-12;
    outcome(
        (0.99..=1.01).contains(&ratio) && band_ok,
        format!("ratio at 1e-8 = {ratio:.5} (need [0.99, 1.01]); max |tP-1| = {:.6e} (need {a:e})", r.band),
    )
}

fn criterion_5() -> Result<Outcome> {
    let policy = RngPolicy::new(SEED).derive(5);
    let mut cfgs = Vec::new();
    for d in [1usize, 2] {
        for lambda in [0.5, 1.0, 2.0] {
            for t in [50.0, 100.0] {
                let mut c = ToyConfig::new(d, lambda, t);
                c.x_max = suggest_x_max(0.5, d);
                cfgs.push(c);
            }
        }
    }
    let lhs = lhs_estimates(&cfgs, N_MC as usize, &policy)?;
    let mut rhs = Vec::new();
    for d in [1usize, 2] {
        let part: Vec<ToyConfig> = cfgs.iter().filter(|c| c.d == d).cloned().collect();
        rhs.extend(rhs_estimates(&part, 20_000, &policy.derive(7))?);
    }
    let mut worst: f64 = 0.0;
    for (l, r) in lhs.iter().zip(&rhs) {
        worst = worst.max(l.z_distance(&r.estimate).abs());
    }
    outcome(worst <= 3.0, format!("12 configurations, max |lhs - rhs|/combined stderr = {worst:.2} (tol 3)"))
}

fn criterion_6() -> Result<Outcome> {
    let cfg = ToyConfig { x_max: suggest_x_max(1e-6, 2), ..ToyConfig::new(2, 0.0, 1.0) };
    let r = limit_result_check(&[1e-2, 1e-4, 1e-6], &cfg, 10_000, &RngPolicy::new(SEED).derive(6))?;
    let vals: Vec<String> = r.rows.iter().map(|row| format!("{:.4}", row.value.mean)).collect();
    outcome(
        r.monotone && r.final_relative_error <= 0.15,
        format!("values [{}] toward {:.4}; monotone = {}, final error {:.1}% (tol 15%)", vals.join(", "), r.target, r.monotone, 100.0 * r.final_relative_error),
    )
}

fn criterion_7() -> Result<Outcome> {
    let policy = RngPolicy::new(SEED).derive(7);
    let c = 2f64.sqrt();
    let (h, x) = (0.005, 1.0);
    let rev: Vec<f64> = (0..N_MC)
        .map(|i| Ok(williams_reverse(&run_to_first_hit(x, h, &mut policy.stream(Stream::Brownian, i), 1e15)?.0)?.exp_functional(c)))
        .collect::<Result<_>>()?;
    let last: Vec<f64> = (0..N_MC)
        .map(|i| Ok(last_hit_bes3(x, h, 1e-4, &mut policy.stream(Stream::Bessel, i))?.0.exp_functional(c)))
        .collect::<Result<_>>()?;
    let p_rev = ks_two_sample(&rev, &last)?.p_value;

    let t = 0.5;
    let ends: Vec<f64> = (0..N_MC)
        .map(|i| Ok(path_decomposition_sample(x, h, t, &mut policy.stream(Stream::Decomposition, i))?.path.last()))
        .collect::<Result<_>>()?;
    let p_dec = ks_one_sample(&ends, |y| bes3_cdf(x, y, t))?.p_value;

    let xr = 0.7;
    let mut ws = Vec::with_capacity(N_MC as usize);
    let mut ys = Vec::with_capacity(N_MC as usize);
    for i in 0..N_MC {
        let p = sample_bm(1.0, 0.02, 0.0, &mut policy.stream(Stream::Custom, i))?;
        ws.push(radnik_weight(&p, xr, p.len() - 1)?);
        ys.push(xr - p.last());
    }
    let w = Estimate::from_samples(&ws)?;
    let z = (w.mean - 1.0) / w.stderr;
    let p_law = ks_weighted_one_sample(&ys, &ws, |y| bes3_cdf(xr, y, 1.0))?.p_value;
    outcome(
        p_rev > 0.01 && p_dec > 0.01 && z.abs() <= 3.0,
        format!("reversal KS p = {p_rev:.3}, decomposition KS p = {p_dec:.3}, weight mean {:.4} (z = {z:.2}); weighted law KS p = {p_law:.3}", w.mean),
    )
}

fn fit_line(fit: &CoefficientFit) -> String {
    format!("c = {:.4} on [{:.3}, {:.1}], flatness {:.2}", fit.c_hat, fit.t_lo, fit.t_hi, fit.flatness)
}

fn criterion_8(f0: &CriticalBatch, f1: &CriticalBatch) -> Result<Outcome> {
    let mode = ExponentMode::Fixed { q: 1.0 };
    let mut ladder = Vec::new();
    for k in [4.0f64, 5.0, 6.0] {
        let b = critical_batch(0.0, (-k).exp(), 20_000, RngPolicy::new(SEED).derive(80 + k as u64))?;
        match fit_power_law(&estimate_tail(&b.whole, &tail_grid())?, mode) {
            Ok(f) => ladder.push(format!("e^-{k}: {:.3}", f.c_hat)),
            Err(_) => ladder.push(format!("e^-{k}: no window")),
        }
    }
    let a = fit_power_law(&estimate_tail(&f0.whole, &tail_grid())?, mode)?;
    let b = fit_power_law(&estimate_tail(&f1.whole, &tail_grid())?, mode)?;
    let target = 1.0 / std::f64::consts::PI.sqrt();
    let decade = a.t_hi / a.t_lo >= 10.0 && a.flatness <= 1.5;
    let ratio = a.c_hat / b.c_hat;
    let factor = a.c_hat / target;
    outcome(
        decade && (0.8..=1.25).contains(&ratio) && (0.5..=2.0).contains(&factor),
        format!(
            "f=0 {}; f=1 {}; ratio {ratio:.3} (need [0.8, 1.25]); c/target {factor:.3} (need [0.5, 2]); ladder [{}]",
            fit_line(&a),
            fit_line(&b),
            ladder.join(", ")
        ),
    )
}

fn criterion_9() -> Result<Outcome> {
    let eps = (-8f64).exp();
    let grid = Arc::new(GridSpec::cube(1, 0.0, 1.0, 2.0 * eps)?);
    let s = FieldSampler::new(&KernelDescriptor::l_exact(1, 0.0), grid.clone(), eps, RngPolicy::new(SEED).derive(9))?;
    let m = MassFunctional::new(&grid, Arc::new(SetSpec::interval(0.0, 1.0)), Arc::new(DensitySpec::constant(1.0)))?;
    let vals = s.map_replicas(0..N_MC, |_, v| m.subcritical_value(v, &s.variance, 1.0));
    let fit = fit_power_law(&estimate_tail(&vals, &tail_grid())?, ExponentMode::Free)?;
    let (slope, se) = fit.slope.expect("free fit reports a slope");
    outcome(
        (slope + 2.0).abs() <= 0.2,
        format!("free-fit slope {slope:.3} ± {se:.3} on [{:.2}, {:.1}] (need [-2.2, -1.8])", fit.t_lo, fit.t_hi),
    )
}

fn criterion_10() -> Result<Outcome> {
    let eps = (-7f64).exp();
    let q = 0.5;
    let grid = Arc::new(GridSpec::cube(1, -0.5, 0.5, 2.0 * eps)?);
    let s = FieldSampler::new(&KernelDescriptor::l_exact(1, 0.0), grid.clone(), eps, RngPolicy::new(SEED).derive(10))?;
    let radii = log_grid(0.03, 0.5, 8)?;
    let one = Arc::new(DensitySpec::constant(1.0));
    let ms: Vec<MassFunctional> = radii
        .iter()
        .map(|&r| MassFunctional::new(&grid, Arc::new(SetSpec::ball(vec![0.0], r)), one.clone()))
        .collect::<Result<_>>()?;
    let norm = seneta_heyde_norm(eps)?;
    let rows = s.map_replicas(0..20_000, |_, v| ms.iter().map(|m| m.critical_value_with_norm(v, &s.variance, norm).powf(q)).collect::<Vec<f64>>());
    let logm: Vec<f64> = (0..radii.len()).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).map(f64::ln).collect();
    let logr: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let fit = weighted_line_fit(&logr, &logm, &vec![1.0; radii.len()])?;
    let target = 2.0 * q - q * q;
    outcome(
        ((fit.slope - target) / target).abs() <= 0.15,
        format!("slope {:.3} over r in [0.03, 0.5] (target {target}, tol 15%)", fit.slope),
    )
}

fn criterion_11() -> Result<Outcome> {
    let eps = (-6f64).exp();
    let n = 20_000u64;
    let norm = seneta_heyde_norm(eps)?;
    let one = Arc::new(DensitySpec::constant(1.0));
    let kernel = KernelDescriptor::l_exact(1, 0.0);

    let half = Arc::new(GridSpec::cube(1, 0.0, 0.5, 2.0 * eps)?);
    let sh = FieldSampler::new(&kernel, half.clone(), eps, RngPolicy::new(SEED).derive(110))?;
    let mh = MassFunctional::new(&half, Arc::new(SetSpec::interval(0.0, 0.5)), one.clone())?;
    let left: Vec<f64> = sh.map_replicas(0..n, |_, v| mh.critical_value_with_norm(v, &sh.variance, norm));

    // The field on [0, 1/2] at scale ε is the field on [0, 1] at scale 2ε,
    // rescaled, plus an independent N(0, log 2).
    let full = Arc::new(GridSpec::cube(1, 0.0, 1.0, 4.0 * eps)?);
    let policy = RngPolicy::new(SEED).derive(111);
    let sf = FieldSampler::new(&kernel, full.clone(), 2.0 * eps, policy)?;
    let mf = MassFunctional::new(&full, Arc::new(SetSpec::interval(0.0, 1.0)), one)?;
    let var_n = 2f64.ln();
    let right: Vec<f64> = sf.map_replicas(0..n, |i, v| {
        let z: f64 = policy.stream(Stream::Shift, i).sample(StandardNormal);
        let scale = (2f64.sqrt() * var_n.sqrt() * z - var_n).exp();
        0.5 * scale * mf.critical_value_with_norm(v, &sf.variance, norm)
    });
    let p = ks_two_sample(&left, &right)?.p_value;
    outcome(p > 0.01, format!("two-sample KS p = {p:.3} on {n} pairs (need > 0.01)"))
}

fn criterion_12(f0: &CriticalBatch) -> Result<Outcome> {
    let lambdas: Vec<f64> = (3..=7).map(|k| 10f64.powf(-0.5 * k as f64)).collect();
    let r = splitting_check(&f0.right, &f0.left, &f0.whole, &lambdas)?;
    let cross: Vec<String> = r.rows.iter().map(|row| format!("{:.4}", row.cross.mean)).collect();
    outcome(
        r.cross_decreasing && r.final_cross_fraction < 0.1,
        format!(
            "cross terms [{}] over lambda 10^-1.5..10^-3.5; decreasing = {}, final fraction {:.3} (need < 0.1)",
            cross.join(", "),
            r.cross_decreasing,
            r.final_cross_fraction
        ),
    )
}

fn main() -> ExitCode {
    let filter: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let want = |i: usize| filter.is_none_or(|f| f == i);
    let eps = (-7f64).exp();
    let need_batch = want(8) || want(12);
    let batches = if need_batch {
        let t0 = Instant::now();
        let f0 = critical_batch(0.0, eps, N_MC, RngPolicy::new(SEED).derive(8)).map_err(|e| e.to_string());
        let f1 = if want(8) { Some(critical_batch(1.0, eps, N_MC, RngPolicy::new(SEED).derive(81)).map_err(|e| e.to_string())) } else { None };
        eprintln!("critical batches ready in {:.1?}", t0.elapsed());
        Some((f0, f1))
    } else {
        None
    };

    let mut failed = 0;
    for i in 1..=12 {
        if !want(i) {
            continue;
        }
        let t0 = Instant::now();
        let plain = |r: Result<Outcome>| r.map_err(|e| e.to_string());
        let res = match i {
            1 => plain(criterion_1()),
            2 => plain(criterion_2()),
            3 => plain(criterion_3()),
            4 => plain(criterion_4()),
            5 => plain(criterion_5()),
            6 => plain(criterion_6()),
            7 => plain(criterion_7()),
            8 => match batches.as_ref().unwrap() {
                (Ok(a), Some(Ok(b))) => plain(criterion_8(a, b)),
                (Err(e), _) | (_, Some(Err(e))) => Err(e.clone()),
                _ => unreachable!(),
            },
            9 => plain(criterion_9()),
            10 => plain(criterion_10()),
            11 => plain(criterion_11()),
            12 => match &batches.as_ref().unwrap().0 {
                Ok(a) => plain(criterion_12(a)),
                Err(e) => Err(e.clone()),
            },
            _ => unreachable!(),
        };
        let secs = t0.elapsed().as_secs_f64();
        match res {
            Ok(o) => {
                println!("criterion {i:>2}: {} {} [{secs:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
                failed += usize::from(!o.pass);
            }
            Err(e) => {
                println!("criterion {i:>2}: FAIL error: {e} [{secs:.1}s]");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    }
}
