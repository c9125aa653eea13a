//! Tail and Laplace-functional estimators for mass samples, coefficient fits,
//! and the deterministic Tauberian checks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fusion::LawSpec;
use crate::gmc::GmcMassSample;
use crate::quad::{gauss_kronrod, integrate, QuadratureConfig};
use crate::rng::{RngPolicy, Stream};
use crate::special::normal_pdf;
use crate::stats::{weighted_line_fit, wilson_interval, Estimate, Z95};
use crate::{Error, Result};

/// Fewest exceedances accepted at any point of a fit window.
pub const MIN_COUNT: usize = 10;
/// Fewest grid points in a fit window.
pub const MIN_WINDOW: usize = 5;
/// Largest accepted max/min ratio of `t^q·p̂` inside a window.
pub const MAX_FLATNESS: f64 = 1.5;

/// `k` log-spaced points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, k: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || k < 2 {
        return Err(Error::Domain(format!("log grid needs 0 < lo < hi and k >= 2, got {lo}, {hi}, {k}")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..k).map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailScan {
    pub t: Vec<f64>,
    pub counts: Vec<usize>,
    pub p_hat: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub n: usize,
}

impl TailScan {
    /// `t·p̂(t)`.
    pub fn t_p(&self) -> Vec<f64> {
        self.t.iter().zip(&self.p_hat).map(|(t, p)| t * p).collect()
    }
}

/// Empirical survival `#{value > t}/n` with 95% Wilson intervals.
pub fn estimate_tail(values: &[f64], t_grid: &[f64]) -> Result<TailScan> {
    if values.is_empty() {
        return Err(Error::EmptyInput("no samples for the tail estimate".into()));
    }
    check_increasing(t_grid, "t grid")?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut scan = TailScan { t: t_grid.to_vec(), counts: vec![], p_hat: vec![], ci_lo: vec![], ci_hi: vec![], n };
    for &t in t_grid {
        let k = n - sorted.partition_point(|&v| v <= t);
        let (lo, hi) = wilson_interval(k, n, Z95);
        scan.counts.push(k);
        scan.p_hat.push(k as f64 / n as f64);
        scan.ci_lo.push(lo);
        scan.ci_hi.push(hi);
    }
    Ok(scan)
}

pub fn estimate_tail_masses(samples: &[GmcMassSample], t_grid: &[f64]) -> Result<TailScan> {
    estimate_tail(&samples.iter().map(|s| s.value).collect::<Vec<_>>(), t_grid)
}

fn check_increasing(grid: &[f64], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyInput(format!("empty {what}")));
    }
    if grid.iter().any(|&t| !(t > 0.0) || !t.is_finite()) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain(format!("{what} must be positive and increasing")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExponentMode {
    Fixed { q: f64 },
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientFit {
    pub c_hat: f64,
    pub stderr: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    /// Grid indices `[first, last]` of the window.
    pub window: (usize, usize),
    pub exponent: f64,
    /// Fitted `log p` vs `log t` slope and its standard error (free mode).
    pub slope: Option<(f64, f64)>,
    /// max/min of `t^q·p̂` over the window.
    pub flatness: f64,
}

/// Fit `p(t) ≈ c/t^q` on the largest window of at least [`MIN_WINDOW`]
/// consecutive grid points with counts ≥ [`MIN_COUNT`] and flatness ≤
/// [`MAX_FLATNESS`]; ties go to the window at larger `t`.
pub fn fit_power_law(scan: &TailScan, mode: ExponentMode) -> Result<CoefficientFit> {
    if let ExponentMode::Fixed { q } = mode {
        if !(q > 0.0) || !q.is_finite() {
            return Err(Error::Domain(format!("exponent must be positive, got {q}")));
        }
    }
    let k = scan.t.len();
    let ok: Vec<bool> = scan.counts.iter().zip(&scan.p_hat).map(|(&c, &p)| c >= MIN_COUNT && p < 1.0).collect();
    // (first, last, flatness, slope)
    #[allow(clippy::type_complexity)]
    let mut best: Option<(usize, usize, f64, Option<(f64, f64)>)> = None;
    for len in (MIN_WINDOW..=k).rev() {
        for i in (0..=k - len).rev() {
            let j = i + len - 1;
            if !ok[i..=j].iter().all(|&b| b) {
                continue;
            }
            let (q, slope) = match mode {
                ExponentMode::Fixed { q } => (q, None),
                ExponentMode::Free => {
                    let (s, se) = wls_slope(scan, i, j)?;
                    (-s, Some((s, se)))
                }
            };
            if flatness(scan, i, j, q) <= MAX_FLATNESS {
                best = Some((i, j, q, slope));
                break;
            }
        }
        if best.is_some() {
            break;
        }
    }
    let (i, j, q, slope) = best.ok_or_else(|| {
        Error::InsufficientCounts(format!(
            "no window of {MIN_WINDOW} consecutive points with counts >= {MIN_COUNT} and flatness <= {MAX_FLATNESS}"
        ))
    })?;
    let (c_hat, stderr) = plateau(scan, i, j, q);
    Ok(CoefficientFit { c_hat, stderr, t_lo: scan.t[i], t_hi: scan.t[j], window: (i, j), exponent: q, slope, flatness: flatness(scan, i, j, q) })
}

fn flatness(scan: &TailScan, i: usize, j: usize, q: f64) -> f64 {
    let v: Vec<f64> = (i..=j).map(|k| scan.t[k].powf(q) * scan.p_hat[k]).collect();
    let hi = v.iter().cloned().fold(f64::MIN, f64::max);
    let lo = v.iter().cloned().fold(f64::MAX, f64::min);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Mean of `t_k^q·p̂_k` over the window, with the exact covariance of the
/// empirical survival: `Cov(p̂_a, p̂_b) = (p_b − p_a p_b)/n` for `t_a ≤ t_b`.
fn plateau(scan: &TailScan, i: usize, j: usize, q: f64) -> (f64, f64) {
    let m = (j - i + 1) as f64;
    let n = scan.n as f64;
    let w: Vec<f64> = (i..=j).map(|k| scan.t[k].powf(q)).collect();
    let p = &scan.p_hat[i..=j];
    let c = w.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() / m;
    let mut var = 0.0;
    for a in 0..p.len() {
        for b in 0..p.len() {
            let hi = p[a.max(b)];
            var += w[a] * w[b] * (hi - p[a] * p[b]) / n;
        }
    }
    (c, (var.max(0.0)).sqrt() / m)
}

/// Weighted least squares of `log p̂` on `log t` with delta-method weights
/// `n·p/(1−p)`.
fn wls_slope(scan: &TailScan, i: usize, j: usize) -> Result<(f64, f64)> {
    let x: Vec<f64> = scan.t[i..=j].iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = scan.p_hat[i..=j].iter().map(|p| p.ln()).collect();
    let w: Vec<f64> = scan.p_hat[i..=j].iter().map(|&p| scan.n as f64 * p / (1.0 - p)).collect();
    let f = weighted_line_fit(&x, &y, &w)?;
    Ok((f.slope, f.slope_stderr))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplaceKind {
    /// `λ^{−1/2}E[1 − e^{−λU²}]`
    Sq,
    /// `E[Ue^{−λU}]/(−log λ)`
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceScan {
    pub kind: LaplaceKind,
    pub lambda: Vec<f64>,
    pub estimates: Vec<Estimate>,
}

fn check_samples(u: &[f64]) -> Result<()> {
    if u.is_empty() {
        return Err(Error::EmptyInput("no samples".into()));
    }
    if u.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain("samples must be finite and nonnegative".into()));
    }
    Ok(())
}

pub fn laplace_sq(u: &[f64], lambdas: &[f64]) -> Result<LaplaceScan> {
    check_samples(u)?;
    if lambdas.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::Domain("lambda must be positive".into()));
    }
    let estimates = lambdas
        .iter()
        .map(|&l| {
            let s = l.sqrt().recip();
            let v: Vec<f64> = u.iter().map(|&x| -s * (-l * x * x).exp_m1()).collect();
            Estimate::from_samples(&v)
        })
        .collect::<Result<_>>()?;
    Ok(LaplaceScan { kind: LaplaceKind::Sq, lambda: lambdas.to_vec(), estimates })
}

pub fn laplace_log(u: &[f64], lambdas: &[f64]) -> Result<LaplaceScan> {
    check_samples(u)?;
    if lambdas.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
        return Err(Error::Domain("lambda must lie in (0, 1)".into()));
    }
    let estimates = lambdas
        .iter()
        .map(|&l| {
            let s = 1.0 / (-l.ln());
            let v: Vec<f64> = u.iter().map(|&x| s * x * (-l * x).exp()).collect();
            Estimate::from_samples(&v)
        })
        .collect::<Result<_>>()?;
    Ok(LaplaceScan { kind: LaplaceKind::Log, lambda: lambdas.to_vec(), estimates })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauberianReport {
    pub a: f64,
    /// `(λ, E[Ue^{−λU}], E[Ue^{−λU}]/(−log λ))`
    pub laplace: Vec<(f64, f64, f64)>,
    /// `(t, t·P(U > t))`
    pub tail: Vec<(f64, f64)>,
    /// `max_t |t·P(U>t) − 1|` over the supplied `t` grid.
    pub band: f64,
}

/// Survival `(1 + a·sin log t)/t` on `[1, ∞)`, one below.
pub fn faketau_survival(a: f64, t: f64) -> f64 {
    if t < 1.0 {
        1.0
    } else {
        (1.0 + a * t.ln().sin()) / t
    }
}

/// `E[Ue^{−λU}] = ∫_0^∞ e^{−λu}(1 − λu)·P(U > u) du` for the survival above.
/// The part on `[0, 1]` equals `e^{−λ}`; the rest is integrated in `u = e^s`
/// over `s ∈ [0, log(50/λ)]`.
pub fn faketau_laplace(a: f64, lambda: f64, quad: &QuadratureConfig) -> Result<f64> {
    if !(a.abs() < 1.0) {
        return Err(Error::Domain(format!("need |a| < 1, got {a}")));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let top = (50.0 / lambda).ln().max(1.0);
    let f = |s: f64| {
        let u = s.exp();
        (-lambda * u).exp() * (1.0 - lambda * u) * (1.0 + a * s.sin())
    };
    // Split at multiples of π so each piece sees at most one oscillation.
    let mut total = 0.0;
    let mut lo = 0.0;
    while lo < top {
        let hi = (lo + std::f64::consts::PI).min(top);
        total += match quad.method {
            crate::quad::QuadMethod::AdaptiveGauss => gauss_kronrod(f, lo, hi, quad.tolerance, quad.max_intervals)?.0,
            crate::quad::QuadMethod::CompositeSimpson => integrate(f, lo, hi, quad)?,
        };
        lo = hi;
    }
    Ok((-lambda).exp() + total)
}

pub fn tauberian_counterexample(a: f64, lambdas: &[f64], t_grid: &[f64], quad: &QuadratureConfig) -> Result<TauberianReport> {
    check_increasing(t_grid, "t grid")?;
    let mut laplace = Vec::new();
    for &l in lambdas {
        if !(l > 0.0 && l < 1.0) {
            return Err(Error::Domain("lambda must lie in (0, 1)".into()));
        }
        let v = faketau_laplace(a, l, quad)?;
        laplace.push((l, v, v / (-l.ln())));
    }
    let tail: Vec<(f64, f64)> = t_grid.iter().map(|&t| (t, t * faketau_survival(a, t))).collect();
    let band = tail.iter().filter(|p| p.0 >= 1.0).map(|p| (p.1 - 1.0).abs()).fold(0.0, f64::max);
    Ok(TauberianReport { a, laplace, tail, band })
}

/// Synthetic law with exact tail `P(U > t) = c·t^{−q}` for `t ≥ c^{1/q}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pareto {
    pub c: f64,
    pub q: f64,
}

impl Pareto {
    pub fn from_uniform(&self, u: f64) -> f64 {
        (self.c / u).powf(1.0 / self.q)
    }

    pub fn survival(&self, t: f64) -> f64 {
        (self.c * t.powf(-self.q)).min(1.0)
    }

    pub fn sample_n(&self, n: usize, policy: &RngPolicy, index: u64) -> Vec<f64> {
        let mut r = policy.stream(Stream::Synthetic, index);
        (0..n).map(|_| self.from_uniform(1.0 - r.random::<f64>())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxReport {
    pub moment: f64,
    /// `(t, p̂, ci_lo, ci_hi, predicted)`
    pub rows: Vec<(f64, f64, f64, f64, f64)>,
    /// `p̂ ≤ predicted` up to the Wilson interval at every `t`.
    pub bound_holds: bool,
}

/// `E[V^q]` by quadrature over the normal draw that generates `V`.
pub fn law_moment(v: &LawSpec, q: f64, quad: &QuadratureConfig) -> Result<f64> {
    integrate(|z| v.from_normal(z).powf(q) * normal_pdf(z), -12.0, 12.0, quad)
}

/// Monte Carlo survival of `UV` against `c·E[V^q]·t^{−q}`.
pub fn aux_product_tail(u: &Pareto, v: &LawSpec, t_grid: &[f64], n: usize, policy: &RngPolicy, quad: &QuadratureConfig) -> Result<AuxReport> {
    v.validate()?;
    let us = u.sample_n(n, policy, 0);
    let mut rv = policy.stream(Stream::Laws, 0);
    let prod: Vec<f64> = us.iter().map(|&x| x * v.sample(&mut rv)).collect();
    let scan = estimate_tail(&prod, t_grid)?;
    let moment = law_moment(v, u.q, quad)?;
    let rows: Vec<_> = (0..scan.t.len())
        .map(|k| (scan.t[k], scan.p_hat[k], scan.ci_lo[k], scan.ci_hi[k], u.c * moment * scan.t[k].powf(-u.q)))
        .collect();
    let bound_holds = rows.iter().all(|r| r.2 <= r.4);
    Ok(AuxReport { moment, rows, bound_holds })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub lambda: f64,
    pub residual: Estimate,
    pub cross: Estimate,
    /// `λ^{−1/2}[E(1−e^{−λμ(A+)²}) + E(1−e^{−λμ(A−)²})]`
    pub main: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub rows: Vec<SplitRow>,
    pub cross_decreasing: bool,
    /// Cross term over main terms at the last (smallest) `λ`.
    pub final_cross_fraction: f64,
}

/// Splitting residual and cross term on paired masses, one triple per replica.
pub fn splitting_check(plus: &[f64], minus: &[f64], whole: &[f64], lambdas: &[f64]) -> Result<SplitReport> {
    if plus.len() != minus.len() || plus.len() != whole.len() {
        return Err(Error::Pairing(format!("mass batches differ in length: {}, {}, {}", plus.len(), minus.len(), whole.len())));
    }
    check_samples(plus)?;
    check_samples(minus)?;
    check_samples(whole)?;
    if lambdas.is_empty() || lambdas.iter().any(|&l| !(l > 0.0)) || lambdas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Domain("lambda grid must be positive and decreasing".into()));
    }
    let g = |l: f64, x: f64| -(-l * x).exp_m1();
    let mut rows = Vec::new();
    for &l in lambdas {
        let s = l.sqrt().recip();
        let mut res = Vec::with_capacity(plus.len());
        let mut cross = Vec::with_capacity(plus.len());
        let mut main = Vec::with_capacity(plus.len());
        for k in 0..plus.len() {
            let (p, m, w) = (plus[k], minus[k], whole[k]);
            res.push(s * (g(l, w * w) - g(l, p * p) - g(l, m * m)));
            cross.push(s * g(2.0 * l, p * m));
            main.push(s * (g(l, p * p) + g(l, m * m)));
        }
        rows.push(SplitRow {
            lambda: l,
            residual: Estimate::from_samples(&res)?,
            cross: Estimate::from_samples(&cross)?,
            main: Estimate::from_samples(&main)?,
        });
    }
    let cross_decreasing = rows.windows(2).all(|r| r[1].cross.mean < r[0].cross.mean);
    let last = rows.last().unwrap();
    let final_cross_fraction = if last.main.mean > 0.0 { last.cross.mean / last.main.mean } else { 0.0 };
    Ok(SplitReport { rows, cross_decreasing, final_cross_fraction })
}

/// [`splitting_check`] on mass samples, after checking that every triple
/// comes from one field realization.
pub fn splitting_check_samples(plus: &[GmcMassSample], minus: &[GmcMassSample], whole: &[GmcMassSample], lambdas: &[f64]) -> Result<SplitReport> {
    if plus.len() != minus.len() || plus.len() != whole.len() {
        return Err(Error::Pairing("mass batches differ in length".into()));
    }
    for ((a, b), c) in plus.iter().zip(minus).zip(whole) {
        if (a.seed, a.replica) != (b.seed, b.replica) || (a.seed, a.replica) != (c.seed, c.replica) || a.epsilon != b.epsilon || a.epsilon != c.epsilon {
            return Err(Error::Pairing(format!("replica {} is not paired across the three sets", a.replica)));
        }
    }
    let v = |s: &[GmcMassSample]| s.iter().map(|m| m.value).collect::<Vec<_>>();
    splitting_check(&v(plus), &v(minus), &v(whole), lambdas)
}

/// `E[μ(B1)^h μ(B2)^h]` on paired masses.
pub fn cross_moment_estimate(b1: &[f64], b2: &[f64], h: f64) -> Result<Estimate> {
    if b1.len() != b2.len() {
        return Err(Error::Pairing("mass batches differ in length".into()));
    }
    check_samples(b1)?;
    check_samples(b2)?;
    if !(0.0..1.0).contains(&h) {
        return Err(Error::Domain(format!("h must lie in [0, 1), got {h}")));
    }
    let v: Vec<f64> = b1.iter().zip(b2).map(|(a, b)| if h == 0.0 { 1.0 } else { (a * b).powf(h) }).collect();
    Estimate::from_samples(&v)
}

/// JSON summary of a tail fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub coefficient: f64,
    pub stderr: f64,
    pub exponent: f64,
    pub window: (f64, f64),
    pub target: f64,
    pub ratio_to_target: f64,
}

impl FitSummary {
    pub fn new(fit: &CoefficientFit, target: f64) -> Self {
        Self {
            coefficient: fit.c_hat,
            stderr: fit.stderr,
            exponent: fit.exponent,
            window: (fit.t_lo, fit.t_hi),
            target,
            ratio_to_target: fit.c_hat / target,
        }
    }
}
