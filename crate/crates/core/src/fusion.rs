//! The Brownian toy model for the fusion estimate.
//!
//! Left side: `√t·E[exp(−λ(U_t + e^{cB_t}V + W))]` with `U_t = ∫_0^t e^{cB_s} ds`
//! and `c = √(2d)`. Right side: `√(2/π)∫_0^∞ E[exp(−λ(e^{cx}I_x + W))] dx` with
//! `I_x = ∫_{−L_{x,−}}^∞ e^{−cβ_s} ds` over a two-sided BES(3) path.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bessel::{bridge_cross_prob, last_hit_bes3_with, run_to_first_hit_with, StepRule, Walker3};
use crate::quad::{integrate_to_infinity, QuadratureConfig};
use crate::rng::{RngPolicy, Stream, StreamRng};
use crate::special::{e1, gamma, normal_cdf};
use crate::stats::Estimate;
use crate::{Error, Result};

/// Offset separating right-side law draws from left-side ones.
const RHS_LAW_OFFSET: u64 = 1 << 40;

/// Nonnegative scalar law, sampled from one standard normal draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    Zero,
    Constant { value: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl LawSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LawSpec::Zero => true,
            LawSpec::Constant { value } => value >= 0.0 && value.is_finite(),
            LawSpec::LogNormal { mu, sigma } => mu.is_finite() && sigma >= 0.0 && sigma.is_finite(),
            LawSpec::Uniform { lo, hi } => lo >= 0.0 && hi >= lo && hi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid nonnegative law {self:?}")))
        }
    }

    pub fn from_normal(&self, z: f64) -> f64 {
        match *self {
            LawSpec::Zero => 0.0,
            LawSpec::Constant { value } => value,
            LawSpec::LogNormal { mu, sigma } => (mu + sigma * z).exp(),
            LawSpec::Uniform { lo, hi } => lo + (hi - lo) * normal_cdf(z),
        }
    }

    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        self.from_normal(rng.sample(StandardNormal))
    }

    /// `E[V^q]` for `q > 0`.
    pub fn moment(&self, q: f64) -> f64 {
        match *self {
            LawSpec::Zero => 0.0,
            LawSpec::Constant { value } => value.powf(q),
            LawSpec::LogNormal { mu, sigma } => (q * mu + 0.5 * q * q * sigma * sigma).exp(),
            LawSpec::Uniform { lo, hi } => {
                if hi == lo {
                    lo.powf(q)
                } else {
                    (hi.powf(q + 1.0) - lo.powf(q + 1.0)) / ((q + 1.0) * (hi - lo))
                }
            }
        }
    }

    /// Shift by a constant `c ≥ 0`, where the law family allows it.
    pub fn shifted(&self, c: f64) -> Option<LawSpec> {
        match *self {
            LawSpec::Zero => Some(LawSpec::Constant { value: c }),
            LawSpec::Constant { value } => Some(LawSpec::Constant { value: value + c }),
            LawSpec::Uniform { lo, hi } => Some(LawSpec::Uniform { lo: lo + c, hi: hi + c }),
            LawSpec::LogNormal { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    pub d: usize,
    pub lambda: f64,
    pub t: f64,
    pub h: f64,
    pub v: LawSpec,
    pub w: LawSpec,
    pub x_max: f64,
    /// Spacing of the `x` grid on the right side.
    pub x_step: f64,
    pub ptol: f64,
    /// Largest accepted bound on the neglected `x > x_max` part.
    pub tail_tol: f64,
}

impl ToyConfig {
    pub fn new(d: usize, lambda: f64, t: f64) -> Self {
        Self {
            d,
            lambda,
            t,
            h: 0.01,
            v: LawSpec::Zero,
            w: LawSpec::Zero,
            x_max: suggest_x_max(lambda, d),
            x_step: 0.05,
            ptol: 1e-4,
            tail_tol: 1e-4,
        }
    }

    pub fn c(&self) -> f64 {
        (2.0 * self.d as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Domain("d must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Domain(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.t > 0.0) || !(self.h > 0.0) || self.h > self.t / 100.0 {
            return Err(Error::Domain(format!("need t > 0 and 0 < h <= t/100, got t = {}, h = {}", self.t, self.h)));
        }
        if !(self.x_max > 0.0) || !(self.x_step > 0.0) || self.x_step > self.x_max {
            return Err(Error::Domain(format!("need 0 < x_step <= x_max, got {} and {}", self.x_step, self.x_max)));
        }
        if !(self.ptol > 0.0 && self.ptol <= 0.01) {
            return Err(Error::Domain(format!("ptol must lie in (0, 0.01], got {}", self.ptol)));
        }
        if !(self.tail_tol > 0.0) {
            return Err(Error::Domain("tail_tol must be positive".into()));
        }
        self.v.validate()?;
        self.w.validate()
    }
}

/// Past `x ≈ log(1/λ)/c` the right-side integrand decays like
/// `exp(−λe^{cx}I_x)`; eight more e-folds leave a negligible remainder.
pub fn suggest_x_max(lambda: f64, d: usize) -> f64 {
    let c = (2.0 * d as f64).sqrt();
    ((1.0 / lambda.min(1.0)).ln() + 8.0) / c
}

/// Trapezoidal `∫_0^t e^{c·B_s} ds` of one Brownian path with step `h`.
pub fn exp_functional_bm(t: f64, h: f64, d: usize, rng: &mut StreamRng) -> f64 {
    let c = (2.0 * d as f64).sqrt();
    let n = ((t / h) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let mut b = 0.0;
    let mut prev = 1.0;
    let mut s = 0.0;
    let mut tt = 0.0;
    for k in 0..n {
        let next = if k + 1 == n { t } else { (k + 1) as f64 * h };
        let dt = next - tt;
        b += dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let e = (c * b).exp();
        s += 0.5 * dt * (prev + e);
        prev = e;
        tt = next;
    }
    s
}

/// Trapezoidal `∫ e^{c·v(s)} ds` of a path given on a uniform grid.
pub fn exp_functional_values(values: &[f64], h: f64, c: f64) -> f64 {
    values.windows(2).map(|w| 0.5 * h * ((c * w[0]).exp() + (c * w[1]).exp())).sum()
}

/// `U_t` and `B_t` at each checkpoint, for each exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct LhsPath {
    /// `u[i][j]` for checkpoint `i` and exponent `j`.
    pub u: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// One Brownian path with step `h`, recorded at the sorted `checkpoints`.
pub fn lhs_path(checkpoints: &[f64], h: f64, cs: &[f64], rng: &mut StreamRng) -> LhsPath {
    let mut u = vec![0.0; cs.len()];
    let mut prev = vec![1.0; cs.len()];
    let mut out = LhsPath { u: Vec::with_capacity(checkpoints.len()), b: Vec::with_capacity(checkpoints.len()) };
    let (mut t, mut b, mut k) = (0.0, 0.0, 0u64);
    for &tc in checkpoints {
        while t < tc * (1.0 - 1e-12) {
            let next = ((k + 1) as f64 * h).min(tc);
            let dt = next - t;
            b += dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
            for (j, &c) in cs.iter().enumerate() {
                let e = (c * b).exp();
                u[j] += 0.5 * dt * (prev[j] + e);
                prev[j] = e;
            }
            t = next;
            if (t - (k + 1) as f64 * h).abs() <= 1e-9 * h {
                k += 1;
            }
        }
        out.u.push(u.clone());
        out.b.push(b);
    }
    out
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::EmptyInput("need at least one replica".into()));
    }
    Ok(())
}

/// Left-side estimates for several configurations on shared paths. All
/// configurations must use the same `h`.
pub fn lhs_estimates(cfgs: &[ToyConfig], n: usize, policy: &RngPolicy) -> Result<Vec<Estimate>> {
    check_n(n)?;
    let h = cfgs.first().ok_or_else(|| Error::EmptyInput("no configurations".into()))?.h;
    for c in cfgs {
        c.validate()?;
        if c.h != h {
            return Err(Error::Contract("configurations on shared paths need one step h".into()));
        }
    }
    let mut ts: Vec<f64> = cfgs.iter().map(|c| c.t).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mut cs: Vec<f64> = cfgs.iter().map(|c| c.c()).collect();
    cs.sort_by(f64::total_cmp);
    cs.dedup();
    let slot: Vec<(usize, usize)> = cfgs
        .iter()
        .map(|c| (ts.iter().position(|&t| t == c.t).unwrap(), cs.iter().position(|&x| x == c.c()).unwrap()))
        .collect();
    let rows: Vec<Vec<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let p = lhs_path(&ts, h, &cs, &mut policy.stream(Stream::Toy, i));
            let mut laws = policy.stream(Stream::Laws, i);
            let (zv, zw): (f64, f64) = (laws.sample(StandardNormal), laws.sample(StandardNormal));
            cfgs.iter()
                .zip(&slot)
                .map(|(cfg, &(it, ic))| {
                    let arg = p.u[it][ic] + (cs[ic] * p.b[it]).exp() * cfg.v.from_normal(zv) + cfg.w.from_normal(zw);
                    cfg.t.sqrt() * (-cfg.lambda * arg).exp()
                })
                .collect()
        })
        .collect();
    per_column(&rows, cfgs.len())
}

pub fn lhs_estimate(cfg: &ToyConfig, n: usize, policy: &RngPolicy) -> Result<Estimate> {
    Ok(lhs_estimates(std::slice::from_ref(cfg), n, policy)?[0])
}

fn per_column(rows: &[Vec<f64>], m: usize) -> Result<Vec<Estimate>> {
    (0..m)
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            Estimate::from_samples(&col)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IxMethod {
    Reversal,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IxSample {
    pub x: f64,
    pub value: f64,
    pub method: IxMethod,
}

/// Expected `∫ e^{−cβ_s} ds` after a BES(3) from 0 first reaches `b`.
pub fn forward_remainder(b: f64, c: f64) -> f64 {
    let cb = c * b;
    // Lower incomplete gamma γ(3, cb) = 2 − e^{−cb}(cb² + 2cb + 2).
    let g3 = 2.0 - (-cb).exp() * (cb * cb + 2.0 * cb + 2.0);
    2.0 / b * g3 / (c * c * c) + 2.0 * (-cb).exp() * (cb + 1.0) / (c * c)
}

/// Smallest power-of-two multiple of `1/c` with remainder below `ptol`.
pub fn forward_cutoff(c: f64, ptol: f64) -> f64 {
    let mut b = 1.0 / c;
    while forward_remainder(b, c) > ptol {
        b *= 2.0;
    }
    b
}

/// `∫_0^∞ e^{−cβ_s} ds` for a BES(3) from 0, cut where the expected
/// remainder drops below `ptol`.
pub fn forward_functional(c: f64, h: f64, ptol: f64, rng: &mut StreamRng) -> f64 {
    let rule = StepRule::new(h, c);
    let stop = forward_cutoff(c, ptol);
    let mut w = Walker3::new(0.0);
    let (mut a, mut ea, mut s) = (0.0, 1.0, 0.0);
    while a < stop {
        let dt = rule.step(a);
        w.advance(dt, rng);
        let b = w.norm();
        let eb = (-c * b).exp();
        s += 0.5 * dt * (ea + eb);
        a = b;
        ea = eb;
    }
    s
}

/// `I_x` by one of the two equivalent constructions of its negative side.
pub fn sample_ix(x: f64, method: IxMethod, d: usize, h: f64, ptol: f64, neg: &mut StreamRng, fwd: &mut StreamRng) -> Result<IxSample> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("x must be nonnegative, got {x}")));
    }
    let c = (2.0 * d as f64).sqrt();
    let rule = StepRule::new(h, c);
    let negative = if x == 0.0 {
        0.0
    } else {
        match method {
            IxMethod::Direct => last_hit_bes3_with(x, &rule, ptol, neg)?.0.exp_functional(c),
            IxMethod::Reversal => {
                // e^{−cx}∫_0^{T_x} e^{cB_u} du
                let (p, _) = run_to_first_hit_with(x, 0.0, &rule, neg, 1e18)?;
                let mut s = 0.0;
                for k in 1..p.len() {
                    let dt = p.times[k] - p.times[k - 1];
                    s += 0.5 * dt * ((c * (p.values[k - 1] - x)).exp() + (c * (p.values[k] - x)).exp());
                }
                s
            }
        }
    };
    let value = negative + forward_functional(c, h, ptol, fwd);
    Ok(IxSample { x, value, method })
}

/// `e^{c·x_j}·I_{x_j}` on the grid `x_j = j·dx`, `j = 0..=m`, from a single
/// two-sided BES(3) path.
#[derive(Debug, Clone, PartialEq)]
pub struct IxProfile {
    pub dx: f64,
    pub scaled: Vec<f64>,
}

impl IxProfile {
    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.dx
    }

    /// Trapezoid of `exp(−λ(scaled_j + w))` over the grid.
    pub fn laplace_integral(&self, lambda: f64, w: f64) -> f64 {
        let f: Vec<f64> = self.scaled.iter().map(|&s| (-lambda * (s + w)).exp()).collect();
        let inner: f64 = f[1..f.len() - 1].iter().sum();
        self.dx * (0.5 * (f[0] + f[f.len() - 1]) + inner)
    }

    /// Bound on `∫_{x_max}^∞ exp(−λe^{cx}I_x) dx` using `I_x ≥ I_{x_max}`.
    pub fn tail_bound(&self, lambda: f64, c: f64) -> f64 {
        let last = *self.scaled.last().unwrap();
        if lambda == 0.0 {
            return f64::INFINITY;
        }
        e1(lambda * last) / c
    }
}

pub fn sample_ix_profile(d: usize, h: f64, dx: f64, m: usize, ptol: f64, neg: &mut StreamRng, fwd: &mut StreamRng) -> IxProfile {
    let c = (2.0 * d as f64).sqrt();
    let top = m as f64 * dx;
    let rule = StepRule::new(h, c);
    let escape = top.max(dx) / ptol;
    // Cumulative ∫ e^{−cβ} at the last recorded hit of each level.
    let mut at_last = vec![0.0; m + 1];
    let mut w = Walker3::new(0.0);
    let (mut a, mut ea, mut j_cum) = (0.0f64, 1.0f64, 0.0f64);
    while a < escape {
        let dt = rule.step(a - top);
        w.advance(dt, neg);
        let b = w.norm();
        let eb = (-c * b).exp();
        let step_int = 0.5 * dt * (ea + eb);
        let lo = a.min(b);
        let reach = (20.0 * dt).sqrt();
        let j_lo = (((lo - reach) / dx).ceil().max(1.0)) as usize;
        let j_hi = ((a.max(b) / dx).floor() as usize).min(m);
        for (jj, slot) in at_last.iter_mut().enumerate().take(j_hi + 1).skip(j_lo) {
            let x = jj as f64 * dx;
            if a <= x && b > x {
                let frac = (x - a) / (b - a);
                *slot = j_cum + 0.5 * frac * dt * (ea + (-c * x).exp());
            } else if a > x && b > x {
                let p = bridge_cross_prob(a - x, b - x, dt);
                if p > 1e-17 && neg.random::<f64>() < p {
                    *slot = j_cum + 0.5 * step_int;
                }
            }
        }
        j_cum += step_int;
        a = b;
        ea = eb;
    }
    let f = forward_functional(c, h, ptol, fwd);
    let scaled = at_last.iter().enumerate().map(|(j, &nv)| (c * j as f64 * dx).exp() * (nv + f)).collect();
    IxProfile { dx, scaled }
}

fn profile_grid(cfg: &ToyConfig) -> usize {
    (cfg.x_max / cfg.x_step).round().max(1.0) as usize
}

fn draw_profile(cfg: &ToyConfig, m: usize, policy: &RngPolicy, i: u64) -> IxProfile {
    sample_ix_profile(cfg.d, cfg.h, cfg.x_step, m, cfg.ptol, &mut policy.stream(Stream::IxNegative, i), &mut policy.stream(Stream::IxForward, i))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhsEstimate {
    pub estimate: Estimate,
    /// Bound on the neglected `x > x_max` contribution, same scale as the estimate.
    pub truncation: f64,
}

/// Right-side estimates on shared profiles. Configurations must agree on
/// `d`, `h`, `x_step`, `x_max` and `ptol`.
pub fn rhs_estimates(cfgs: &[ToyConfig], n_inner: usize, policy: &RngPolicy) -> Result<Vec<RhsEstimate>> {
    check_n(n_inner)?;
    let base = *cfgs.first().ok_or_else(|| Error::EmptyInput("no configurations".into()))?;
    for c in cfgs {
        c.validate()?;
        if (c.d, c.h, c.x_step, c.x_max, c.ptol) != (base.d, base.h, base.x_step, base.x_max, base.ptol) {
            return Err(Error::Contract("configurations on shared profiles need one d, h, x grid and ptol".into()));
        }
    }
    let m = profile_grid(&base);
    let c = base.c();
    let k = cfgs.len();
    let rows: Vec<Vec<f64>> = (0..n_inner as u64)
        .into_par_iter()
        .map(|i| {
            let prof = draw_profile(&base, m, policy, i);
            let zw: f64 = policy.stream(Stream::Laws, RHS_LAW_OFFSET + i).sample(StandardNormal);
            let mut row = Vec::with_capacity(2 * k);
            for cfg in cfgs {
                let w = cfg.w.from_normal(zw);
                row.push(prof.laplace_integral(cfg.lambda, w));
                row.push(prof.tail_bound(cfg.lambda, c) * (-cfg.lambda * w).exp());
            }
            row
        })
        .collect();
    let norm = (2.0 / PI).sqrt();
    let mut out = Vec::with_capacity(k);
    for (j, cfg) in cfgs.iter().enumerate() {
        let vals: Vec<f64> = rows.iter().map(|r| r[2 * j]).collect();
        let bound: Vec<f64> = rows.iter().map(|r| r[2 * j + 1]).collect();
        let truncation = norm * crate::stats::mean(&bound);
        if !(truncation <= cfg.tail_tol) {
            return Err(Error::Truncation {
                message: format!("x > {} remainder bound {truncation:.3e} exceeds {:.1e}; enlarge x_max", cfg.x_max, cfg.tail_tol),
                probability: truncation,
            });
        }
        out.push(RhsEstimate { estimate: Estimate::from_samples(&vals)?.scaled(norm), truncation });
    }
    Ok(out)
}

pub fn rhs_estimate(cfg: &ToyConfig, n_inner: usize, policy: &RngPolicy) -> Result<RhsEstimate> {
    Ok(rhs_estimates(std::slice::from_ref(cfg), n_inner, policy)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub lambda: f64,
    pub value: Estimate,
    pub truncation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub d: usize,
    pub target: f64,
    pub rows: Vec<LimitRow>,
    /// Distances to the target shrink along the grid.
    pub monotone: bool,
    pub final_relative_error: f64,
}

/// `(−log λ)^{−1}∫_0^{x_max} E[exp(−λ(e^{cx}I_x + W))] dx` on a decreasing
/// `λ` grid, using the same profiles for every `λ`. `cfg.x_max` should be
/// sized for the smallest `λ`.
pub fn limit_result_check(lambdas: &[f64], cfg: &ToyConfig, n: usize, policy: &RngPolicy) -> Result<LimitReport> {
    check_n(n)?;
    cfg.validate()?;
    if lambdas.is_empty() {
        return Err(Error::EmptyInput("empty lambda grid".into()));
    }
    if lambdas.iter().any(|&l| !(l > 0.0 && l < 0.5)) {
        return Err(Error::Domain("lambda values must lie in (0, 1/2)".into()));
    }
    if lambdas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Domain("lambda grid must decrease".into()));
    }
    let m = profile_grid(cfg);
    let c = cfg.c();
    let rows: Vec<Vec<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let prof = draw_profile(cfg, m, policy, i);
            let w = cfg.w.from_normal(policy.stream(Stream::Laws, RHS_LAW_OFFSET + i).sample(StandardNormal));
            lambdas.iter().flat_map(|&l| [prof.laplace_integral(l, w), prof.tail_bound(l, c)]).collect()
        })
        .collect();
    let target = 1.0 / c;
    let mut out = Vec::new();
    for (j, &l) in lambdas.iter().enumerate() {
        let vals: Vec<f64> = rows.iter().map(|r| r[2 * j]).collect();
        let bound: Vec<f64> = rows.iter().map(|r| r[2 * j + 1]).collect();
        let scale = 1.0 / (-l.ln());
        out.push(LimitRow { lambda: l, value: Estimate::from_samples(&vals)?.scaled(scale), truncation: scale * crate::stats::mean(&bound) });
    }
    let gaps: Vec<f64> = out.iter().map(|r| (r.value.mean - target).abs()).collect();
    let monotone = gaps.windows(2).all(|g| g[1] < g[0]);
    Ok(LimitReport {
        d: cfg.d,
        target,
        final_relative_error: gaps[gaps.len() - 1] / target,
        rows: out,
        monotone,
    })
}

/// `E[e^{−√(2d)β_s}]` for a BES(3) from 0, by quadrature against the chi(3)
/// density of `β_s/√s`.
pub fn chi3_laplace(s: f64, d: usize, quad: &QuadratureConfig) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("s must be positive, got {s}")));
    }
    let a = (2.0 * d as f64 * s).sqrt();
    let norm = 1.0 / (2f64.sqrt() * gamma(1.5));
    integrate_to_infinity(|x| norm * (-a * x - 0.5 * x * x).exp() * x * x, 0.0, quad)
}
