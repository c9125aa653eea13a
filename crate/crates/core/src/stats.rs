//! Reductions and goodness-of-fit tests.
//!
//! All sums go through [`pairwise_sum`], whose reduction tree depends only on
//! the input length, so results are reproducible bit for bit.

use serde::{Deserialize, Serialize};

use crate::special::normal_cdf;
use crate::{Error, Result};

pub const Z95: f64 = 1.959_963_984_540_054;

/// Fixed-shape pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptyInput("no samples".into()));
        }
        let n = xs.len();
        let mean = pairwise_sum(xs) / n as f64;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        Ok(Self { mean, stderr: (var / n as f64).sqrt(), n })
    }

    pub fn scaled(self, k: f64) -> Self {
        Self { mean: self.mean * k, stderr: self.stderr * k.abs(), n: self.n }
    }

    /// |a − b| in units of the combined standard error.
    pub fn z_distance(&self, other: &Estimate) -> f64 {
        let s = (self.stderr.powi(2) + other.stderr.powi(2)).sqrt();
        if s == 0.0 {
            if self.mean == other.mean {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - other.mean).abs() / s
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&dev) / (n - 1) as f64
}

/// Sample covariance of paired slices.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return 0.0;
    }
    let mx = mean(&xs[..n]);
    let my = mean(&ys[..n]);
    let prod: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    pairwise_sum(&prod) / (n - 1) as f64
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

pub fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Kolmogorov limiting survival function Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    if lambda < 0.2 {
        // Dual series, accurate where the alternating one converges slowly.
        let pre = (2.0 * std::f64::consts::PI).sqrt() / lambda;
        let mut s = 0.0;
        for k in 1..50 {
            let kk = (2 * k - 1) as f64;
            s += (-(kk * kk) * std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda)).exp();
        }
        return (1.0 - pre * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> Result<TestResult> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("KS test needs samples".into()));
    }
    let s = sorted_copy(xs);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let en = n.sqrt();
    Ok(TestResult { statistic: d, p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d) })
}

/// One-sample KS test for a weighted sample. The p-value uses the Kish
/// effective sample size `(Σw)²/Σw²`.
pub fn ks_weighted_one_sample<F: Fn(f64) -> f64>(xs: &[f64], ws: &[f64], cdf: F) -> Result<TestResult> {
    if xs.len() != ws.len() {
        return Err(Error::Contract("values and weights differ in length".into()));
    }
    let mut pairs: Vec<(f64, f64)> = xs.iter().zip(ws).filter(|(_, &w)| w > 0.0).map(|(&x, &w)| (x, w)).collect();
    if pairs.is_empty() {
        return Err(Error::EmptyInput("weighted KS test needs positive weights".into()));
    }
    if ws.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Domain("weights must be finite and nonnegative".into()));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let sq: f64 = pairs.iter().map(|p| p.1 * p.1).sum();
    let (mut acc, mut d) = (0.0f64, 0.0f64);
    for &(x, w) in &pairs {
        let f = cdf(x);
        let lo = acc / total;
        acc += w;
        d = d.max(acc / total - f).max(f - lo);
    }
    let en = (total * total / sq).sqrt();
    Ok(TestResult { statistic: d, p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d) })
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("KS test needs two nonempty samples".into()));
    }
    let sa = sorted_copy(a);
    let sb = sorted_copy(b);
    let (na, nb) = (sa.len(), sb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = sa[i].min(sb[j]);
        while i < na && sa[i] <= x {
            i += 1;
        }
        while j < nb && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na as f64 * nb as f64 / (na + nb) as f64).sqrt();
    Ok(TestResult { statistic: d, p_value: kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d) })
}

fn ad_inf_cdf(z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z < 2.0 {
        (-1.2337141 / z).exp() / z.sqrt()
            * (2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z) * z)
    } else {
        (-(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z).exp()).exp()
    }
}

fn ad_errfix(n: f64, x: f64) -> f64 {
    if x > 0.8 {
        return (-130.2137 + (745.2337 - (1705.091 - (1950.646 - (1116.360 - 255.7844 * x) * x) * x) * x) * x) / n;
    }
    let c = 0.01265 + 0.1757 / n;
    if x < c {
        let t = x / c;
        let t = t.sqrt() * (1.0 - t) * (49.0 * t - 102.0);
        return t * (0.0037 / (n * n) + 0.00078 / n + 0.00006) / n;
    }
    let y = (x - c) / (0.8 - c);
    let y = -0.00022633 + (6.54034 - (14.6538 - (14.458 - (8.259 - 1.91864 * y) * y) * y) * y) * y;
    y * (0.04213 / n + 0.01365 / (n * n))
}

/// Anderson–Darling test against N(mean, sd²) with known parameters.
pub fn anderson_darling_normal(xs: &[f64], mean: f64, sd: f64) -> Result<TestResult> {
    if xs.len() < 5 {
        return Err(Error::EmptyInput("Anderson-Darling test needs at least 5 samples".into()));
    }
    let s = sorted_copy(xs);
    let n = s.len();
    let nf = n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let fi = normal_cdf((s[i] - mean) / sd).clamp(1e-300, 1.0 - 1e-16);
        let fj = normal_cdf((s[n - 1 - i] - mean) / sd).clamp(1e-300, 1.0 - 1e-16);
        acc += (2.0 * i as f64 + 1.0) * (fi.ln() + (1.0 - fj).ln());
    }
    let a2 = -nf - acc / nf;
    let base = ad_inf_cdf(a2);
    let cdf = (base + ad_errfix(nf, base)).clamp(0.0, 1.0);
    Ok(TestResult { statistic: a2, p_value: 1.0 - cdf })
}

/// Weighted least squares `y ≈ a + b·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
}

pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n || w.len() != n {
        return Err(Error::InsufficientCounts("line fit needs at least two paired points".into()));
    }
    let sw = pairwise_sum(w);
    let xm = pairwise_sum(&x.iter().zip(w).map(|(a, b)| a * b).collect::<Vec<_>>()) / sw;
    let ym = pairwise_sum(&y.iter().zip(w).map(|(a, b)| a * b).collect::<Vec<_>>()) / sw;
    let sxx = pairwise_sum(&x.iter().zip(w).map(|(a, b)| b * (a - xm).powi(2)).collect::<Vec<_>>());
    let sxy = pairwise_sum(&x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - xm) * (c - ym)).collect::<Vec<_>>());
    if sxx <= 0.0 {
        return Err(Error::InsufficientCounts("line fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    // Weights are inverse variances, so the parameter covariance is (XᵀWX)⁻¹.
    Ok(LineFit {
        intercept,
        slope,
        slope_stderr: (1.0 / sxx).sqrt(),
        intercept_stderr: (1.0 / sw + xm * xm / sxx).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weighted_ks_with_unit_weights() {
        let xs: Vec<f64> = (0..200).map(|i| ((i as f64 + 0.5) / 200.0).powf(1.1)).collect();
        let a = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        let b = ks_weighted_one_sample(&xs, &vec![2.0; 200], |x| x.clamp(0.0, 1.0)).unwrap();
        assert_relative_eq!(a.statistic, b.statistic, epsilon = 1e-12);
        assert_relative_eq!(a.p_value, b.p_value, epsilon = 1e-12);
        assert!(ks_weighted_one_sample(&xs, &[1.0], |x| x).is_err());
    }

    #[test]
    fn pairwise_sum_is_exact_on_integers() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500500.0);
    }

    #[test]
    fn wilson_zero_count_scale() {
        let (lo, hi) = wilson_interval(0, 1000, Z95);
        assert!(lo < 1e-15);
        assert!(hi > 3.0 / 1000.0 && hi < 4.0 / 1000.0);
        let (lo, hi) = wilson_interval(500, 1000, Z95);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn kolmogorov_known_values() {
        assert_relative_eq!(kolmogorov_sf(1.3581), 0.05, epsilon = 2e-4);
        assert_relative_eq!(kolmogorov_sf(1.6276), 0.01, epsilon = 1e-4);
        assert!((kolmogorov_sf(0.19) - kolmogorov_sf(0.21)).abs() < 1e-3);
    }

    #[test]
    fn anderson_darling_critical_values() {
        assert_relative_eq!(ad_inf_cdf(2.492), 0.95, epsilon = 1e-3);
        assert_relative_eq!(ad_inf_cdf(3.857), 0.99, epsilon = 1e-3);
        assert_relative_eq!(ad_inf_cdf(1.933), 0.90, epsilon = 1e-3);
    }

    #[test]
    fn ks_two_sample_identical() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = weighted_line_fit(&x, &y, &[1.0; 4]).unwrap();
        assert_relative_eq!(f.slope, 2.0, epsilon = 1e-14);
        assert_relative_eq!(f.intercept, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn empty_inputs_error() {
        assert!(Estimate::from_samples(&[]).is_err());
        assert!(ks_one_sample(&[], |x| x).is_err());
    }
}
