//! Chaos masses from field samples and the closed-form tail constants.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::field::FieldSample;
use crate::geometry::{DensitySpec, GridSpec, SetSpec};
use crate::quad::QuadratureConfig;
use crate::special::{gamma, ln_gamma};
use crate::stats::{quantile_sorted, sorted_copy};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    Subcritical { gamma: f64 },
    /// Seneta–Heyde normalization factor `(log 1/ε)^{1/2}` used.
    Critical { normalization: f64 },
}

#[derive(Debug, Clone)]
pub struct GmcMassSample {
    pub value: f64,
    pub regime: Regime,
    pub epsilon: f64,
    pub set: Arc<SetSpec>,
    pub density: Arc<DensitySpec>,
    pub seed: u64,
    pub replica: u64,
}

impl GmcMassSample {
    pub fn gamma(&self) -> Option<f64> {
        match self.regime {
            Regime::Subcritical { gamma } => Some(gamma),
            Regime::Critical { .. } => None,
        }
    }
}

/// `Q = γ/2 + d/γ`.
pub fn q_param(gamma: f64, d: usize) -> f64 {
    gamma / 2.0 + d as f64 / gamma
}

pub fn seneta_heyde_norm(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Normalization(format!("critical normalization needs 0 < epsilon < 1, got {eps}")));
    }
    Ok((-eps.ln()).sqrt())
}

/// Cell weights `g(x_i)·spacing^d` of the grid points inside `A`.
#[derive(Debug, Clone)]
pub struct MassFunctional {
    pub d: usize,
    pub set: Arc<SetSpec>,
    pub density: Arc<DensitySpec>,
    index: Vec<usize>,
    weight: Vec<f64>,
}

impl MassFunctional {
    pub fn new(grid: &GridSpec, set: Arc<SetSpec>, density: Arc<DensitySpec>) -> Result<Self> {
        set.validate(grid.d)?;
        density.validate(grid.d)?;
        if !set.within(&grid.lo, &grid.hi) {
            return Err(Error::Domain("test set extends beyond the grid box".into()));
        }
        let vol = grid.cell_volume();
        let mut index = Vec::new();
        let mut weight = Vec::new();
        for (i, p) in grid.points().enumerate() {
            if set.contains(p) {
                let g = density.eval(p);
                if !(g >= 0.0) || !g.is_finite() {
                    return Err(Error::Domain(format!("density is negative or non-finite ({g}) at {p:?}")));
                }
                index.push(i);
                weight.push(g * vol);
            }
        }
        if index.is_empty() {
            return Err(Error::EmptySet("no grid cell centre lies in the test set".into()));
        }
        Ok(Self { d: grid.d, set, density, index, weight })
    }

    pub fn cells(&self) -> usize {
        self.index.len()
    }

    /// Riemann sum of the density over the selected cells.
    pub fn total_weight(&self) -> f64 {
        self.weight.iter().sum()
    }

    /// `Σ w_i exp(a·X_i − b·var_i)`.
    fn exp_sum(&self, values: &[f64], variance: &[f64], a: f64, b: f64) -> f64 {
        let mut s = 0.0;
        for (&i, &w) in self.index.iter().zip(&self.weight) {
            s += w * (a * values[i] - b * variance[i]).exp();
        }
        s
    }

    pub fn subcritical_value(&self, values: &[f64], variance: &[f64], gamma: f64) -> f64 {
        self.exp_sum(values, variance, gamma, 0.5 * gamma * gamma)
    }

    /// Critical mass with an explicit normalization factor.
    pub fn critical_value_with_norm(&self, values: &[f64], variance: &[f64], norm: f64) -> f64 {
        let d = self.d as f64;
        norm * self.exp_sum(values, variance, (2.0 * d).sqrt(), d)
    }

    pub fn critical_value(&self, values: &[f64], variance: &[f64], eps: f64) -> Result<f64> {
        Ok(self.critical_value_with_norm(values, variance, seneta_heyde_norm(eps)?))
    }
}

fn check_subcritical(gamma: f64, d: usize) -> Result<()> {
    if !(gamma >= 0.0) || gamma * gamma >= 2.0 * d as f64 {
        return Err(Error::Regime(format!("subcritical mass needs 0 <= gamma^2 < 2d, got gamma = {gamma}, d = {d}")));
    }
    Ok(())
}

/// `(log 1/ε)^{1/2} Σ_{x_i ∈ A} g(x_i) exp(√(2d) X_ε(x_i) − d·var(x_i)) · spacing^d`.
pub fn critical_mass(fs: &FieldSample, set: &SetSpec, g: &DensitySpec) -> Result<GmcMassSample> {
    let norm = seneta_heyde_norm(fs.epsilon)?;
    let m = MassFunctional::new(&fs.grid, Arc::new(set.clone()), Arc::new(g.clone()))?;
    Ok(GmcMassSample {
        value: m.critical_value_with_norm(&fs.values, &fs.variance, norm),
        regime: Regime::Critical { normalization: norm },
        epsilon: fs.epsilon,
        set: m.set,
        density: m.density,
        seed: fs.seed,
        replica: fs.replica,
    })
}

/// `Σ_{x_i ∈ A} g(x_i) exp(γ X_ε(x_i) − (γ²/2)·var(x_i)) · spacing^d`.
pub fn subcritical_mass(fs: &FieldSample, gamma: f64, set: &SetSpec, g: &DensitySpec) -> Result<GmcMassSample> {
    check_subcritical(gamma, fs.grid.d)?;
    let m = MassFunctional::new(&fs.grid, Arc::new(set.clone()), Arc::new(g.clone()))?;
    Ok(GmcMassSample {
        value: m.subcritical_value(&fs.values, &fs.variance, gamma),
        regime: Regime::Subcritical { gamma },
        epsilon: fs.epsilon,
        set: m.set,
        density: m.density,
        seed: fs.seed,
        replica: fs.replica,
    })
}

/// Explicit subcritical tail constant `C̄_{γ,d}` for `d ∈ {1, 2}`.
pub fn cbar_subcritical(gamma: f64, d: usize) -> Result<f64> {
    if !(gamma > 0.0) || gamma >= (2.0 * d as f64).sqrt() {
        return Err(Error::Regime(format!("C̄ needs 0 < gamma < sqrt(2d), got gamma = {gamma}, d = {d}")));
    }
    let q = q_param(gamma, d);
    let a = 0.5 * gamma * (q - gamma);
    let b = 2.0 / gamma * (q - gamma);
    match d {
        1 => {
            let ln = b * (2.0 * PI).ln() - a.ln() - 2.0 / (gamma * gamma) * ln_gamma(a);
            Ok(ln.exp())
        }
        2 => {
            let g2 = 0.25 * gamma * gamma;
            let base = PI.ln() + ln_gamma(g2) - ln_gamma(1.0 - g2);
            let power = (b * base).exp();
            Ok(-power / b * gamma_ratio(a, b))
        }
        _ => Err(Error::Unsupported(format!("closed-form C̄ exists for d <= 2 only, got d = {d}"))),
    }
}

/// `Γ(−a) / (Γ(a) Γ(b))`, written so that small `a, b` stay accurate.
fn gamma_ratio(a: f64, b: f64) -> f64 {
    // Γ(−a) = −Γ(1−a)/a, Γ(a) = Γ(1+a)/a, Γ(b) = Γ(1+b)/b.
    -gamma(1.0 - a) / gamma(1.0 + a) * b / gamma(1.0 + b)
}

/// Leading coefficient and exponent of the subcritical tail
/// `P(∫_A g dM_γ > t) ~ coefficient / t^{exponent}`.
pub fn subcritical_tail_coeff<F>(gamma: f64, d: usize, f_diag: F, g: &DensitySpec, set: &SetSpec, quad: &QuadratureConfig) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let cbar = cbar_subcritical(gamma, d)?;
    set.validate(d)?;
    let q = q_param(gamma, d);
    let df = d as f64;
    let k = 2.0 * df / gamma * (q - gamma);
    let p = 2.0 * df / (gamma * gamma);
    let weight = set.integrate(
        |v| {
            let gv = g.eval(v).max(0.0);
            let gp = if gv == 0.0 { 0.0 } else { gv.powf(p) };
            (k * f_diag(v)).exp() * gp
        },
        quad,
    )?;
    let r = 2.0 / gamma * (q - gamma);
    Ok((weight * r / (r + 1.0) * cbar, p))
}

/// `∫_A g / √(πd)`.
pub fn critical_tail_coeff(d: usize, g: &DensitySpec, set: &SetSpec, quad: &QuadratureConfig) -> Result<f64> {
    if d == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    set.validate(d)?;
    let integral = set.integrate(|v| g.eval(v), quad)?;
    Ok(integral / (PI * d as f64).sqrt())
}

/// Quantile comparison of `M_γ(A)/(√(2d) − γ)` against `√(2π)·μ(A)` on shared
/// fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub gamma: f64,
    pub levels: Vec<f64>,
    pub subcritical_scaled: Vec<f64>,
    pub critical_scaled: Vec<f64>,
    pub ratios: Vec<f64>,
    pub median_ratio: f64,
    pub max_abs_log_ratio: f64,
    /// Set when some quantile ratio is off by more than a factor 2.
    pub flagged: bool,
}

pub fn derivative_approx_check(fields: &[FieldSample], gamma: f64, set: &SetSpec, g: &DensitySpec) -> Result<DerivativeReport> {
    let first = fields.first().ok_or_else(|| Error::EmptyInput("no field samples".into()))?;
    let d = first.grid.d;
    let crit = (2.0 * d as f64).sqrt();
    check_subcritical(gamma, d)?;
    let m = MassFunctional::new(&first.grid, Arc::new(set.clone()), Arc::new(g.clone()))?;
    let norm = seneta_heyde_norm(first.epsilon)?;
    let mut sub = Vec::with_capacity(fields.len());
    let mut cr = Vec::with_capacity(fields.len());
    for f in fields {
        if !Arc::ptr_eq(&f.grid, &first.grid) && *f.grid != *first.grid {
            return Err(Error::Contract("field samples live on different grids".into()));
        }
        sub.push(m.subcritical_value(&f.values, &f.variance, gamma) / (crit - gamma));
        cr.push((2.0 * PI).sqrt() * m.critical_value_with_norm(&f.values, &f.variance, norm));
    }
    let (ss, cs) = (sorted_copy(&sub), sorted_copy(&cr));
    let levels = vec![0.1, 0.25, 0.5, 0.75, 0.9];
    let sq: Vec<f64> = levels.iter().map(|&p| quantile_sorted(&ss, p)).collect();
    let cq: Vec<f64> = levels.iter().map(|&p| quantile_sorted(&cs, p)).collect();
    let ratios: Vec<f64> = sq.iter().zip(&cq).map(|(a, b)| a / b).collect();
    let max_abs_log_ratio = ratios.iter().map(|r| r.ln().abs()).fold(0.0, f64::max);
    Ok(DerivativeReport {
        gamma,
        median_ratio: ratios[2],
        flagged: !(max_abs_log_ratio <= 2f64.ln()),
        max_abs_log_ratio,
        levels,
        subcritical_scaled: sq,
        critical_scaled: cq,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldSampler, FieldSample};
    use crate::kernels::KernelDescriptor;
    use crate::rng::RngPolicy;
    use crate::stats::Estimate;
    use approx::assert_relative_eq;

    fn sampler(eps: f64, l: f64) -> FieldSampler {
        let grid = Arc::new(GridSpec::cube(1, 0.0, 1.0, 2.0 * eps).unwrap());
        FieldSampler::new(&KernelDescriptor::l_exact(1, l), grid, eps, RngPolicy::new(77)).unwrap()
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn cbar_limits_and_oracle() {
        assert!((cbar_subcritical(2f64.sqrt() - 1e-6, 1).unwrap() - 1.0).abs() < 1e-4);
        assert!((cbar_subcritical(2.0 - 1e-6, 2).unwrap() - 1.0).abs() < 1e-4);
        // Arbitrary-precision Gamma oracle.
        assert_relative_eq!(cbar_subcritical(1.0, 1).unwrap(), 1.911_955_189_944_500, max_relative = 1e-12);
        assert_relative_eq!(cbar_subcritical(1.0, 2).unwrap(), 527.990_638_713_102_3, max_relative = 1e-11);
        assert_relative_eq!(cbar_subcritical(2f64.sqrt() - 1e-4, 1).unwrap(), 0.998_949_610_110_450_9, max_relative = 1e-10);
        assert_relative_eq!(cbar_subcritical(2.0 - 1e-4, 2).unwrap(), 0.999_366_746_008_040_2, max_relative = 1e-10);
    }

    #[test]
    fn cbar_errors() {
        assert!(matches!(cbar_subcritical(1.5, 1), Err(Error::Regime(_))));
        assert!(matches!(cbar_subcritical(0.0, 1), Err(Error::Regime(_))));
        assert!(matches!(cbar_subcritical(1.0, 3), Err(Error::Unsupported(_))));
    }

    #[test]
    fn tail_coefficients() {
        let q = QuadratureConfig::adaptive(1e-12);
        let a = SetSpec::interval(0.0, 1.0);
        let one = DensitySpec::constant(1.0);
        let (c, p) = subcritical_tail_coeff(1.0, 1, |_| 0.0, &one, &a, &q).unwrap();
        assert_relative_eq!(p, 2.0);
        assert_relative_eq!(c, 0.5 * cbar_subcritical(1.0, 1).unwrap(), max_relative = 1e-12);
        let (c, _) = subcritical_tail_coeff(1.0, 1, |_| 0.3, &one, &a, &q).unwrap();
        assert_relative_eq!(c, 1.290_434_776_418_617, max_relative = 1e-11);
        // Near criticality the weight integral tends to ∫g and the ratio to 0.
        let g = DensitySpec::Affine { intercept: 0.2, slope: vec![1.0] };
        let gam = 2f64.sqrt() - 1e-7;
        let (c, p) = subcritical_tail_coeff(gam, 1, |_| 0.7, &g, &a, &q).unwrap();
        let r = 2.0 / gam * (q_param(gam, 1) - gam);
        assert_relative_eq!(c / (r / (r + 1.0) * cbar_subcritical(gam, 1).unwrap()), 0.7, max_relative = 1e-5);
        assert!((p - 1.0).abs() < 1e-6);
    }

    #[test]
    fn critical_coefficient_examples() {
        let q = QuadratureConfig::default();
        let one = DensitySpec::constant(1.0);
        let sq = SetSpec::boxed(vec![0.0, 0.0], vec![1.0, 1.0]);
        assert_relative_eq!(critical_tail_coeff(2, &one, &sq, &q).unwrap(), 0.398_942_280_401_432_7, epsilon = 1e-12);
        let a = SetSpec::interval(0.0, 1.0);
        assert_relative_eq!(critical_tail_coeff(1, &one, &a, &q).unwrap(), 1.0 / PI.sqrt(), epsilon = 1e-12);
        let g = DensitySpec::Affine { intercept: 0.0, slope: vec![1.0] };
        assert_relative_eq!(critical_tail_coeff(1, &g, &a, &q).unwrap(), 0.5 / PI.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn mass_edge_cases() {
        let s = sampler((-4.0f64).exp(), 0.0);
        let f = s.sample(0);
        let a = SetSpec::interval(0.0, 1.0);
        assert_eq!(critical_mass(&f, &a, &DensitySpec::constant(0.0)).unwrap().value, 0.0);
        let m0 = subcritical_mass(&f, 0.0, &a, &DensitySpec::constant(1.0)).unwrap();
        assert_relative_eq!(m0.value, 1.0, epsilon = 1e-12);
        assert!(matches!(subcritical_mass(&f, 1.5, &a, &DensitySpec::constant(1.0)), Err(Error::Regime(_))));
        let empty = SetSpec::interval(0.0, 1e-6);
        assert!(matches!(critical_mass(&f, &empty, &DensitySpec::constant(1.0)), Err(Error::EmptySet(_))));
        let outside = SetSpec::interval(0.5, 2.0);
        assert!(critical_mass(&f, &outside, &DensitySpec::constant(1.0)).is_err());
        let mut wide = f.clone();
        wide.epsilon = 1.0;
        assert!(matches!(critical_mass(&wide, &a, &DensitySpec::constant(1.0)), Err(Error::Normalization(_))));
        let neg = DensitySpec::Affine { intercept: -0.5, slope: vec![1.0] };
        assert!(matches!(critical_mass(&f, &a, &neg), Err(Error::Domain(_))));
    }

    #[test]
    fn critical_mean_matches_normalization() {
        let eps = (-4.0f64).exp();
        let s = sampler(eps, 0.0);
        let m = MassFunctional::new(&s.grid, Arc::new(SetSpec::interval(0.0, 1.0)), Arc::new(DensitySpec::constant(1.0))).unwrap();
        let vals = s.map_replicas(0..10_000, |_, v| m.critical_value(v, &s.variance, eps).unwrap());
        let e = Estimate::from_samples(&vals).unwrap();
        assert!((e.mean - 2.0).abs() < 3.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn monotone_in_set() {
        let s = sampler((-3.0f64).exp(), 0.0);
        let small = SetSpec::interval(0.2, 0.6);
        let big = SetSpec::interval(0.1, 0.9);
        let g = DensitySpec::constant(1.0);
        for r in 0..50 {
            let f = s.sample(r);
            let a = critical_mass(&f, &small, &g).unwrap().value;
            let b = critical_mass(&f, &big, &g).unwrap().value;
            assert!(a >= 0.0 && a <= b);
        }
    }

    #[test]
    fn derivative_check_behaviour() {
        let s = sampler((-3.0f64).exp(), 0.0);
        let fields: Vec<FieldSample> = s.sample_range(0..200);
        let a = SetSpec::interval(0.0, 1.0);
        let g = DensitySpec::constant(1.0);
        assert!(matches!(derivative_approx_check(&[], 1.3, &a, &g), Err(Error::EmptyInput(_))));
        let far = derivative_approx_check(&fields, 0.3, &a, &g).unwrap();
        assert!(far.flagged);
        let near = derivative_approx_check(&fields, 1.3, &a, &g).unwrap();
        assert!(near.max_abs_log_ratio < far.max_abs_log_ratio);
    }
}
