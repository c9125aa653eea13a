//! Covariance kernels of log-correlated fields and regularized covariance
//! matrices.
//!
//! Every kernel has the form `−log|x − y| + f(x, y)`. The non-log part `f` is
//! what [`KernelDescriptor::smooth_part`] returns; the regularized covariance
//! replaces `|x − y|` by `|x − y| ∨ ε`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{dist, norm, Domain, GridSpec};
use crate::linalg::{factorize, Factor};
use crate::quad::{gauss_kronrod, simpson, QuadMethod, QuadratureConfig};
use crate::special::sphere_area;
use crate::{Error, Result};

/// Positive semi-definite continuous kernel term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovTerm {
    Constant { value: f64 },
    SquaredExponential { variance: f64, length_scale: f64 },
    /// `variance · ⟨x, y⟩`.
    Linear { variance: f64 },
}

impl CovTerm {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            CovTerm::Constant { value } => *value,
            CovTerm::SquaredExponential { variance, length_scale } => {
                let r = dist(x, y) / length_scale;
                variance * (-0.5 * r * r).exp()
            }
            CovTerm::Linear { variance } => variance * x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            CovTerm::Constant { value } => value.is_finite() && *value >= 0.0,
            CovTerm::SquaredExponential { variance, length_scale } => {
                variance.is_finite() && *variance >= 0.0 && length_scale.is_finite() && *length_scale > 0.0
            }
            CovTerm::Linear { variance } => variance.is_finite() && *variance >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Descriptor(format!("invalid covariance term {self:?}")))
        }
    }
}

pub type PairFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// `f = Σ f_plus − Σ f_minus (+ custom)`.
#[derive(Clone, Default)]
pub struct SmoothPart {
    pub plus: Vec<CovTerm>,
    pub minus: Vec<CovTerm>,
    pub custom: Option<(String, PairFn)>,
}

impl fmt::Debug for SmoothPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothPart")
            .field("plus", &self.plus)
            .field("minus", &self.minus)
            .field("custom", &self.custom.as_ref().map(|c| &c.0))
            .finish()
    }
}

impl SmoothPart {
    pub fn constant(value: f64) -> Self {
        if value >= 0.0 {
            Self { plus: vec![CovTerm::Constant { value }], ..Default::default() }
        } else {
            Self { minus: vec![CovTerm::Constant { value: -value }], ..Default::default() }
        }
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { custom: Some((name.into(), Arc::new(f))), ..Default::default() }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let p: f64 = self.plus.iter().map(|t| t.eval(x, y)).sum();
        let m: f64 = self.minus.iter().map(|t| t.eval(x, y)).sum();
        let c = self.custom.as_ref().map_or(0.0, |(_, f)| f(x, y));
        p - m + c
    }

    fn validate(&self) -> Result<()> {
        self.plus.iter().chain(&self.minus).try_for_each(CovTerm::validate)
    }
}

#[derive(Debug, Clone)]
pub enum KernelVariant {
    /// `−log|x − y| + L`.
    LExact { l: f64 },
    /// `−log|x − y| − S_d(c)`; the exact kernel when `d = 1`.
    Reference,
    /// `−log|x − y| + f(x, y)`.
    Composite { f: SmoothPart },
    /// `f(x, y)` alone, a continuous Gaussian field without log singularity.
    Continuous { f: SmoothPart },
}

#[derive(Debug, Clone)]
pub struct KernelDescriptor {
    pub variant: KernelVariant,
    pub d: usize,
    pub domain: Domain,
    pub quad: QuadratureConfig,
}

impl KernelDescriptor {
    pub fn l_exact(d: usize, l: f64) -> Self {
        Self { variant: KernelVariant::LExact { l }, d, domain: Domain::Unbounded, quad: QuadratureConfig::default() }
    }

    pub fn reference(d: usize) -> Self {
        Self { variant: KernelVariant::Reference, d, domain: Domain::Unbounded, quad: QuadratureConfig::default() }
    }

    pub fn composite(d: usize, f: SmoothPart) -> Self {
        Self { variant: KernelVariant::Composite { f }, d, domain: Domain::Unbounded, quad: QuadratureConfig::default() }
    }

    pub fn continuous(d: usize, f: SmoothPart) -> Self {
        Self { variant: KernelVariant::Continuous { f }, d, domain: Domain::Unbounded, quad: QuadratureConfig::default() }
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Descriptor("dimension must be positive".into()));
        }
        self.domain.validate(self.d)?;
        self.quad.validate()?;
        match &self.variant {
            KernelVariant::LExact { l } if !l.is_finite() => Err(Error::Descriptor(format!("L must be finite, got {l}"))),
            KernelVariant::Composite { f } | KernelVariant::Continuous { f } => f.validate(),
            _ => Ok(()),
        }
    }

    /// Short identifier recorded with every field sample.
    pub fn id(&self) -> String {
        match &self.variant {
            KernelVariant::LExact { l } => format!("l_exact(L={l},d={})", self.d),
            KernelVariant::Reference => format!("reference(d={})", self.d),
            KernelVariant::Composite { f } => format!("composite(d={},{})", self.d, smooth_id(f)),
            KernelVariant::Continuous { f } => format!("continuous(d={},{})", self.d, smooth_id(f)),
        }
    }

    pub fn has_log_part(&self) -> bool {
        !matches!(self.variant, KernelVariant::Continuous { .. })
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::Domain(format!("point {x:?} does not have dimension {}", self.d)));
        }
        if !self.domain.contains(x) {
            return Err(Error::Domain(format!("point {x:?} lies outside the kernel domain")));
        }
        Ok(())
    }

    /// Non-log part `f(x, y)`, defined also on the diagonal.
    pub fn smooth_part(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match &self.variant {
            KernelVariant::LExact { l } => Ok(*l),
            KernelVariant::Reference => {
                if self.d == 1 {
                    Ok(0.0)
                } else {
                    Ok(-eval_sd(self.d, modulus_ratio(x, y), &self.quad)?)
                }
            }
            KernelVariant::Composite { f } | KernelVariant::Continuous { f } => Ok(f.eval(x, y)),
        }
    }

    /// Kernel value at `x ≠ y`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        let r = dist(x, y);
        if !self.has_log_part() {
            return self.smooth_part(x, y);
        }
        if r == 0.0 {
            return Err(Error::Singularity("kernel evaluated at coincident points; use the regularized diagonal".into()));
        }
        Ok(-r.ln() + self.smooth_part(x, y)?)
    }
}

fn smooth_id(f: &SmoothPart) -> String {
    let mut s = String::new();
    for t in &f.plus {
        s.push_str(&format!("+{t:?}"));
    }
    for t in &f.minus {
        s.push_str(&format!("-{t:?}"));
    }
    if let Some((name, _)) = &f.custom {
        s.push_str(&format!("+custom:{name}"));
    }
    if s.is_empty() {
        s.push('0');
    }
    s
}

/// Wire format of kernel descriptors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelJson {
    pub variant: String,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    pub d: usize,
    #[serde(default, skip_serializing_if = "is_unbounded")]
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub f_plus: Vec<CovTerm>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub f_minus: Vec<CovTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureConfig>,
}

fn is_unbounded(d: &Domain) -> bool {
    matches!(d, Domain::Unbounded)
}

impl TryFrom<KernelJson> for KernelDescriptor {
    type Error = Error;

    fn try_from(j: KernelJson) -> Result<Self> {
        let smooth = || SmoothPart { plus: j.f_plus.clone(), minus: j.f_minus.clone(), custom: None };
        let extra_terms = !j.f_plus.is_empty() || !j.f_minus.is_empty();
        let variant = match j.variant.as_str() {
            "l_exact" => {
                if extra_terms {
                    return Err(Error::Descriptor("l_exact kernels take no f terms".into()));
                }
                KernelVariant::LExact { l: j.l.ok_or_else(|| Error::Descriptor("l_exact kernel needs \"L\"".into()))? }
            }
            "reference" => {
                if extra_terms || j.l.is_some() {
                    return Err(Error::Descriptor("reference kernels take no L or f terms".into()));
                }
                KernelVariant::Reference
            }
            "composite" | "continuous" => {
                if j.l.is_some() {
                    return Err(Error::Descriptor(format!("{} kernels take f terms, not L", j.variant)));
                }
                if j.variant == "composite" {
                    KernelVariant::Composite { f: smooth() }
                } else {
                    KernelVariant::Continuous { f: smooth() }
                }
            }
            other => return Err(Error::Descriptor(format!("unknown kernel variant {other:?}"))),
        };
        let k = KernelDescriptor { variant, d: j.d, domain: j.domain, quad: j.quadrature.unwrap_or_default() };
        k.validate()?;
        Ok(k)
    }
}

impl TryFrom<&KernelDescriptor> for KernelJson {
    type Error = Error;

    fn try_from(k: &KernelDescriptor) -> Result<Self> {
        let mut j = KernelJson {
            variant: String::new(),
            l: None,
            d: k.d,
            domain: k.domain.clone(),
            f_plus: vec![],
            f_minus: vec![],
            quadrature: (k.quad != QuadratureConfig::default()).then_some(k.quad),
        };
        match &k.variant {
            KernelVariant::LExact { l } => {
                j.variant = "l_exact".into();
                j.l = Some(*l);
            }
            KernelVariant::Reference => j.variant = "reference".into(),
            KernelVariant::Composite { f } | KernelVariant::Continuous { f } => {
                if f.custom.is_some() {
                    return Err(Error::Descriptor("kernels with custom functions cannot be serialized".into()));
                }
                j.variant = if matches!(k.variant, KernelVariant::Composite { .. }) { "composite" } else { "continuous" }.into();
                j.f_plus = f.plus.clone();
                j.f_minus = f.minus.clone();
            }
        }
        Ok(j)
    }
}

impl Serialize for KernelDescriptor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        KernelJson::try_from(self).map_err(serde::ser::Error::custom)?.serialize(s)
    }
}

impl<'de> Deserialize<'de> for KernelDescriptor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        KernelDescriptor::try_from(KernelJson::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Parse a kernel descriptor from JSON text.
pub fn parse_kernel_json(text: &str) -> Result<KernelDescriptor> {
    let j: KernelJson = serde_json::from_str(text)?;
    KernelDescriptor::try_from(j)
}

/// `c = (|x|/|y|) ∧ (|y|/|x|)`, with `c = 1` when both points sit at the origin.
pub fn modulus_ratio(x: &[f64], y: &[f64]) -> f64 {
    let (a, b) = (norm(x), norm(y));
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if hi == 0.0 {
        1.0
    } else {
        lo / hi
    }
}

/// Spherical-average correction
/// `S_d(c) = −(|S^{d−2}| / (2|S^{d−1}|)) ∫_{−1}^{1} (1 − u²)^{(d−3)/2} log(1 − 2cu + c²) du`,
/// i.e. minus the average of `log|e₁ − c·u|` over the unit sphere.
///
/// The integral is computed in the angle `u = cos θ`, which absorbs the weight.
/// For `c` near 1 the logarithmic endpoint at `θ = 0` is resolved with
/// `θ = θ₀ e^{−s}`.
pub fn eval_sd(d: usize, c: f64, quad: &QuadratureConfig) -> Result<f64> {
    if d < 2 {
        return Err(Error::Domain(format!("S_d is defined for d >= 2, got d = {d}")));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::Domain(format!("c must lie in [0, 1], got {c}")));
    }
    quad.validate()?;
    if c == 0.0 {
        return Ok(0.0);
    }
    let pw = (d - 2) as i32;
    // 1 − 2c cos θ + c² written without cancellation near θ = 0, c = 1.
    let integrand = move |th: f64| {
        let s = (0.5 * th).sin();
        let arg = (1.0 - c) * (1.0 - c) + 4.0 * c * s * s;
        th.sin().powi(pw) * arg.ln()
    };
    let theta0 = 0.5;
    let integral = if quad.endpoint_substitution && c > 0.5 {
        let near = move |s: f64| {
            let th = theta0 * (-s).exp();
            integrand(th) * th
        };
        // e^{−s}·s decays below 1e−30 well before s = 80.
        integrate_1d(near, 0.0, 80.0, quad)? + integrate_1d(integrand, theta0, std::f64::consts::PI, quad)?
    } else {
        integrate_1d(integrand, 0.0, std::f64::consts::PI, quad)?
    };
    let k = sphere_area(d - 2) / (2.0 * sphere_area(d - 1));
    Ok(-k * integral)
}

fn integrate_1d<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, quad: &QuadratureConfig) -> Result<f64> {
    match quad.method {
        QuadMethod::AdaptiveGauss => Ok(gauss_kronrod(f, a, b, quad.tolerance, quad.max_intervals)?.0),
        QuadMethod::CompositeSimpson => Ok(simpson(f, a, b, quad.panels)),
    }
}

fn check_nonzero(x: &[f64], what: &str) -> Result<()> {
    if norm(x) == 0.0 {
        return Err(Error::Singularity(format!("{what} evaluated at the origin")));
    }
    Ok(())
}

fn sd_or_zero(d: usize, c: f64, quad: &QuadratureConfig) -> Result<f64> {
    if d == 1 {
        Ok(0.0)
    } else {
        eval_sd(d, c, quad)
    }
}

/// Covariance of the spherical-average field: `−log(|x| ∨ |y|) + L + S_d(c)`.
pub fn eval_ybar_cov(d: usize, l: f64, x: &[f64], y: &[f64], quad: &QuadratureConfig) -> Result<f64> {
    check_nonzero(x, "spherical-average covariance")?;
    check_nonzero(y, "spherical-average covariance")?;
    let m = norm(x).max(norm(y));
    Ok(-m.ln() + l + sd_or_zero(d, modulus_ratio(x, y), quad)?)
}

/// Covariance of the lateral field: `log((|x| ∨ |y|)/|x − y|) − S_d(c)`.
pub fn eval_yhat_cov(d: usize, x: &[f64], y: &[f64], quad: &QuadratureConfig) -> Result<f64> {
    check_nonzero(x, "lateral covariance")?;
    check_nonzero(y, "lateral covariance")?;
    let r = dist(x, y);
    if r == 0.0 {
        return Err(Error::Singularity("lateral covariance at coincident points".into()));
    }
    let m = norm(x).max(norm(y));
    Ok((m / r).ln() - sd_or_zero(d, modulus_ratio(x, y), quad)?)
}

/// Lateral covariance with `|x − y|` replaced by `|x − y| ∨ ε`; defined on the
/// diagonal.
pub fn eval_yhat_cov_regularized(d: usize, x: &[f64], y: &[f64], eps: f64, quad: &QuadratureConfig) -> Result<f64> {
    check_nonzero(x, "lateral covariance")?;
    check_nonzero(y, "lateral covariance")?;
    let m = norm(x).max(norm(y));
    Ok((m / dist(x, y).max(eps)).ln() - sd_or_zero(d, modulus_ratio(x, y), quad)?)
}

/// Regularized covariance matrix with its factor.
#[derive(Debug, Clone)]
pub struct CovMatrix {
    pub d: usize,
    pub points: Vec<f64>,
    pub epsilon: f64,
    /// Row-major, after PSD repair.
    pub entries: Vec<f64>,
    pub clipped_mass: f64,
    /// Set when the clipped mass exceeds 1% of the trace.
    pub psd_warning: bool,
    pub factor: Factor,
}

impl CovMatrix {
    pub fn len(&self) -> usize {
        self.points.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.len() + j]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.entry(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }
}

/// Assemble `−log(|x_i − x_j| ∨ ε) + f(x_i, x_j)` without factorizing.
pub fn raw_cov_entries(k: &KernelDescriptor, points: &[f64], eps: f64) -> Result<Vec<f64>> {
    let d = k.d;
    let n = points.len() / d;
    let pt = |i: usize| &points[i * d..(i + 1) * d];
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let log_part = if k.has_log_part() { -dist(pt(i), pt(j)).max(eps).ln() } else { 0.0 };
            let v = log_part + k.smooth_part(pt(i), pt(j))?;
            entries[i * n + j] = v;
            entries[j * n + i] = v;
        }
    }
    Ok(entries)
}

/// Build and factorize the regularized covariance on `points` (flat, `k.d`
/// coordinates each).
pub fn build_cov_matrix(k: &KernelDescriptor, points: &[f64], eps: f64) -> Result<CovMatrix> {
    k.validate()?;
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Domain(format!("epsilon must be > 0, got {eps}")));
    }
    let d = k.d;
    if points.is_empty() || !points.len().is_multiple_of(d) {
        return Err(Error::Domain("point list must be nonempty with d coordinates per point".into()));
    }
    let plist: Vec<Vec<f64>> = points.chunks_exact(d).map(|p| p.to_vec()).collect();
    GridSpec::from_points(d, &plist, 1.0)?;
    for p in &plist {
        if !k.domain.contains(p) {
            return Err(Error::Domain(format!("point {p:?} lies outside the kernel domain")));
        }
    }
    let n = plist.len();
    let raw = raw_cov_entries(k, points, eps)?;
    let fz = factorize(&raw, n)?;
    let trace: f64 = (0..n).map(|i| raw[i * n + i]).sum();
    let entries = fz.repaired.unwrap_or(raw);
    Ok(CovMatrix {
        d,
        points: points.to_vec(),
        epsilon: eps,
        entries,
        clipped_mass: fz.clipped_mass,
        psd_warning: fz.clipped_mass > 0.01 * trace.abs(),
        factor: fz.factor,
    })
}

/// Clipped mass of the regularized matrix on the grid points inside balls of
/// increasing radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdProbe {
    pub radius: f64,
    pub points: usize,
    pub clipped_mass: f64,
    pub trace: f64,
}

pub fn psd_radius_scan(k: &KernelDescriptor, radii: &[f64], spacing: f64, eps: f64) -> Result<Vec<PsdProbe>> {
    let mut out = Vec::with_capacity(radii.len());
    for &r in radii {
        let g = GridSpec::punctured_ball(k.d, r, spacing)?;
        let raw = raw_cov_entries(k, g.coords(), eps)?;
        let n = g.len();
        let trace = (0..n).map(|i| raw[i * n + i]).sum();
        out.push(PsdProbe { radius: r, points: n, clipped_mass: crate::linalg::negative_mass(&raw, n), trace });
    }
    Ok(out)
}

/// Largest probed radius whose clipped mass stays below `1e−6 · trace`.
pub fn usable_radius(probes: &[PsdProbe]) -> Option<f64> {
    probes.iter().filter(|p| p.clipped_mass < 1e-6 * p.trace.abs()).map(|p| p.radius).fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
}
