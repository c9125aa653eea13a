//! Grids, test sets, densities and kernel domains.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::quad::{integrate, QuadratureConfig};
use crate::{Error, Result};

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Region where a kernel is meant to be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    #[default]
    Unbounded,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Domain {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Unbounded => true,
            Domain::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *v >= *a && *v <= *b),
            Domain::Ball { center, radius } => dist(x, center) <= *radius,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            Domain::Unbounded => Ok(()),
            Domain::Box { lo, hi } => {
                if lo.len() != d || hi.len() != d {
                    return Err(Error::Descriptor(format!("domain box must have {d} coordinates")));
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
                    return Err(Error::Descriptor("domain box needs lo < hi on every axis".into()));
                }
                Ok(())
            }
            Domain::Ball { center, radius } => {
                if center.len() != d {
                    return Err(Error::Descriptor(format!("domain ball centre must have {d} coordinates")));
                }
                if !(*radius > 0.0) || !radius.is_finite() || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Descriptor("domain ball needs a finite positive radius".into()));
                }
                Ok(())
            }
        }
    }
}

/// Cell-centred grid. Points are stored flat, `d` coordinates each.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub d: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub spacing: f64,
    coords: Vec<f64>,
}

impl GridSpec {
    /// Cell-centred grid on the box `[lo, hi]`. The spacing is adjusted so that
    /// an integer number of cells tiles the first axis exactly; other axes are
    /// extended to a whole number of cells of that spacing.
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>, spacing: f64) -> Result<Self> {
        let d = lo.len();
        if d == 0 || d > 3 || hi.len() != d {
            return Err(Error::Domain(format!("grids need 1 to 3 dimensions, got {d}")));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::Domain(format!("spacing must be > 0, got {spacing}")));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::Domain("grid box needs lo < hi on every axis".into()));
        }
        let n0 = ((hi[0] - lo[0]) / spacing).round().max(1.0);
        let s = (hi[0] - lo[0]) / n0;
        let counts: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| ((b - a) / s).round().max(1.0) as usize).collect();
        let hi: Vec<f64> = lo.iter().zip(&counts).map(|(a, n)| a + *n as f64 * s).collect();
        let total: usize = counts.iter().product();
        let mut coords = Vec::with_capacity(total * d);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            for k in 0..d {
                coords.push(lo[k] + (idx[k] as f64 + 0.5) * s);
            }
            for k in (0..d).rev() {
                idx[k] += 1;
                if idx[k] < counts[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(Self { d, lo, hi, spacing: s, coords })
    }

    /// Cube `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64, spacing: f64) -> Result<Self> {
        Self::boxed(vec![lo; d], vec![hi; d], spacing)
    }

    /// Cell centres of the grid on `[−r, r]^d` lying in the open ball of radius
    /// `r`. An even cell count per axis keeps the origin off the grid.
    pub fn punctured_ball(d: usize, radius: f64, spacing: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Domain("ball radius must be > 0".into()));
        }
        let mut n = (2.0 * radius / spacing).round().max(2.0) as usize;
        if n % 2 == 1 {
            n += 1;
        }
        let s = 2.0 * radius / n as f64;
        let full = Self::boxed(vec![-radius; d], vec![radius; d], s)?;
        Ok(full.filter(|x| norm(x) < radius))
    }

    /// Explicit point list with a nominal cell size.
    pub fn from_points(d: usize, points: &[Vec<f64>], spacing: f64) -> Result<Self> {
        if d == 0 || d > 3 {
            return Err(Error::Domain(format!("grids need 1 to 3 dimensions, got {d}")));
        }
        if points.is_empty() {
            return Err(Error::EmptyInput("grid needs at least one point".into()));
        }
        if !(spacing > 0.0) {
            return Err(Error::Domain("spacing must be > 0".into()));
        }
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut coords = Vec::with_capacity(points.len() * d);
        for p in points {
            if p.len() != d {
                return Err(Error::Domain(format!("point {p:?} does not have {d} coordinates")));
            }
            for k in 0..d {
                lo[k] = lo[k].min(p[k] - spacing / 2.0);
                hi[k] = hi[k].max(p[k] + spacing / 2.0);
            }
            coords.extend_from_slice(p);
        }
        let g = Self { d, lo, hi, spacing, coords };
        g.check_distinct()?;
        Ok(g)
    }

    pub fn filter<F: Fn(&[f64]) -> bool>(&self, keep: F) -> Self {
        let coords = self.coords.chunks_exact(self.d).filter(|p| keep(p)).flatten().copied().collect();
        Self { d: self.d, lo: self.lo.clone(), hi: self.hi.clone(), spacing: self.spacing, coords }
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.d)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.d as i32)
    }

    pub fn check_distinct(&self) -> Result<()> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.point(a).iter().zip(self.point(b)).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        });
        for w in idx.windows(2) {
            if self.point(w[0]) == self.point(w[1]) {
                return Err(Error::Domain(format!("duplicate grid point {:?}", self.point(w[0]))));
            }
        }
        Ok(())
    }
}

/// One component of a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetPart {
    /// Half-open box `[lo, hi)`, so adjacent boxes split grid cells cleanly.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Open ball.
    Ball { center: Vec<f64>, radius: f64 },
}

impl SetPart {
    fn contains(&self, x: &[f64]) -> bool {
        match self {
            SetPart::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *v >= *a && *v < *b),
            SetPart::Ball { center, radius } => dist(x, center) < *radius,
        }
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            SetPart::Box { lo, hi } => (lo.clone(), hi.clone()),
            SetPart::Ball { center, radius } => {
                (center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect())
            }
        }
    }

    fn dim(&self) -> usize {
        match self {
            SetPart::Box { lo, .. } => lo.len(),
            SetPart::Ball { center, .. } => center.len(),
        }
    }

    fn measure(&self) -> f64 {
        match self {
            SetPart::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
            SetPart::Ball { center, radius } => {
                let d = center.len();
                let m = d as f64 / 2.0;
                std::f64::consts::PI.powf(m) / crate::special::gamma(m + 1.0) * radius.powi(d as i32)
            }
        }
    }
}

/// Finite union of disjoint boxes and balls. Grid cells belong to the set when
/// their centre does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SetSpec {
    pub parts: Vec<SetPart>,
}

impl SetSpec {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Self { parts: vec![SetPart::Box { lo: vec![lo], hi: vec![hi] }] }
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self { parts: vec![SetPart::Box { lo, hi }] }
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        Self { parts: vec![SetPart::Ball { center, radius }] }
    }

    pub fn union(mut self, other: SetSpec) -> Self {
        self.parts.extend(other.parts);
        self
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.parts.iter().any(|p| p.contains(x))
    }

    /// Lebesgue measure, assuming the parts are disjoint.
    pub fn measure(&self) -> f64 {
        self.parts.iter().map(SetPart::measure).sum()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.parts.is_empty() {
            return Err(Error::EmptySet("set has no parts".into()));
        }
        for p in &self.parts {
            if p.dim() != d {
                return Err(Error::Domain(format!("set part has dimension {}, expected {d}", p.dim())));
            }
            match p {
                SetPart::Box { lo, hi } => {
                    if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                        return Err(Error::Domain("set box needs lo < hi".into()));
                    }
                }
                SetPart::Ball { radius, .. } => {
                    if !(*radius > 0.0) {
                        return Err(Error::Domain("set ball needs radius > 0".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Whether every part lies inside the grid box.
    pub fn within(&self, lo: &[f64], hi: &[f64]) -> bool {
        let tol = 1e-9;
        self.parts.iter().all(|p| {
            let (a, b) = p.bounds();
            a.iter().zip(lo).all(|(x, l)| *x >= l - tol) && b.iter().zip(hi).all(|(x, h)| *x <= h + tol)
        })
    }

    /// ∫_A f over the set by nested adaptive quadrature.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F, quad: &QuadratureConfig) -> Result<f64> {
        let mut total = 0.0;
        for p in &self.parts {
            total += match p {
                SetPart::Box { lo, hi } => integrate_box(&f, lo, hi, quad)?,
                SetPart::Ball { center, radius } => integrate_ball(&f, center, *radius, quad)?,
            };
        }
        Ok(total)
    }
}

fn integrate_box<F: Fn(&[f64]) -> f64>(f: &F, lo: &[f64], hi: &[f64], quad: &QuadratureConfig) -> Result<f64> {
    fn rec(f: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], prefix: &[f64], quad: &QuadratureConfig) -> Result<f64> {
        let k = prefix.len();
        if k == lo.len() {
            return Ok(f(prefix));
        }
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let v = integrate(
            |t| {
                let mut p = prefix.to_vec();
                p.push(t);
                match rec(f, lo, hi, &p, quad) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        0.0
                    }
                }
            },
            lo[k],
            hi[k],
            quad,
        )?;
        match failure.into_inner() {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }
    rec(f, lo, hi, &[], quad)
}

fn integrate_ball<F: Fn(&[f64]) -> f64>(f: &F, center: &[f64], r: f64, quad: &QuadratureConfig) -> Result<f64> {
    use std::f64::consts::PI;
    match center.len() {
        1 => integrate_box(f, &[center[0] - r], &[center[0] + r], quad),
        2 => {
            let g = |p: &[f64]| {
                let (rho, th) = (p[0], p[1]);
                f(&[center[0] + rho * th.cos(), center[1] + rho * th.sin()]) * rho
            };
            integrate_box(&g, &[0.0, 0.0], &[r, 2.0 * PI], quad)
        }
        3 => {
            let g = |p: &[f64]| {
                let (rho, th, ph) = (p[0], p[1], p[2]);
                let x = [
                    center[0] + rho * th.sin() * ph.cos(),
                    center[1] + rho * th.sin() * ph.sin(),
                    center[2] + rho * th.cos(),
                ];
                f(&x) * rho * rho * th.sin()
            };
            integrate_box(&g, &[0.0, 0.0, 0.0], &[r, PI, 2.0 * PI], quad)
        }
        d => Err(Error::Unsupported(format!("ball integration in dimension {d}"))),
    }
}

pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Nonnegative continuous density g.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    Constant { value: f64 },
    Affine { intercept: f64, slope: Vec<f64> },
    #[serde(skip)]
    Custom { name: String, f: PointFn },
}

impl fmt::Debug for DensitySpec {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensitySpec::Constant { value } => write!(fm, "Constant({value})"),
            DensitySpec::Affine { intercept, slope } => write!(fm, "Affine({intercept}, {slope:?})"),
            DensitySpec::Custom { name, .. } => write!(fm, "Custom({name})"),
        }
    }
}

impl PartialEq for DensitySpec {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (DensitySpec::Constant { value: a }, DensitySpec::Constant { value: b }) => a == b,
            (DensitySpec::Affine { intercept: a, slope: s }, DensitySpec::Affine { intercept: b, slope: t }) => a == b && s == t,
            (DensitySpec::Custom { f: a, .. }, DensitySpec::Custom { f: b, .. }) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl DensitySpec {
    pub fn constant(value: f64) -> Self {
        DensitySpec::Constant { value }
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        DensitySpec::Custom { name: name.into(), f: Arc::new(f) }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            DensitySpec::Constant { value } => *value,
            DensitySpec::Affine { intercept, slope } => intercept + slope.iter().zip(x).map(|(a, b)| a * b).sum::<f64>(),
            DensitySpec::Custom { f, .. } => f(x),
        }
    }

    /// True when the density is nonnegative at every supplied point.
    pub fn nonnegative_on<'a>(&self, mut points: impl Iterator<Item = &'a [f64]>) -> bool {
        match self {
            DensitySpec::Constant { value } => *value >= 0.0,
            _ => points.all(|p| self.eval(p) >= 0.0),
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            DensitySpec::Constant { value } if !value.is_finite() || *value < 0.0 => {
                Err(Error::Domain(format!("constant density must be finite and >= 0, got {value}")))
            }
            DensitySpec::Affine { slope, .. } if slope.len() != d => {
                Err(Error::Domain(format!("affine density slope needs {d} entries")))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn boxed_grid_tiles_box() {
        let g = GridSpec::cube(1, 0.0, 1.0, 0.1).unwrap();
        assert_eq!(g.len(), 10);
        assert_relative_eq!(g.point(0)[0], 0.05, epsilon = 1e-15);
        assert_relative_eq!(g.cell_volume() * g.len() as f64, 1.0, epsilon = 1e-14);
        let g2 = GridSpec::cube(2, -1.0, 1.0, 0.25).unwrap();
        assert_eq!(g2.len(), 64);
        assert!(g2.check_distinct().is_ok());
    }

    #[test]
    fn punctured_ball_avoids_origin() {
        let g = GridSpec::punctured_ball(2, 0.5, 0.05).unwrap();
        assert!(g.points().all(|p| norm(p) > 0.0 && norm(p) < 0.5));
        assert!(g.len() > 250);
    }

    #[test]
    fn duplicate_points_rejected() {
        let pts = vec![vec![0.1], vec![0.2], vec![0.1]];
        assert!(GridSpec::from_points(1, &pts, 0.1).is_err());
    }

    #[test]
    fn bad_grid_inputs() {
        assert!(GridSpec::cube(1, 0.0, 1.0, 0.0).is_err());
        assert!(GridSpec::cube(4, 0.0, 1.0, 0.5).is_err());
        assert!(GridSpec::cube(1, 1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn halves_partition_cells() {
        let g = GridSpec::cube(1, 0.0, 1.0, 0.01).unwrap();
        let left = SetSpec::interval(0.0, 0.5);
        let right = SetSpec::interval(0.5, 1.0);
        for p in g.points() {
            assert!(left.contains(p) ^ right.contains(p));
        }
    }

    #[test]
    fn set_integration() {
        let q = QuadratureConfig::adaptive(1e-10);
        let a = SetSpec::interval(0.0, 1.0);
        assert_relative_eq!(a.integrate(|x| x[0], &q).unwrap(), 0.5, epsilon = 1e-12);
        let disc = SetSpec::ball(vec![0.0, 0.0], 1.0);
        assert_relative_eq!(disc.integrate(|_| 1.0, &q).unwrap(), std::f64::consts::PI, epsilon = 1e-9);
        assert_relative_eq!(disc.measure(), std::f64::consts::PI, epsilon = 1e-12);
        let cube = SetSpec::boxed(vec![0.0; 3], vec![1.0, 2.0, 0.5]);
        assert_relative_eq!(cube.integrate(|x| x[1], &q).unwrap(), 1.0, epsilon = 1e-10);
        let ball3 = SetSpec::ball(vec![0.0; 3], 1.0);
        assert_relative_eq!(ball3.integrate(|_| 1.0, &q).unwrap(), 4.0 / 3.0 * std::f64::consts::PI, epsilon = 1e-8);
    }

    #[test]
    fn density_json_round_trip() {
        let g = DensitySpec::Affine { intercept: 0.5, slope: vec![1.0] };
        let s = serde_json::to_string(&g).unwrap();
        let back: DensitySpec = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
        assert!(DensitySpec::constant(-1.0).validate(1).is_err());
    }
}
