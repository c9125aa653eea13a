//! Exact Gaussian sampling of regularized fields on grids.

use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::geometry::{norm, GridSpec};
use crate::kernels::{build_cov_matrix, eval_yhat_cov_regularized, CovMatrix, KernelDescriptor};
use crate::linalg::{factorize, Factor, LANES};
use crate::quad::QuadratureConfig;
use crate::rng::{RngPolicy, Stream, StreamRng};
use crate::{Error, Result};

/// Hard cap for dense factorization.
pub const MAX_GRID_POINTS: usize = 8192;

#[derive(Debug, Clone)]
pub struct FieldSample {
    pub grid: Arc<GridSpec>,
    pub epsilon: f64,
    pub values: Vec<f64>,
    /// Diagonal of the (repaired) covariance matrix.
    pub variance: Arc<Vec<f64>>,
    pub kernel_id: Arc<str>,
    pub seed: u64,
    pub replica: u64,
}

/// Shared state for drawing replicas of one field.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    pub grid: Arc<GridSpec>,
    pub cov: Arc<CovMatrix>,
    pub variance: Arc<Vec<f64>>,
    pub kernel_id: Arc<str>,
    pub policy: RngPolicy,
    pub warnings: Vec<String>,
    tag: Stream,
}

pub fn check_grid_size(n: usize) -> Result<()> {
    if n > MAX_GRID_POINTS {
        let bytes = 3 * n * n * 8;
        return Err(Error::Resource(format!(
            "{n} grid points exceed the dense limit of {MAX_GRID_POINTS}; factorization would need about {:.1} GiB",
            bytes as f64 / (1u64 << 30) as f64
        )));
    }
    Ok(())
}

fn fill_normals(rng: &mut StreamRng, out: &mut [f64]) {
    for v in out {
        *v = rng.sample(StandardNormal);
    }
}

impl FieldSampler {
    pub fn new(k: &KernelDescriptor, grid: Arc<GridSpec>, eps: f64, policy: RngPolicy) -> Result<Self> {
        if grid.d != k.d {
            return Err(Error::Domain(format!("grid dimension {} does not match kernel dimension {}", grid.d, k.d)));
        }
        if grid.is_empty() {
            return Err(Error::EmptyInput("grid has no points".into()));
        }
        check_grid_size(grid.len())?;
        let cov = build_cov_matrix(k, grid.coords(), eps)?;
        let mut warnings = Vec::new();
        if k.has_log_part() && eps < grid.spacing {
            warnings.push(format!("epsilon {eps:.4e} is below the grid spacing {:.4e}", grid.spacing));
        }
        if cov.psd_warning {
            warnings.push(format!(
                "PSD repair clipped {:.3e} of trace {:.3e}; kernel used outside its PSD radius",
                cov.clipped_mass,
                cov.trace()
            ));
        }
        let variance = Arc::new(cov.diagonal());
        Ok(Self { grid, variance, kernel_id: Arc::from(k.id()), policy, warnings, cov: Arc::new(cov), tag: Stream::Field })
    }

    pub fn epsilon(&self) -> f64 {
        self.cov.epsilon
    }

    pub fn factor(&self) -> &Factor {
        &self.cov.factor
    }

    /// One replica.
    pub fn sample(&self, replica: u64) -> FieldSample {
        let f = self.factor();
        let mut z = vec![0.0; f.rank()];
        fill_normals(&mut self.policy.stream(self.tag, replica), &mut z);
        let mut values = vec![0.0; f.dim()];
        f.apply(&z, &mut values);
        self.wrap(values, replica)
    }

    fn wrap(&self, values: Vec<f64>, replica: u64) -> FieldSample {
        FieldSample {
            grid: self.grid.clone(),
            epsilon: self.epsilon(),
            values,
            variance: self.variance.clone(),
            kernel_id: self.kernel_id.clone(),
            seed: self.policy.master_seed,
            replica,
        }
    }

    /// Apply `f(replica, values)` to every replica in `replicas`, in parallel
    /// over blocks of [`LANES`] replicas. Results come back in replica order
    /// and do not depend on the thread count.
    pub fn map_replicas<T, F>(&self, replicas: Range<u64>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64, &[f64]) -> T + Sync,
    {
        let fac = self.factor();
        let (n, rank) = (fac.dim(), fac.rank());
        let start = replicas.start;
        let count = replicas.end.saturating_sub(start);
        let blocks = count.div_ceil(LANES as u64);
        (0..blocks)
            .into_par_iter()
            .map(|b| {
                let first = start + b * LANES as u64;
                let lanes = (count - b * LANES as u64).min(LANES as u64) as usize;
                let mut z = vec![0.0; rank * LANES];
                let mut zl = vec![0.0; rank];
                for l in 0..lanes {
                    fill_normals(&mut self.policy.stream(self.tag, first + l as u64), &mut zl);
                    for k in 0..rank {
                        z[k * LANES + l] = zl[k];
                    }
                }
                let mut out = vec![0.0; n * LANES];
                fac.apply_block(&z, &mut out);
                let mut vals = vec![0.0; n];
                (0..lanes)
                    .map(|l| {
                        for j in 0..n {
                            vals[j] = out[j * LANES + l];
                        }
                        f(first + l as u64, &vals)
                    })
                    .collect::<Vec<T>>()
            })
            .collect::<Vec<Vec<T>>>()
            .into_iter()
            .flatten()
            .collect()
    }

    pub fn sample_range(&self, replicas: Range<u64>) -> Vec<FieldSample> {
        self.map_replicas(replicas, |r, v| self.wrap(v.to_vec(), r))
    }
}

/// `n` replicas (indices `0..n`) of the regularized field of `k` on `grid`.
pub fn sample_field(k: &KernelDescriptor, grid: Arc<GridSpec>, eps: f64, rng: &RngPolicy, n: usize) -> Result<Vec<FieldSample>> {
    let s = FieldSampler::new(k, grid, eps, *rng)?;
    Ok(s.sample_range(0..n as u64))
}

/// Reference field in `d ≥ 2` built as a radial Brownian motion in
/// `s = −log|x|` plus an independent lateral field.
#[derive(Debug, Clone)]
pub struct RadialSampler {
    pub grid: Arc<GridSpec>,
    pub d: usize,
    pub epsilon: f64,
    /// Point indices sorted by increasing log-radius depth.
    order: Vec<usize>,
    depth: Vec<f64>,
    lateral: Factor,
    pub lateral_variance: Vec<f64>,
    variance: Arc<Vec<f64>>,
    pub clipped_mass: f64,
    policy: RngPolicy,
}

/// Radial and lateral components of one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialParts {
    pub radial: Vec<f64>,
    pub lateral: Vec<f64>,
}

impl RadialSampler {
    pub fn new(d: usize, grid: Arc<GridSpec>, eps: f64, policy: RngPolicy, quad: &QuadratureConfig) -> Result<Self> {
        if d < 2 || grid.d != d {
            return Err(Error::Domain(format!("radial decomposition needs d >= 2 matching the grid, got d = {d}")));
        }
        if !(eps > 0.0) {
            return Err(Error::Domain("epsilon must be > 0".into()));
        }
        check_grid_size(grid.len())?;
        let n = grid.len();
        let mut depth = Vec::with_capacity(n);
        for p in grid.points() {
            let r = norm(p);
            if r == 0.0 {
                return Err(Error::Domain("grid contains the origin".into()));
            }
            if r > 1.0 {
                return Err(Error::Domain(format!("radial decomposition needs |x| <= 1, found |x| = {r}")));
            }
            if r < eps {
                return Err(Error::Domain(format!("grid point at radius {r} is inside the regularization scale")));
            }
            depth.push(-r.ln());
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| depth[a].total_cmp(&depth[b]));
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = eval_yhat_cov_regularized(d, grid.point(i), grid.point(j), eps, quad)?;
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        let fz = factorize(&entries, n)?;
        let entries = fz.repaired.unwrap_or(entries);
        let lateral_variance: Vec<f64> = (0..n).map(|i| entries[i * n + i]).collect();
        let variance = Arc::new((0..n).map(|i| depth[i] + lateral_variance[i]).collect());
        Ok(Self { grid, d, epsilon: eps, order, depth, lateral: fz.factor, lateral_variance, variance, clipped_mass: fz.clipped_mass, policy })
    }

    pub fn sample_parts(&self, replica: u64) -> RadialParts {
        let n = self.grid.len();
        let mut radial = vec![0.0; n];
        let mut rng = self.policy.stream(Stream::Radial, replica);
        let (mut s, mut b) = (0.0, 0.0);
        for &i in &self.order {
            let ds = self.depth[i] - s;
            if ds > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                b += ds.sqrt() * z;
                s = self.depth[i];
            }
            radial[i] = b;
        }
        let mut z = vec![0.0; self.lateral.rank()];
        fill_normals(&mut self.policy.stream(Stream::Field, replica), &mut z);
        let mut lateral = vec![0.0; n];
        self.lateral.apply(&z, &mut lateral);
        RadialParts { radial, lateral }
    }

    pub fn sample(&self, replica: u64) -> FieldSample {
        let p = self.sample_parts(replica);
        FieldSample {
            grid: self.grid.clone(),
            epsilon: self.epsilon,
            values: p.radial.iter().zip(&p.lateral).map(|(a, b)| a + b).collect(),
            variance: self.variance.clone(),
            kernel_id: Arc::from(format!("reference_radial(d={})", self.d)),
            seed: self.policy.master_seed,
            replica,
        }
    }
}

pub fn sample_reference_radial(d: usize, grid: Arc<GridSpec>, eps: f64, rng: &RngPolicy, n: usize) -> Result<Vec<FieldSample>> {
    let s = RadialSampler::new(d, grid, eps, *rng, &QuadratureConfig::default())?;
    Ok((0..n as u64).into_par_iter().map(|r| s.sample(r)).collect())
}

/// Add one shared N(0, σ²) draw to every value.
pub fn shift_field(sample: &FieldSample, sigma2: f64, rng: &RngPolicy) -> Result<FieldSample> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::Domain(format!("sigma2 must be >= 0, got {sigma2}")));
    }
    let mut out = sample.clone();
    if sigma2 == 0.0 {
        return Ok(out);
    }
    let z: f64 = rng.stream(Stream::Shift, sample.replica).sample(StandardNormal);
    let shift = sigma2.sqrt() * z;
    for v in &mut out.values {
        *v += shift;
    }
    out.variance = Arc::new(sample.variance.iter().map(|v| v + sigma2).collect());
    Ok(out)
}
