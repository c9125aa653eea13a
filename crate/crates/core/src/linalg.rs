//! Covariance factorization and replica-blocked correlated sampling.
//!
//! A [`Factor`] maps standard normals `z` to `x = F z` with `F Fᵀ = C`. Rows are
//! applied with a fixed accumulation order per replica, so a replica's values do
//! not depend on which block it was computed in.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

/// Replicas processed together in one pass over the factor.
pub const LANES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
enum Layout {
    /// Packed lower triangle, row `j` holding `j + 1` entries.
    Lower,
    /// Dense `n × rank`.
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    n: usize,
    rank: usize,
    layout: Layout,
    data: Vec<f64>,
}

/// Outcome of factorizing a symmetric matrix with PSD repair.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub factor: Factor,
    /// Total magnitude of negative eigenvalues removed.
    pub clipped_mass: f64,
    /// Repaired matrix, present only when clipping was needed.
    pub repaired: Option<Vec<f64>>,
}

impl Factor {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of normals consumed per replica.
    pub fn rank(&self) -> usize {
        self.rank
    }

    fn row(&self, j: usize) -> &[f64] {
        match self.layout {
            Layout::Lower => {
                let start = j * (j + 1) / 2;
                &self.data[start..start + j + 1]
            }
            Layout::Dense => &self.data[j * self.rank..(j + 1) * self.rank],
        }
    }

    /// `z` holds `rank × LANES` normals laid out `[k][lane]`; `out` receives
    /// `n × LANES` values laid out the same way.
    pub fn apply_block(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.rank * LANES);
        debug_assert_eq!(out.len(), self.n * LANES);
        for j in 0..self.n {
            let mut acc = [0.0f64; LANES];
            for (k, &a) in self.row(j).iter().enumerate() {
                let zk = &z[k * LANES..(k + 1) * LANES];
                for l in 0..LANES {
                    acc[l] += a * zk[l];
                }
            }
            out[j * LANES..(j + 1) * LANES].copy_from_slice(&acc);
        }
    }

    /// Single-replica product with the same accumulation order as a lane of
    /// [`Factor::apply_block`].
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for (k, &a) in self.row(j).iter().enumerate() {
                acc += a * z[k];
            }
            *o = acc;
        }
    }
}

/// Cholesky when the matrix is positive definite, otherwise eigenvalue
/// clipping at zero.
pub fn factorize(entries: &[f64], n: usize) -> Result<Factorization> {
    if entries.len() != n * n {
        return Err(Error::Factorization(format!("expected {} entries, got {}", n * n, entries.len())));
    }
    if entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization("matrix has non-finite entries".into()));
    }
    let m = DMatrix::from_row_slice(n, n, entries);
    if let Some(ch) = m.clone().cholesky() {
        let l = ch.l();
        let mut data = Vec::with_capacity(n * (n + 1) / 2);
        for j in 0..n {
            for k in 0..=j {
                data.push(l[(j, k)]);
            }
        }
        return Ok(Factorization { factor: Factor { n, rank: n, layout: Layout::Lower, data }, clipped_mass: 0.0, repaired: None });
    }
    let eig = SymmetricEigen::new(m);
    let mut clipped = 0.0;
    let keep: Vec<usize> = (0..n)
        .filter(|&i| {
            let v = eig.eigenvalues[i];
            if v < 0.0 {
                clipped -= v;
            }
            v > 0.0
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::Factorization("matrix has no positive eigenvalues".into()));
    }
    let rank = keep.len();
    let mut data = vec![0.0; n * rank];
    for j in 0..n {
        for (c, &i) in keep.iter().enumerate() {
            data[j * rank + c] = eig.eigenvectors[(j, i)] * eig.eigenvalues[i].sqrt();
        }
    }
    let factor = Factor { n, rank, layout: Layout::Dense, data };
    let mut repaired = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = factor.row(i).iter().zip(factor.row(j)).map(|(a, b)| a * b).sum();
            repaired[i * n + j] = v;
            repaired[j * n + i] = v;
        }
    }
    Ok(Factorization { factor, clipped_mass: clipped, repaired: Some(repaired) })
}

/// Extreme eigenvalues `(min, max)` of a symmetric row-major matrix.
pub fn eigen_range(entries: &[f64], n: usize) -> (f64, f64) {
    let m = DMatrix::from_row_slice(n, n, entries);
    let ev = m.symmetric_eigenvalues();
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Sum of negative eigenvalue magnitudes.
pub fn negative_mass(entries: &[f64], n: usize) -> f64 {
    let m = DMatrix::from_row_slice(n, n, entries);
    m.symmetric_eigenvalues().iter().filter(|v| **v < 0.0).map(|v| -v).sum()
}
