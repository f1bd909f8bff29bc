//! Dense symmetric linear algebra used across the crate.
//!
//! Two eigensolvers live here. [`jacobi_eigen`] is the cyclic Jacobi method,
//! used for the whitening inverse square root and as the reference oracle in
//! tests. [`sym_eigen`] wraps nalgebra's Householder/QR solver and is used on the
//! hot path of the per-anchor spectral computations.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::rng::splitmix64;

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending.
/// Column `k` of `vectors` is the eigenvector of `values[k]`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

impl SymEigen {
    fn sorted(values: Vec<f64>, vectors: Array2<f64>) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let vals = Array1::from_iter(order.iter().map(|&k| values[k]));
        let mut vecs = Array2::zeros(vectors.raw_dim());
        for (dst, &src) in order.iter().enumerate() {
            vecs.column_mut(dst).assign(&vectors.column(src));
        }
        SymEigen {
            values: vals,
            vectors: vecs,
        }
    }

    /// V f(Λ) Vᵀ.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Array2<f64> {
        let scaled = &self.vectors * &self.values.mapv(f);
        scaled.dot(&self.vectors.t())
    }
}

/// Result of a power iteration run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopEigen {
    pub value: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit; `value` is then the last iterate.
    pub converged: bool,
}

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 5000;

/// Deterministic start vector: all-ones plus fixed pseudo-random offsets.
pub fn power_start(k: usize) -> Array1<f64> {
    let mut v = Array1::from_iter((0..k).map(|j| {
        let h = splitmix64(j as u64 ^ 0x5EED);
        1.0 + 0.25 * ((h >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
    }));
    let norm = v.dot(&v).sqrt();
    v /= norm;
    v
}

/// Top eigenvalue of a symmetric PSD matrix by power iteration.
///
/// Stops when successive Rayleigh quotients differ by less than
/// `tol * max(trace, tiny)`, so for a trace-one matrix the tolerance is absolute.
/// The result is clamped to `[0, trace]`.
pub fn power_iteration(a: ArrayView2<'_, f64>, tol: f64, max_iter: usize) -> TopEigen {
    let k = a.nrows();
    let trace = a.diag().sum();
    if k == 0 || trace <= 0.0 {
        return TopEigen {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let scale = trace.max(f64::MIN_POSITIVE);
    let mut v = power_start(k);
    let mut w = a.dot(&v);
    let mut rq = v.dot(&w);
    for it in 1..=max_iter {
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return TopEigen {
                value: 0.0,
                iterations: it,
                converged: true,
            };
        }
        v = w / norm;
        w = a.dot(&v);
        let next = v.dot(&w);
        if (next - rq).abs() < tol * scale {
            return TopEigen {
                value: next.clamp(0.0, trace),
                iterations: it,
                converged: true,
            };
        }
        rq = next;
    }
    TopEigen {
        value: rq.clamp(0.0, trace),
        iterations: max_iter,
        converged: false,
    }
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Sweeps over all off-diagonal pairs until the off-diagonal Frobenius mass is
/// below `1e-30` of the total, or `max_sweeps` is exhausted.
pub fn jacobi_eigen(a: &Array2<f64>, max_sweeps: usize) -> Result<SymEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    // row-major working copy; rotations touch rows and columns p, q
    let mut m: Vec<f64> = a.iter().copied().collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total: f64 = m.iter().map(|x| x * x).sum();
    if n <= 1 || total == 0.0 {
        let vals = (0..n).map(|i| m[i * n + i]).collect();
        return Ok(SymEigen::sorted(
            vals,
            Array2::from_shape_vec((n, n), v).expect("square"),
        ));
    }
    let threshold = 1e-30 * total;
    for _sweep in 0..max_sweeps {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * m[p * n + q] * m[p * n + q];
            }
        }
        if off <= threshold {
            let vals = (0..n).map(|i| m[i * n + i]).collect();
            return Ok(SymEigen::sorted(
                vals,
                Array2::from_shape_vec((n, n), v).expect("square"),
            ));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // columns p, q
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                // rows p, q
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::NoConvergence { sweeps: max_sweeps })
}

/// Symmetric eigen-decomposition through nalgebra (Householder tridiagonalisation
/// followed by implicit QR).
pub fn sym_eigen(a: &Array2<f64>) -> SymEigen {
    let n = a.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]));
    let eig = m.symmetric_eigen();
    let vals = eig.eigenvalues.iter().copied().collect();
    let vecs = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, j)]);
    SymEigen::sorted(vals, vecs)
}

/// Z Zᵀ for row matrix Z.
pub fn row_gram(z: ArrayView2<'_, f64>) -> Array2<f64> {
    z.dot(&z.t())
}

/// Zᵀ Z for row matrix Z.
pub fn col_gram(z: ArrayView2<'_, f64>) -> Array2<f64> {
    z.t().dot(&z)
}

pub fn frobenius_sq(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn norm(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Largest absolute entry of `a - aᵀ`.
pub fn asymmetry(a: ArrayView2<'_, f64>) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}

/// Row norms of a row matrix.
pub fn row_norms(z: ArrayView2<'_, f64>) -> Array1<f64> {
    z.map_axis(Axis(1), |r| r.dot(&r).sqrt())
}
