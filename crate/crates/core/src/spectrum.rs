//! Second moments and the spectral statistics derived from them.

use ndarray::{Array2, ArrayView2, Axis};

use crate::embedding::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::linalg::{self, SymEigen, TopEigen, POWER_MAX_ITER, POWER_TOL};

pub const SYMMETRY_TOL: f64 = 1e-10;

/// `d × d` symmetric second moment `(1/k) Σ z zᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMoment {
    pub matrix: Array2<f64>,
    pub trace: f64,
    pub source_count: usize,
}

impl SecondMoment {
    pub fn new(matrix: Array2<f64>, source_count: usize) -> Result<Self> {
        let (r, c) = matrix.dim();
        if r != c {
            return Err(Error::DimensionMismatch { expected: r, found: c });
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpectrum("non-finite entry in second moment".into()));
        }
        let asym = linalg::asymmetry(matrix.view());
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidSpectrum(format!("matrix asymmetric by {asym}")));
        }
        let trace = matrix.diag().sum();
        Ok(SecondMoment {
            matrix,
            trace,
            source_count,
        })
    }

    /// `(1/k) Zᵀ Z` for the rows of `z`.
    pub fn from_rows(z: ArrayView2<'_, f64>) -> Result<Self> {
        let k = z.nrows();
        if k == 0 {
            return Err(Error::EmptyIndexSet);
        }
        let mut m = linalg::col_gram(z);
        m /= k as f64;
        symmetrize(&mut m);
        Self::new(m, k)
    }

    pub fn d(&self) -> usize {
        self.matrix.nrows()
    }

    /// Same matrix rescaled to trace one.
    pub fn trace_normalized(&self) -> SecondMoment {
        let t = if self.trace > 0.0 { self.trace } else { 1.0 };
        SecondMoment {
            matrix: &self.matrix / t,
            trace: self.trace / t,
            source_count: self.source_count,
        }
    }
}

fn symmetrize(m: &mut Array2<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
}

fn check_indices(batch: &EmbeddingBatch, indices: &[usize]) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::EmptyIndexSet);
    }
    let n = batch.n();
    match indices.iter().find(|&&i| i >= n) {
        Some(&index) => Err(Error::IndexOutOfRange { index, len: n }),
        None => Ok(()),
    }
}

/// Second moment over the rows listed in `indices`.
pub fn batch_second_moment(batch: &EmbeddingBatch, indices: &[usize]) -> Result<SecondMoment> {
    check_indices(batch, indices)?;
    let z = batch.rows().select(Axis(0), indices);
    SecondMoment::from_rows(z.view())
}

/// Σ̂ over every row.
pub fn full_second_moment(batch: &EmbeddingBatch) -> SecondMoment {
    SecondMoment::from_rows(batch.rows()).expect("batch has rows")
}

/// Σ̃ᵢ⁻, the second moment over the negatives of `anchor`.
pub fn negatives_moment(batch: &EmbeddingBatch, anchor: usize) -> Result<SecondMoment> {
    let neg = batch.negatives(anchor)?;
    batch_second_moment(batch, &neg)
}

/// Top eigenvalue by power iteration. A non-converged run is reported through
/// the `converged` flag, not as an error.
pub fn lambda_max(m: &SecondMoment) -> TopEigen {
    linalg::power_iteration(m.matrix.view(), POWER_TOL, POWER_MAX_ITER)
}

/// σ̂ of a row matrix, by power iteration on whichever Gram matrix is smaller.
pub fn lambda_max_rows(z: ArrayView2<'_, f64>) -> TopEigen {
    let (n, d) = z.dim();
    let mut g = if n <= d { linalg::row_gram(z) } else { linalg::col_gram(z) };
    g /= n as f64;
    linalg::power_iteration(g.view(), POWER_TOL, POWER_MAX_ITER)
}

/// `tr(Σ²) = ‖Σ‖_F²`.
pub fn trace_sq(m: &SecondMoment) -> f64 {
    linalg::frobenius_sq(m.matrix.view())
}

/// `(tr H)² / ‖H‖_F²` for the smaller Gram of `z`, before clipping.
fn effective_rank_raw(z: ArrayView2<'_, f64>) -> f64 {
    let (n, d) = z.dim();
    let h = if n <= d { linalg::row_gram(z) } else { linalg::col_gram(z) };
    let tr = h.diag().sum();
    let f = linalg::frobenius_sq(h.view());
    if f == 0.0 {
        return 1.0;
    }
    tr * tr / f
}

/// Effective rank of a row matrix, clipped to `[1, min(n, d)]`.
pub fn effective_rank_rows(z: ArrayView2<'_, f64>) -> f64 {
    let (n, d) = z.dim();
    effective_rank_raw(z).clamp(1.0, n.min(d) as f64)
}

/// `n² / ‖Z Zᵀ‖_F²` over the selected rows, computed on the smaller Gram.
pub fn effective_rank_gram(batch: &EmbeddingBatch, indices: &[usize]) -> Result<f64> {
    check_indices(batch, indices)?;
    let z = batch.rows().select(Axis(0), indices);
    Ok(effective_rank_rows(z.view()))
}

/// `1 / tr(Σ̃²)` with Σ̃ the trace-one normalisation of `m`, clipped to
/// `[1, min(k, d)]` like the Gram form.
pub fn effective_rank_trace(m: &SecondMoment) -> f64 {
    // (tr M)² / ‖M‖_F² is the same ratio without the extra rounding of Σ̃
    let f = trace_sq(m);
    if f == 0.0 {
        return 1.0;
    }
    let cap = m.source_count.min(m.d()).max(1) as f64;
    (m.trace * m.trace / f).clamp(1.0, cap)
}

/// `q_B(z) = (1/b) Σ ⟨z, z'⟩²` from cached inner products with the members.
pub fn rayleigh_score(inner: &[f64]) -> f64 {
    if inner.is_empty() {
        return 0.0;
    }
    inner.iter().map(|x| x * x).sum::<f64>() / inner.len() as f64
}

/// `tr(Σ²)` after adding one vector to a set of `b`.
pub fn trace_update(t_b: f64, b: usize, q: f64, candidate_norm4: f64) -> f64 {
    let bf = b as f64;
    (bf * bf * t_b + 2.0 * bf * q + candidate_norm4) / ((bf + 1.0) * (bf + 1.0))
}

/// `min(1, n/(n−2) · σ̂)`, the uniform ceiling on every σ*⁽ⁱ⁾.
pub fn sigma_proxy(lambda_max_batch: f64, n: usize) -> f64 {
    assert!(n > 2, "sigma_proxy needs n > 2");
    (n as f64 / (n - 2) as f64 * lambda_max_batch).min(1.0)
}

/// `100 · √d · ‖Σ − I/d‖_F`, in percent.
pub fn isotropy_deviation(m: &SecondMoment, d: usize) -> f64 {
    let df = d as f64;
    let f2 = trace_sq(m) - 2.0 * m.trace / df + 1.0 / df;
    100.0 * df.sqrt() * f2.max(0.0).sqrt()
}

/// Isotropy deviation of a population spectrum `diag(λ)`.
pub fn population_isotropy_deviation(eigenvalues: &[f64]) -> f64 {
    let d = eigenvalues.len() as f64;
    let f2: f64 = eigenvalues.iter().map(|l| (l - 1.0 / d) * (l - 1.0 / d)).sum();
    100.0 * d.sqrt() * f2.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSummary {
    pub lambda_max: f64,
    pub effective_rank: f64,
    pub trace_sq: f64,
    pub isotropy_deviation_pct: f64,
}

impl SpectralSummary {
    /// Summary of the trace-one second moment of `z`, via the smaller Gram.
    pub fn from_rows(z: ArrayView2<'_, f64>) -> Self {
        let (n, d) = z.dim();
        let h = if n <= d { linalg::row_gram(z) } else { linalg::col_gram(z) };
        let tr = h.diag().sum();
        let hn = &h / tr;
        let t2 = linalg::frobenius_sq(hn.view());
        let top = linalg::power_iteration(hn.view(), POWER_TOL, POWER_MAX_ITER).value;
        let df = d as f64;
        let f2 = t2 - 2.0 / df + 1.0 / df;
        SpectralSummary {
            lambda_max: top,
            effective_rank: (1.0 / t2).clamp(1.0, n.min(d) as f64),
            trace_sq: t2,
            isotropy_deviation_pct: 100.0 * df.sqrt() * f2.max(0.0).sqrt(),
        }
    }
}

/// Exact per-anchor σ*⁽ⁱ⁾ = λ_max(Σ̃ᵢ⁻) for every anchor of a batch.
///
/// One eigendecomposition of the smaller Gram gives Zᵀ Z = V D Vᵀ. Removing the
/// anchor and its positive is a rank-two downdate `D − w_a w_aᵀ − w_b w_bᵀ` in
/// that basis, whose top eigenvalue is located by bisection on an inertia count
/// (the Haynsworth identity applied to a 2 × 2 Schur complement).
#[derive(Debug, Clone)]
pub struct AnchorSpectra {
    /// Eigenvalues of Zᵀ Z, descending, restricted to the Gram size.
    d_vals: Vec<f64>,
    /// Row `i` holds the coordinates of z_i in the eigenbasis.
    coords: Array2<f64>,
    n: usize,
}

impl AnchorSpectra {
    pub fn new(batch: &EmbeddingBatch) -> Self {
        let z = batch.rows();
        let (n, d) = z.dim();
        if n <= d {
            Self::from_row_gram(&linalg::row_gram(z))
        } else {
            let eig = linalg::sym_eigen(&linalg::col_gram(z));
            let coords = z.dot(&eig.vectors);
            AnchorSpectra {
                d_vals: eig.values.iter().map(|v| v.max(0.0)).collect(),
                coords,
                n,
            }
        }
    }

    /// From a precomputed `Z Zᵀ`.
    pub fn from_row_gram(g: &Array2<f64>) -> Self {
        let n = g.nrows();
        let SymEigen { values, vectors } = linalg::sym_eigen(g);
        let d_vals: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
        let sqrt_d = d_vals.iter().map(|v| v.sqrt()).collect::<ndarray::Array1<f64>>();
        let coords = &vectors * &sqrt_d;
        AnchorSpectra { d_vals, coords, n }
    }

    /// σ̂ = λ_max(Σ̂), exact.
    pub fn sigma_hat(&self) -> f64 {
        self.d_vals.first().copied().unwrap_or(0.0) / self.n as f64
    }

    /// λ_max of the second moment over all rows except `a` and `b`.
    pub fn sigma_without(&self, a: usize, b: usize) -> f64 {
        let wa = self.coords.row(a);
        let wb = self.coords.row(b);
        let top = downdated_top(
            &self.d_vals,
            wa.as_slice().expect("coords are row-major"),
            wb.as_slice().expect("coords are row-major"),
        );
        top / (self.n - 2) as f64
    }

    /// σ*⁽ⁱ⁾ for every row of a paired batch.
    pub fn per_anchor(&self, batch: &EmbeddingBatch) -> Result<Vec<f64>> {
        let n = batch.n();
        let mut out = vec![f64::NAN; n];
        for i in 0..n {
            if !out[i].is_nan() {
                continue;
            }
            let p = batch.positive(i)?;
            let s = self.sigma_without(i, p);
            out[i] = s;
            // the partner shares the same negative set when pairing is symmetric
            if batch.positive_of()[p] == Some(i) {
                out[p] = s;
            }
        }
        Ok(out)
    }
}

/// σ*⁽ⁱ⁾ for every anchor of `batch`.
pub fn per_anchor_sigma(batch: &EmbeddingBatch) -> Result<Vec<f64>> {
    AnchorSpectra::new(batch).per_anchor(batch)
}

/// Number of eigenvalues of `D − w_a w_aᵀ − w_b w_bᵀ` strictly above `mu`.
fn count_above(d: &[f64], wa: &[f64], wb: &[f64], mu: f64) -> usize {
    let mut above = 0usize;
    let (mut faa, mut fab, mut fbb) = (1.0, 0.0, 1.0);
    for k in 0..d.len() {
        let gap = d[k] - mu;
        if gap > 0.0 {
            above += 1;
        }
        let inv = 1.0 / gap;
        faa -= wa[k] * wa[k] * inv;
        fab -= wa[k] * wb[k] * inv;
        fbb -= wb[k] * wb[k] * inv;
    }
    let half_tr = 0.5 * (faa + fbb);
    let disc = (0.25 * (faa - fbb) * (faa - fbb) + fab * fab).sqrt();
    let pos = usize::from(half_tr + disc > 0.0) + usize::from(half_tr - disc > 0.0);
    (above + pos).saturating_sub(2)
}

fn downdated_top(d: &[f64], wa: &[f64], wb: &[f64]) -> f64 {
    let top = d.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return 0.0;
    }
    let nudge = |mu: f64| {
        if d.iter().any(|&x| x == mu) {
            mu.next_up()
        } else {
            mu
        }
    };
    let mut lo = nudge(top * 1e-14);
    if count_above(d, wa, wb, lo) == 0 {
        return 0.0;
    }
    let mut hi = top;
    for _ in 0..200 {
        let mid = nudge(0.5 * (lo + hi));
        if mid <= lo || mid >= hi {
            break;
        }
        if count_above(d, wa, wb, mid) >= 1 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
