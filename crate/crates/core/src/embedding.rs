//! Unit-sphere embedding batches and their synthetic generators.
//!
//! A batch is one `n × d` row matrix plus an optional positive index per row.
//! [`attach_positives`] appends one positive per anchor and pairs the two rows
//! symmetrically, so every row is an anchor whose positive is its partner. The
//! negatives of anchor `i` are then all rows other than `i` and `i⁺`, giving
//! `N⁻ = n − 2`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{self, label, StreamRng};

pub const UNIT_TOL: f64 = 1e-9;
pub const SPECTRUM_SUM_TOL: f64 = 1e-12;
/// Largest accepted |cosine| for [`attach_positives`].
pub const MAX_COSINE: f64 = 1.0 - 1e-9;
const MAX_REDRAWS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    rows: Array2<f64>,
    positive_of: Vec<Option<usize>>,
}

impl EmbeddingBatch {
    /// Batch without positives. Rows must already be unit norm.
    pub fn from_rows(rows: Array2<f64>) -> Result<Self> {
        let n = rows.nrows();
        Self::new(rows, vec![None; n])
    }

    pub fn new(rows: Array2<f64>, positive_of: Vec<Option<usize>>) -> Result<Self> {
        let (n, d) = rows.dim();
        if n <= 2 {
            return Err(Error::BatchTooSmall(n));
        }
        if d < 2 {
            return Err(Error::param("d", d as f64, "embedding dimension must be at least 2"));
        }
        if positive_of.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: positive_of.len(),
            });
        }
        for (row, r) in rows.outer_iter().enumerate() {
            let norm = r.dot(&r).sqrt();
            if !((norm - 1.0).abs() < UNIT_TOL) {
                return Err(Error::NotUnitNorm { row, norm });
            }
        }
        for (i, p) in positive_of.iter().enumerate() {
            match *p {
                Some(j) if j == i => {
                    return Err(Error::InvalidPairing(format!("row {i} is its own positive")))
                }
                Some(j) if j >= n => {
                    return Err(Error::InvalidPairing(format!(
                        "row {i} points at {j}, batch has {n} rows"
                    )))
                }
                _ => {}
            }
        }
        Ok(EmbeddingBatch { rows, positive_of })
    }

    /// Skips validation; callers guarantee unit rows and a valid pairing.
    pub(crate) fn new_unchecked(rows: Array2<f64>, positive_of: Vec<Option<usize>>) -> Self {
        debug_assert_eq!(rows.nrows(), positive_of.len());
        EmbeddingBatch { rows, positive_of }
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn d(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.rows.row(i)
    }

    pub fn into_rows(self) -> Array2<f64> {
        self.rows
    }

    pub fn positive_of(&self) -> &[Option<usize>] {
        &self.positive_of
    }

    pub fn positive(&self, anchor: usize) -> Result<usize> {
        let n = self.n();
        if anchor >= n {
            return Err(Error::IndexOutOfRange { index: anchor, len: n });
        }
        self.positive_of[anchor].ok_or(Error::MissingPositive(anchor))
    }

    /// Rows that have a registered positive.
    pub fn anchors(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.positive_of[i].is_some()).collect()
    }

    pub fn has_positives(&self) -> bool {
        self.positive_of.iter().any(Option::is_some)
    }

    /// Negative set of `anchor`: every row except the anchor and its positive.
    pub fn negatives(&self, anchor: usize) -> Result<Vec<usize>> {
        let p = self.positive(anchor)?;
        Ok((0..self.n()).filter(|&j| j != anchor && j != p).collect())
    }

    /// Number of negatives per anchor, `n − 2`.
    pub fn n_neg(&self) -> usize {
        self.n() - 2
    }

    /// Sub-batch of the given rows, positives dropped.
    pub fn select(&self, indices: &[usize]) -> Result<EmbeddingBatch> {
        let n = self.n();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        let rows = self.rows.select(Axis(0), indices);
        EmbeddingBatch::from_rows(rows)
    }

    pub fn max_norm_error(&self) -> f64 {
        self.rows
            .outer_iter()
            .map(|r| (r.dot(&r).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSpec {
    pub eigenvalues: Vec<f64>,
    pub seed: u64,
}

impl SpectrumSpec {
    pub fn new(eigenvalues: Vec<f64>, seed: u64) -> Result<Self> {
        let s = SpectrumSpec { eigenvalues, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn isotropic(d: usize, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidSpectrum("empty spectrum".into()));
        }
        Self::new(vec![1.0 / d as f64; d], seed)
    }

    /// `λ₁` on the first axis, the remaining mass spread evenly over the rest.
    /// `λ₁ = 1/d` is the isotropic spectrum.
    pub fn spiked(lambda1: f64, d: usize, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda1) || d < 2 {
            return Err(Error::InvalidSpectrum(format!("spiked(λ₁={lambda1}, d={d})")));
        }
        let rest = (1.0 - lambda1) / (d - 1) as f64;
        let mut ev = vec![rest; d];
        ev[0] = lambda1;
        Self::new(ev, seed)
    }

    pub fn d(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.eigenvalues.is_empty() {
            return Err(Error::InvalidSpectrum("empty spectrum".into()));
        }
        if let Some(bad) = self.eigenvalues.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidSpectrum(format!("eigenvalue {bad} is negative or not finite")));
        }
        let sum: f64 = self.eigenvalues.iter().sum();
        if (sum - 1.0).abs() > SPECTRUM_SUM_TOL {
            return Err(Error::InvalidSpectrum(format!("eigenvalues sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationSpec {
    pub alpha: f64,
    pub seed: u64,
}

impl CorrelationSpec {
    pub fn new(alpha: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::param("alpha", alpha, "must lie in [0, 1)"));
        }
        Ok(CorrelationSpec { alpha, seed })
    }
}

/// Haar-distributed `d × d` orthogonal matrix: QR of a Gaussian matrix with the
/// diagonal of R forced positive.
pub fn haar_orthogonal(d: usize, rng: &mut StreamRng) -> Array2<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    Array2::from_shape_fn((d, d), |(i, j)| {
        let s = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        q[(i, j)] * s
    })
}

/// Draws batches with second moment close to `U diag(λ) Uᵀ`.
///
/// The rotation is drawn once from the spec seed, so every batch of one sampler
/// shares the same population spectrum and eigenbasis.
#[derive(Debug, Clone)]
pub struct SpectralSampler {
    spec: SpectrumSpec,
    /// Aᵀ with A = U Λ^{1/2}; rows are x Aᵀ.
    a_t: Array2<f64>,
}

impl SpectralSampler {
    pub fn new(spec: &SpectrumSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.d();
        let mut rng = rng::stream(rng::derive_seed(spec.seed, label::ROTATION));
        let u = haar_orthogonal(d, &mut rng);
        let sqrt_l = Array1::from_iter(spec.eigenvalues.iter().map(|l| l.sqrt()));
        let a = &u * &sqrt_l;
        Ok(SpectralSampler {
            spec: spec.clone(),
            a_t: a.reversed_axes(),
        })
    }

    pub fn spec(&self) -> &SpectrumSpec {
        &self.spec
    }

    pub fn d(&self) -> usize {
        self.spec.d()
    }

    /// Anchors-only batch number `batch_index`.
    pub fn sample(&self, n: usize, batch_index: u64) -> Result<EmbeddingBatch> {
        if n <= 2 {
            return Err(Error::BatchTooSmall(n));
        }
        let d = self.d();
        let seed = rng::derive_path(self.spec.seed, &[label::ANCHORS, batch_index]);
        let mut rng = rng::stream(seed);
        let x = Array2::from_shape_simple_fn((n, d), || rng.sample::<f64, _>(StandardNormal));
        let mut rows = x.dot(&self.a_t);
        for i in 0..n {
            let mut attempts = 0;
            loop {
                let norm = rows.row(i).dot(&rows.row(i)).sqrt();
                if norm > 0.0 && norm.is_finite() {
                    rows.row_mut(i).mapv_inplace(|v| v / norm);
                    break;
                }
                attempts += 1;
                if attempts > MAX_REDRAWS {
                    return Err(Error::DegenerateDraw { attempts });
                }
                let xi = Array1::from_shape_simple_fn(d, || rng.sample::<f64, _>(StandardNormal));
                rows.row_mut(i).assign(&xi.dot(&self.a_t));
            }
        }
        Ok(EmbeddingBatch::new_unchecked(rows, vec![None; n]))
    }
}

/// Anchors-only batch drawn from `spec`.
pub fn synth_spectral_batch(spec: &SpectrumSpec, n: usize, d: usize) -> Result<EmbeddingBatch> {
    if spec.d() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: spec.d(),
        });
    }
    SpectralSampler::new(spec)?.sample(n, 0)
}

fn unit_orthogonal_to(z: ArrayView1<'_, f64>, rng: &mut StreamRng) -> Result<Array1<f64>> {
    let d = z.len();
    for _ in 0..MAX_REDRAWS {
        let mut g = Array1::from_shape_simple_fn(d, || rng.sample::<f64, _>(StandardNormal));
        let gnorm = g.dot(&g).sqrt();
        let proj = g.dot(&z);
        g.scaled_add(-proj, &z);
        // second pass removes the rounding residue of the first
        let proj = g.dot(&z);
        g.scaled_add(-proj, &z);
        let norm = g.dot(&g).sqrt();
        if norm > 1e-6 * gnorm {
            g /= norm;
            return Ok(g);
        }
    }
    Err(Error::DegenerateDraw {
        attempts: MAX_REDRAWS,
    })
}

/// Appends one positive per row at fixed cosine `c`.
///
/// Row `i` of the input gets positive `i + m` (m = input rows) and the pairing is
/// symmetric.
pub fn attach_positives(batch: &EmbeddingBatch, cosine: f64, seed: u64) -> Result<EmbeddingBatch> {
    if !(cosine.abs() <= MAX_COSINE) {
        return Err(Error::param("cosine", cosine, "must satisfy |c| < 1"));
    }
    if batch.has_positives() {
        return Err(Error::InvalidPairing("batch already has positives".into()));
    }
    let (m, d) = batch.rows.dim();
    let mut rng = rng::stream(rng::derive_seed(seed, label::POSITIVES));
    let s = (1.0 - cosine * cosine).sqrt();
    let mut rows = Array2::zeros((2 * m, d));
    rows.slice_mut(ndarray::s![..m, ..]).assign(&batch.rows);
    for i in 0..m {
        let z = batch.rows.row(i);
        let u = unit_orthogonal_to(z, &mut rng)?;
        let mut p = &z * cosine + &u * s;
        let norm = p.dot(&p).sqrt();
        p /= norm;
        rows.row_mut(m + i).assign(&p);
    }
    let positive_of = (0..2 * m)
        .map(|i| Some(if i < m { i + m } else { i - m }))
        .collect();
    Ok(EmbeddingBatch::new_unchecked(rows, positive_of))
}

fn shared_direction(d: usize, rng: &mut StreamRng) -> Array1<f64> {
    loop {
        let u = Array1::from_shape_simple_fn(d, || rng.sample::<f64, _>(StandardNormal));
        let norm = u.dot(&u).sqrt();
        if norm > 0.0 {
            return u / norm;
        }
    }
}

fn normalize_rows(rows: &mut Array2<f64>) {
    for mut r in rows.outer_iter_mut() {
        let norm = r.dot(&r).sqrt();
        r.mapv_inplace(|v| v / norm);
    }
}

/// Shared-component batch: rows ∝ √α u + √(1−α) ξ_j with ξ_j ~ N(0, I/d).
///
/// With ξ scaled by 1/d both parts have comparable norm, so pairwise inner
/// products concentrate around α.
pub fn synth_correlated_negatives(spec: &CorrelationSpec, n: usize, d: usize) -> Result<EmbeddingBatch> {
    let spec = CorrelationSpec::new(spec.alpha, spec.seed)?;
    if n <= 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let mut rng = rng::stream(rng::derive_seed(spec.seed, label::SHARED));
    let u = shared_direction(d, &mut rng);
    let mut rng = rng::stream(rng::derive_seed(spec.seed, label::ANCHORS));
    let scale = ((1.0 - spec.alpha) / d as f64).sqrt();
    let sa = spec.alpha.sqrt();
    let mut rows = Array2::from_shape_simple_fn((n, d), || scale * rng.sample::<f64, _>(StandardNormal));
    for mut r in rows.outer_iter_mut() {
        r.scaled_add(sa, &u);
    }
    normalize_rows(&mut rows);
    Ok(EmbeddingBatch::new_unchecked(rows, vec![None; n]))
}

/// Shared-component anchors with paired positives.
///
/// Anchor j is √α u + √(1−α) ξ_j and its positive is √α u + √(1−α)(c ξ_j +
/// √(1−c²) η_j), both renormalised. Rows `0..m` are anchors, `m..2m` positives.
pub fn synth_correlated_pairs(spec: &CorrelationSpec, m: usize, d: usize, cosine: f64) -> Result<EmbeddingBatch> {
    let spec = CorrelationSpec::new(spec.alpha, spec.seed)?;
    if !(cosine.abs() <= MAX_COSINE) {
        return Err(Error::param("cosine", cosine, "must satisfy |c| < 1"));
    }
    if 2 * m <= 2 {
        return Err(Error::BatchTooSmall(2 * m));
    }
    let mut rng = rng::stream(rng::derive_seed(spec.seed, label::SHARED));
    let u = shared_direction(d, &mut rng);
    let scale = ((1.0 - spec.alpha) / d as f64).sqrt();
    let mut rng = rng::stream(rng::derive_seed(spec.seed, label::ANCHORS));
    let xi = Array2::from_shape_simple_fn((m, d), || scale * rng.sample::<f64, _>(StandardNormal));
    let mut rng = rng::stream(rng::derive_seed(spec.seed, label::POSITIVES));
    let eta = Array2::from_shape_simple_fn((m, d), || scale * rng.sample::<f64, _>(StandardNormal));
    let s = (1.0 - cosine * cosine).sqrt();
    let mut rows = Array2::zeros((2 * m, d));
    rows.slice_mut(ndarray::s![..m, ..]).assign(&xi);
    rows.slice_mut(ndarray::s![m.., ..]).assign(&(&xi * cosine + &eta * s));
    let sa = spec.alpha.sqrt();
    for mut r in rows.outer_iter_mut() {
        r.scaled_add(sa, &u);
    }
    normalize_rows(&mut rows);
    let positive_of = (0..2 * m)
        .map(|i| Some(if i < m { i + m } else { i - m }))
        .collect();
    Ok(EmbeddingBatch::new_unchecked(rows, positive_of))
}

/// Mean of ⟨z_j, z_k⟩ over all ordered pairs j ≠ k.
pub fn mean_pairwise_inner(rows: ArrayView2<'_, f64>) -> f64 {
    let n = rows.nrows();
    let s = rows.sum_axis(Axis(0));
    let total = s.dot(&s);
    let diag: f64 = rows.outer_iter().map(|r| r.dot(&r)).sum();
    (total - diag) / (n * (n - 1)) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{jacobi_eigen, sym_eigen};
    use proptest::prelude::*;

    fn moment(rows: ArrayView2<'_, f64>) -> Array2<f64> {
        rows.t().dot(&rows) / rows.nrows() as f64
    }

    #[test]
    fn isotropic_top_eigenvalue_near_one_over_d() {
        let d = 64;
        let b = synth_spectral_batch(&SpectrumSpec::isotropic(d, 1).unwrap(), 256, d).unwrap();
        let e = jacobi_eigen(&moment(b.rows()), 100).unwrap();
        let top = e.values[0];
        assert!(top >= 1.0 / d as f64 && top < 3.0 / d as f64, "{top}");
    }

    #[test]
    fn rank_one_spectrum_gives_plus_minus_u() {
        let d = 8;
        let mut ev = vec![0.0; d];
        ev[0] = 1.0;
        let b = synth_spectral_batch(&SpectrumSpec::new(ev, 5).unwrap(), 20, d).unwrap();
        let first = b.row(0).to_owned();
        for r in b.rows().outer_iter() {
            assert!((r.dot(&first).abs() - 1.0).abs() < 1e-12);
        }
        let e = jacobi_eigen(&moment(b.rows()), 100).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12);
    }

    /// E[λ x² / (λ x² + 1 − λ)] for x ~ N(0, 1): the spike of the population
    /// second moment once rows are projected back onto the sphere.
    fn renormalised_spike(lambda1: f64) -> f64 {
        let (lo, hi, steps) = (-12.0f64, 12.0f64, 200_000);
        let h = (hi - lo) / steps as f64;
        let f = |x: f64| {
            let phi = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            lambda1 * x * x / (lambda1 * x * x + 1.0 - lambda1) * phi
        };
        (0..=steps)
            .map(|k| {
                let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
                w * f(lo + k as f64 * h)
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn spiked_top_eigenvalue_tracks_renormalised_population() {
        let (n, d) = (256, 1024);
        let b = synth_spectral_batch(&SpectrumSpec::spiked(0.3, d, 2).unwrap(), n, d).unwrap();
        // nonzero spectrum of Σ̂ equals that of ZZᵀ/n
        let g = b.rows().dot(&b.rows().t()) / n as f64;
        let top = sym_eigen(&g).values[0];
        let target = renormalised_spike(0.3);
        assert!((target - 0.2214).abs() < 1e-3, "{target}");
        assert!((top - target).abs() < 0.05 * target, "{top} vs {target}");
    }

    #[test]
    fn spectrum_targeting_n_ge_4d() {
        let d = 16;
        let mut ev: Vec<f64> = (0..d).map(|k| 0.8f64.powi(k as i32)).collect();
        let s: f64 = ev.iter().sum();
        ev.iter_mut().for_each(|x| *x /= s);
        let b = synth_spectral_batch(&SpectrumSpec::new(ev.clone(), 11).unwrap(), 8 * d * 16, d).unwrap();
        let e = jacobi_eigen(&moment(b.rows()), 100).unwrap();
        for (got, want) in e.values.iter().zip(ev.iter()) {
            assert!((got - want).abs() < 0.05, "{got} vs {want}");
        }
    }

    #[test]
    fn spectrum_validation() {
        assert!(SpectrumSpec::new(vec![0.5, 0.4], 0).is_err());
        assert!(SpectrumSpec::new(vec![1.2, -0.2], 0).is_err());
        let spec = SpectrumSpec::isotropic(4, 0).unwrap();
        assert!(matches!(
            synth_spectral_batch(&spec, 10, 5),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(synth_spectral_batch(&spec, 2, 4), Err(Error::BatchTooSmall(2))));
    }

    #[test]
    fn positives_have_exact_cosine() {
        let b = synth_spectral_batch(&SpectrumSpec::spiked(0.3, 32, 3).unwrap(), 40, 32).unwrap();
        for c in [0.75, 0.0, -0.4] {
            let p = attach_positives(&b, c, 9).unwrap();
            assert_eq!(p.n(), 80);
            assert!(p.max_norm_error() < UNIT_TOL);
            for i in 0..p.n() {
                let j = p.positive(i).unwrap();
                assert_eq!(p.positive(j).unwrap(), i);
                assert!((p.row(i).dot(&p.row(j)) - c).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cosine_range_enforced() {
        let b = synth_spectral_batch(&SpectrumSpec::isotropic(8, 3).unwrap(), 10, 8).unwrap();
        assert!(attach_positives(&b, 1.0 - 1e-12, 0).is_err());
        assert!(attach_positives(&b, 1.0, 0).is_err());
        assert!(attach_positives(&b, -1.0, 0).is_err());
        assert!(attach_positives(&b, f64::NAN, 0).is_err());
        let p = attach_positives(&b, 0.5, 0).unwrap();
        assert!(attach_positives(&p, 0.5, 0).is_err());
    }

    #[test]
    fn batch_validation() {
        let rows = Array2::from_shape_vec((3, 2), vec![1.0, 0.0, 0.0, 1.0, 0.6, 0.8]).unwrap();
        assert!(EmbeddingBatch::from_rows(rows.clone()).is_ok());
        assert!(EmbeddingBatch::new(rows.clone(), vec![Some(0), None, None]).is_err());
        assert!(EmbeddingBatch::new(rows.clone(), vec![Some(3), None, None]).is_err());
        let mut bad = rows.clone();
        bad[[1, 1]] = 1.1;
        assert!(matches!(EmbeddingBatch::from_rows(bad), Err(Error::NotUnitNorm { row: 1, .. })));
        let small = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(EmbeddingBatch::from_rows(small).is_err());
        let b = EmbeddingBatch::new(rows, vec![Some(1), Some(0), None]).unwrap();
        assert_eq!(b.negatives(0).unwrap(), vec![2]);
        assert!(matches!(b.positive(2), Err(Error::MissingPositive(2))));
    }

    #[test]
    fn correlated_mean_inner_product() {
        let (n, d) = (256, 256);
        let b0 = synth_correlated_negatives(&CorrelationSpec::new(0.0, 4).unwrap(), n, d).unwrap();
        let m0 = mean_pairwise_inner(b0.rows());
        assert!(m0.abs() < 3.0 / ((n * d) as f64).sqrt(), "{m0}");
        let b = synth_correlated_negatives(&CorrelationSpec::new(0.05, 4).unwrap(), n, d).unwrap();
        // oracle: explicit double loop
        let mut acc = 0.0;
        for j in 0..n {
            for k in 0..n {
                if j != k {
                    acc += b.row(j).dot(&b.row(k));
                }
            }
        }
        let mu = acc / (n * (n - 1)) as f64;
        assert!((mu - mean_pairwise_inner(b.rows())).abs() < 1e-12);
        assert!((mu - 0.05).abs() < 0.01, "{mu}");
        assert!(CorrelationSpec::new(1.0, 0).is_err());
        assert!(CorrelationSpec::new(-0.1, 0).is_err());
    }

    #[test]
    fn correlated_pairs_are_paired_unit_rows() {
        let b = synth_correlated_pairs(&CorrelationSpec::new(0.02, 1).unwrap(), 32, 64, 0.75).unwrap();
        assert_eq!(b.n(), 64);
        assert!(b.max_norm_error() < UNIT_TOL);
        let mean_c: f64 = (0..32).map(|i| b.row(i).dot(&b.row(i + 32))).sum::<f64>() / 32.0;
        assert!((mean_c - 0.755).abs() < 0.1, "{mean_c}");
    }

    #[test]
    fn haar_is_orthogonal() {
        let mut r = rng::stream(3);
        let q = haar_orthogonal(20, &mut r);
        let qtq = q.t().dot(&q);
        let err = (&qtq - &Array2::<f64>::eye(20)).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(err < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn generated_rows_unit_and_deterministic(seed in any::<u64>(), lambda1 in 0.05f64..0.95, n in 3usize..40, d in 2usize..24) {
            let spec = SpectrumSpec::spiked(lambda1.max(1.0 / d as f64), d, seed).unwrap();
            let a = synth_spectral_batch(&spec, n, d).unwrap();
            let b = synth_spectral_batch(&spec, n, d).unwrap();
            prop_assert!(a.max_norm_error() < UNIT_TOL);
            prop_assert_eq!(&a, &b);
        }

        #[test]
        fn alignment_exact(seed in any::<u64>(), c in -0.99f64..0.99, d in 2usize..32) {
            let spec = SpectrumSpec::isotropic(d, seed).unwrap();
            let a = synth_spectral_batch(&spec, 5, d).unwrap();
            let p = attach_positives(&a, c, seed ^ 1).unwrap();
            prop_assert!(p.max_norm_error() < UNIT_TOL);
            for i in 0..5 {
                prop_assert!((p.row(i).dot(&p.row(i + 5)) - c).abs() < 1e-9);
            }
        }
    }
}
