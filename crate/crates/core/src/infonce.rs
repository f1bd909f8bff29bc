//! InfoNCE softmax statistics and per-anchor gradients.
//!
//! For anchor `i` the candidates are its positive `i⁺` and the negatives `N_i⁻`
//! (every other row of the batch), with logits `⟨z_i, z_k⟩ / τ`. The gradient of
//! `L_i = −log p_{ii⁺}` with respect to the query `z_i` is `(M_i − z_{i⁺}) / τ`.
//!
//! `M_i − z_{i⁺}` is formed as `Σ_{k∈N⁻} p_k z_k − ε_i z_{i⁺}` rather than as a
//! difference, and `1 − ρ_i` as `Σ_{k∈N⁻} p_k (1 − ⟨z_k, z_{i⁺}⟩)`, so both stay
//! accurate when the softmax saturates and `ε_i` is far below machine epsilon.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::embedding::EmbeddingBatch;
use crate::error::{Error, Result};

pub const MAX_TEMPERATURE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorStats {
    pub anchor: usize,
    pub p_pos: f64,
    /// Softmax mass on the negatives; `1 − p_pos` up to rounding.
    pub epsilon: f64,
    pub alignment: f64,
    /// `1 − ρ_i`, computed without cancellation.
    pub misalignment: f64,
    pub softmax_mean: Array1<f64>,
    pub grad: Array1<f64>,
    pub grad_sq: f64,
    /// `‖z̄ᵢ⁻‖²`, squared norm of the negatives' mean.
    pub neg_mean_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradStats {
    pub mean_grad_sq: f64,
    pub mean_alignment: f64,
    pub mean_misalignment: f64,
    pub mean_eps_sq: f64,
    pub temperature: f64,
    pub n_neg: usize,
    pub per_anchor: Vec<AnchorStats>,
}

pub fn check_temperature(tau: f64) -> Result<()> {
    if tau > 0.0 && tau <= MAX_TEMPERATURE {
        Ok(())
    } else {
        Err(Error::param("temperature", tau, "must lie in (0, 100]"))
    }
}

/// Softmax with max-logit subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Weight row for one anchor from its similarity row `sims` (⟨z_i, z_k⟩ for all k).
///
/// Returns `w` with `w_k = p_k` on negatives, `w_{i⁺} = −ε`, `w_i = 0`, plus
/// `p_pos` and `ε`.
fn weight_row(sims: ArrayView1<'_, f64>, anchor: usize, pos: usize, tau: f64) -> (Array1<f64>, f64, f64) {
    let n = sims.len();
    let mut m = f64::NEG_INFINITY;
    for k in 0..n {
        if k != anchor {
            m = m.max(sims[k] / tau);
        }
    }
    let mut w = Array1::zeros(n);
    let mut neg_mass = 0.0;
    for k in 0..n {
        if k != anchor && k != pos {
            let e = (sims[k] / tau - m).exp();
            w[k] = e;
            neg_mass += e;
        }
    }
    let e_pos = (sims[pos] / tau - m).exp();
    let z = e_pos + neg_mass;
    w /= z;
    let eps = neg_mass / z;
    let p_pos = (e_pos / z).clamp(0.0, 1.0);
    w[pos] = -eps;
    (w, p_pos, eps)
}

/// Stats for `anchors`, given their similarity rows `sims` (one row per anchor).
fn stats_from_sims(
    batch: &EmbeddingBatch,
    anchors: &[usize],
    sims: &Array2<f64>,
    tau: f64,
) -> Result<Vec<AnchorStats>> {
    check_temperature(tau)?;
    let z = batch.rows();
    let n = batch.n();
    let n_neg = batch.n_neg() as f64;
    let total = z.sum_axis(Axis(0));
    let mut w = Array2::zeros((anchors.len(), n));
    let mut scalars = Vec::with_capacity(anchors.len());
    for (r, &i) in anchors.iter().enumerate() {
        let p = batch.positive(i)?;
        let (row, p_pos, eps) = weight_row(sims.row(r), i, p, tau);
        // 1 − ρ from the negatives only
        let mut mis = 0.0;
        for k in 0..n {
            if k != i && k != p && row[k] != 0.0 {
                mis += row[k] * (1.0 - z.row(k).dot(&z.row(p)));
            }
        }
        w.row_mut(r).assign(&row);
        scalars.push((p, p_pos, eps, mis));
    }
    let delta = w.dot(&z);
    let mut out = Vec::with_capacity(anchors.len());
    for (r, &i) in anchors.iter().enumerate() {
        let (p, p_pos, eps, mis) = scalars[r];
        let d_i = delta.row(r);
        let softmax_mean = &d_i + &z.row(p);
        let grad = d_i.mapv(|x| x / tau);
        let grad_sq = grad.dot(&grad);
        let mut neg_sum = total.clone();
        neg_sum -= &z.row(i);
        neg_sum -= &z.row(p);
        let neg_mean_sq = neg_sum.dot(&neg_sum) / (n_neg * n_neg);
        out.push(AnchorStats {
            anchor: i,
            p_pos,
            epsilon: eps,
            alignment: 1.0 - mis,
            misalignment: mis,
            softmax_mean,
            grad,
            grad_sq,
            neg_mean_sq,
        });
    }
    Ok(out)
}

/// Stats for one anchor.
pub fn anchor_stats(batch: &EmbeddingBatch, anchor: usize, temperature: f64) -> Result<AnchorStats> {
    check_temperature(temperature)?;
    batch.positive(anchor)?;
    let z = batch.rows();
    let sims = z.row(anchor).insert_axis(Axis(0)).dot(&z.t());
    let mut v = stats_from_sims(batch, &[anchor], &sims, temperature)?;
    Ok(v.pop().expect("one anchor"))
}

/// Stats over every anchor of the batch.
pub fn batch_grad_stats(batch: &EmbeddingBatch, temperature: f64) -> Result<BatchGradStats> {
    let z = batch.rows();
    let g = z.dot(&z.t());
    batch_grad_stats_with_gram(batch, &g, temperature)
}

/// [`batch_grad_stats`] reusing a precomputed `Z Zᵀ`.
pub fn batch_grad_stats_with_gram(batch: &EmbeddingBatch, gram: &Array2<f64>, temperature: f64) -> Result<BatchGradStats> {
    check_temperature(temperature)?;
    let anchors = batch.anchors();
    if anchors.is_empty() {
        return Err(Error::MissingPositive(0));
    }
    if gram.dim() != (batch.n(), batch.n()) {
        return Err(Error::DimensionMismatch {
            expected: batch.n(),
            found: gram.nrows(),
        });
    }
    let sims = if anchors.len() == batch.n() {
        gram.clone()
    } else {
        gram.select(Axis(0), &anchors)
    };
    let per_anchor = stats_from_sims(batch, &anchors, &sims, temperature)?;
    Ok(aggregate(per_anchor, temperature, batch.n_neg()))
}

/// Batch means in a fixed summation order.
pub fn aggregate(per_anchor: Vec<AnchorStats>, temperature: f64, n_neg: usize) -> BatchGradStats {
    let k = per_anchor.len() as f64;
    let mean = |f: &dyn Fn(&AnchorStats) -> f64| per_anchor.iter().map(f).sum::<f64>() / k;
    BatchGradStats {
        mean_grad_sq: mean(&|a| a.grad_sq),
        mean_alignment: mean(&|a| a.alignment),
        mean_misalignment: mean(&|a| a.misalignment),
        mean_eps_sq: mean(&|a| a.epsilon * a.epsilon),
        temperature,
        n_neg,
        per_anchor,
    }
}

/// `L_i` evaluated with `query` in place of `z_i` (candidates held fixed).
pub fn query_loss(batch: &EmbeddingBatch, anchor: usize, query: ArrayView1<'_, f64>, temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    let p = batch.positive(anchor)?;
    let z = batch.rows();
    let mut logits = Vec::with_capacity(batch.n() - 1);
    let mut pos_logit = 0.0;
    for k in 0..batch.n() {
        if k == anchor {
            continue;
        }
        let l = query.dot(&z.row(k)) / temperature;
        if k == p {
            pos_logit = l;
        }
        logits.push(l);
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    Ok(lse - pos_logit)
}

/// `L_i` at the anchor's own embedding.
pub fn anchor_loss(batch: &EmbeddingBatch, anchor: usize, temperature: f64) -> Result<f64> {
    query_loss(batch, anchor, batch.row(anchor), temperature)
}
