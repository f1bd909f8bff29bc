//! Lower and upper bands on InfoNCE gradient norms.
//!
//! With `ε` the softmax error, `ρ` the alignment, `S` the sampling term and
//! `σ` a spectral ceiling on the negatives' second moment:
//!
//! ```text
//! LB = (1 − ρ)² / τ²
//! UB = 3/τ² (ε² + ε² S) + 3/τ⁴ ε² σ + 3 c_sm/τ⁶ ε² σ²
//! ```
//!
//! `S = 1/N⁻` for independent negatives. Batch-level bands replace each term by
//! its batch mean.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::infonce::{check_temperature, AnchorStats, BatchGradStats};
use crate::spectrum::sigma_proxy;

pub const CONTAINMENT_REL_TOL: f64 = 1e-9;
const SIGMA_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SamplingTermMode {
    /// `1/N⁻`
    #[default]
    Independent,
    /// `‖z̄ᵢ⁻‖²` measured per anchor
    Empirical,
    /// `1/N⁻ + (N⁻−1)/N⁻ · μ_corr`
    Correlated { mu_corr: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandConfig {
    pub c_sm: f64,
    pub clamp_upper_to_lower: bool,
    pub sampling_term_mode: SamplingTermMode,
}

impl Default for BandConfig {
    fn default() -> Self {
        BandConfig {
            c_sm: 0.5,
            clamp_upper_to_lower: true,
            sampling_term_mode: SamplingTermMode::Independent,
        }
    }
}

impl BandConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_sm >= 0.0) || !self.c_sm.is_finite() {
            return Err(Error::param("c_sm", self.c_sm, "must be finite and >= 0"));
        }
        if let SamplingTermMode::Correlated { mu_corr } = self.sampling_term_mode {
            if !(-1.0..=1.0).contains(&mu_corr) {
                return Err(Error::param("mu_corr", mu_corr, "must lie in [-1, 1]"));
            }
        }
        Ok(())
    }

    fn sampling_factor(&self, n_neg: usize, neg_mean_sq: f64) -> f64 {
        match self.sampling_term_mode {
            SamplingTermMode::Independent => 1.0 / n_neg as f64,
            SamplingTermMode::Empirical => neg_mean_sq,
            SamplingTermMode::Correlated { mu_corr } => correlated_sampling_term(n_neg, mu_corr),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandLevel {
    PerAnchor,
    Batch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandComponents {
    pub softmax_error_term: f64,
    pub sampling_term: f64,
    pub tau4_spectral_term: f64,
    pub tau6_spectral_term: f64,
    /// Upper band before clamping.
    pub raw_upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandEstimate {
    pub lower: f64,
    pub upper: f64,
    pub components: BandComponents,
    pub sigma_used: f64,
    pub level: BandLevel,
}

impl BandEstimate {
    pub fn recompose(&self, temperature: f64) -> f64 {
        let c = &self.components;
        3.0 / (temperature * temperature) * (c.softmax_error_term + c.sampling_term)
            + c.tau4_spectral_term
            + c.tau6_spectral_term
    }
}

/// `(1 − ρ)² / τ²`, taking `1 − ρ` directly.
pub fn lower_band_from_misalignment(misalignment: f64, temperature: f64) -> f64 {
    misalignment * misalignment / (temperature * temperature)
}

pub fn lower_band(alignment: f64, temperature: f64) -> f64 {
    lower_band_from_misalignment(1.0 - alignment, temperature)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if (0.0..=1.0 + SIGMA_SLACK).contains(&sigma) {
        Ok(())
    } else {
        Err(Error::param("sigma", sigma, "must lie in [0, 1]"))
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    lower: f64,
    eps_sq: f64,
    eps_sq_sampling: f64,
    eps_sq_sigma: f64,
    eps_sq_sigma_sq: f64,
    sigma_used: f64,
    tau: f64,
    cfg: &BandConfig,
    level: BandLevel,
) -> BandEstimate {
    let t2 = tau * tau;
    let t4 = t2 * t2;
    let t6 = t4 * t2;
    let tau4 = 3.0 / t4 * eps_sq_sigma;
    let tau6 = 3.0 * cfg.c_sm / t6 * eps_sq_sigma_sq;
    let raw = 3.0 / t2 * (eps_sq + eps_sq_sampling) + tau4 + tau6;
    let upper = if cfg.clamp_upper_to_lower { raw.max(lower) } else { raw };
    BandEstimate {
        lower,
        upper,
        components: BandComponents {
            softmax_error_term: eps_sq,
            sampling_term: eps_sq_sampling,
            tau4_spectral_term: tau4,
            tau6_spectral_term: tau6,
            raw_upper: raw,
        },
        sigma_used,
        level,
    }
}

/// Band for a single anchor with its own σ*⁽ⁱ⁾.
pub fn anchor_band(a: &AnchorStats, sigma: f64, n_neg: usize, temperature: f64, cfg: &BandConfig) -> Result<BandEstimate> {
    check_temperature(temperature)?;
    cfg.validate()?;
    check_sigma(sigma)?;
    let e2 = a.epsilon * a.epsilon;
    let s = cfg.sampling_factor(n_neg, a.neg_mean_sq);
    Ok(assemble(
        lower_band_from_misalignment(a.misalignment, temperature),
        e2,
        e2 * s,
        e2 * sigma,
        e2 * sigma * sigma,
        sigma,
        temperature,
        cfg,
        BandLevel::PerAnchor,
    ))
}

/// Per-anchor bands, `sigmas[k]` matching `stats.per_anchor[k]`'s anchor row.
pub fn per_anchor_bands(stats: &BatchGradStats, sigmas: &[f64], cfg: &BandConfig) -> Result<Vec<BandEstimate>> {
    stats
        .per_anchor
        .iter()
        .map(|a| {
            let s = *sigmas.get(a.anchor).ok_or(Error::IndexOutOfRange {
                index: a.anchor,
                len: sigmas.len(),
            })?;
            anchor_band(a, s, stats.n_neg, stats.temperature, cfg)
        })
        .collect()
}

/// Batch-level band with per-anchor σ*⁽ⁱ⁾ (indexed by anchor row).
pub fn upper_band_exact(stats: &BatchGradStats, per_anchor_sigma: &[f64], temperature: f64, cfg: &BandConfig) -> Result<BandEstimate> {
    check_temperature(temperature)?;
    cfg.validate()?;
    let k = stats.per_anchor.len() as f64;
    let (mut e2, mut samp, mut s1, mut s2, mut sig) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for a in &stats.per_anchor {
        let sigma = *per_anchor_sigma.get(a.anchor).ok_or(Error::IndexOutOfRange {
            index: a.anchor,
            len: per_anchor_sigma.len(),
        })?;
        check_sigma(sigma)?;
        let x = a.epsilon * a.epsilon;
        e2 += x;
        samp += x * cfg.sampling_factor(stats.n_neg, a.neg_mean_sq);
        s1 += x * sigma;
        s2 += x * sigma * sigma;
        sig += sigma;
    }
    Ok(assemble(
        lower_band_from_misalignment(stats.mean_misalignment, temperature),
        e2 / k,
        samp / k,
        s1 / k,
        s2 / k,
        sig / k,
        temperature,
        cfg,
        BandLevel::Batch,
    ))
}

/// Batch-level band with every σ*⁽ⁱ⁾ replaced by `min(1, n/(n−2) σ̂)`.
pub fn upper_band_proxy(stats: &BatchGradStats, lambda_max_batch: f64, n: usize, temperature: f64, cfg: &BandConfig) -> Result<BandEstimate> {
    check_temperature(temperature)?;
    cfg.validate()?;
    if n <= 2 {
        return Err(Error::BatchTooSmall(n));
    }
    check_sigma(lambda_max_batch)?;
    let sigma = sigma_proxy(lambda_max_batch, n);
    let k = stats.per_anchor.len() as f64;
    let e2 = stats.mean_eps_sq;
    let samp = stats
        .per_anchor
        .iter()
        .map(|a| a.epsilon * a.epsilon * cfg.sampling_factor(stats.n_neg, a.neg_mean_sq))
        .sum::<f64>()
        / k;
    Ok(assemble(
        lower_band_from_misalignment(stats.mean_misalignment, temperature),
        e2,
        samp,
        e2 * sigma,
        e2 * sigma * sigma,
        sigma,
        temperature,
        cfg,
        BandLevel::Batch,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceBand {
    pub a_coeff: f64,
    pub b_tau: f64,
    pub bound: f64,
}

/// `A = 3/(N⁻τ⁴)(1 − 1/N⁻)`, `B = ε² + ε²/N⁻`, bound `A σ* + B`.
pub fn variance_band(n: usize, temperature: f64, sigma_star: f64, eps_sq_mean: f64) -> Result<VarianceBand> {
    check_temperature(temperature)?;
    if n <= 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let nn = (n - 2) as f64;
    let t4 = temperature.powi(4);
    let a = 3.0 / (nn * t4) * (1.0 - 1.0 / nn);
    let b = eps_sq_mean + eps_sq_mean / nn;
    Ok(VarianceBand {
        a_coeff: a,
        b_tau: b,
        bound: a * sigma_star + b,
    })
}

/// Ratio of variance bounds at `σ* = 1` and `σ* = 1/d_eff`.
pub fn whitening_ceiling(a_coeff: f64, b_tau: f64, d_eff: f64) -> f64 {
    (a_coeff + b_tau) / (a_coeff / d_eff + b_tau)
}

/// `1/N⁻ + (N⁻−1)/N⁻ · μ_corr`.
pub fn correlated_sampling_term(n_neg: usize, mu_corr: f64) -> f64 {
    let nn = n_neg as f64;
    1.0 / nn + (nn - 1.0) / nn * mu_corr
}

/// Inflation of the sampling term over the independent case, `1 + (N⁻−1) μ_corr`.
pub fn correlation_inflation(n_neg: usize, mu_corr: f64) -> f64 {
    1.0 + (n_neg as f64 - 1.0) * mu_corr
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Containment {
    pub in_rate: f64,
    pub below_rate: f64,
    pub above_rate: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Below,
    Inside,
    Above,
}

/// Where `value` falls relative to `[lower, upper]`, with relative slack.
pub fn classify(value: f64, lower: f64, upper: f64) -> Verdict {
    let tol = |b: f64| CONTAINMENT_REL_TOL * b.abs().max(value.abs());
    if value < lower - tol(lower) {
        Verdict::Below
    } else if value > upper + tol(upper) {
        Verdict::Above
    } else {
        Verdict::Inside
    }
}

/// Fraction of anchors whose `γ_i` lies inside its band.
pub fn containment_check(stats: &BatchGradStats, bands: &[BandEstimate]) -> Result<Containment> {
    if bands.len() != stats.per_anchor.len() {
        return Err(Error::DimensionMismatch {
            expected: stats.per_anchor.len(),
            found: bands.len(),
        });
    }
    let mut c = Containment::default();
    let (mut below, mut above, mut inside) = (0usize, 0usize, 0usize);
    for (a, b) in stats.per_anchor.iter().zip(bands) {
        match classify(a.grad_sq, b.lower, b.upper) {
            Verdict::Below => below += 1,
            Verdict::Above => above += 1,
            Verdict::Inside => inside += 1,
        }
    }
    let k = bands.len();
    if k > 0 {
        let kf = k as f64;
        c.in_rate = inside as f64 / kf;
        c.below_rate = below as f64 / kf;
        c.above_rate = above as f64 / kf;
    }
    c.count = k;
    Ok(c)
}

/// Decomposition `δ_i = A_i + B_i + C_i` and the second-order remainder check.
#[derive(Debug, Clone, PartialEq)]
pub struct RemainderCheck {
    pub a: Array1<f64>,
    pub b: Array1<f64>,
    pub c: Array1<f64>,
    pub c1: Array1<f64>,
    pub c2: Array1<f64>,
    /// `‖C⁽²⁾‖²`
    pub lhs: f64,
    /// `c_sm/τ⁴ · ε² · σ*²`
    pub rhs: f64,
    /// `‖C⁽¹⁾‖²` and its deterministic ceiling `ε² σ*² / τ²`.
    pub c1_sq: f64,
    pub c1_bound: f64,
    pub sigma_star: f64,
}

impl RemainderCheck {
    pub fn ratio(&self) -> f64 {
        if self.rhs > 0.0 {
            self.lhs / self.rhs
        } else if self.lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + CONTAINMENT_REL_TOL)
    }
}

/// Splits `C_i` around the first-order softmax linearisation.
///
/// `q` are the negatives-only softmax weights; `C⁽¹⁾ = ε/(N⁻τ) Σ (s_j − s̄) z_j`
/// is the linear part and `C⁽²⁾ = C − C⁽¹⁾` the remainder.
pub fn remainder_check(
    batch: &EmbeddingBatch,
    anchor: usize,
    temperature: f64,
    sigma_star: f64,
    c_sm: f64,
) -> Result<RemainderCheck> {
    check_temperature(temperature)?;
    check_sigma(sigma_star)?;
    let p = batch.positive(anchor)?;
    let neg = batch.negatives(anchor)?;
    let z = batch.rows();
    let zi = z.row(anchor);
    let d = batch.d();
    let nn = neg.len() as f64;
    let tau = temperature;

    let sims: Vec<f64> = neg.iter().map(|&j| zi.dot(&z.row(j))).collect();
    let s_pos = zi.dot(&z.row(p));
    let q = crate::infonce::softmax(&sims.iter().map(|s| s / tau).collect::<Vec<_>>());
    // ε = Σ_neg e / (e_pos + Σ_neg e), with a shared shift for stability
    let m = sims.iter().copied().fold(s_pos, f64::max) / tau;
    let neg_mass: f64 = sims.iter().map(|s| (s / tau - m).exp()).sum();
    let eps = neg_mass / (neg_mass + (s_pos / tau - m).exp());
    let s_bar = sims.iter().sum::<f64>() / nn;

    let a = z.row(p).mapv(|x| -eps * x);
    let mut zbar = Array1::zeros(d);
    let mut c = Array1::zeros(d);
    let mut c1 = Array1::zeros(d);
    for (k, &j) in neg.iter().enumerate() {
        let zj = z.row(j);
        zbar.scaled_add(1.0 / nn, &zj);
        c.scaled_add(eps * (q[k] - 1.0 / nn), &zj);
        c1.scaled_add(eps / (nn * tau) * (sims[k] - s_bar), &zj);
    }
    let b = zbar.mapv(|x| eps * x);
    let c2 = &c - &c1;
    let lhs = c2.dot(&c2);
    let c1_sq = c1.dot(&c1);
    let e2 = eps * eps;
    Ok(RemainderCheck {
        rhs: c_sm / tau.powi(4) * e2 * sigma_star * sigma_star,
        c1_bound: e2 * sigma_star * sigma_star / (tau * tau),
        a,
        b,
        c,
        c1,
        c2,
        lhs,
        c1_sq,
        sigma_star,
    })
}
