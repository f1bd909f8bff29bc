//! In-batch whitening and the raw/whitened alternation protocol.
//!
//! A batch is whitened with the ridge inverse square root of its second moment,
//! `ẑ = (Σ̂ + εI)^{-1/2} z`, then projected back to the sphere. Renormalisation
//! makes the map nonlinear, so the output moment is close to `I/d` but not equal.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::band::{variance_band, whitening_ceiling};
use crate::embedding::{attach_positives, EmbeddingBatch, SpectralSampler, SpectrumSpec};
use crate::error::{Error, Result};
use crate::infonce::batch_grad_stats;
use crate::linalg::{col_gram, jacobi_eigen, sym_eigen};
use crate::rng::{self, label};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WhitenConfig {
    pub ridge_epsilon: f64,
    pub renormalize: bool,
}

impl Default for WhitenConfig {
    fn default() -> Self {
        WhitenConfig {
            ridge_epsilon: 1e-5,
            renormalize: true,
        }
    }
}

impl WhitenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge_epsilon > 0.0 && self.ridge_epsilon.is_finite()) {
            return Err(Error::param("ridge_epsilon", self.ridge_epsilon, "must be positive"));
        }
        Ok(())
    }
}

/// Sweep cap for the Jacobi solver on a `d × d` moment.
pub fn max_sweeps(d: usize) -> usize {
    30 * d * d
}

/// `(1/n) Zᵀ Z`.
pub fn moment(z: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut m = col_gram(z);
    m /= z.nrows() as f64;
    m
}

/// `(M + εI)^{-1/2}` through a Jacobi eigendecomposition of `M`.
pub fn ridge_inverse_sqrt(m: &Array2<f64>, epsilon: f64) -> Result<Array2<f64>> {
    let d = m.nrows();
    let eig = jacobi_eigen(m, max_sweeps(d))?;
    // tiny negative eigenvalues from rounding are clamped before the ridge
    Ok(eig.reconstruct_with(|l| 1.0 / (l.max(0.0) + epsilon).sqrt()))
}

/// Whitened rows without renormalisation.
pub fn whiten_rows(z: ArrayView2<'_, f64>, epsilon: f64) -> Result<Array2<f64>> {
    if z.nrows() < 2 {
        return Err(Error::BatchTooSmall(z.nrows()));
    }
    let w = ridge_inverse_sqrt(&moment(z), epsilon)?;
    // W is symmetric, so row-wise W z_i is Z W
    Ok(z.dot(&w))
}

/// Whitens a batch and, by default, renormalises every row. The pairing is kept.
///
/// With `renormalize` off the rows leave the sphere; the result then skips the
/// unit-norm check and is only meant for inspecting the linear map.
pub fn whiten_batch(batch: &EmbeddingBatch, cfg: &WhitenConfig) -> Result<EmbeddingBatch> {
    cfg.validate()?;
    let mut rows = whiten_rows(batch.rows(), cfg.ridge_epsilon)?;
    if cfg.renormalize {
        for mut r in rows.outer_iter_mut() {
            let norm = r.dot(&r).sqrt();
            if norm > 0.0 {
                r /= norm;
            }
        }
    }
    Ok(EmbeddingBatch::new_unchecked(rows, batch.positive_of().to_vec()))
}

/// `λ_max((1/n) Zᵀ Z)` from a full eigendecomposition, which stays accurate
/// when the spectrum is nearly flat.
pub fn sigma_hat(batch: &EmbeddingBatch) -> f64 {
    sym_eigen(&moment(batch.rows())).values[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Raw,
    Whitened,
}

/// Stationary synthetic stream for the alternation protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamConfig {
    pub d: usize,
    /// Rows per batch, anchors plus positives.
    pub n: usize,
    pub lambda1: f64,
    pub temperature: f64,
    pub cosine: f64,
    /// Consecutive batches per regime.
    pub regime_len: usize,
    /// Raw/whitened cycles.
    pub cycles: usize,
    pub window: usize,
    pub whiten: WhitenConfig,
    pub seed: u64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            d: 64,
            n: 512,
            lambda1: 0.1,
            temperature: 0.2,
            cosine: 0.75,
            regime_len: 100,
            cycles: 3,
            window: 50,
            whiten: WhitenConfig::default(),
            seed: 0,
        }
    }
}

impl StreamConfig {
    pub fn isotropic(d: usize, n: usize) -> Self {
        StreamConfig {
            d,
            n,
            lambda1: 1.0 / d as f64,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::param("window", self.window as f64, "needs at least 2 steps"));
        }
        if self.window > self.regime_len {
            return Err(Error::WindowTooLong {
                window: self.window,
                regime: self.regime_len,
            });
        }
        if self.cycles == 0 {
            return Err(Error::param("cycles", 0.0, "must be at least 1"));
        }
        if self.n % 2 != 0 || self.n < 6 {
            return Err(Error::param("n", self.n as f64, "must be even and at least 6"));
        }
        self.whiten.validate()
    }

    pub fn spectrum(&self) -> Result<SpectrumSpec> {
        SpectrumSpec::spiked(self.lambda1, self.d, self.seed)
    }

    pub fn steps(&self) -> usize {
        2 * self.regime_len * self.cycles
    }

    pub fn regime_at(&self, step: usize) -> Regime {
        if (step / self.regime_len) % 2 == 0 {
            Regime::Raw
        } else {
            Regime::Whitened
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlternationStep {
    pub step: usize,
    pub regime: Regime,
    pub sigma_hat: f64,
    /// Batch-mean squared gradient.
    pub gamma_bar: f64,
    pub mean_eps_sq: f64,
    /// Variance of `γ̄` over the trailing `window` steps of the same regime block.
    pub rolling_var: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternationReport {
    pub steps: Vec<AlternationStep>,
    pub raw_var_mean: f64,
    pub whitened_var_mean: f64,
    /// raw / whitened.
    pub variance_ratio: f64,
    pub raw_sigma_mean: f64,
    pub whitened_sigma_mean: f64,
    pub a_coeff: f64,
    /// `B_τ` from the raw regime's mean `ε²`.
    pub b_tau: f64,
    /// `(A + B)/(A/d + B)`.
    pub ceiling: f64,
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    s / c as f64
}

fn run_step(cfg: &StreamConfig, sampler: &SpectralSampler, step: usize) -> Result<AlternationStep> {
    let anchors = sampler.sample(cfg.n / 2, step as u64)?;
    let pos_seed = rng::derive_path(cfg.seed, &[label::POSITIVES, step as u64]);
    let mut batch = attach_positives(&anchors, cfg.cosine, pos_seed)?;
    let regime = cfg.regime_at(step);
    if regime == Regime::Whitened {
        batch = whiten_batch(&batch, &cfg.whiten)?;
    }
    let stats = batch_grad_stats(&batch, cfg.temperature)?;
    Ok(AlternationStep {
        step,
        regime,
        sigma_hat: sigma_hat(&batch),
        gamma_bar: stats.mean_grad_sq,
        mean_eps_sq: stats.mean_eps_sq,
        rolling_var: None,
    })
}

/// Runs `cycles` blocks of `regime_len` raw batches followed by `regime_len`
/// whitened ones. Batches are independent draws, so they are computed in
/// parallel; the rolling variances are filled in afterwards in step order.
pub fn alternation_run(cfg: &StreamConfig) -> Result<AlternationReport> {
    cfg.validate()?;
    let sampler = SpectralSampler::new(&cfg.spectrum()?)?;
    let mut steps = (0..cfg.steps())
        .into_par_iter()
        .map(|t| run_step(cfg, &sampler, t))
        .collect::<Result<Vec<_>>>()?;

    for t in 0..steps.len() {
        let offset = t % cfg.regime_len;
        if offset + 1 >= cfg.window {
            let g: Vec<f64> = steps[t + 1 - cfg.window..=t].iter().map(|s| s.gamma_bar).collect();
            steps[t].rolling_var = Some(sample_variance(&g));
        }
    }

    let regime_mean = |r: Regime, f: &dyn Fn(&AlternationStep) -> Option<f64>| {
        mean(steps.iter().filter(|s| s.regime == r).filter_map(f))
    };
    let raw_var_mean = regime_mean(Regime::Raw, &|s| s.rolling_var);
    let whitened_var_mean = regime_mean(Regime::Whitened, &|s| s.rolling_var);
    let raw_sigma_mean = regime_mean(Regime::Raw, &|s| Some(s.sigma_hat));
    let whitened_sigma_mean = regime_mean(Regime::Whitened, &|s| Some(s.sigma_hat));
    let raw_eps_sq = regime_mean(Regime::Raw, &|s| Some(s.mean_eps_sq));

    let vb = variance_band(cfg.n, cfg.temperature, 1.0, raw_eps_sq)?;
    Ok(AlternationReport {
        raw_var_mean,
        whitened_var_mean,
        variance_ratio: raw_var_mean / whitened_var_mean,
        raw_sigma_mean,
        whitened_sigma_mean,
        a_coeff: vb.a_coeff,
        b_tau: vb.b_tau,
        ceiling: whitening_ceiling(vb.a_coeff, vb.b_tau, cfg.d as f64),
        steps,
    })
}
