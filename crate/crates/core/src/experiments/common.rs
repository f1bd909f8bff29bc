//! Per-batch pipeline shared by the band experiments.

use ndarray::Array2;

use super::effective_rank_from_gram;
use crate::band::{classify, per_anchor_bands, upper_band_exact, upper_band_proxy, BandConfig, Verdict};
use crate::embedding::{attach_positives, EmbeddingBatch, SpectralSampler};
use crate::error::Result;
use crate::infonce::{batch_grad_stats_with_gram, BatchGradStats};
use crate::rng::{self, label};
use crate::spectrum::AnchorSpectra;

/// A paired batch with the spectral quantities every temperature reuses.
pub(crate) struct Prepared {
    pub batch: EmbeddingBatch,
    pub gram: Array2<f64>,
    pub sigmas: Vec<f64>,
    pub sigma_hat: f64,
    pub r_eff: f64,
}

/// `m = n/2` anchors from `sampler` (batch `index`) plus positives at `cosine`.
pub(crate) fn paired_batch(sampler: &SpectralSampler, n: usize, cosine: f64, index: u64) -> Result<EmbeddingBatch> {
    let anchors = sampler.sample(n / 2, index)?;
    let seed = rng::derive_path(sampler.spec().seed, &[label::POSITIVES, index]);
    attach_positives(&anchors, cosine, seed)
}

pub(crate) fn prepare(batch: EmbeddingBatch) -> Result<Prepared> {
    let z = batch.rows();
    let gram = z.dot(&z.t());
    let spectra = if batch.n() <= batch.d() {
        AnchorSpectra::from_row_gram(&gram)
    } else {
        AnchorSpectra::new(&batch)
    };
    let sigmas = spectra.per_anchor(&batch)?;
    let r_eff = effective_rank_from_gram(&gram, batch.d());
    Ok(Prepared {
        sigma_hat: spectra.sigma_hat(),
        sigmas,
        r_eff,
        gram,
        batch,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Counts {
    pub inside: usize,
    pub below: usize,
    pub above: usize,
}

impl Counts {
    pub fn total(&self) -> usize {
        self.inside + self.below + self.above
    }
}

pub(crate) struct Outcome {
    pub stats: BatchGradStats,
    pub counts: Counts,
    pub lower: f64,
    pub upper_exact: f64,
    pub upper_proxy: f64,
}

impl Outcome {
    pub fn batch_inside_exact(&self) -> bool {
        classify(self.stats.mean_grad_sq, self.lower, self.upper_exact) == Verdict::Inside
    }

    pub fn batch_inside_proxy(&self) -> bool {
        classify(self.stats.mean_grad_sq, self.lower, self.upper_proxy) == Verdict::Inside
    }
}

pub(crate) fn count(stats: &BatchGradStats, sigmas: &[f64], cfg: &BandConfig) -> Result<Counts> {
    let bands = per_anchor_bands(stats, sigmas, cfg)?;
    let mut c = Counts::default();
    for (a, b) in stats.per_anchor.iter().zip(&bands) {
        match classify(a.grad_sq, b.lower, b.upper) {
            Verdict::Inside => c.inside += 1,
            Verdict::Below => c.below += 1,
            Verdict::Above => c.above += 1,
        }
    }
    Ok(c)
}

pub(crate) fn evaluate(p: &Prepared, temperature: f64, cfg: &BandConfig) -> Result<Outcome> {
    let stats = batch_grad_stats_with_gram(&p.batch, &p.gram, temperature)?;
    let counts = count(&stats, &p.sigmas, cfg)?;
    let exact = upper_band_exact(&stats, &p.sigmas, temperature, cfg)?;
    let proxy = upper_band_proxy(&stats, p.sigma_hat.min(1.0), p.batch.n(), temperature, cfg)?;
    Ok(Outcome {
        lower: exact.lower,
        upper_exact: exact.upper,
        upper_proxy: proxy.upper,
        counts,
        stats,
    })
}
