//! Band coverage as a function of spectral anisotropy.
//!
//! Spectra come from the geometric family `λ_k ∝ r^k`, with `r` solved so the
//! population isotropy deviation `δ = 100 √d ‖Λ − I/d‖_F` hits each target.
//! Results are binned by that population `δ`: the deviation of a single batch
//! with `n < d` rows is dominated by its rank deficit and says little about
//! the spectrum it was drawn from.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::common::{count, paired_batch, prepare};
use super::{check_batch_rows, check_count, Cell, Check, ExperimentKind, ExperimentReport};
use crate::band::BandConfig;
use crate::embedding::{SpectralSampler, SpectrumSpec};
use crate::error::{Error, Result};
use crate::infonce::{batch_grad_stats_with_gram, check_temperature};
use crate::rng;
use crate::spectrum::population_isotropy_deviation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub n: usize,
    pub d: usize,
    pub temperature: f64,
    pub cosine: f64,
    /// Target deviations, in percent.
    pub target_deltas: Vec<f64>,
    pub batches: usize,
    pub band: BandConfig,
    /// Bins with `δ ≤ delta_limit` must keep the out-of-band rate below `max_out_rate`.
    pub delta_limit: f64,
    pub max_out_rate: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            n: 256,
            d: 1024,
            temperature: 0.1,
            cosine: 0.75,
            target_deltas: vec![0.0, 2.0, 4.0, 6.0, 10.0, 20.0, 50.0],
            batches: 500,
            band: BandConfig::default(),
            delta_limit: 6.0,
            max_out_rate: 0.05,
        }
    }
}

/// Normalised geometric spectrum `λ_k ∝ r^k`.
pub fn geometric_spectrum(d: usize, r: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|k| r.powi(k as i32)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    // absorb the last rounding bit so the spectrum sums to one
    let err = 1.0 - v.iter().sum::<f64>();
    v[0] += err;
    v
}

/// Geometric spectrum with population deviation `target` percent.
pub fn spectrum_for_delta(d: usize, target: f64) -> Result<Vec<f64>> {
    if target == 0.0 {
        return Ok(vec![1.0 / d as f64; d]);
    }
    let max = population_isotropy_deviation(&geometric_spectrum(d, 0.0));
    if !(target > 0.0 && target < max) {
        return Err(Error::param("target_delta", target, "outside the reachable range"));
    }
    // δ falls monotonically as r rises to 1
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if population_isotropy_deviation(&geometric_spectrum(d, mid)) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(geometric_spectrum(d, 0.5 * (lo + hi)))
}

pub const COLUMNS: [&str; 10] = [
    "bin",
    "target_delta",
    "population_delta",
    "batch",
    "gamma_bar",
    "sigma_hat",
    "anchors",
    "inside",
    "below",
    "above",
];

pub fn run(mut p: Params, seed: u64, full: bool) -> Result<ExperimentReport> {
    if full {
        p.batches = 5000;
    }
    check_batch_rows(p.n)?;
    check_count("batches", p.batches)?;
    check_count("target_deltas", p.target_deltas.len())?;
    check_temperature(p.temperature)?;
    p.band.validate()?;
    let samplers = p
        .target_deltas
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let ev = spectrum_for_delta(p.d, t)?;
            let delta = population_isotropy_deviation(&ev);
            Ok((SpectralSampler::new(&SpectrumSpec::new(ev, rng::derive_seed(seed, k as u64))?)?, delta))
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..samplers.len()).flat_map(|k| (0..p.batches).map(move |b| (k, b))).collect();

    let rows: Vec<Vec<Cell>> = jobs
        .par_iter()
        .map(|&(k, b)| {
            let (sampler, delta) = &samplers[k];
            let prep = prepare(paired_batch(sampler, p.n, p.cosine, b as u64)?)?;
            let stats = batch_grad_stats_with_gram(&prep.batch, &prep.gram, p.temperature)?;
            let c = count(&stats, &prep.sigmas, &p.band)?;
            Ok(vec![
                Cell::from(k),
                p.target_deltas[k].into(),
                (*delta).into(),
                b.into(),
                stats.mean_grad_sq.into(),
                prep.sigma_hat.into(),
                c.total().into(),
                c.inside.into(),
                c.below.into(),
                c.above.into(),
            ])
        })
        .collect::<Result<_>>()?;

    let mut report = ExperimentReport {
        kind: ExperimentKind::AnisotropyCoverage,
        columns: COLUMNS.to_vec(),
        rows,
        summary: json!(null),
        checks: Vec::new(),
    };
    summarize(&mut report, &p);
    Ok(report)
}

pub fn summarize(report: &mut ExperimentReport, p: &Params) {
    let col = |n: &str| report.column(n).unwrap();
    let (cb, cd, ca, ci, cbl, cab, cs) = (
        col("bin"),
        col("population_delta"),
        col("anchors"),
        col("inside"),
        col("below"),
        col("above"),
        col("sigma_hat"),
    );
    let mut bins = Vec::new();
    let mut worst_in_limit: f64 = 0.0;
    let mut below_total = 0.0;
    for k in 0..p.target_deltas.len() {
        let rs: Vec<&Vec<Cell>> = report.rows.iter().filter(|r| r[cb].as_f64() == Some(k as f64)).collect();
        let sum = |c: usize| rs.iter().map(|r| r[c].as_f64().unwrap()).sum::<f64>();
        let delta = rs[0][cd].as_f64().unwrap();
        let anchors = sum(ca);
        let out = 1.0 - sum(ci) / anchors;
        below_total += sum(cbl);
        if delta <= p.delta_limit + 1e-9 {
            worst_in_limit = worst_in_limit.max(out);
        }
        bins.push(json!({
            "bin": k,
            "target_delta": p.target_deltas[k],
            "population_delta": delta,
            "out_of_band_rate": out,
            "below_rate": sum(cbl) / anchors,
            "above_rate": sum(cab) / anchors,
            "mean_sigma_hat": sum(cs) / rs.len() as f64,
        }));
    }
    report.summary = json!({
        "bins": bins,
        "max_out_rate_within_limit": worst_in_limit,
        "lower_violations": below_total,
    });
    report.checks = vec![
        Check::at_most("out_of_band_rate_within_limit", worst_in_limit, p.max_out_rate),
        Check::at_most("lower_band_violations", below_total, 0.0),
    ];
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_targets_are_hit() {
        for &t in &[2.0, 6.0, 50.0] {
            let ev = spectrum_for_delta(256, t).unwrap();
            assert!((population_isotropy_deviation(&ev) - t).abs() < 1e-9);
            assert!((ev.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(ev.windows(2).all(|w| w[0] >= w[1]));
        }
        assert_eq!(population_isotropy_deviation(&spectrum_for_delta(64, 0.0).unwrap()), 0.0);
        assert!(spectrum_for_delta(16, 1e6).is_err());
    }

    #[test]
    fn small_run() {
        let p = Params {
            n: 32,
            d: 64,
            batches: 3,
            target_deltas: vec![0.0, 20.0],
            ..Default::default()
        };
        let r = run(p, 2, false).unwrap();
        assert_eq!(r.rows.len(), 6);
        assert_eq!(r.check("lower_band_violations").unwrap().value, 0.0);
    }
}
