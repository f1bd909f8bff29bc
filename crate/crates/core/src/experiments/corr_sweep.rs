//! Band containment and the sampling term under correlated negatives.
//!
//! Batches come from the shared-component model: every row carries `√α u` for a
//! direction `u` common to the batch. Pairwise inner products then sit near `α`,
//! which inflates `E‖z̄ᵢ⁻‖²` over the independent `1/N⁻`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::common::{count, prepare};
use super::{check_count, Cell, Check, ExperimentKind, ExperimentReport};
use crate::band::{correlated_sampling_term, BandConfig, SamplingTermMode};
use crate::embedding::{synth_correlated_pairs, CorrelationSpec, EmbeddingBatch};
use crate::error::Result;
use crate::infonce::{batch_grad_stats_with_gram, check_temperature};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub d: usize,
    pub alphas: Vec<f64>,
    pub n_negs: Vec<usize>,
    pub temperature: f64,
    pub cosine: f64,
    /// Batches per point for the sampling-term estimate.
    pub batches: usize,
    /// Leading batches per point that also get the full band evaluation.
    pub containment_batches: usize,
    pub c_sm: f64,
    /// Containment is checked for `α ≤ alpha_limit`.
    pub alpha_limit: f64,
    pub min_containment: f64,
    pub max_rel_error: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            d: 256,
            alphas: vec![0.0, 0.005, 0.01, 0.02, 0.05, 0.1],
            n_negs: vec![62, 254, 1022],
            temperature: 0.1,
            cosine: 0.75,
            batches: 500,
            containment_batches: 100,
            c_sm: 0.5,
            alpha_limit: 0.02,
            min_containment: 0.95,
            max_rel_error: 0.10,
        }
    }
}

/// Expected mean inner product over a negative set of size `N⁻`.
///
/// Removing an anchor and its positive leaves whole pairs, so `N⁻` of the
/// `N⁻(N⁻−1)` ordered pairs are positive pairs with inner product
/// `≈ α + (1−α)c`; the rest sit at `≈ α`.
pub fn predicted_mu(alpha: f64, cosine: f64, n_neg: usize) -> f64 {
    let pair = alpha + (1.0 - alpha) * cosine;
    alpha + (pair - alpha) / (n_neg as f64 - 1.0)
}

/// Predicted `E‖z̄ᵢ⁻‖²`.
pub fn predicted_sampling_term(alpha: f64, cosine: f64, n_neg: usize) -> f64 {
    correlated_sampling_term(n_neg, predicted_mu(alpha, cosine, n_neg))
}

/// Mean over anchors of `‖z̄ᵢ⁻‖²`, from the row sum in `O(n d)`.
pub fn mean_neg_mean_sq(batch: &EmbeddingBatch) -> Result<f64> {
    let z = batch.rows();
    let total = z.sum_axis(ndarray::Axis(0));
    let nn = batch.n_neg() as f64;
    let mut acc = 0.0;
    for i in 0..batch.n() {
        let p = batch.positive(i)?;
        let v = (&total - &z.row(i) - &z.row(p)) / nn;
        acc += v.dot(&v);
    }
    Ok(acc / batch.n() as f64)
}

pub const COLUMNS: [&str; 12] = [
    "point",
    "alpha",
    "n_neg",
    "batch",
    "seed",
    "neg_mean_sq",
    "predicted",
    "anchors",
    "inside_independent",
    "above_independent",
    "inside_correlated",
    "below",
];

pub fn run(mut p: Params, seed: u64, full: bool) -> Result<ExperimentReport> {
    if full {
        p.batches = 5000;
        p.containment_batches = 1000;
    }
    check_count("batches", p.batches)?;
    check_count("alphas", p.alphas.len())?;
    check_count("n_negs", p.n_negs.len())?;
    check_temperature(p.temperature)?;
    for &a in &p.alphas {
        CorrelationSpec::new(a, 0)?;
    }
    for &nn in &p.n_negs {
        if nn < 2 || nn % 2 != 0 {
            return Err(crate::Error::param("n_neg", nn as f64, "must be even and at least 2"));
        }
    }

    let points: Vec<(usize, f64, usize)> = p
        .alphas
        .iter()
        .flat_map(|&a| p.n_negs.iter().map(move |&nn| (a, nn)))
        .enumerate()
        .map(|(k, (a, nn))| (k, a, nn))
        .collect();
    let jobs: Vec<(usize, usize)> = points.iter().flat_map(|&(k, _, _)| (0..p.batches).map(move |b| (k, b))).collect();

    let rows: Vec<Vec<Cell>> = jobs
        .par_iter()
        .map(|&(k, b)| {
            let (_, alpha, nn) = points[k];
            let s = rng::derive_path(seed, &[k as u64, b as u64]);
            let m = (nn + 2) / 2;
            let batch = synth_correlated_pairs(&CorrelationSpec::new(alpha, s)?, m, p.d, p.cosine)?;
            let measured = mean_neg_mean_sq(&batch)?;
            let predicted = predicted_sampling_term(alpha, p.cosine, nn);
            let mut row = vec![
                Cell::from(k),
                alpha.into(),
                nn.into(),
                b.into(),
                s.into(),
                measured.into(),
                predicted.into(),
            ];
            if b < p.containment_batches {
                let prep = prepare(batch)?;
                let stats = batch_grad_stats_with_gram(&prep.batch, &prep.gram, p.temperature)?;
                let indep = BandConfig {
                    c_sm: p.c_sm,
                    sampling_term_mode: SamplingTermMode::Independent,
                    ..Default::default()
                };
                let corr = BandConfig {
                    sampling_term_mode: SamplingTermMode::Correlated {
                        mu_corr: predicted_mu(alpha, p.cosine, nn),
                    },
                    ..indep
                };
                let ci = count(&stats, &prep.sigmas, &indep)?;
                let cc = count(&stats, &prep.sigmas, &corr)?;
                row.extend([
                    Cell::from(ci.total()),
                    ci.inside.into(),
                    ci.above.into(),
                    cc.inside.into(),
                    (ci.below.max(cc.below)).into(),
                ]);
            } else {
                row.extend(std::iter::repeat_n(Cell::Empty, 5));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut report = ExperimentReport {
        kind: ExperimentKind::CorrSweep,
        columns: COLUMNS.to_vec(),
        rows,
        summary: json!(null),
        checks: Vec::new(),
    };
    summarize(&mut report, &p, &points);
    Ok(report)
}

fn summarize(report: &mut ExperimentReport, p: &Params, points: &[(usize, f64, usize)]) {
    let col = |n: &str| report.column(n).unwrap();
    let (cp, cm, cpr, ca, cii, cic, cb) = (
        col("point"),
        col("neg_mean_sq"),
        col("predicted"),
        col("anchors"),
        col("inside_independent"),
        col("inside_correlated"),
        col("below"),
    );
    let mut out = Vec::new();
    let mut worst_rel: f64 = 0.0;
    let mut min_corr = f64::INFINITY;
    let mut below = 0.0;
    for &(k, alpha, nn) in points {
        let rs: Vec<&Vec<Cell>> = report.rows.iter().filter(|r| r[cp].as_f64() == Some(k as f64)).collect();
        let sum = |c: usize| rs.iter().filter_map(|r| r[c].as_f64()).sum::<f64>();
        let measured = sum(cm) / rs.len() as f64;
        let predicted = rs[0][cpr].as_f64().unwrap();
        let rel = (measured - predicted).abs() / predicted;
        let anchors = sum(ca);
        let rate_i = sum(cii) / anchors;
        let rate_c = sum(cic) / anchors;
        below += sum(cb);
        worst_rel = worst_rel.max(rel);
        if alpha <= p.alpha_limit {
            min_corr = min_corr.min(rate_c);
        }
        out.push(json!({
            "point": k,
            "alpha": alpha,
            "n_neg": nn,
            "measured_neg_mean_sq": measured,
            "predicted_neg_mean_sq": predicted,
            "independent_term": 1.0 / nn as f64,
            "relative_error": rel,
            "containment_independent": rate_i,
            "containment_correlated": rate_c,
        }));
    }
    report.summary = json!({
        "points": out,
        "max_relative_error": worst_rel,
        "min_correlated_containment_up_to_limit": min_corr,
        "lower_violations": below,
    });
    report.checks = vec![
        Check::at_least("correlated_containment_up_to_limit", min_corr, p.min_containment),
        Check::at_most("sampling_term_relative_error", worst_rel, p.max_rel_error),
        Check::at_most("lower_band_violations", below, 0.0),
    ];
}
