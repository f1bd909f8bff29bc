//! Temperature scaling of the batch-mean squared gradient.
//!
//! One set of batches at fixed geometry is evaluated at every temperature, and
//! `log γ̄` is regressed on `log(1/τ)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::common::paired_batch;
use super::ols::ols;
use super::{check_batch_rows, check_count, mean, Cell, Check, ExperimentKind, ExperimentReport};
use crate::embedding::{SpectralSampler, SpectrumSpec};
use crate::error::Result;
use crate::infonce::{batch_grad_stats_with_gram, check_temperature};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub n: usize,
    pub d: usize,
    pub lambda1: f64,
    pub cosine: f64,
    pub temperatures: Vec<f64>,
    pub batches: usize,
    pub slope_min: f64,
    pub slope_max: f64,
    pub min_r_squared: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            n: 256,
            d: 1024,
            lambda1: 0.3,
            cosine: 0.75,
            temperatures: vec![0.04, 10f64.powf(-1.2), 0.10, 0.15, 0.20],
            batches: 500,
            slope_min: 1.95,
            slope_max: 2.10,
            min_r_squared: 0.99,
        }
    }
}

pub const COLUMNS: [&str; 7] = ["tau_index", "tau", "batch", "gamma_bar", "mean_eps_sq", "mean_misalignment", "sigma_hat"];

pub fn run(mut p: Params, seed: u64, full: bool) -> Result<ExperimentReport> {
    if full {
        p.batches = 5000;
    }
    check_batch_rows(p.n)?;
    check_count("batches", p.batches)?;
    if p.temperatures.len() < 2 {
        return Err(crate::Error::param("temperatures", p.temperatures.len() as f64, "need at least two"));
    }
    for &t in &p.temperatures {
        check_temperature(t)?;
    }
    let sampler = SpectralSampler::new(&SpectrumSpec::spiked(p.lambda1, p.d, rng::derive_seed(seed, 0))?)?;

    let per_batch: Vec<Vec<Vec<Cell>>> = (0..p.batches)
        .into_par_iter()
        .map(|b| {
            let batch = paired_batch(&sampler, p.n, p.cosine, b as u64)?;
            let z = batch.rows();
            let gram = z.dot(&z.t());
            let sigma_hat = crate::spectrum::AnchorSpectra::from_row_gram(&gram).sigma_hat();
            p.temperatures
                .iter()
                .enumerate()
                .map(|(t, &tau)| {
                    let s = batch_grad_stats_with_gram(&batch, &gram, tau)?;
                    Ok(vec![
                        Cell::from(t),
                        tau.into(),
                        b.into(),
                        s.mean_grad_sq.into(),
                        s.mean_eps_sq.into(),
                        s.mean_misalignment.into(),
                        sigma_hat.into(),
                    ])
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<Vec<Cell>> = per_batch.into_iter().flatten().collect();
    rows.sort_by_key(|r| match (&r[0], &r[2]) {
        (Cell::Int(t), Cell::Int(b)) => (*t, *b),
        _ => unreachable!(),
    });

    let mut report = ExperimentReport {
        kind: ExperimentKind::TempSweep,
        columns: COLUMNS.to_vec(),
        rows,
        summary: json!(null),
        checks: Vec::new(),
    };
    summarize(&mut report, &p)?;
    Ok(report)
}

pub fn summarize(report: &mut ExperimentReport, p: &Params) -> Result<()> {
    let (ct, cg, cs) = (
        report.column("tau_index").unwrap(),
        report.column("gamma_bar").unwrap(),
        report.column("sigma_hat").unwrap(),
    );
    let mut means = Vec::new();
    for t in 0..p.temperatures.len() {
        let g: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r[ct].as_f64() == Some(t as f64))
            .map(|r| r[cg].as_f64().unwrap())
            .collect();
        means.push(mean(&g));
    }
    let x: Vec<f64> = p.temperatures.iter().map(|t| (1.0 / t).ln()).collect();
    let y: Vec<f64> = means.iter().map(|g| g.ln()).collect();
    let fit = ols(&x, &y)?;
    let sig: Vec<f64> = report.rows.iter().filter(|r| r[ct].as_f64() == Some(0.0)).map(|r| r[cs].as_f64().unwrap()).collect();
    report.summary = json!({
        "temperatures": p.temperatures,
        "mean_gamma_bar": means,
        "fit": fit,
        "mean_sigma_hat": mean(&sig),
    });
    report.checks = vec![
        Check::within("slope", fit.slope, p.slope_min, p.slope_max),
        Check::at_least("r_squared", fit.r_squared, p.min_r_squared),
    ];
    Ok(())
}
