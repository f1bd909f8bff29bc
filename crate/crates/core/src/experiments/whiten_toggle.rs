//! Raw/whitened alternation on a stationary synthetic stream.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{mean, Cell, Check, ExperimentKind, ExperimentReport};
use crate::band::{variance_band, whitening_ceiling};
use crate::error::Result;
use crate::whitening::{alternation_run, sample_variance, Regime, StreamConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub stream: StreamConfig,
    /// Whitened-regime mean σ̂ must stay below `sigma_factor / d`.
    pub sigma_factor: f64,
    pub min_ratio: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            stream: StreamConfig::default(),
            sigma_factor: 2.0,
            min_ratio: 1.2,
        }
    }
}

pub const COLUMNS: [&str; 7] = ["step", "regime", "block", "sigma_hat", "gamma_bar", "mean_eps_sq", "rolling_var"];

/// The stream seed is the master seed; `full` has no effect (the protocol has
/// no Monte-Carlo count to scale).
pub fn run(mut p: Params, seed: u64, _full: bool) -> Result<ExperimentReport> {
    p.stream.seed = seed;
    let r = alternation_run(&p.stream)?;
    let rows = r
        .steps
        .iter()
        .map(|s| {
            vec![
                Cell::from(s.step),
                Cell::from(match s.regime {
                    Regime::Raw => "raw",
                    Regime::Whitened => "whitened",
                }),
                Cell::from(s.step / p.stream.regime_len),
                s.sigma_hat.into(),
                s.gamma_bar.into(),
                s.mean_eps_sq.into(),
                s.rolling_var.into(),
            ]
        })
        .collect();
    let mut report = ExperimentReport {
        kind: ExperimentKind::WhitenToggle,
        columns: COLUMNS.to_vec(),
        rows,
        summary: json!(null),
        checks: Vec::new(),
    };
    summarize(&mut report, &p)?;
    Ok(report)
}

pub fn summarize(report: &mut ExperimentReport, p: &Params) -> Result<()> {
    let col = |n: &str| report.column(n).unwrap();
    let (cr, cs, cg, ce, cv) = (col("regime"), col("sigma_hat"), col("gamma_bar"), col("mean_eps_sq"), col("rolling_var"));
    let pick = |regime: &str, c: usize| -> Vec<f64> {
        report
            .rows
            .iter()
            .filter(|r| r[cr] == Cell::Text(regime.into()))
            .filter_map(|r| r[c].as_f64())
            .collect()
    };
    let raw_var = mean(&pick("raw", cv));
    let white_var = mean(&pick("whitened", cv));
    let ratio = raw_var / white_var;
    let raw_sigma = mean(&pick("raw", cs));
    let white_sigma = mean(&pick("whitened", cs));
    let vb = variance_band(p.stream.n, p.stream.temperature, 1.0, mean(&pick("raw", ce)))?;
    let ceiling = whitening_ceiling(vb.a_coeff, vb.b_tau, p.stream.d as f64);
    let d = p.stream.d as f64;
    report.summary = json!({
        "raw_var_mean": raw_var,
        "whitened_var_mean": white_var,
        "variance_ratio": ratio,
        "raw_sigma_mean": raw_sigma,
        "whitened_sigma_mean": white_sigma,
        "a_coeff": vb.a_coeff,
        "b_tau": vb.b_tau,
        "ceiling": ceiling,
        "raw_gamma_var": sample_variance(&pick("raw", cg)),
        "whitened_gamma_var": sample_variance(&pick("whitened", cg)),
    });
    report.checks = vec![
        Check::at_most("whitened_sigma_hat", white_sigma, p.sigma_factor / d),
        Check::at_least("variance_ratio", ratio, p.min_ratio),
        Check::at_most("ratio_below_ceiling", ratio, ceiling),
    ];
    Ok(())
}
