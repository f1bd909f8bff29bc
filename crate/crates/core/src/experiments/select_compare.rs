//! Batch selection methods compared on shared candidate stores.
//!
//! Each trial draws one candidate store. The pool policies choose among
//! `pool_size` random subsets of it, the greedy builders grow batches from the
//! whole store, and `random` is the first pool entry.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_count, mean, Cell, Check, ExperimentKind, ExperimentReport};
use crate::embedding::{EmbeddingBatch, SpectralSampler, SpectrumSpec};
use crate::error::{Error, Result};
use crate::rng;
use crate::selection::{greedy_build, pick_batch, random_subset, GreedyOptions, PoolPolicy};
use crate::spectrum::{effective_rank_rows, AnchorSpectra};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub d: usize,
    /// Candidate embeddings per trial.
    pub store_size: usize,
    /// Rows per selected batch.
    pub n: usize,
    pub pool_size: usize,
    pub trials: usize,
    /// Spike of the store's spectrum.
    pub lambda1: f64,
    pub greedy_m: Vec<usize>,
    /// History length for P3's running percentiles.
    pub percentile_window: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            d: 128,
            store_size: 2048,
            n: 64,
            pool_size: 8,
            trials: 100,
            lambda1: 0.2,
            greedy_m: vec![16, 64, 256],
            percentile_window: 100,
        }
    }
}

pub const COLUMNS: [&str; 5] = ["trial", "method", "r_eff", "sigma_hat", "pool_index"];

struct Trial {
    pool_ranks: Vec<f64>,
    pool: Vec<EmbeddingBatch>,
    methods: Vec<(String, f64, f64)>,
}

fn store(p: &Params, seed: u64, trial: usize) -> Result<EmbeddingBatch> {
    let spec = SpectrumSpec::spiked(p.lambda1, p.d, rng::derive_path(seed, &[trial as u64]))?;
    SpectralSampler::new(&spec)?.sample(p.store_size, 0)
}

fn summary_of(b: &EmbeddingBatch) -> (f64, f64) {
    (effective_rank_rows(b.rows()), AnchorSpectra::new(b).sigma_hat())
}

pub fn run(mut p: Params, seed: u64, full: bool) -> Result<ExperimentReport> {
    if full {
        p.trials *= 10;
    }
    check_count("trials", p.trials)?;
    check_count("pool_size", p.pool_size)?;
    if p.n < 3 || p.store_size < p.n {
        return Err(Error::StoreExhausted {
            needed: p.n.max(3),
            available: p.store_size,
        });
    }
    let window = (1.0, p.n.min(p.d) as f64);

    let trials: Vec<Trial> = (0..p.trials)
        .into_par_iter()
        .map(|t| {
            let s = store(&p, seed, t)?;
            let pool = (0..p.pool_size)
                .map(|k| random_subset(&s, p.n, rng::derive_path(seed, &[t as u64, 1, k as u64])))
                .collect::<Result<Vec<_>>>()?;
            let pool_ranks = pool.iter().map(|b| effective_rank_rows(b.rows())).collect();
            let mut methods = Vec::new();
            let (r, sg) = summary_of(&pool[0]);
            methods.push(("random".to_string(), r, sg));
            for &m in &p.greedy_m {
                let g = greedy_build(&s, p.n, m, window, rng::derive_path(seed, &[t as u64, 2, m as u64]), GreedyOptions::default())?;
                let (r, sg) = summary_of(&g.batch);
                methods.push((format!("greedy_{m}"), r, sg));
            }
            Ok(Trial {
                pool_ranks,
                pool,
                methods,
            })
        })
        .collect::<Result<_>>()?;

    // P3's target depends on earlier trials, so the picks run in trial order
    let mut p3 = PoolPolicy::p3(1.0).with_window(p.percentile_window);
    let mut rows = Vec::new();
    for (t, tr) in trials.iter().enumerate() {
        for &r in &tr.pool_ranks {
            p3.observe(r);
        }
        for (name, policy) in [("p1", PoolPolicy::p1()), ("p2", PoolPolicy::p2()), ("p3", p3.clone())] {
            let pick = pick_batch(&tr.pool, &policy)?;
            let (_, sg) = summary_of(&tr.pool[pick.index]);
            rows.push(vec![Cell::from(t), Cell::from(name), pick.chosen_rank.into(), sg.into(), pick.index.into()]);
        }
        for (name, r, sg) in &tr.methods {
            let idx = if name == "random" { Some(0usize) } else { None };
            rows.push(vec![Cell::from(t), Cell::from(name.as_str()), (*r).into(), (*sg).into(), idx.into()]);
        }
    }

    let mut report = ExperimentReport {
        kind: ExperimentKind::SelectCompare,
        columns: COLUMNS.to_vec(),
        rows,
        summary: json!(null),
        checks: Vec::new(),
    };
    summarize(&mut report, &p);
    Ok(report)
}

pub fn summarize(report: &mut ExperimentReport, p: &Params) {
    let (cm, cr, cs) = (
        report.column("method").unwrap(),
        report.column("r_eff").unwrap(),
        report.column("sigma_hat").unwrap(),
    );
    let mut names = vec!["random".to_string(), "p1".into(), "p2".into(), "p3".into()];
    names.extend(p.greedy_m.iter().map(|m| format!("greedy_{m}")));
    let values = |name: &str, c: usize| -> Vec<f64> {
        report
            .rows
            .iter()
            .filter(|r| r[cm] == Cell::Text(name.into()))
            .map(|r| r[c].as_f64().unwrap())
            .collect()
    };
    let mut methods = serde_json::Map::new();
    for n in &names {
        let r = values(n, cr);
        let s = values(n, cs);
        methods.insert(
            n.clone(),
            json!({
                "mean_r_eff": mean(&r),
                "mean_sigma_hat": mean(&s),
                "min_r_eff": r.iter().copied().fold(f64::INFINITY, f64::min),
                "max_r_eff": r.iter().copied().fold(0.0, f64::max),
            }),
        );
    }
    let m = |n: &str| mean(&values(n, cr));
    let p1 = values("p1", cr);
    let p2 = values("p2", cr);
    let per_pool_violations = p1.iter().zip(&p2).filter(|(a, b)| a < b).count();

    let mut greedy_sorted = p.greedy_m.clone();
    greedy_sorted.sort_unstable();
    let greedy_means: Vec<f64> = greedy_sorted.iter().map(|g| m(&format!("greedy_{g}"))).collect();
    let greedy_monotone = greedy_means.windows(2).all(|w| w[1] >= w[0]);

    report.summary = json!({
        "methods": methods,
        "p1_lt_p2_pools": per_pool_violations,
        "greedy_m_sorted": greedy_sorted,
        "greedy_mean_r_eff": greedy_means,
    });
    report.checks = vec![
        Check {
            name: "p1_ge_p3_ge_p2".into(),
            passed: m("p1") >= m("p3") && m("p3") >= m("p2"),
            value: m("p3"),
            detail: format!("p1 {:.4} >= p3 {:.4} >= p2 {:.4}", m("p1"), m("p3"), m("p2")),
        },
        Check::at_most("p1_below_p2_pools", per_pool_violations as f64, 0.0),
        Check {
            name: "greedy_monotone_in_m".into(),
            passed: greedy_monotone,
            value: greedy_means.last().copied().unwrap_or(f64::NAN),
            detail: format!("mean R_eff by m {greedy_sorted:?}: {greedy_means:?}"),
        },
    ];
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn small_run_orders() {
        let p = Params {
            d: 32,
            store_size: 256,
            n: 16,
            trials: 12,
            greedy_m: vec![2, 16, 64],
            ..Default::default()
        };
        let r = run(p, 5, false).unwrap();
        assert_eq!(r.rows.len(), 12 * 7);
        assert!(r.check("p1_below_p2_pools").unwrap().passed);
        assert!(r.check("p1_ge_p3_ge_p2").unwrap().passed);
    }

    #[test]
    fn identical_candidates_tie() {
        // a store of one repeated row: every method returns a rank-one batch
        let mut rows = Array2::zeros((40, 6));
        rows.column_mut(2).fill(1.0);
        let s = EmbeddingBatch::from_rows(rows).unwrap();
        let pool: Vec<EmbeddingBatch> = (0..4).map(|k| random_subset(&s, 8, k).unwrap()).collect();
        for pol in [PoolPolicy::p1(), PoolPolicy::p2(), PoolPolicy::p3(1.0)] {
            assert_eq!(pick_batch(&pool, &pol).unwrap().chosen_rank, 1.0);
        }
        for m in [1, 4, 16] {
            let g = greedy_build(&s, 8, m, (1.0, 6.0), 1, GreedyOptions::default()).unwrap();
            assert_eq!(effective_rank_rows(g.batch.rows()), 1.0);
        }
    }
}
