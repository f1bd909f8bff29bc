use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::spectrum::effective_rank_rows;

pub const DEFAULT_PERCENTILE_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Highest effective rank.
    P1MaxRank,
    /// Lowest effective rank.
    P2MinRank,
    /// Closest to a target rank.
    P3Balanced,
}

/// Exact order statistics over the last `capacity` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct PercentileWindow {
    capacity: usize,
    values: VecDeque<f64>,
}

impl PercentileWindow {
    pub fn new(capacity: usize) -> Self {
        PercentileWindow {
            capacity: capacity.max(1),
            values: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    pub fn push(&mut self, v: f64) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(v);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Linear-interpolation quantile (R type 7), `None` when empty.
    pub fn quantile(&self, p: f64) -> Option<f64> {
        if self.values.is_empty() {
            return None;
        }
        let mut v: Vec<f64> = self.values.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolPolicy {
    pub kind: PolicyKind,
    /// R★, used by P3 only.
    pub target_rank: f64,
    pub percentile_window: PercentileWindow,
}

impl PoolPolicy {
    pub fn p1() -> Self {
        Self::with_kind(PolicyKind::P1MaxRank, 1.0)
    }

    pub fn p2() -> Self {
        Self::with_kind(PolicyKind::P2MinRank, 1.0)
    }

    pub fn p3(target_rank: f64) -> Self {
        Self::with_kind(PolicyKind::P3Balanced, target_rank)
    }

    pub fn with_kind(kind: PolicyKind, target_rank: f64) -> Self {
        PoolPolicy {
            kind,
            target_rank,
            percentile_window: PercentileWindow::new(DEFAULT_PERCENTILE_WINDOW),
        }
    }

    pub fn with_window(mut self, capacity: usize) -> Self {
        self.percentile_window = PercentileWindow::new(capacity);
        self
    }

    /// Records an observed rank and moves R★ to the midpoint of the running
    /// 10th and 90th percentiles.
    pub fn observe(&mut self, observed_rank: f64) {
        self.percentile_window.push(observed_rank);
        if let (Some(q10), Some(q90)) = (self.percentile_window.quantile(0.1), self.percentile_window.quantile(0.9)) {
            self.target_rank = 0.5 * (q10 + q90);
        }
    }
}

pub fn update_target_rank(policy: &PoolPolicy, observed_rank: f64) -> PoolPolicy {
    let mut p = policy.clone();
    p.observe(observed_rank);
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolPick {
    pub index: usize,
    /// Effective rank of every pool entry.
    pub ranks: Vec<f64>,
    pub chosen_rank: f64,
}

impl PoolPick {
    pub fn batch<'a>(&self, pool: &'a [EmbeddingBatch]) -> &'a EmbeddingBatch {
        &pool[self.index]
    }
}

/// Picks one batch from `pool` according to `policy`; ties go to the lowest index.
pub fn pick_batch(pool: &[EmbeddingBatch], policy: &PoolPolicy) -> Result<PoolPick> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let ranks: Vec<f64> = pool.iter().map(|b| effective_rank_rows(b.rows())).collect();
    if policy.kind == PolicyKind::P3Balanced {
        let cap = pool.iter().map(|b| b.n().min(b.d())).max().unwrap_or(1) as f64;
        let t = policy.target_rank;
        if !(1.0..=cap).contains(&t) {
            return Err(Error::param("target_rank", t, "must lie in [1, min(n, d)]"));
        }
    }
    let score = |r: f64| match policy.kind {
        PolicyKind::P1MaxRank => -r,
        PolicyKind::P2MinRank => r,
        PolicyKind::P3Balanced => (r - policy.target_rank).abs(),
    };
    let mut best = 0;
    for k in 1..ranks.len() {
        if score(ranks[k]) < score(ranks[best]) {
            best = k;
        }
    }
    Ok(PoolPick {
        index: best,
        chosen_rank: ranks[best],
        ranks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{SpectralSampler, SpectrumSpec};
    use crate::rng;
    use crate::spectrum::AnchorSpectra;
    use ndarray::Array2;
    use rand::Rng;

    fn extremal_pool(n: usize, d: usize) -> Vec<EmbeddingBatch> {
        let mut same = Array2::zeros((n, d));
        same.column_mut(0).fill(1.0);
        let mut ortho = Array2::zeros((n, d));
        for i in 0..n {
            ortho[[i, i]] = 1.0;
        }
        vec![EmbeddingBatch::from_rows(same).unwrap(), EmbeddingBatch::from_rows(ortho).unwrap()]
    }

    #[test]
    fn extremal_pair() {
        let pool = extremal_pool(5, 8);
        let p1 = pick_batch(&pool, &PoolPolicy::p1()).unwrap();
        let p2 = pick_batch(&pool, &PoolPolicy::p2()).unwrap();
        assert_eq!((p1.index, p1.chosen_rank), (1, 5.0));
        assert_eq!((p2.index, p2.chosen_rank), (0, 1.0));
        assert_eq!(pick_batch(&pool, &PoolPolicy::p3(1.0)).unwrap().index, 0);
        assert_eq!(pick_batch(&pool, &PoolPolicy::p3(5.0)).unwrap().index, 1);
        assert!(pick_batch(&pool, &PoolPolicy::p3(0.5)).is_err());
        assert!(matches!(pick_batch(&[], &PoolPolicy::p1()), Err(Error::EmptyPool)));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let pool = extremal_pool(4, 6);
        let dup = vec![pool[1].clone(), pool[1].clone(), pool[0].clone()];
        assert_eq!(pick_batch(&dup, &PoolPolicy::p1()).unwrap().index, 0);
        assert_eq!(pick_batch(&dup, &PoolPolicy::p3(2.5)).unwrap().index, 0);
    }

    #[test]
    fn max_rank_tends_to_min_sigma() {
        // pools of 8 batches with varied spikes; count pools where P1's pick has the lowest σ̂
        let (n, d) = (32, 16);
        let mut r = rng::stream(77);
        let mut hits = 0;
        for pool_id in 0..100u64 {
            let pool: Vec<EmbeddingBatch> = (0..8u64)
                .map(|k| {
                    let l1 = r.random_range(1.0 / d as f64..0.5);
                    let spec = SpectrumSpec::spiked(l1, d, rng::derive_path(5, &[pool_id, k])).unwrap();
                    SpectralSampler::new(&spec).unwrap().sample(n, 0).unwrap()
                })
                .collect();
            let pick = pick_batch(&pool, &PoolPolicy::p1()).unwrap();
            let sig: Vec<f64> = pool.iter().map(|b| AnchorSpectra::new(b).sigma_hat()).collect();
            if sig.iter().all(|&s| sig[pick.index] <= s) {
                hits += 1;
            }
        }
        assert!(hits >= 70, "{hits}");
    }

    #[test]
    fn target_rank_tracking() {
        let mut p = PoolPolicy::p3(3.0);
        assert_eq!(p.target_rank, 3.0);
        for _ in 0..50 {
            p.observe(5.0);
        }
        assert_eq!(p.target_rank, 5.0);

        let mut p = PoolPolicy::p3(3.0);
        let mut r = rng::stream(1);
        for _ in 0..5000 {
            p.observe(r.random_range(2.0..10.0));
        }
        // window of 100 draws: q10 ≈ 2.8, q90 ≈ 9.2
        assert!((p.target_rank - 6.0).abs() < 0.6, "{}", p.target_rank);
        let q = update_target_rank(&PoolPolicy::p3(4.0), 7.0);
        assert_eq!(q.target_rank, 7.0);
    }

    #[test]
    fn quantiles_type7() {
        let mut w = PercentileWindow::new(4);
        assert_eq!(w.quantile(0.5), None);
        for v in [10.0, 1.0, 2.0, 3.0, 4.0] {
            w.push(v);
        }
        // window holds 1, 2, 3, 4
        assert_eq!(w.len(), 4);
        assert_eq!(w.quantile(0.0), Some(1.0));
        assert_eq!(w.quantile(1.0), Some(4.0));
        assert!((w.quantile(0.1).unwrap() - 1.3).abs() < 1e-12);
    }
}
