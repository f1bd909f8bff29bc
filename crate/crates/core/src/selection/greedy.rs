use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::rng;
use crate::spectrum::{rayleigh_score, trace_update};

/// Partial batch with its member Gram matrix and running `t_B = tr(Σ_B²)`.
#[derive(Debug, Clone)]
pub struct SelectionState {
    pub members: Vec<usize>,
    pub gram_cache: Array2<f64>,
    pub t_b: f64,
}

impl SelectionState {
    /// State holding one member with squared norm `norm_sq`.
    pub fn seeded(first: usize, norm_sq: f64) -> Self {
        SelectionState {
            members: vec![first],
            gram_cache: Array2::from_elem((1, 1), norm_sq),
            t_b: norm_sq * norm_sq,
        }
    }

    pub fn b(&self) -> usize {
        self.members.len()
    }

    /// `1 / t_B`.
    pub fn effective_rank(&self) -> f64 {
        1.0 / self.t_b
    }

    /// Adds a member given its inner products with the current members.
    pub fn push(&mut self, index: usize, inner: &[f64], norm_sq: f64) {
        let b = self.b();
        debug_assert_eq!(inner.len(), b);
        let q = rayleigh_score(inner);
        self.t_b = trace_update(self.t_b, b, q, norm_sq * norm_sq);
        let mut g = Array2::zeros((b + 1, b + 1));
        g.slice_mut(ndarray::s![..b, ..b]).assign(&self.gram_cache);
        for (j, &v) in inner.iter().enumerate() {
            g[[b, j]] = v;
            g[[j, b]] = v;
        }
        g[[b, b]] = norm_sq;
        self.gram_cache = g;
        self.members.push(index);
    }

    /// `tr(Σ_B²)` recomputed from the member Gram.
    pub fn direct_trace_sq(&self) -> f64 {
        let b = self.b() as f64;
        self.gram_cache.iter().map(|x| x * x).sum::<f64>() / (b * b)
    }
}

/// `1 − ⟨z, z̄_B⟩` from inner products with the members. A heuristic stand-in
/// for the Rayleigh score: `⟨z, z̄_B⟩² ≤ q_B(z)`.
pub fn centroid_score(inner: &[f64]) -> f64 {
    if inner.is_empty() {
        return 1.0;
    }
    1.0 - inner.iter().sum::<f64>() / inner.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyOptions {
    /// Keep adding after the rank window is reached, up to the target size.
    pub fill_to_target: bool,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        GreedyOptions { fill_to_target: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    pub b: usize,
    pub t_b: f64,
    pub r_eff: f64,
    pub chosen: usize,
    /// Rayleigh score of the chosen candidate against the batch before it joined.
    pub q: f64,
    /// Smallest score among the probed candidates; equals `q`.
    pub probe_min_q: f64,
    pub probed: usize,
}

#[derive(Debug, Clone)]
pub struct GreedyResult {
    pub batch: EmbeddingBatch,
    pub state: SelectionState,
    pub trace: Vec<GreedyStep>,
    /// First step at which `R` lay inside the window.
    pub window_hit_step: Option<usize>,
    /// Cached inner-product reads made while scoring candidates.
    pub cache_lookups: u64,
    /// Scored candidates over all steps.
    pub candidates_scored: u64,
}

/// Inner products between store rows and members, filled on demand.
struct InnerCache {
    rows: Vec<Vec<f64>>,
}

impl InnerCache {
    fn new(n: usize) -> Self {
        InnerCache { rows: vec![Vec::new(); n] }
    }

    fn refresh(&mut self, c: usize, store: &EmbeddingBatch, members: &[usize]) {
        let row = &mut self.rows[c];
        let z = store.row(c);
        for &m in &members[row.len()..] {
            row.push(z.dot(&store.row(m)));
        }
    }

    fn get(&self, c: usize) -> &[f64] {
        &self.rows[c]
    }
}

fn in_window(r: f64, window: (f64, f64)) -> bool {
    r >= window.0 && r <= window.1
}

fn norm_sq(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v)
}

/// Builds a batch of `n_target` rows from `store`.
///
/// The first seed is uniform over the store; the second is the probed candidate
/// most orthogonal to the first. Each later step probes `m` candidates (without
/// replacement within the step) and adds the one with the smallest `q_B`, lowest
/// store index winning ties.
pub fn greedy_build(
    store: &EmbeddingBatch,
    n_target: usize,
    m: usize,
    window: (f64, f64),
    seed: u64,
    opts: GreedyOptions,
) -> Result<GreedyResult> {
    let total = store.n();
    let d = store.d();
    if m == 0 {
        return Err(Error::param("m", 0.0, "probe size must be at least 1"));
    }
    if n_target < 2 {
        return Err(Error::param("n_target", n_target as f64, "must be at least 2"));
    }
    if total < n_target {
        return Err(Error::StoreExhausted {
            needed: n_target,
            available: total,
        });
    }
    let cap = n_target.min(d) as f64;
    let (r_min, r_max) = window;
    if !(1.0 <= r_min && r_min <= r_max && r_max <= cap) {
        return Err(Error::InvalidWindow {
            min: r_min,
            max: r_max,
            cap,
        });
    }

    let mut rng = rng::stream(seed);
    let mut remaining: Vec<usize> = (0..total).collect();
    let mut cache = InnerCache::new(total);
    let mut lookups = 0u64;
    let mut scored = 0u64;

    let first = remaining.swap_remove(rng.random_range(0..total));
    let mut state = SelectionState::seeded(first, norm_sq(store.row(first)));

    // second seed: most orthogonal to the first among a probe
    let k = m.min(remaining.len());
    let probe = index::sample(&mut rng, remaining.len(), k);
    let mut best: Option<(f64, usize, usize)> = None;
    for pos in probe.iter() {
        let c = remaining[pos];
        cache.refresh(c, store, &state.members);
        let a = cache.get(c)[0].abs();
        lookups += 1;
        scored += 1;
        if best.is_none_or(|(ba, bc, _)| a < ba || (a == ba && c < bc)) {
            best = Some((a, c, pos));
        }
    }
    let (_, second, pos) = best.expect("non-empty probe");
    remaining.swap_remove(pos);
    let inner = cache.get(second).to_vec();
    state.push(second, &inner, norm_sq(store.row(second)));

    let mut trace = vec![GreedyStep {
        b: state.b(),
        t_b: state.t_b,
        r_eff: state.effective_rank(),
        chosen: second,
        q: rayleigh_score(&inner),
        probe_min_q: rayleigh_score(&inner),
        probed: k,
    }];
    let mut window_hit = in_window(state.effective_rank(), window).then_some(0);

    while state.b() < n_target && (opts.fill_to_target || window_hit.is_none()) {
        if remaining.is_empty() {
            return Err(Error::StoreExhausted {
                needed: n_target,
                available: total,
            });
        }
        let k = m.min(remaining.len());
        let probe = index::sample(&mut rng, remaining.len(), k);
        let mut best: Option<(f64, usize, usize)> = None;
        for pos in probe.iter() {
            let c = remaining[pos];
            cache.refresh(c, store, &state.members);
            let inner = cache.get(c);
            lookups += inner.len() as u64;
            scored += 1;
            let q = rayleigh_score(inner);
            if best.is_none_or(|(bq, bc, _)| q < bq || (q == bq && c < bc)) {
                best = Some((q, c, pos));
            }
        }
        let (q, chosen, pos) = best.expect("non-empty probe");
        remaining.swap_remove(pos);
        let inner = cache.get(chosen).to_vec();
        state.push(chosen, &inner, norm_sq(store.row(chosen)));
        let r = state.effective_rank();
        trace.push(GreedyStep {
            b: state.b(),
            t_b: state.t_b,
            r_eff: r,
            chosen,
            q,
            probe_min_q: q,
            probed: k,
        });
        if window_hit.is_none() && in_window(r, window) {
            window_hit = Some(trace.len() - 1);
        }
    }

    let rows = store.rows().select(Axis(0), &state.members);
    let batch = EmbeddingBatch::from_rows(rows)?;
    Ok(GreedyResult {
        batch,
        state,
        trace,
        window_hit_step: window_hit,
        cache_lookups: lookups,
        candidates_scored: scored,
    })
}

/// Uniform random subset of `n` store rows.
pub fn random_subset(store: &EmbeddingBatch, n: usize, seed: u64) -> Result<EmbeddingBatch> {
    if store.n() < n {
        return Err(Error::StoreExhausted {
            needed: n,
            available: store.n(),
        });
    }
    let mut rng = rng::stream(seed);
    let idx = index::sample(&mut rng, store.n(), n).into_vec();
    store.select(&idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{SpectralSampler, SpectrumSpec};
    use crate::spectrum::{effective_rank_rows, trace_sq, SecondMoment};
    use proptest::prelude::*;

    fn store(n: usize, d: usize, lambda1: f64, seed: u64) -> EmbeddingBatch {
        let spec = SpectrumSpec::spiked(lambda1.max(1.0 / d as f64), d, seed).unwrap();
        SpectralSampler::new(&spec).unwrap().sample(n, 0).unwrap()
    }

    #[test]
    fn basis_store_builds_orthonormal_set() {
        let d = 12;
        let s = EmbeddingBatch::from_rows(Array2::eye(d)).unwrap();
        let r = greedy_build(&s, 8, 4, (1.0, 8.0), 3, GreedyOptions::default()).unwrap();
        for step in &r.trace {
            assert!((step.t_b - 1.0 / step.b as f64).abs() < 1e-15);
            assert_eq!(step.q, 0.0);
        }
        assert_eq!(r.batch.n(), 8);
    }

    #[test]
    fn validation_errors() {
        let s = store(20, 8, 0.3, 1);
        assert!(matches!(
            greedy_build(&s, 30, 4, (1.0, 8.0), 0, GreedyOptions::default()),
            Err(Error::StoreExhausted { .. })
        ));
        assert!(matches!(
            greedy_build(&s, 10, 4, (0.5, 8.0), 0, GreedyOptions::default()),
            Err(Error::InvalidWindow { .. })
        ));
        assert!(matches!(
            greedy_build(&s, 10, 4, (3.0, 2.0), 0, GreedyOptions::default()),
            Err(Error::InvalidWindow { .. })
        ));
        assert!(matches!(
            greedy_build(&s, 10, 4, (1.0, 9.0), 0, GreedyOptions::default()),
            Err(Error::InvalidWindow { .. })
        ));
        assert!(greedy_build(&s, 10, 0, (1.0, 8.0), 0, GreedyOptions::default()).is_err());
    }

    #[test]
    fn literal_loop_guard_stops_in_window() {
        let s = store(200, 32, 1.0 / 32.0, 2);
        let lit = greedy_build(&s, 40, 8, (3.0, 4.0), 5, GreedyOptions { fill_to_target: false }).unwrap();
        let hit = lit.window_hit_step.expect("window reached");
        assert_eq!(hit, lit.trace.len() - 1);
        assert!(lit.batch.n() < 40);
        let full = greedy_build(&s, 40, 8, (3.0, 4.0), 5, GreedyOptions::default()).unwrap();
        assert_eq!(full.batch.n(), 40);
        assert_eq!(full.window_hit_step, Some(hit));
        assert_eq!(&full.state.members[..lit.state.b()], &lit.state.members[..]);
    }

    #[test]
    fn decrease_rule_on_accepted_steps() {
        for seed in 0..100u64 {
            let s = store(120, 16, 0.3, seed);
            let r = greedy_build(&s, 24, 8, (1.0, 16.0), seed, GreedyOptions::default()).unwrap();
            let mut prev_t = 1.0;
            let mut prev_b = 1usize;
            for step in &r.trace {
                let threshold = prev_t - (1.0 - prev_t) / (2.0 * prev_b as f64);
                if step.q < threshold {
                    assert!(step.t_b < prev_t);
                }
                prev_t = step.t_b;
                prev_b = step.b;
            }
        }
    }

    #[test]
    fn lookups_are_b_per_candidate() {
        let s = store(300, 32, 0.2, 4);
        let r = greedy_build(&s, 30, 16, (1.0, 30.0), 1, GreedyOptions::default()).unwrap();
        // second seed: one lookup per probed candidate; step to size b reads b − 1 values each
        let expected: u64 = r
            .trace
            .iter()
            .map(|st| st.probed as u64 * (st.b as u64 - 1))
            .sum();
        assert_eq!(r.cache_lookups, expected);
    }

    #[test]
    fn greedy_beats_random_subset() {
        let (mut g, mut rnd) = (0.0, 0.0);
        for t in 0..100u64 {
            let s = store(512, 128, 0.2, 1000 + t);
            let gb = greedy_build(&s, 64, 64, (1.0, 64.0), t, GreedyOptions::default()).unwrap();
            g += effective_rank_rows(gb.batch.rows());
            rnd += effective_rank_rows(random_subset(&s, 64, t).unwrap().rows());
        }
        assert!(g / 100.0 > rnd / 100.0 + 1.0, "{} vs {}", g / 100.0, rnd / 100.0);
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(centroid_score(&[0.0, 0.0]), 1.0);
        // rank-1 unit-coherent batch, candidate along the mean direction
        assert!(centroid_score(&[1.0, 1.0, 1.0]).abs() < 1e-15);
        let s = store(400, 16, 0.3, 9);
        for k in 0..10_000usize {
            let b = 2 + k % 20;
            let c = 40 + k % 360;
            let inner: Vec<f64> = (0..b).map(|j| s.row(c).dot(&s.row((k + j) % 40))).collect();
            let mean = 1.0 - centroid_score(&inner);
            assert!(mean * mean <= rayleigh_score(&inner) + 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn cache_integrity_and_probe_optimality(seed in any::<u64>(), m in 1usize..20, l1 in 0.0f64..0.9) {
            let s = store(150, 24, l1, seed);
            let r = greedy_build(&s, 30, m, (1.0, 24.0), seed, GreedyOptions::default()).unwrap();
            for (k, step) in r.trace.iter().enumerate() {
                let rows = r.batch.rows().slice(ndarray::s![..step.b, ..]).to_owned();
                let direct = trace_sq(&SecondMoment::from_rows(rows.view()).unwrap());
                prop_assert!((step.t_b - direct).abs() < 1e-10, "step {}", k);
                prop_assert!(step.q <= step.probe_min_q);
            }
            prop_assert!((r.state.t_b - r.state.direct_trace_sq()).abs() < 1e-10);
            for i in 0..r.state.b() {
                prop_assert!((r.state.gram_cache[[i, i]] - 1.0).abs() < 1e-9);
            }
            let again = greedy_build(&s, 30, m, (1.0, 24.0), seed, GreedyOptions::default()).unwrap();
            prop_assert_eq!(&again.state.members, &r.state.members);
        }
    }
}
