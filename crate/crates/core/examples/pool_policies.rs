//! Picking one batch from a pool of candidates by effective rank: highest (P1),
//! lowest (P2), or closest to a running percentile target (P3).
//!
//!     cargo run --release --example pool_policies

use gradband::embedding::{SpectralSampler, SpectrumSpec};
use gradband::selection::{pick_batch, random_subset, PoolPolicy};
use gradband::spectrum::effective_rank_rows;

fn main() -> gradband::Result<()> {
    let (d, n, pool_size) = (64, 48, 8);
    let mut p3 = PoolPolicy::p3(1.0).with_window(50);
    let mut totals = [0.0; 3];
    let rounds = 20;
    for round in 0..rounds {
        let store = SpectralSampler::new(&SpectrumSpec::spiked(0.25, d, round)?)?.sample(1024, 0)?;
        let pool = (0..pool_size)
            .map(|k| random_subset(&store, n, 100 * round + k))
            .collect::<gradband::Result<Vec<_>>>()?;
        for b in &pool {
            p3.observe(effective_rank_rows(b.rows()));
        }
        for (slot, policy) in [PoolPolicy::p1(), PoolPolicy::p2(), p3.clone()].iter().enumerate() {
            totals[slot] += pick_batch(&pool, policy)?.chosen_rank;
        }
    }
    let r = rounds as f64;
    println!("mean chosen R_eff over {rounds} pools of {pool_size}:");
    println!("  P1 (max)        {:.3}", totals[0] / r);
    println!("  P3 (percentile) {:.3}", totals[2] / r);
    println!("  P2 (min)        {:.3}", totals[1] / r);
    Ok(())
}
