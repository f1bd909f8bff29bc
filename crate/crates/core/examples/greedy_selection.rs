//! Greedy effective-rank batch construction against random subsets, for a few
//! probe sizes.
//!
//!     cargo run --release --example greedy_selection

use gradband::embedding::{SpectralSampler, SpectrumSpec};
use gradband::selection::{greedy_build, random_subset, GreedyOptions};
use gradband::spectrum::effective_rank_rows;

fn main() -> gradband::Result<()> {
    let (d, store_size, n) = (128, 2048, 64);
    let store = SpectralSampler::new(&SpectrumSpec::spiked(0.2, d, 21)?)?.sample(store_size, 0)?;
    let random = effective_rank_rows(random_subset(&store, n, 1)?.rows());
    println!("store {store_size} x {d}, batch {n}; random subset R_eff = {random:.3}");
    for m in [1, 4, 16, 64, 256] {
        let g = greedy_build(&store, n, m, (1.0, n.min(d) as f64), 5, GreedyOptions::default())?;
        let last = g.trace.last().expect("at least one step");
        println!(
            "m = {m:>3}: R_eff = {:.3} (check {:.3}), lookups {}, scored {}",
            last.r_eff,
            effective_rank_rows(g.batch.rows()),
            g.cache_lookups,
            g.candidates_scored
        );
    }
    Ok(())
}
