//! Spectral summaries of synthetic batches: σ̂, effective rank, isotropy
//! deviation, and the per-anchor σ* that the exact band uses.
//!
//!     cargo run --release --example spectrum

use gradband::embedding::{attach_positives, SpectralSampler, SpectrumSpec};
use gradband::spectrum::{effective_rank_gram, effective_rank_trace, per_anchor_sigma, SecondMoment, SpectralSummary};

fn main() -> gradband::Result<()> {
    let (n, d) = (128, 64);
    println!("{:>8} {:>10} {:>10} {:>10} {:>12}", "lambda1", "sigma_hat", "R_eff", "delta_%", "max sigma*");
    for lambda1 in [1.0 / d as f64, 0.05, 0.2, 0.5, 0.9] {
        let spec = SpectrumSpec::spiked(lambda1, d, 7)?;
        let batch = attach_positives(&SpectralSampler::new(&spec)?.sample(n / 2, 0)?, 0.75, 1)?;
        let s = SpectralSummary::from_rows(batch.rows());
        let sigmas = per_anchor_sigma(&batch)?;
        let max_star = sigmas.iter().copied().fold(0.0, f64::max);
        println!(
            "{lambda1:>8.4} {:>10.5} {:>10.3} {:>10.2} {max_star:>12.5}",
            s.lambda_max, s.effective_rank, s.isotropy_deviation_pct
        );
    }

    // the two effective-rank estimators agree
    let batch = SpectralSampler::new(&SpectrumSpec::spiked(0.3, d, 1)?)?.sample(40, 3)?;
    let all: Vec<usize> = (0..batch.n()).collect();
    let gram = effective_rank_gram(&batch, &all)?;
    let trace = effective_rank_trace(&SecondMoment::from_rows(batch.rows())?);
    println!("\nR_eff via Gram {gram:.12}, via trace {trace:.12}");
    Ok(())
}
