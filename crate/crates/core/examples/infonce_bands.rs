//! InfoNCE gradients on a paired batch and the spectral band around the
//! batch-mean squared gradient, at a few temperatures.
//!
//!     cargo run --release --example infonce_bands -- [lambda1] [cosine]

use gradband::band::{containment_check, per_anchor_bands, upper_band_exact, upper_band_proxy, variance_band, BandConfig};
use gradband::embedding::{attach_positives, SpectralSampler, SpectrumSpec};
use gradband::infonce::batch_grad_stats;
use gradband::spectrum::AnchorSpectra;

fn main() -> gradband::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let lambda1 = args.first().copied().unwrap_or(0.3);
    let cosine = args.get(1).copied().unwrap_or(0.75);
    let (half, d) = (128, 1024);

    let anchors = SpectralSampler::new(&SpectrumSpec::spiked(lambda1, d, 3)?)?.sample(half, 0)?;
    let batch = attach_positives(&anchors, cosine, 4)?;
    let spectra = AnchorSpectra::new(&batch);
    let sigmas = spectra.per_anchor(&batch)?;
    let sigma_hat = spectra.sigma_hat();
    let cfg = BandConfig::default();
    println!("n = {}, d = {d}, lambda1 = {lambda1}, cosine = {cosine}, sigma_hat = {sigma_hat:.4}", batch.n());
    println!("{:>6} {:>11} {:>11} {:>11} {:>11} {:>9} {:>9}", "tau", "gamma_bar", "lower", "upper", "proxy", "eps^2", "inside");
    for tau in [0.05, 0.1, 0.2, 0.3] {
        let st = batch_grad_stats(&batch, tau)?;
        let exact = upper_band_exact(&st, &sigmas, tau, &cfg)?;
        let proxy = upper_band_proxy(&st, sigma_hat, batch.n(), tau, &cfg)?;
        let c = containment_check(&st, &per_anchor_bands(&st, &sigmas, &cfg)?)?;
        println!(
            "{tau:>6.3} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>9.4} {:>9.4}",
            st.mean_grad_sq, exact.lower, exact.upper, proxy.upper, st.mean_eps_sq, c.in_rate
        );
    }
    let v = variance_band(batch.n(), 0.1, sigma_hat, 0.02)?;
    println!("\nvariance band at tau = 0.1: A = {:.4}, B = {:.4}, bound = {:.4}", v.a_coeff, v.b_tau, v.bound);
    Ok(())
}
