//! Alternates raw and whitened batches on an anisotropic stream and compares the
//! rolling variance of the batch-mean squared gradient.
//!
//!     cargo run --release --example whiten_stream -- [seed] [tau]

use gradband::whitening::{alternation_run, StreamConfig};

fn main() -> gradband::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = StreamConfig::default();
    if let Some(s) = args.first() {
        cfg.seed = s.parse().expect("seed must be an integer");
    }
    if let Some(t) = args.get(1) {
        cfg.temperature = t.parse().expect("tau must be a number");
    }
    let r = alternation_run(&cfg)?;
    println!("d = {}, n = {}, tau = {}, lambda1 = {}, seed = {}", cfg.d, cfg.n, cfg.temperature, cfg.lambda1, cfg.seed);
    println!(
        "mean sigma_hat   raw {:.5}   whitened {:.5}   (1/d = {:.5})",
        r.raw_sigma_mean,
        r.whitened_sigma_mean,
        1.0 / cfg.d as f64
    );
    println!("mean Var_{}       raw {:.4e}   whitened {:.4e}", cfg.window, r.raw_var_mean, r.whitened_var_mean);
    println!(
        "ratio raw/whitened {:.3}   ceiling {:.3}   (A = {:.4}, B = {:.4})",
        r.variance_ratio, r.ceiling, r.a_coeff, r.b_tau
    );
    Ok(())
}
