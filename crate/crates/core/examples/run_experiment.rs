//! Runs one experiment from the library at reduced size and writes the usual
//! rows.csv, summary.json and manifest.json.
//!
//!     cargo run --release --example run_experiment -- [kind] [out-dir]

use std::path::PathBuf;
use std::time::Instant;

use gradband::experiments::{report::write_outputs, run, ExperimentKind, ExperimentSpec};

fn main() -> gradband::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind = args
        .first()
        .map(|k| ExperimentKind::from_name(k).expect("unknown experiment kind"))
        .unwrap_or(ExperimentKind::AnisotropyCoverage);
    let out = args.get(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("gradband-example"));

    let mut spec = ExperimentSpec::with_defaults(kind, 42);
    // a quick pass; the CLI runs the full defaults
    match kind {
        ExperimentKind::BandVerify | ExperimentKind::TempSweep | ExperimentKind::AnisotropyCoverage => {
            spec.set("batches", 20);
        }
        ExperimentKind::CorrSweep => {
            spec.set("batches", 40).set("containment_batches", 10);
        }
        ExperimentKind::SelectCompare => {
            spec.set("trials", 10);
        }
        ExperimentKind::WhitenToggle => {}
    }
    let start = Instant::now();
    let report = run(&spec, 0)?;
    write_outputs(&report, &spec, &out, 0, start.elapsed())?;
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("{} rows -> {}", report.rows.len(), out.display());
    Ok(())
}
