use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use gradband::experiments::{self, report::write_outputs, ExperimentKind, ExperimentSpec};

#[derive(Parser)]
#[command(name = "gradband", version, about = "Synthetic experiments for InfoNCE spectral gradient bands")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Band containment over temperature and spike strength.
    BandVerify(RunArgs),
    /// Log-log slope of the mean squared gradient against 1/τ.
    TempSweep(RunArgs),
    /// Raw/whitened alternation and rolling gradient variance.
    WhitenToggle(RunArgs),
    /// Random, pool-policy and greedy batch selection compared.
    SelectCompare(RunArgs),
    /// Containment and sampling term under correlated negatives.
    CorrSweep(RunArgs),
    /// Out-of-band rate against isotropy deviation.
    AnisotropyCoverage(RunArgs),
    /// Print a complete config file with default parameters.
    EmitDefaultConfig {
        /// Experiment kind, e.g. band-verify.
        kind: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default out/<kind>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Ten times the default Monte-Carlo counts.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    quiet: bool,
}

fn load_spec(kind: ExperimentKind, args: &RunArgs) -> gradband::Result<ExperimentSpec> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| gradband::Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let spec = ExperimentSpec::from_toml(&text)?;
            if spec.kind != kind {
                return Err(gradband::Error::Config(format!(
                    "config is for {}, command is {}",
                    spec.kind, kind
                )));
            }
            spec
        }
        None => ExperimentSpec::with_defaults(kind, 0),
    };
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(o) = &args.out {
        spec.output_dir = Some(o.clone());
    }
    spec.full |= args.full;
    Ok(spec)
}

fn execute(kind: ExperimentKind, args: &RunArgs) -> gradband::Result<bool> {
    let spec = load_spec(kind, args)?;
    let dir = spec
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(kind.name()));
    let start = Instant::now();
    let report = experiments::run(&spec, args.jobs)?;
    write_outputs(&report, &spec, &dir, args.jobs, start.elapsed())?;
    if !args.quiet {
        for c in &report.checks {
            println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        println!("wrote {} rows to {}", report.rows.len(), dir.display());
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::BandVerify(a) => (ExperimentKind::BandVerify, a),
        Command::TempSweep(a) => (ExperimentKind::TempSweep, a),
        Command::WhitenToggle(a) => (ExperimentKind::WhitenToggle, a),
        Command::SelectCompare(a) => (ExperimentKind::SelectCompare, a),
        Command::CorrSweep(a) => (ExperimentKind::CorrSweep, a),
        Command::AnisotropyCoverage(a) => (ExperimentKind::AnisotropyCoverage, a),
        Command::EmitDefaultConfig { kind } => {
            return match ExperimentKind::from_name(kind) {
                Some(k) => {
                    print!("{}", ExperimentSpec::with_defaults(k, 0).to_toml());
                    ExitCode::SUCCESS
                }
                None => {
                    eprintln!("error: unknown experiment kind `{kind}`");
                    ExitCode::from(1)
                }
            };
        }
    };
    match execute(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
