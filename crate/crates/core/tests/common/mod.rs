#![allow(dead_code)]

use gradband::experiments::{ExperimentKind, ExperimentSpec};

/// Parameter overrides that make each experiment finish in well under a second.
pub fn small_params(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::BandVerify => "n = 16\nd = 32\nbatches = 3\ntemperatures = [0.1, 0.3]\nlambda1s = [0.5]\n",
        ExperimentKind::TempSweep => "n = 16\nd = 32\nbatches = 4\n",
        ExperimentKind::WhitenToggle => "[params.stream]\nd = 8\nn = 64\nregime_len = 20\ncycles = 2\nwindow = 10\n",
        ExperimentKind::SelectCompare => "d = 16\nstore_size = 128\nn = 12\ntrials = 6\ngreedy_m = [2, 8]\n",
        ExperimentKind::CorrSweep => "d = 16\nalphas = [0.0, 0.02]\nn_negs = [6, 14]\nbatches = 6\ncontainment_batches = 3\n",
        ExperimentKind::AnisotropyCoverage => "n = 16\nd = 32\nbatches = 3\ntarget_deltas = [0.0, 10.0]\n",
    }
}

pub fn small_toml(kind: ExperimentKind, seed: u64) -> String {
    let params = small_params(kind);
    let head = if params.starts_with('[') { "" } else { "[params]\n" };
    format!("kind = \"{}\"\nseed = {seed}\n{head}{params}", kind.name())
}

pub fn small_spec(kind: ExperimentKind, seed: u64) -> ExperimentSpec {
    ExperimentSpec::from_toml(&small_toml(kind, seed)).unwrap()
}

/// Data lines of a rows.csv body, split into fields.
pub fn csv_records(csv: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}
