//! Synthetic experiment harness.
//!
//! An [`ExperimentSpec`] names the experiment, a master seed and a table of
//! kind-specific parameters. [`run`] executes it on a thread pool of the
//! requested size and returns an [`ExperimentReport`]: CSV-ready rows, a JSON
//! summary computed from those rows, and pass/fail checks against the
//! acceptance thresholds.
//!
//! Every random draw is keyed by `(master seed, config, batch)`, and results are
//! merged in index order, so the report does not depend on the thread count.

pub mod anisotropy;
pub mod band_verify;
mod common;
pub mod corr_sweep;
pub mod ols;
pub mod report;
pub mod select_compare;
pub mod temp_sweep;
pub mod whiten_toggle;

use std::fmt;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use report::{Cell, Check, ExperimentReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    BandVerify,
    TempSweep,
    WhitenToggle,
    SelectCompare,
    CorrSweep,
    AnisotropyCoverage,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::BandVerify,
        ExperimentKind::TempSweep,
        ExperimentKind::WhitenToggle,
        ExperimentKind::SelectCompare,
        ExperimentKind::CorrSweep,
        ExperimentKind::AnisotropyCoverage,
    ];

    /// snake_case name used in config files and CSV headers.
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::BandVerify => "band_verify",
            ExperimentKind::TempSweep => "temp_sweep",
            ExperimentKind::WhitenToggle => "whiten_toggle",
            ExperimentKind::SelectCompare => "select_compare",
            ExperimentKind::CorrSweep => "corr_sweep",
            ExperimentKind::AnisotropyCoverage => "anisotropy_coverage",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        let s = s.replace('-', "_");
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Default parameter table for this kind.
    pub fn default_params(self) -> toml::Table {
        fn table<T: Serialize>(p: T) -> toml::Table {
            toml::Table::try_from(p).expect("parameter structs serialize to a table")
        }
        match self {
            ExperimentKind::BandVerify => table(band_verify::Params::default()),
            ExperimentKind::TempSweep => table(temp_sweep::Params::default()),
            ExperimentKind::WhitenToggle => table(whiten_toggle::Params::default()),
            ExperimentKind::SelectCompare => table(select_compare::Params::default()),
            ExperimentKind::CorrSweep => table(corr_sweep::Params::default()),
            ExperimentKind::AnisotropyCoverage => table(anisotropy::Params::default()),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Ten times the desk-scale Monte-Carlo counts.
    #[serde(default)]
    pub full: bool,
    #[serde(default)]
    pub params: toml::Table,
}

impl ExperimentSpec {
    /// Spec with every parameter at its default.
    pub fn with_defaults(kind: ExperimentKind, seed: u64) -> Self {
        ExperimentSpec {
            kind,
            seed,
            output_dir: None,
            full: false,
            params: kind.default_params(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("spec serializes")
    }

    /// Typed parameters; missing keys take their defaults, unknown keys are errors.
    pub fn params<P: DeserializeOwned>(&self) -> Result<P> {
        toml::Value::Table(self.params.clone())
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{} params: {}", self.kind, e.message())))
    }

    /// Replaces one parameter, e.g. `set("batches", 10)`.
    pub fn set(&mut self, key: &str, value: impl Into<toml::Value>) -> &mut Self {
        self.params.insert(key.to_string(), value.into());
        self
    }
}

/// Runs `spec` on a pool of `jobs` threads (0 picks the rayon default).
pub fn run(spec: &ExperimentSpec, jobs: usize) -> Result<ExperimentReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_here(spec))
}

/// Runs `spec` on the current rayon pool.
pub fn run_here(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    match spec.kind {
        ExperimentKind::BandVerify => band_verify::run(spec.params()?, spec.seed, spec.full),
        ExperimentKind::TempSweep => temp_sweep::run(spec.params()?, spec.seed, spec.full),
        ExperimentKind::WhitenToggle => whiten_toggle::run(spec.params()?, spec.seed, spec.full),
        ExperimentKind::SelectCompare => select_compare::run(spec.params()?, spec.seed, spec.full),
        ExperimentKind::CorrSweep => corr_sweep::run(spec.params()?, spec.seed, spec.full),
        ExperimentKind::AnisotropyCoverage => anisotropy::run(spec.params()?, spec.seed, spec.full),
    }
}

pub(crate) fn check_count(name: &'static str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::param(name, 0.0, "must be at least 1"));
    }
    Ok(())
}

pub(crate) fn check_batch_rows(n: usize) -> Result<()> {
    if n % 2 != 0 || n < 6 {
        return Err(Error::param("n", n as f64, "must be even and at least 6 (anchors plus positives)"));
    }
    Ok(())
}

/// `1 / tr(Σ̂²)` from `G = Z Zᵀ`, clipped to `[1, min(n, d)]`.
pub(crate) fn effective_rank_from_gram(g: &ndarray::Array2<f64>, d: usize) -> f64 {
    let n = g.nrows() as f64;
    let t = g.iter().map(|x| x * x).sum::<f64>() / (n * n);
    (1.0 / t).clamp(1.0, n.min(d as f64))
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(ExperimentKind::from_name(k.name()), Some(k));
            assert_eq!(ExperimentKind::from_name(&k.name().replace('_', "-")), Some(k));
        }
        assert_eq!(ExperimentKind::from_name("nope"), None);
    }

    #[test]
    fn default_specs_round_trip_through_toml() {
        for k in ExperimentKind::ALL {
            let spec = ExperimentSpec::with_defaults(k, 7);
            let text = spec.to_toml();
            let back = ExperimentSpec::from_toml(&text).unwrap();
            assert_eq!(back, spec, "{text}");
        }
    }

    #[test]
    fn unknown_param_is_rejected() {
        let mut spec = ExperimentSpec::with_defaults(ExperimentKind::TempSweep, 0);
        spec.set("batchez", 3);
        let err = run_here(&spec).unwrap_err().to_string();
        assert!(err.contains("batchez"), "{err}");
    }

    #[test]
    fn missing_params_take_defaults() {
        let spec = ExperimentSpec::from_toml("kind = \"temp_sweep\"\n").unwrap();
        let p: temp_sweep::Params = spec.params().unwrap();
        assert_eq!(p, temp_sweep::Params::default());
    }
}
