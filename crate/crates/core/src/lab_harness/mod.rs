//! Replica orchestration, statistical gates and serializable reports.
//!
//! Every experiment produces rows of the form
//! `(observable, N, k, mean, stderr, target, z, abs_tol, z_gate, pass)` with
//!
//! ```text
//! pass  <=>  |mean - target| <= max(abs_tol, z_gate * stderr)
//! ```
//!
//! Rows without a target are informational and always pass. One-sided checks
//! (a trend, a count of violations) are expressed as a non-negative excess
//! with target 0, so the same two-sided rule applies.
//!
//! Replica `r` uses seed `base_seed + r`. Replicas run on the rayon pool and
//! are collected in seed order, so reports do not depend on scheduling.

mod experiments;
pub mod stats;

pub use experiments::{concentration_experiment, moment_ratio_experiment};

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The available presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Sequences,
    RecursionStats,
    ZetaCov,
    FreeEnergy,
    FirstMoment,
    SecondMoment,
    MomentRatio,
    Concentration,
    TapCompare,
    ToyModel,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::Sequences,
        ExperimentKind::RecursionStats,
        ExperimentKind::ZetaCov,
        ExperimentKind::FreeEnergy,
        ExperimentKind::FirstMoment,
        ExperimentKind::SecondMoment,
        ExperimentKind::MomentRatio,
        ExperimentKind::Concentration,
        ExperimentKind::TapCompare,
        ExperimentKind::ToyModel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Sequences => "sequences",
            ExperimentKind::RecursionStats => "recursion-stats",
            ExperimentKind::ZetaCov => "zeta-cov",
            ExperimentKind::FreeEnergy => "free-energy",
            ExperimentKind::FirstMoment => "first-moment",
            ExperimentKind::SecondMoment => "second-moment",
            ExperimentKind::MomentRatio => "moment-ratio",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::TapCompare => "tap-compare",
            ExperimentKind::ToyModel => "toy-model",
        }
    }

    /// Whether the preset draws disorder at the sizes in `n_values`.
    pub fn uses_n(self) -> bool {
        !matches!(self, ExperimentKind::Sequences | ExperimentKind::ToyModel)
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// Report serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown format '{other}'"))),
        }
    }
}

fn default_z_gate() -> f64 {
    3.0
}

/// Experiment description, serializable as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub beta: f64,
    pub h: f64,
    #[serde(default)]
    pub n_values: Vec<usize>,
    /// Stage (recursion presets), conditioning level (moment presets) or
    /// number of TAP iterations (tap-compare).
    pub k: usize,
    /// Optional sweep over `k` for the trend presets.
    #[serde(default)]
    pub k_values: Option<Vec<usize>>,
    pub replicas: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub out_path: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
    /// Site mean of the toy model.
    #[serde(default)]
    pub m: Option<f64>,
    #[serde(default)]
    pub quad_nodes: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    /// Overrides the per-preset absolute tolerance.
    #[serde(default)]
    pub abs_tol: Option<f64>,
    #[serde(default = "default_z_gate")]
    pub z_gate: f64,
}

impl ExperimentConfig {
    /// A config with defaults for everything but the essentials.
    pub fn new(experiment: ExperimentKind, beta: f64, h: f64, n_values: Vec<usize>, k: usize, replicas: usize) -> Self {
        Self {
            experiment,
            beta,
            h,
            n_values,
            k,
            k_values: None,
            replicas,
            base_seed: 0,
            out_path: None,
            format: OutputFormat::Csv,
            m: None,
            quad_nodes: None,
            tol: None,
            abs_tol: None,
            z_gate: default_z_gate(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The `k` sweep, defaulting to `[k]`.
    pub fn ks(&self) -> Vec<usize> {
        self.k_values.clone().unwrap_or_else(|| vec![self.k])
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas < 1 {
            return Err(Error::Config("replicas must be >= 1".into()));
        }
        if !(self.z_gate >= 0.0) {
            return Err(Error::Config("z_gate must be >= 0".into()));
        }
        if self.experiment.uses_n() {
            if self.n_values.is_empty() {
                return Err(Error::Config("n_values must not be empty".into()));
            }
            if let Some(n) = self.n_values.iter().find(|&&n| n < 2) {
                return Err(Error::Config(format!("all n_values must be >= 2, got {n}")));
            }
            let n_min = *self.n_values.iter().min().expect("non-empty");
            if let Some(k) = self.ks().into_iter().find(|&k| k >= n_min) {
                return Err(Error::StageTooLarge { k, n: n_min });
            }
        }
        if self.ks().is_empty() {
            return Err(Error::Config("k_values must not be empty".into()));
        }
        Ok(())
    }

    pub(crate) fn model_params(&self) -> Result<crate::ModelParams> {
        crate::ModelParams::with_numerics(
            self.beta,
            self.h,
            self.quad_nodes
                .unwrap_or(crate::order_params::DEFAULT_QUAD_NODES),
            self.tol.unwrap_or(crate::order_params::DEFAULT_TOL),
        )
    }

    pub(crate) fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.replicas as u64).map(move |r| self.base_seed.wrapping_add(r))
    }
}

/// One gated or informational result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub observable: String,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub mean: f64,
    pub stderr: f64,
    pub target: Option<f64>,
    pub z: Option<f64>,
    pub abs_tol: f64,
    pub z_gate: f64,
    pub pass: bool,
}

impl ReportRow {
    /// Builds a row and evaluates its gate.
    pub fn new(
        observable: impl Into<String>,
        n: Option<usize>,
        k: Option<usize>,
        mean: f64,
        stderr: f64,
        target: Option<f64>,
        abs_tol: f64,
        z_gate: f64,
    ) -> Self {
        let z = target.and_then(|t| (stderr > 0.0).then(|| (mean - t) / stderr));
        let mut row = Self {
            observable: observable.into(),
            n,
            k,
            mean,
            stderr,
            target,
            z,
            abs_tol,
            z_gate,
            pass: false,
        };
        row.pass = row.recompute_pass();
        row
    }

    /// Informational row (no target, always passes).
    pub fn info(observable: impl Into<String>, n: Option<usize>, k: Option<usize>, value: f64) -> Self {
        Self::new(observable, n, k, value, 0.0, None, 0.0, 0.0)
    }

    /// The gate evaluated from the row's own columns.
    pub fn recompute_pass(&self) -> bool {
        match self.target {
            None => true,
            Some(t) => {
                (self.mean - t).abs() <= self.abs_tol.max(self.z_gate * self.stderr)
            }
        }
    }
}

/// Run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub config: ExperimentConfig,
    pub wall_time_seconds: f64,
    pub crate_version: String,
    pub q: Option<f64>,
    pub at_value: Option<f64>,
}

/// Rows plus metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn row(&self, observable: &str, n: Option<usize>, k: Option<usize>) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.observable == observable && r.n == n && r.k == k)
    }

    /// CSV with header `observable,N,k,mean,stderr,target,z,abs_tol,z_gate,pass`.
    /// Metadata is not included, so the output is reproducible byte for byte.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "observable", "N", "k", "mean", "stderr", "target", "z", "abs_tol", "z_gate", "pass",
        ])?;
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.observable.clone(),
                r.n.map(|v| v.to_string()).unwrap_or_default(),
                r.k.map(|v| v.to_string()).unwrap_or_default(),
                format!("{:e}", r.mean),
                format!("{:e}", r.stderr),
                opt(r.target),
                opt(r.z),
                format!("{:e}", r.abs_tol),
                format!("{:e}", r.z_gate),
                r.pass.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn write<W: Write>(&self, format: OutputFormat, writer: W) -> Result<()> {
        match format {
            OutputFormat::Csv => self.write_csv(writer),
            OutputFormat::Json => self.write_json(writer),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, format: OutputFormat) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write(format, &mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Runs the configured preset, writes the report to `out_path` when set and
/// returns it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    for &n in config.n_values.iter().filter(|_| config.experiment.uses_n()) {
        if let Some(k) = config.ks().into_iter().find(|&k| 50 * k > n) {
            log::warn!("k = {k} exceeds N/50 at N = {n}; stage fields may decorrelate poorly");
        }
    }
    let start = Instant::now();
    experiments::finish(config, start, experiments::dispatch(config)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_rule() {
        let r = ReportRow::new("x", None, None, 1.05, 0.01, Some(1.0), 0.02, 3.0);
        assert!(!r.pass);
        let r = ReportRow::new("x", None, None, 1.015, 0.01, Some(1.0), 0.02, 3.0);
        assert!(r.pass);
        let r = ReportRow::new("x", None, None, 1.029, 0.01, Some(1.0), 0.0, 3.0);
        assert!(r.pass);
        assert_eq!(r.z, Some((1.029 - 1.0) / 0.01));
        assert!(ReportRow::info("x", None, None, 7.0).pass);
    }

    #[test]
    fn config_json_round_trip_and_validation() {
        let text = r#"{"experiment":"free-energy","beta":0.2,"h":0.3,"n_values":[8,10],
                       "k":2,"replicas":4,"base_seed":7,"format":"json"}"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.experiment, ExperimentKind::FreeEnergy);
        assert_eq!(c.z_gate, 3.0);
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);

        let bad_k = text.replace("\"k\":2", "\"k\":8");
        assert!(ExperimentConfig::from_json(&bad_k).is_err());
        let bad_n = text.replace("[8,10]", "[1,10]");
        assert!(ExperimentConfig::from_json(&bad_n).is_err());
        let bad_r = text.replace("\"replicas\":4", "\"replicas\":0");
        assert!(ExperimentConfig::from_json(&bad_r).is_err());
        let unknown = text.replace("\"h\":0.3", "\"h\":0.3,\"bogus\":1");
        assert!(ExperimentConfig::from_json(&unknown).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
    }
}
