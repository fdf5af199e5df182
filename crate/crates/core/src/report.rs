//! Serializable run report. The JSON layout is versioned by `schema_version`.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::coordinate::{Chart, Lemma1Report};
use crate::distortion::ConstantsReport;
use crate::exponent::{AsymmetryEstimate, ExponentFit, HolderEstimate};
use crate::interval::Interval;
use crate::structure::{CriticalEntry, RadiusShrink};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the effective configuration, serialized as JSON.
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSummary {
    pub critical: Vec<CriticalEntry>,
    pub cloud: Vec<f64>,
    pub cloud_offset: usize,
    pub noncritical: Vec<Interval>,
    pub gap: f64,
    pub shrinks: Vec<RadiusShrink>,
    pub charts: Vec<Chart>,
}

/// Exponent, asymmetry and `r_±` regularity at one critical point. A failed
/// estimate is recorded as its error message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalDiagnostics {
    pub c: f64,
    pub declared_gamma: f64,
    pub left: Result<ExponentFit, String>,
    pub right: Result<ExponentFit, String>,
    pub asymmetry: Result<AsymmetryEstimate, String>,
    pub r_holder: Result<(Option<HolderEstimate>, Option<HolderEstimate>), String>,
    pub lemma1: Lemma1Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationSummary {
    pub roots: Vec<Interval>,
    pub sequences: usize,
    /// Sequences per length `0..=n_max`.
    pub per_length: Vec<usize>,
    pub pruned_per_length: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSummary {
    pub id: usize,
    pub root: usize,
    pub length: usize,
    pub choices: String,
    pub tags: String,
    pub pairs: usize,
    pub degenerate: usize,
    pub min_log_margin: Option<f64>,
    pub median_log_margin: Option<f64>,
    pub max_abs_log_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub sequence: usize,
    pub pair: usize,
    pub x: f64,
    pub y: f64,
    pub log_ratio: f64,
    pub log_bound: f64,
    pub log_margin: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThreeProductSummary {
    pub sequences_checked: usize,
    pub visits: usize,
    pub max_identity_error: f64,
    pub triangle_failures: usize,
    pub initial_checked: usize,
    pub initial_failures: usize,
    pub first_later_checked: usize,
    pub first_later_failures: usize,
    pub recurrent_checked: usize,
    pub recurrent_failures: usize,
    /// Errors raised while factoring, as `(sequence, message)`.
    pub errors: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub sequences: usize,
    pub pairs: usize,
    pub degenerate_pairs: usize,
    pub violations: usize,
    pub min_log_margin: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub config: ExperimentConfig,
    pub structure: StructureSummary,
    pub critical_points: Vec<CriticalDiagnostics>,
    pub constants: ConstantsReport,
    pub enumeration: EnumerationSummary,
    pub sequences: Vec<SequenceSummary>,
    pub three_products: Option<ThreeProductSummary>,
    pub violations: Vec<Violation>,
    pub summary: RunSummary,
}

/// Structured record written when a run stops early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub schema_version: u32,
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}
