//! Persisted experiment records.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use wat_core::{AccSummary, DictionaryBound, LinearBoundReport, TrainRecord};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const SCHEMA_VERSION: &str = "1.0.0";
pub const RECORD_FILE: &str = "record.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub schema_version: String,
    pub tool_version: String,
    pub config: ExperimentConfig,
    /// `ok` or `failed`.
    pub status: String,
    pub error: Option<String>,
    pub wall_clock_secs: f64,
    pub seeds: Vec<SeedRecord>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub status: String,
    pub error: Option<String>,
    pub methods: Vec<MethodRecord>,
    pub bounds: Option<BoundsRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub method: String,
    pub train: TrainRecord,
    /// Test accuracies of the selected model, one per evaluation kind.
    pub accuracies: Vec<AccSummary>,
    /// ρ against the uniform method for each evaluation kind (`None` when undefined).
    pub rho: BTreeMap<String, Option<f64>>,
    pub cv: BTreeMap<String, f64>,
}

impl MethodRecord {
    pub fn accuracy(&self, kind: &str) -> Option<&AccSummary> {
        self.accuracies.iter().find(|a| a.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRecord {
    /// Method whose selected model the bounds describe.
    pub method: String,
    pub epsilon: f64,
    pub linear: LinearBoundReport,
    /// Worst-class robust error of the same model on the test split (closed-form adversary).
    pub test_worst_class_error: f64,
    pub dictionary: DictionaryBound,
    /// Label for the complexity term of `dictionary`.
    pub dictionary_note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub seeds_ok: usize,
    /// Seeds where the uniform method's worst-class PGD accuracy trails its average by ≥ 10 points.
    pub uniform_disparity: usize,
    /// Per method: seeds with a higher worst-class PGD accuracy than uniform.
    pub worst_improved: BTreeMap<String, usize>,
    /// Per method: seeds with a positive PGD ρ.
    pub rho_pgd_positive: BTreeMap<String, usize>,
    /// Seeds whose bound rhs covers the observed test worst-class error.
    pub bound_holds: usize,
    /// Seeds with a premise-satisfying no-regret violation in any audited record.
    pub audit_violations: usize,
}

impl ExperimentRecord {
    pub fn to_json(&self) -> Result<String, CliError> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::write(dir.join(RECORD_FILE), self.to_json()?).map_err(|e| CliError::io(dir, e))
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(RECORD_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("corrupt {}: {e}", path.display())))?;
        let version = value
            .get("schema_version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| CliError::Runtime(format!("{} has no schema_version", path.display())))?;
        check_schema(version)?;
        serde_json::from_value(value).map_err(|e| CliError::Runtime(format!("corrupt {}: {e}", path.display())))
    }

    pub fn method_names(&self) -> Vec<String> {
        self.config.methods.run.clone()
    }
}

pub fn check_schema(version: &str) -> Result<(), CliError> {
    let major = |v: &str| v.split('.').next().and_then(|m| m.parse::<u64>().ok());
    match (major(version), major(SCHEMA_VERSION)) {
        (Some(a), Some(b)) if a == b => Ok(()),
        _ => Err(CliError::Runtime(format!(
            "unsupported record schema {version}; this build reads {SCHEMA_VERSION}"
        ))),
    }
}
