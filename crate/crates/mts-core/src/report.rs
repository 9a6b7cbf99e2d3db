//! Run reports: cost totals, guarantee checks with measured slack, and
//! integration diagnostics, serialized as stable JSON. Key order is
//! deterministic so identical runs produce byte-identical reports.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::solver::Residuals;

/// Version tag stamped into every serialized report.
pub const REPORT_SCHEMA: &str = "mts-report/1";

/// One verified inequality: `lhs <= rhs + tol`. The formula string spells
/// out the bound with its constants already evaluated, so a report is
/// meaningful without the source at hand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub formula: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub tol: f64,
    pub pass: bool,
}

impl CheckRecord {
    /// Records `lhs <= rhs` with an explicit tolerance.
    pub fn le(name: &str, formula: String, lhs: f64, rhs: f64, tol: f64) -> Self {
        CheckRecord {
            name: name.to_string(),
            formula,
            lhs,
            rhs,
            slack: rhs - lhs,
            tol,
            pass: lhs <= rhs + tol,
        }
    }

    /// Records `|value| <= tol` as an equality-style check.
    pub fn near_zero(name: &str, formula: String, value: f64, tol: f64) -> Self {
        CheckRecord {
            name: name.to_string(),
            formula,
            lhs: value.abs(),
            rhs: 0.0,
            slack: -value.abs(),
            tol,
            pass: value.abs() <= tol,
        }
    }
}

/// Online and offline cost totals. Serialized names follow the report
/// schema: S/M online, S_star/M_star along the recovered offline path, OPT
/// the work-function optimum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostSummary {
    #[serde(rename = "S")]
    pub service: f64,
    #[serde(rename = "M")]
    pub movement: f64,
    #[serde(rename = "S_star")]
    pub service_offline: f64,
    #[serde(rename = "M_star")]
    pub movement_offline: f64,
    #[serde(rename = "OPT")]
    pub opt: f64,
}

/// Integration bookkeeping carried into the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub steps: usize,
    pub events: usize,
    pub clamp_events: usize,
    pub clamp_duration: f64,
    pub min_reduced_cost: f64,
    pub max_residuals: Residuals,
    /// Depth-weighted occupancy at the end minus at the start.
    pub psi_delta: f64,
    pub delta_floored: bool,
    pub delta_exceeds_half: bool,
}

/// Complete record of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostReport {
    pub schema: String,
    pub algo: String,
    pub params: serde_json::Value,
    pub instance_digest: String,
    pub costs: CostSummary,
    pub checks: Vec<CheckRecord>,
    pub diagnostics: RunDiagnostics,
}

impl CostReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failed_checks(&self) -> Vec<&CheckRecord> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    /// Stable pretty JSON; object keys come out in a fixed order.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Hex SHA-256 of a byte string; used to fingerprint instances in reports.
pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}
