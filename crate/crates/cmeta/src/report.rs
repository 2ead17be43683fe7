//! Report records shared by the audits and the command-line front end.

use serde::{Deserialize, Serialize};

/// One candidate convention evaluated by an audit.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AuditRow {
    pub name: String,
    /// Largest residual over all samples.
    pub residual: f64,
    pub matches: bool,
}

/// Outcome of an audit: data, not a pass/fail verdict.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AuditReport {
    pub title: String,
    pub tolerance: f64,
    pub rows: Vec<AuditRow>,
    /// Per-sample residuals for rows that failed (name, sample index, residual).
    pub counterexamples: Vec<(String, usize, f64)>,
    pub notes: Vec<String>,
}

impl AuditReport {
    pub fn new(title: impl Into<String>, tolerance: f64) -> Self {
        Self {
            title: title.into(),
            tolerance,
            rows: Vec::new(),
            counterexamples: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, residual: f64) {
        let matches = residual.is_finite() && residual <= self.tolerance;
        self.rows.push(AuditRow {
            name: name.into(),
            residual,
            matches,
        });
    }

    pub fn matching(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| r.matches)
            .map(|r| r.name.as_str())
            .collect()
    }

    pub fn best(&self) -> Option<&AuditRow> {
        self.rows.iter().min_by(|a, b| {
            let ra = if a.residual.is_nan() { f64::INFINITY } else { a.residual };
            let rb = if b.residual.is_nan() { f64::INFINITY } else { b.residual };
            ra.total_cmp(&rb)
        })
    }

    pub fn row(&self, name: &str) -> Option<&AuditRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Informational,
}

/// One line of a run report.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub residual: f64,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    /// Pass iff `residual ≤ tolerance` (NaN fails).
    pub fn gate(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        let status = if residual.is_finite() && residual <= tolerance {
            Status::Pass
        } else {
            Status::Fail
        };
        Self {
            name: name.into(),
            status,
            residual,
            tolerance,
            detail: String::new(),
        }
    }

    /// Informational record; `tolerance` is the match tolerance used by the
    /// underlying audit.
    pub fn info(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            status: Status::Informational,
            residual,
            tolerance,
            detail: String::new(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}
