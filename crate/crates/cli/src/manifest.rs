//! Run manifest: every check with its status, the tables behind the plots
//! and the files written.

use serde::{Deserialize, Serialize};

use crate::config::Provenance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// Recorded for review; does not change the exit status.
    Flagged,
}

impl Status {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Flagged => "flagged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status: Status::from_bool(ok), detail: detail.into() }
    }

    pub fn flagged(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status: Status::Flagged, detail: detail.into() }
    }
}

/// A plot-ready table, written as `<name>.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Checks and tables for one inequality of the verification suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub id: String,
    pub title: String,
    /// Largest observed value of the quantity the inequality bounds.
    pub empirical_constant: f64,
    pub checks: Vec<Check>,
    pub table: Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Manifest {
    pub suite: String,
    pub seed: u64,
    pub provenance: Option<Provenance>,
    /// The configuration after defaults were filled in.
    pub config: serde_json::Value,
    pub checks: Vec<Check>,
    pub reports: Vec<InequalityReport>,
    pub tables: Vec<Table>,
    pub files: Vec<String>,
    pub wall_seconds: f64,
}

impl Manifest {
    /// Suite-level checks followed by every inequality report's checks.
    pub fn all_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().chain(self.reports.iter().flat_map(|r| r.checks.iter()))
    }

    pub fn passed(&self) -> bool {
        self.all_checks().all(|c| c.status != Status::Fail)
    }

    /// Process exit status: 0 when nothing failed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

/// Shortest round-trip form, so reruns produce identical text. Very small
/// and very large magnitudes use exponent notation.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, 1.0, -2.5, 1.1435297153639112e-13, 6.02e23, 0.1 + 0.2, f64::NAN] {
            let text = num(x);
            let back: f64 = text.parse().unwrap();
            assert!(back == x || (x.is_nan() && back.is_nan()), "{text}");
        }
        assert_eq!(num(-1.1435297153639112e-13), "-1.1435297153639112e-13");
        assert_eq!(num(0.25), "0.25");
    }

    #[test]
    fn flagged_does_not_fail() {
        let mut m = Manifest::default();
        m.checks.push(Check::flagged("x", "note"));
        assert_eq!(m.exit_code(), 0);
        m.checks.push(Check::new("y", false, ""));
        assert_eq!(m.exit_code(), 1);
    }
}
