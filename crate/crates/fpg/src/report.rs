//! Machine-readable suite reports: one record per identity, with a stable
//! field order so reports diff cleanly across runs. Everything except the
//! timing field is byte-stable for a fixed config and seed.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub environment: Environment,
    pub records: Vec<IdentityRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub seed: u64,
    pub points: usize,
    /// Wall-clock duration; the only field exempt from byte-stability.
    pub timing_ms: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityRecord {
    /// Stable machine identifier, unique within a suite.
    pub id: String,
    /// The identity itself, stated as a formula.
    pub anchor: String,
    pub points_tested: usize,
    pub max_residual: f64,
    pub threshold: f64,
    /// "holds" | "fails" | "inconclusive".
    pub verdict: String,
}

impl IdentityRecord {
    pub fn new(
        id: &str,
        anchor: &str,
        points_tested: usize,
        max_residual: f64,
        threshold: f64,
    ) -> IdentityRecord {
        let verdict = if !max_residual.is_finite() {
            "inconclusive"
        } else if max_residual <= threshold {
            "holds"
        } else {
            "fails"
        };
        IdentityRecord {
            id: id.to_string(),
            anchor: anchor.to_string(),
            points_tested,
            max_residual,
            threshold,
            verdict: verdict.to_string(),
        }
    }

    pub fn holds(&self) -> bool {
        self.verdict == "holds"
    }
}

impl SuiteReport {
    pub fn new(suite: &str, seed: u64, points: usize, records: Vec<IdentityRecord>) -> SuiteReport {
        SuiteReport {
            suite: suite.to_string(),
            environment: Environment {
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                points,
                timing_ms: 0,
            },
            records,
        }
    }

    pub fn all_hold(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.holds())
    }

    pub fn to_json(&self) -> String {
        // Field order follows the struct declarations, so output is stable.
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}
