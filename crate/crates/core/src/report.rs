//! Pass/fail bookkeeping shared by every certificate and probe.

use serde::{Deserialize, Serialize};

/// Failures kept verbatim per check; the count is always exact.
const MAX_ITEMIZED: usize = 16;

/// One named numerical check with its worst observed margin.
///
/// `worst_margin` is signed: nonnegative when every sample satisfied the
/// check, negative by the size of the worst violation otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub samples: usize,
    pub worst_margin: f64,
    pub failures: usize,
    pub itemized: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckResult {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: true,
            samples: 0,
            worst_margin: f64::INFINITY,
            failures: 0,
            itemized: Vec::new(),
            note: None,
        }
    }

    /// Records one sample with the given margin (≥ 0 means satisfied).
    pub fn record(&mut self, margin: f64, describe: impl FnOnce() -> String) {
        self.samples += 1;
        let margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        self.worst_margin = self.worst_margin.min(margin);
        if margin < 0.0 {
            self.fail(describe());
        }
    }

    /// Records a failure not tied to a margin.
    pub fn fail(&mut self, what: String) {
        self.passed = false;
        self.failures += 1;
        if self.itemized.len() < MAX_ITEMIZED {
            self.itemized.push(what);
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Marks a check that does not apply to the input.
    pub fn skipped(name: impl Into<String>, why: impl Into<String>) -> Self {
        let mut c = Self::new(name);
        c.worst_margin = 0.0;
        c.note = Some(format!("skipped: {}", why.into()));
        c
    }

    /// The margin with +∞ (no samples) reported as 0, for serialization.
    pub fn finalize(mut self) -> Self {
        if !self.worst_margin.is_finite() && self.worst_margin > 0.0 {
            self.worst_margin = 0.0;
        }
        if self.worst_margin == f64::NEG_INFINITY {
            self.worst_margin = f64::MIN;
        }
        self
    }
}

/// A bundle of checks that passes iff every check passes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub title: String,
    pub checks: Vec<CheckResult>,
}

impl Certificate {
    pub fn new(title: impl Into<String>) -> Self {
        Self { title: title.into(), checks: Vec::new() }
    }

    pub fn push(&mut self, check: CheckResult) {
        self.checks.push(check.finalize());
    }

    pub fn extend(&mut self, other: Certificate) {
        for mut c in other.checks {
            c.name = format!("{}/{}", other.title, c.name);
            self.checks.push(c);
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// One line per check: `PASS name (worst margin m, n samples)`.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!(
                "{status} {} (worst margin {:.3e}, {} samples",
                c.name, c.worst_margin, c.samples
            ));
            if c.failures > 0 {
                out.push_str(&format!(", {} failures", c.failures));
            }
            out.push(')');
            if let Some(n) = &c.note {
                out.push_str(&format!(" [{n}]"));
            }
            out.push('\n');
            for item in &c.itemized {
                out.push_str(&format!("    - {item}\n"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_margin_fails_and_itemizes() {
        let mut c = CheckResult::new("lipschitz");
        c.record(0.5, || unreachable!());
        c.record(-1e-3, || "at xi = (1, 0)".into());
        assert!(!c.passed);
        assert_eq!(c.failures, 1);
        assert_eq!(c.worst_margin, -1e-3);
        assert_eq!(c.itemized, vec!["at xi = (1, 0)".to_string()]);
    }

    #[test]
    fn nan_margins_count_as_failures() {
        let mut c = CheckResult::new("x");
        c.record(f64::NAN, || "nan".into());
        assert!(!c.passed);
    }

    #[test]
    fn certificate_passes_only_if_all_checks_pass() {
        let mut cert = Certificate::new("t");
        cert.push(CheckResult::new("a"));
        assert!(cert.passed());
        assert_eq!(cert.checks[0].worst_margin, 0.0);
        let mut bad = CheckResult::new("b");
        bad.fail("boom".into());
        cert.push(bad);
        assert!(!cert.passed());
        assert!(cert.summary().contains("FAIL b"));
    }
}
