//! Dataset validation producing a report instead of failing fast.

use serde::Serialize;

use super::{ControlSpec, DesignRows, ModeratorSpec, MrtDataset, OutcomeKind, Term};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Violation,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    /// Record position in dataset order, when the issue is record-level.
    pub record: Option<usize>,
    pub message: String,
}

/// Violations make the dataset unusable; warnings do not.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn violations(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Violation)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }

    /// True when there are no violations.
    pub fn is_usable(&self) -> bool {
        self.violations().next().is_none()
    }

    /// Converts the first violations into a schema error.
    pub fn into_result(self) -> Result<()> {
        let msgs: Vec<String> = self.violations().take(5).map(|i| i.message.clone()).collect();
        if msgs.is_empty() {
            Ok(())
        } else {
            Err(Error::Schema(msgs.join("; ")))
        }
    }
}

/// Formulas whose columns must exist in the schema.
#[derive(Clone, Copy, Debug, Default)]
pub struct SpecRefs<'a> {
    pub moderator: Option<&'a ModeratorSpec>,
    pub controls: Option<&'a ControlSpec>,
    pub extra: Option<&'a [Term]>,
    pub epsilon: Option<f64>,
}

/// Checks schema and record invariants.
pub fn validate(dataset: &MrtDataset, specs: SpecRefs<'_>) -> ValidationReport {
    let eps = specs.epsilon.unwrap_or(super::DEFAULT_EPSILON);
    let mut issues = Vec::new();
    let mut violation = |record: Option<usize>, message: String| {
        issues.push(ValidationIssue { severity: Severity::Violation, record, message })
    };
    let names = dataset.feature_names();
    if let Some(m) = specs.moderator {
        if let Err(e) = DesignRows::resolve(&m.terms, names, false, false) {
            violation(None, format!("moderator: {e}"));
        }
    }
    if let Some(c) = specs.controls {
        if let Err(e) = DesignRows::resolve(&c.terms, names, false, false) {
            violation(None, format!("controls: {e}"));
        }
    }
    if let Some(x) = specs.extra {
        if let Err(e) = DesignRows::resolve(x, names, true, false) {
            violation(None, format!("features: {e}"));
        }
    }
    let ids = dataset.ids();
    for i in 0..dataset.n() {
        let span = dataset.span(i);
        let recs = dataset.individual_records(i);
        if recs[0].t != 1 {
            violation(Some(span.start), format!("individual `{}` does not start at t=1", ids[i]));
        }
        for (k, w) in recs.windows(2).enumerate() {
            if w[1].t == w[0].t {
                violation(
                    Some(span.start + k + 1),
                    format!("individual `{}` repeats decision t={}", ids[i], w[1].t),
                );
            }
        }
    }
    let binary = dataset.outcome_kind() == OutcomeKind::Binary;
    let mut warnings = Vec::new();
    for (k, rec) in dataset.records().iter().enumerate() {
        let at = Some(k);
        let who = format!("`{}` t={}", ids[rec.individual], rec.t);
        if rec.a > 1 {
            violation(at, format!("treatment not binary at {who} (a={})", rec.a));
        }
        if rec.r > 1 {
            violation(at, format!("observation indicator not binary at {who} (r={})", rec.r));
        }
        if rec.available > 1 {
            violation(at, format!("availability not binary at {who} (avail={})", rec.available));
        }
        match (rec.r, rec.y) {
            (1, None) => violation(at, format!("outcome missing but marked observed at {who}")),
            (1, Some(y)) if !y.is_finite() => violation(at, format!("outcome not finite at {who}")),
            (1, Some(y)) if binary && y != 0.0 && y != 1.0 => {
                violation(at, format!("binary outcome not in {{0,1}} at {who}"))
            }
            (0, Some(_)) => warnings.push(ValidationIssue {
                severity: Severity::Warning,
                record: at,
                message: format!("outcome present but marked missing at {who}"),
            }),
            _ => {}
        }
        if let Some(p) = rec.prob {
            if !(p.is_finite() && p >= eps && p <= 1.0 - eps) {
                violation(at, format!("probability {p} outside [{eps}, {}] at {who}", 1.0 - eps));
            }
        }
        if rec.history.iter().any(|v| !v.is_finite()) {
            violation(at, format!("non-finite history feature at {who}"));
        }
    }
    issues.extend(warnings);
    ValidationReport { issues }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DecisionRecord, OptionalColumns};

    fn rec(t: u32, a: u8, y: Option<f64>, r: u8) -> DecisionRecord {
        DecisionRecord { individual: 0, t, a, y, r, prob: Some(0.5), available: 1, history: vec![1.0] }
    }

    fn dataset(records: Vec<DecisionRecord>) -> MrtDataset {
        MrtDataset::new(
            vec!["S".into()],
            vec!["u".into()],
            records,
            OutcomeKind::Continuous,
            OptionalColumns::default(),
        )
        .unwrap()
    }

    #[test]
    fn clean_dataset_has_empty_report() {
        let ds = dataset(vec![rec(1, 0, Some(1.0), 1), rec(2, 1, Some(0.0), 1)]);
        let report = validate(&ds, SpecRefs::default());
        assert!(report.issues.is_empty());
        assert!(report.is_usable());
    }

    #[test]
    fn non_binary_treatment_flagged() {
        let ds = dataset(vec![rec(1, 2, Some(1.0), 1)]);
        let report = validate(&ds, SpecRefs::default());
        assert!(!report.is_usable());
        assert!(report.issues[0].message.contains("treatment not binary"));
    }

    #[test]
    fn present_but_missing_outcome_warns() {
        let ds = dataset(vec![rec(1, 0, Some(1.0), 1), rec(2, 1, Some(3.0), 0), rec(3, 0, None, 0)]);
        let report = validate(&ds, SpecRefs::default());
        assert!(report.is_usable());
        let warnings: Vec<_> = report.warnings().collect();
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].record, Some(1));
        assert!(warnings[0].message.contains("outcome present but marked missing"));
    }

    #[test]
    fn schema_and_probability_violations() {
        let mut bad = rec(1, 0, Some(1.0), 1);
        bad.prob = Some(0.001);
        let ds = dataset(vec![bad, rec(3, 0, None, 1)]);
        let m = ModeratorSpec::parse("Z").unwrap();
        let report = validate(&ds, SpecRefs { moderator: Some(&m), ..Default::default() });
        let msgs: Vec<&str> = report.violations().map(|i| i.message.as_str()).collect();
        assert!(msgs.iter().any(|m| m.contains("missing column `Z`")));
        assert!(msgs.iter().any(|m| m.contains("probability")));
        assert!(msgs.iter().any(|m| m.contains("outcome missing but marked observed")));
    }
}
