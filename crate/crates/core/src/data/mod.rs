//! Long-format micro-randomized trial panels.
//!
//! One [`DecisionRecord`] per (individual, decision point). Records are
//! grouped by individual and ordered by decision index; the history vector
//! follows the dataset-wide feature schema.

mod csv_io;
mod formula;
mod specs;
mod validate;

pub use csv_io::{read_csv, read_csv_from, write_csv, write_csv_to};
pub use formula::{
    build_design, parse_terms, ControlSpec, DesignRows, ModeratorSpec, Term, ORACLE_PREFIX,
};
pub use specs::{NumeratorSpec, SmallSample, Specs};
pub use validate::{validate, Severity, SpecRefs, ValidationIssue, ValidationReport};

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::ops::Range;

use crate::error::{Error, Result};

/// Default clipping bound for probabilities.
pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

/// One decision point of one individual. `y` is the proximal outcome that
/// follows the decision at `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionRecord {
    /// Index into [`MrtDataset::ids`].
    pub individual: usize,
    pub t: u32,
    pub a: u8,
    pub y: Option<f64>,
    pub r: u8,
    pub prob: Option<f64>,
    pub available: u8,
    pub history: Vec<f64>,
}

impl DecisionRecord {
    pub fn is_available(&self) -> bool {
        self.available == 1
    }

    pub fn is_observed(&self) -> bool {
        self.r == 1
    }
}

/// Which optional CSV columns the dataset carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OptionalColumns {
    pub prob: bool,
    pub r: bool,
    pub avail: bool,
}

/// Panel of decision records with a shared feature schema.
#[derive(Clone, Debug, PartialEq)]
pub struct MrtDataset {
    feature_names: Vec<String>,
    ids: Vec<String>,
    records: Vec<DecisionRecord>,
    spans: Vec<Range<usize>>,
    outcome_kind: OutcomeKind,
    optional: OptionalColumns,
}

impl MrtDataset {
    /// Builds a dataset, ordering records by individual and then by `t`.
    pub fn new(
        feature_names: Vec<String>,
        ids: Vec<String>,
        mut records: Vec<DecisionRecord>,
        outcome_kind: OutcomeKind,
        optional: OptionalColumns,
    ) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, name) in feature_names.iter().enumerate() {
            if seen.insert(name.as_str(), i).is_some() {
                return Err(Error::Schema(format!("duplicate feature column `{name}`")));
            }
            if matches!(name.as_str(), "id" | "t" | "a" | "y" | "prob" | "r" | "avail") {
                return Err(Error::Schema(format!("feature name `{name}` is reserved")));
            }
        }
        for rec in &records {
            if rec.individual >= ids.len() {
                return Err(Error::Schema(format!(
                    "record refers to individual index {} but only {} ids exist",
                    rec.individual,
                    ids.len()
                )));
            }
            if rec.history.len() != feature_names.len() {
                return Err(Error::Schema(format!(
                    "record ({}, t={}) has {} history values, schema has {}",
                    ids[rec.individual],
                    rec.t,
                    rec.history.len(),
                    feature_names.len()
                )));
            }
        }
        records.sort_by_key(|r| (r.individual, r.t));
        let mut spans = vec![0..0; ids.len()];
        let mut start = 0;
        while start < records.len() {
            let ind = records[start].individual;
            let mut end = start;
            while end < records.len() && records[end].individual == ind {
                end += 1;
            }
            spans[ind] = start..end;
            start = end;
        }
        if let Some(i) = spans.iter().position(|s| s.is_empty()) {
            return Err(Error::Schema(format!("individual `{}` has no records", ids[i])));
        }
        Ok(Self { feature_names, ids, records, spans, outcome_kind, optional })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Values of one feature column, in record order.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .feature_index(name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
        Ok(self.records.iter().map(|r| r.history[j]).collect())
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn records(&self) -> &[DecisionRecord] {
        &self.records
    }

    /// Mutable access for in-place edits that keep the ordering intact.
    pub fn records_mut(&mut self) -> &mut [DecisionRecord] {
        &mut self.records
    }

    /// Record index range of individual `i`.
    pub fn span(&self, i: usize) -> Range<usize> {
        self.spans[i].clone()
    }

    pub fn individual_records(&self, i: usize) -> &[DecisionRecord] {
        &self.records[self.spans[i].clone()]
    }

    /// Number of individuals.
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn t_max(&self) -> u32 {
        self.records.iter().map(|r| r.t).max().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    pub fn set_outcome_kind(&mut self, kind: OutcomeKind) {
        self.outcome_kind = kind;
    }

    pub fn optional_columns(&self) -> OptionalColumns {
        self.optional
    }

    pub fn set_optional_columns(&mut self, optional: OptionalColumns) {
        self.optional = optional;
    }

    /// True when at least one outcome is missing.
    pub fn has_missing_outcomes(&self) -> bool {
        self.records.iter().any(|r| r.r == 0)
    }

    /// Returns a copy where `y` is replaced by `c * y` (observed outcomes only).
    pub fn scale_outcomes(&self, c: f64) -> Self {
        let mut out = self.clone();
        for rec in &mut out.records {
            rec.y = rec.y.map(|y| c * y);
        }
        out
    }
}
