//! Minimal formula grammar for moderators, controls and learner features.
//!
//! Terms are joined by `+`. A term is `1` (intercept), a column name, or a
//! product `x*y*...`. `0` or `-1` drops the intercept. The names `t` and `a`
//! refer to the decision index and the treatment indicator.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;

use super::{DecisionRecord, MrtDataset};
use crate::error::{Error, Result};

/// Columns with this prefix carry simulation ground truth and are only
/// readable through oracle learners.
pub const ORACLE_PREFIX: &str = "oracle_";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    Intercept,
    Column(String),
    Product(Vec<String>),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => write!(f, "(Intercept)"),
            Term::Column(c) => write!(f, "{c}"),
            Term::Product(cs) => write!(f, "{}", cs.join("*")),
        }
    }
}

impl Term {
    fn columns(&self) -> Vec<&str> {
        match self {
            Term::Intercept => vec![],
            Term::Column(c) => vec![c.as_str()],
            Term::Product(cs) => cs.iter().map(|c| c.as_str()).collect(),
        }
    }
}

fn valid_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// Parses a `+`-separated term list. Returns the terms (without any
/// intercept) and whether an intercept was requested, dropped, or left
/// unspecified.
fn parse_raw(s: &str) -> Result<(Vec<Term>, Option<bool>)> {
    let mut terms = Vec::new();
    let mut intercept = None;
    if s.trim().is_empty() {
        return Ok((terms, intercept));
    }
    for piece in s.split('+') {
        let piece = piece.trim();
        match piece {
            "1" => intercept = Some(true),
            "0" | "-1" => intercept = Some(false),
            "" => return Err(Error::Formula(format!("empty term in `{s}`"))),
            _ => {
                let factors: Vec<String> = piece.split('*').map(|f| f.trim().to_string()).collect();
                if let Some(bad) = factors.iter().find(|f| !valid_name(f)) {
                    return Err(Error::Formula(format!("invalid column name `{bad}` in `{s}`")));
                }
                let term = if factors.len() == 1 {
                    Term::Column(factors.into_iter().next().unwrap())
                } else {
                    Term::Product(factors)
                };
                if terms.contains(&term) {
                    return Err(Error::Formula(format!("duplicate term `{term}` in `{s}`")));
                }
                terms.push(term);
            }
        }
    }
    Ok((terms, intercept))
}

/// Parses a feature list for learners. No intercept is added; `1` is rejected.
pub fn parse_terms(s: &str) -> Result<Vec<Term>> {
    let (terms, intercept) = parse_raw(s)?;
    if intercept == Some(true) {
        return Err(Error::Formula("learner features cannot contain an intercept".into()));
    }
    Ok(terms)
}

fn with_intercept(s: &str) -> Result<Vec<Term>> {
    let (terms, intercept) = parse_raw(s)?;
    let mut out = Vec::with_capacity(terms.len() + 1);
    if intercept != Some(false) {
        out.push(Term::Intercept);
    }
    out.extend(terms);
    Ok(out)
}

/// Moderator features f_t(S_t) of the linear excursion-effect model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeratorSpec {
    pub terms: Vec<Term>,
}

impl ModeratorSpec {
    /// Parses a moderator formula; the intercept is included unless `0` or `-1` appears.
    pub fn parse(s: &str) -> Result<Self> {
        let terms = with_intercept(s)?;
        if terms.is_empty() {
            return Err(Error::Formula("moderator needs at least one term".into()));
        }
        Ok(Self { terms })
    }

    /// The fully marginal effect: f_t ≡ 1.
    pub fn intercept() -> Self {
        Self { terms: vec![Term::Intercept] }
    }

    pub fn q(&self) -> usize {
        self.terms.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.to_string()).collect()
    }
}

/// Control variables g_t(H_t) of the working outcome model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlSpec {
    pub terms: Vec<Term>,
}

impl ControlSpec {
    /// Parses a control formula; the intercept is included unless `0` or `-1` appears.
    pub fn parse(s: &str) -> Result<Self> {
        Ok(Self { terms: with_intercept(s)? })
    }

    pub fn intercept() -> Self {
        Self { terms: vec![Term::Intercept] }
    }

    /// No controls at all (only meaningful for the log-relative-risk estimator).
    pub fn empty() -> Self {
        Self { terms: vec![] }
    }

    pub fn p(&self) -> usize {
        self.terms.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.to_string()).collect()
    }
}

#[derive(Clone, Copy, Debug)]
enum Factor {
    Time,
    Treatment,
    Column(usize),
}

#[derive(Clone, Debug)]
enum Resolved {
    One,
    Product(Vec<Factor>),
}

/// Terms bound to a dataset schema, ready to evaluate rows.
#[derive(Clone, Debug)]
pub struct DesignRows {
    resolved: Vec<Resolved>,
    names: Vec<String>,
}

impl DesignRows {
    /// Resolves terms against a schema. `allow_treatment` permits the `a`
    /// factor; `allow_oracle` permits ground-truth columns.
    pub fn resolve(
        terms: &[Term],
        feature_names: &[String],
        allow_treatment: bool,
        allow_oracle: bool,
    ) -> Result<Self> {
        let mut resolved = Vec::with_capacity(terms.len());
        for term in terms {
            if let Term::Intercept = term {
                resolved.push(Resolved::One);
                continue;
            }
            let mut factors = Vec::new();
            for name in term.columns() {
                let factor = match name {
                    "t" => Factor::Time,
                    "a" if allow_treatment => Factor::Treatment,
                    "a" => {
                        return Err(Error::Schema(
                            "the treatment `a` cannot appear in this formula".into(),
                        ))
                    }
                    _ => {
                        if !allow_oracle && name.starts_with(ORACLE_PREFIX) {
                            return Err(Error::Schema(format!(
                                "column `{name}` holds ground truth and is reserved for oracle learners"
                            )));
                        }
                        let j = feature_names
                            .iter()
                            .position(|n| n == name)
                            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
                        Factor::Column(j)
                    }
                };
                factors.push(factor);
            }
            resolved.push(Resolved::Product(factors));
        }
        Ok(Self { resolved, names: terms.iter().map(|t| t.to_string()).collect() })
    }

    pub fn len(&self) -> usize {
        self.resolved.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resolved.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Writes the row for `rec` into `out`, with the treatment set to `a`.
    pub fn fill(&self, rec: &DecisionRecord, a: u8, out: &mut [f64]) {
        for (slot, term) in out.iter_mut().zip(&self.resolved) {
            *slot = match term {
                Resolved::One => 1.0,
                Resolved::Product(fs) => fs
                    .iter()
                    .map(|f| match f {
                        Factor::Time => rec.t as f64,
                        Factor::Treatment => a as f64,
                        Factor::Column(j) => rec.history[*j],
                    })
                    .product(),
            };
        }
    }

    pub fn row(&self, rec: &DecisionRecord, a: u8) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.fill(rec, a, &mut out);
        out
    }

    /// Design matrix over `records`, with the observed treatment.
    pub fn matrix<'a>(&self, records: impl ExactSizeIterator<Item = &'a DecisionRecord>) -> DMatrix<f64> {
        let n = records.len();
        let mut m = DMatrix::zeros(n, self.len());
        let mut row = vec![0.0; self.len()];
        for (i, rec) in records.enumerate() {
            self.fill(rec, rec.a, &mut row);
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }
}

/// Design matrix of f_t(S_t): one row per record, one column per term.
pub fn build_design(dataset: &MrtDataset, spec: &ModeratorSpec) -> Result<DMatrix<f64>> {
    let rows = DesignRows::resolve(&spec.terms, dataset.feature_names(), false, false)?;
    Ok(rows.matrix(dataset.records().iter()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{OptionalColumns, OutcomeKind};

    fn fixture(s: &[f64]) -> MrtDataset {
        let records = s
            .iter()
            .enumerate()
            .map(|(i, &sv)| DecisionRecord {
                individual: 0,
                t: i as u32 + 1,
                a: (i % 2) as u8,
                y: Some(0.0),
                r: 1,
                prob: Some(0.5),
                available: 1,
                history: vec![sv],
            })
            .collect();
        MrtDataset::new(
            vec!["S".into()],
            vec!["u1".into()],
            records,
            OutcomeKind::Continuous,
            OptionalColumns::default(),
        )
        .unwrap()
    }

    #[test]
    fn parses_intercept_rules() {
        assert_eq!(ModeratorSpec::parse("").unwrap().terms, vec![Term::Intercept]);
        assert_eq!(
            ModeratorSpec::parse("S + t*S").unwrap().terms,
            vec![
                Term::Intercept,
                Term::Column("S".into()),
                Term::Product(vec!["t".into(), "S".into()])
            ]
        );
        assert_eq!(ModeratorSpec::parse("0 + S").unwrap().terms, vec![Term::Column("S".into())]);
        assert_eq!(ModeratorSpec::parse("1 + S").unwrap().q(), 2);
        assert!(ModeratorSpec::parse("-1").is_err());
        assert!(ModeratorSpec::parse("S + S").is_err());
        assert!(ModeratorSpec::parse("S + + t").is_err());
        assert!(parse_terms("1 + x").is_err());
    }

    #[test]
    fn intercept_design_is_ones() {
        let d = build_design(&fixture(&[1.0, -1.0, 1.0]), &ModeratorSpec::intercept()).unwrap();
        assert_eq!(d.ncols(), 1);
        assert!(d.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn time_design_rows() {
        let d = build_design(&fixture(&[0.0; 3]), &ModeratorSpec::parse("t").unwrap()).unwrap();
        let rows: Vec<(f64, f64)> = (0..3).map(|i| (d[(i, 0)], d[(i, 1)])).collect();
        assert_eq!(rows, vec![(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]);
    }

    #[test]
    fn moderator_design_matches_hand_mapping() {
        let s = [1.0, -1.0, -1.0, 1.0];
        let d = build_design(&fixture(&s), &ModeratorSpec::parse("S").unwrap()).unwrap();
        let expected = [[1.0, 1.0], [1.0, -1.0], [1.0, -1.0], [1.0, 1.0]];
        for (i, row) in expected.iter().enumerate() {
            assert_eq!(d[(i, 0)], row[0]);
            assert_eq!(d[(i, 1)], row[1]);
        }
    }

    #[test]
    fn schema_errors() {
        let ds = fixture(&[1.0]);
        assert!(build_design(&ds, &ModeratorSpec::parse("X").unwrap()).is_err());
        assert!(build_design(&ds, &ModeratorSpec::parse("a").unwrap()).is_err());
    }
}
