//! Nuisance functions: pluggable learners and the cross-fitted pipeline that
//! produces ĝ(H_t, a), p̂(A_t = 1 | H_t), p̂(R_t = 1 | H_t) and p̃(1 | S_t).

mod forest;
mod linear;
mod numerator;
mod pipeline;

pub use forest::{fit_random_forest, ForestModel, RandomForest, RandomForestConfig};
pub use linear::{expit, fit_logistic, Linear, LinearModel};
pub use numerator::{fit_numerator, NumeratorModel};
pub use pipeline::{estimate_nuisances, NuisanceConfig, NuisanceFits, OutcomeWeighting};

use nalgebra::DMatrix;
use std::fmt;
use std::sync::Arc;

use crate::data::{parse_terms, Term, ORACLE_PREFIX};
use crate::error::{Error, Result};

/// What a learner is asked to predict.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Task {
    Regression,
    /// Outputs are clipped to `[epsilon, 1 - epsilon]`.
    Probability { epsilon: f64 },
}

/// A supervised learner. Implementations must be deterministic given `seed`.
pub trait Learner: Send + Sync {
    fn name(&self) -> &str;
    fn fit(
        &self,
        x: &DMatrix<f64>,
        y: &[f64],
        weights: Option<&[f64]>,
        task: Task,
        seed: u64,
    ) -> Result<Box<dyn FittedModel>>;
}

pub trait FittedModel: Send + Sync {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64>;
}

/// Where one nuisance function comes from.
#[derive(Clone)]
pub enum NuisanceSource {
    /// A learner fitted on the listed feature terms (which may include `a`).
    Learned { learner: Arc<dyn Learner>, features: Vec<Term> },
    /// Ground truth read from a column. For the outcome role the name is a
    /// stem: columns `<stem>0` and `<stem>1` hold E[Y | H, a].
    Oracle { column: String },
    /// The same value for every record (deliberate misspecification).
    Constant(f64),
}

impl fmt::Debug for NuisanceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NuisanceSource::Learned { learner, features } => {
                let names: Vec<String> = features.iter().map(|t| t.to_string()).collect();
                write!(f, "{}[{}]", learner.name(), names.join(" + "))
            }
            NuisanceSource::Oracle { column } => write!(f, "oracle:{column}"),
            NuisanceSource::Constant(c) => write!(f, "constant({c})"),
        }
    }
}

impl NuisanceSource {
    pub fn learned(learner: impl Learner + 'static, features: &str) -> Result<Self> {
        Ok(Self::Learned { learner: Arc::new(learner), features: parse_terms(features)? })
    }

    pub fn oracle(column: &str) -> Self {
        Self::Oracle { column: column.to_string() }
    }
}

/// Looks up a learner by registry name: `random_forest`, `linear`,
/// `oracle:<column>`, or `constant:<value>`.
pub fn learner_from_name(name: &str, features: &str, forest: &RandomForestConfig) -> Result<NuisanceSource> {
    if let Some(col) = name.strip_prefix("oracle:") {
        if !col.starts_with(ORACLE_PREFIX) {
            return Err(Error::Config(format!(
                "oracle learners read `{ORACLE_PREFIX}*` columns, got `{col}`"
            )));
        }
        return Ok(NuisanceSource::oracle(col));
    }
    if let Some(v) = name.strip_prefix("constant:") {
        let c: f64 = v.parse().map_err(|_| Error::Config(format!("bad constant learner `{name}`")))?;
        return Ok(NuisanceSource::Constant(c));
    }
    match name {
        "random_forest" => NuisanceSource::learned(RandomForest { config: forest.clone() }, features),
        "linear" => NuisanceSource::learned(Linear, features),
        _ => Err(Error::Config(format!("unknown learner `{name}`"))),
    }
}
