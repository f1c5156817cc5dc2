//! Named estimator configurations and batch analysis with shared nuisance fits.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::result::EstimateResult;
use super::{
    dr_emee_with_fits, dr_lagged, dr_wcls_missing_with_fits, dr_wcls_with_fits, efficient_r_wcls_with_fits, emee,
    r_wcls_with_fits, time_asymptotic_with_fits, wcls_with, EmeeOptions, ReferencePolicy, WclsInputs,
};
use crate::crossfit::{CrossFitPlan, PlanParams};
use crate::data::{parse_terms, ControlSpec, ModeratorSpec, MrtDataset, NumeratorSpec, SmallSample, Specs, ORACLE_PREFIX};
use crate::error::{Error, Result};
use crate::nuisance::{
    estimate_nuisances, learner_from_name, NuisanceConfig, NuisanceFits, OutcomeWeighting, RandomForestConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Wcls,
    RWcls,
    EfficientRWcls,
    DrWcls,
    DrWclsMissing,
    TimeAsymptotic,
    DrLagged,
    Emee,
    DrEmee,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 9] = [
        EstimatorKind::Wcls,
        EstimatorKind::RWcls,
        EstimatorKind::EfficientRWcls,
        EstimatorKind::DrWcls,
        EstimatorKind::DrWclsMissing,
        EstimatorKind::TimeAsymptotic,
        EstimatorKind::DrLagged,
        EstimatorKind::Emee,
        EstimatorKind::DrEmee,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Wcls => "wcls",
            EstimatorKind::RWcls => "r_wcls",
            EstimatorKind::EfficientRWcls => "efficient_r_wcls",
            EstimatorKind::DrWcls => "dr_wcls",
            EstimatorKind::DrWclsMissing => "dr_wcls_missing",
            EstimatorKind::TimeAsymptotic => "time_asymptotic",
            EstimatorKind::DrLagged => "dr_lagged",
            EstimatorKind::Emee => "emee",
            EstimatorKind::DrEmee => "dr_emee",
        }
    }

    fn uses_outcome_model(&self) -> bool {
        !matches!(self, EstimatorKind::Wcls | EstimatorKind::Emee)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL.into_iter().find(|k| k.name() == key).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
            Error::Config(format!("unknown estimator `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

fn default_learner() -> String {
    "random_forest".into()
}

fn default_delta() -> usize {
    1
}

fn default_policy() -> ReferencePolicy {
    ReferencePolicy::SameAsP
}

/// One estimator and its nuisance learners. Empty feature lists mean every
/// non-oracle history column (plus `a` for the outcome model).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default = "default_learner")]
    pub outcome_learner: String,
    #[serde(default)]
    pub outcome_features: String,
    #[serde(default)]
    pub outcome_weighting: OutcomeWeighting,
    /// Learner for p(A = 1 | H); `None` uses the known `prob` column.
    #[serde(default)]
    pub propensity_learner: Option<String>,
    #[serde(default)]
    pub propensity_features: String,
    /// Learner for p(R = 1 | H), fitted when outcomes are missing.
    #[serde(default)]
    pub missingness_learner: Option<String>,
    #[serde(default)]
    pub missingness_features: String,
    /// Basis of the orthogonal complement for efficient R-WCLS.
    #[serde(default)]
    pub perp_basis: String,
    #[serde(default = "default_delta")]
    pub delta: usize,
    #[serde(default = "default_policy")]
    pub reference_policy: ReferencePolicy,
}

impl EstimatorConfig {
    pub fn new(estimator: EstimatorKind) -> Self {
        Self {
            estimator,
            label: None,
            outcome_learner: default_learner(),
            outcome_features: String::new(),
            outcome_weighting: OutcomeWeighting::None,
            propensity_learner: None,
            propensity_features: String::new(),
            missingness_learner: None,
            missingness_features: String::new(),
            perp_basis: String::new(),
            delta: 1,
            reference_policy: ReferencePolicy::SameAsP,
        }
    }

    pub fn with_outcome(mut self, learner: &str, features: &str) -> Self {
        self.outcome_learner = learner.into();
        self.outcome_features = features.into();
        self
    }

    pub fn with_propensity(mut self, learner: &str, features: &str) -> Self {
        self.propensity_learner = Some(learner.into());
        self.propensity_features = features.into();
        self
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Report label: the explicit label or the estimator name.
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.estimator.name().to_string())
    }

    /// Identifies the nuisance fits this estimator needs; equal keys share fits.
    fn nuisance_key(&self, missing: bool) -> String {
        let outcome = if self.estimator.uses_outcome_model() {
            format!("{}[{}]/{:?}", self.outcome_learner, self.outcome_features, self.outcome_weighting)
        } else {
            "constant:0".into()
        };
        let miss = if missing { format!("{:?}[{}]", self.missingness_learner, self.missingness_features) } else { String::new() };
        format!("{outcome}|{:?}[{}]|{miss}", self.propensity_learner, self.propensity_features)
    }
}

/// Model specification, cross-fitting plan and estimator list for one analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub moderator: String,
    pub controls: String,
    pub numerator: NumeratorSpec,
    pub small_sample: SmallSample,
    pub epsilon: f64,
    pub ipw_missing: bool,
    pub plan: PlanParams,
    pub forest: RandomForestConfig,
    pub estimators: Vec<EstimatorConfig>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            moderator: "1".into(),
            controls: "1".into(),
            numerator: NumeratorSpec::default(),
            small_sample: SmallSample::None,
            epsilon: crate::data::DEFAULT_EPSILON,
            ipw_missing: false,
            plan: PlanParams::IndividualKfold { k: 5, seed: 0 },
            forest: RandomForestConfig::default(),
            estimators: vec![EstimatorConfig::new(EstimatorKind::Wcls), EstimatorConfig::new(EstimatorKind::DrWcls)],
        }
    }
}

impl AnalysisConfig {
    pub fn specs(&self) -> Result<Specs> {
        let controls = if self.controls.trim().is_empty() { ControlSpec::empty() } else { ControlSpec::parse(&self.controls)? };
        let mut specs = Specs::new(ModeratorSpec::parse(&self.moderator)?, controls)
            .with_numerator(self.numerator.clone())
            .with_small_sample(self.small_sample);
        specs.epsilon = self.epsilon;
        specs.ipw_missing = self.ipw_missing;
        Ok(specs)
    }

    /// Checks formulas, learner names and the plan without touching data.
    pub fn check(&self) -> Result<()> {
        self.specs()?;
        if self.estimators.is_empty() {
            return Err(Error::Config("`estimators` is empty".into()));
        }
        for e in &self.estimators {
            for (name, features) in [
                (Some(&e.outcome_learner), &e.outcome_features),
                (e.propensity_learner.as_ref(), &e.propensity_features),
                (e.missingness_learner.as_ref(), &e.missingness_features),
            ] {
                if let Some(name) = name {
                    let f = if features.trim().is_empty() { "a" } else { features.as_str() };
                    learner_from_name(name, f, &self.forest)?;
                }
            }
            if e.estimator == EstimatorKind::DrLagged && e.delta < 1 {
                return Err(Error::Config("`delta` must be >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Non-oracle history columns joined as a feature formula.
fn default_features(dataset: &MrtDataset, with_treatment: bool) -> String {
    let mut cols: Vec<&str> = dataset
        .feature_names()
        .iter()
        .map(String::as_str)
        .filter(|n| !n.starts_with(ORACLE_PREFIX))
        .collect();
    if with_treatment {
        cols.push("a");
    }
    cols.join(" + ")
}

fn features_or_default(features: &str, dataset: &MrtDataset, with_treatment: bool) -> String {
    if features.trim().is_empty() {
        default_features(dataset, with_treatment)
    } else {
        features.to_string()
    }
}

fn nuisance_config(
    e: &EstimatorConfig,
    dataset: &MrtDataset,
    forest: &RandomForestConfig,
    seed: u64,
) -> Result<NuisanceConfig> {
    let outcome = if e.estimator.uses_outcome_model() {
        learner_from_name(&e.outcome_learner, &features_or_default(&e.outcome_features, dataset, true), forest)?
    } else {
        crate::nuisance::NuisanceSource::Constant(0.0)
    };
    let mut config = NuisanceConfig::new(outcome);
    config.outcome_weighting = e.outcome_weighting;
    config.seed = seed;
    if let Some(name) = &e.propensity_learner {
        config.propensity = Some(learner_from_name(name, &features_or_default(&e.propensity_features, dataset, false), forest)?);
        config.use_known_prob = false;
    }
    if let Some(name) = &e.missingness_learner {
        config.missingness = Some(learner_from_name(name, &features_or_default(&e.missingness_features, dataset, false), forest)?);
    }
    Ok(config)
}

/// Runs every configured estimator on `dataset`. Estimators with identical
/// nuisance settings share one set of cross-fitted fits. `seed` drives the
/// plan and the learners.
pub fn run_analysis(dataset: &MrtDataset, config: &AnalysisConfig, seed: u64) -> Result<Vec<(String, Result<EstimateResult>)>> {
    let specs = config.specs()?;
    let plan = config.plan.build(dataset.n(), dataset.t_max(), seed)?;
    let missing = dataset.has_missing_outcomes();
    let mut fits: BTreeMap<String, NuisanceFits> = BTreeMap::new();
    let mut out = Vec::with_capacity(config.estimators.len());
    for e in &config.estimators {
        let result = run_one(dataset, &specs, config, e, &plan, seed, missing, &mut fits);
        out.push((e.label(), result));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    dataset: &MrtDataset,
    specs: &Specs,
    config: &AnalysisConfig,
    e: &EstimatorConfig,
    plan: &CrossFitPlan,
    seed: u64,
    missing: bool,
    cache: &mut BTreeMap<String, NuisanceFits>,
) -> Result<EstimateResult> {
    let nuisance = nuisance_config(e, dataset, &config.forest, seed)?;
    let relabel = |mut r: EstimateResult| {
        if let Some(label) = &e.label {
            r.estimator = label.clone();
        }
        r
    };
    match e.estimator {
        EstimatorKind::Emee => return emee(dataset, specs).map(relabel),
        EstimatorKind::DrLagged => {
            return dr_lagged(dataset, specs, &nuisance, plan, e.delta, e.reference_policy).map(relabel)
        }
        EstimatorKind::Wcls if e.propensity_learner.is_none() && !(missing && specs.ipw_missing) => {
            return wcls_with(dataset, specs, WclsInputs::default()).map(relabel)
        }
        EstimatorKind::DrWcls | EstimatorKind::TimeAsymptotic if missing => {
            return Err(Error::Incompatible("dataset has missing outcomes; use dr_wcls_missing".into()))
        }
        EstimatorKind::TimeAsymptotic if !plan.is_time_based() => {
            return Err(Error::Plan("time-asymptotic estimation needs a time-wise or time-block plan".into()))
        }
        _ => {}
    }
    crate::estimators::check_dataset(dataset, specs)?;
    let key = e.nuisance_key(missing);
    // Failed fits are not cached, so every estimator sharing them reports the original error.
    if !cache.contains_key(&key) {
        let fitted = estimate_nuisances(dataset, specs, plan, &nuisance)?;
        cache.insert(key.clone(), fitted);
    }
    let fits = &cache[&key];
    let result = match e.estimator {
        EstimatorKind::Wcls => wcls_with(
            dataset,
            specs,
            WclsInputs {
                p_hat: e.propensity_learner.as_ref().map(|_| fits.p_hat.as_slice()),
                p_r: fits.p_r.as_deref(),
            },
        ),
        EstimatorKind::RWcls => r_wcls_with_fits(dataset, specs, fits, Some(plan)),
        EstimatorKind::EfficientRWcls => {
            let basis = if e.perp_basis.trim().is_empty() { Vec::new() } else { parse_terms(&e.perp_basis)? };
            efficient_r_wcls_with_fits(dataset, specs, fits, Some(plan), &basis)
        }
        EstimatorKind::DrWcls => dr_wcls_with_fits(dataset, specs, fits, Some(plan)),
        EstimatorKind::DrWclsMissing => dr_wcls_missing_with_fits(dataset, specs, fits, Some(plan)),
        EstimatorKind::TimeAsymptotic => time_asymptotic_with_fits(dataset, specs, fits),
        EstimatorKind::DrEmee => dr_emee_with_fits(dataset, specs, fits, Some(plan), EmeeOptions::default()),
        EstimatorKind::Emee | EstimatorKind::DrLagged => unreachable!("handled above"),
    };
    result.map(relabel)
}
