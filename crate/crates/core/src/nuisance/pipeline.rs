//! Cross-fitted nuisance estimation.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::numerator::fit_numerator;
use super::{NuisanceSource, Task};
use crate::crossfit::CrossFitPlan;
use crate::data::{DecisionRecord, DesignRows, MrtDataset, Specs};
use crate::error::{Error, Result};
use crate::rng;

/// Sample weights for the outcome learner.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeWeighting {
    #[default]
    None,
    /// W = p̃(A | S) / p̂(A | H), as in the WCLS criterion.
    Wcls,
}

#[derive(Clone, Debug)]
pub struct NuisanceConfig {
    pub outcome: NuisanceSource,
    /// Used for records without a known probability, or for all records
    /// when `use_known_prob` is false.
    pub propensity: Option<NuisanceSource>,
    pub use_known_prob: bool,
    /// Fitted only when the dataset has missing outcomes.
    pub missingness: Option<NuisanceSource>,
    pub outcome_weighting: OutcomeWeighting,
    pub seed: u64,
}

impl NuisanceConfig {
    pub fn new(outcome: NuisanceSource) -> Self {
        Self {
            outcome,
            propensity: None,
            use_known_prob: true,
            missingness: None,
            outcome_weighting: OutcomeWeighting::None,
            seed: 0,
        }
    }
}

/// Per-record nuisance predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct NuisanceFits {
    pub g0: Vec<f64>,
    pub g1: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub p_tilde: Vec<f64>,
    /// Present only when the dataset has missing outcomes.
    pub p_r: Option<Vec<f64>>,
    /// Folds whose models produced each record's predictions.
    pub folds: Vec<Vec<u32>>,
    pub epsilon: f64,
}

impl NuisanceFits {
    pub fn g_at(&self, i: usize, a: u8) -> f64 {
        if a == 1 {
            self.g1[i]
        } else {
            self.g0[i]
        }
    }
}

struct FoldOutput {
    rows: Vec<usize>,
    g0: Vec<f64>,
    g1: Vec<f64>,
    p_hat: Vec<f64>,
    p_tilde: Vec<f64>,
    p_r: Option<Vec<f64>>,
}

fn matrix(rows: &DesignRows, recs: &[DecisionRecord], idx: &[usize], a: Option<u8>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(idx.len(), rows.len());
    let mut buf = vec![0.0; rows.len()];
    for (r, &i) in idx.iter().enumerate() {
        let rec = &recs[i];
        rows.fill(rec, a.unwrap_or(rec.a), &mut buf);
        for (c, v) in buf.iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    m
}

fn oracle_column(dataset: &MrtDataset, name: &str) -> Result<usize> {
    dataset
        .feature_index(name)
        .ok_or_else(|| Error::Schema(format!("oracle column `{name}` is missing")))
}

/// Fits a binary-target nuisance on `train` and predicts at `targets`.
fn fit_probability(
    source: &NuisanceSource,
    dataset: &MrtDataset,
    train: &[usize],
    targets: &[usize],
    label: impl Fn(&DecisionRecord) -> f64,
    epsilon: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let recs = dataset.records();
    match source {
        NuisanceSource::Constant(c) => Ok(vec![c.clamp(epsilon, 1.0 - epsilon); targets.len()]),
        NuisanceSource::Oracle { column } => {
            let j = oracle_column(dataset, column)?;
            Ok(targets.iter().map(|&i| recs[i].history[j].clamp(epsilon, 1.0 - epsilon)).collect())
        }
        NuisanceSource::Learned { learner, features } => {
            let rows = DesignRows::resolve(features, dataset.feature_names(), false, false)?;
            let x = matrix(&rows, recs, train, None);
            let y: Vec<f64> = train.iter().map(|&i| label(&recs[i])).collect();
            let model = learner.fit(&x, &y, None, Task::Probability { epsilon }, seed)?;
            let pred = model.predict(&matrix(&rows, recs, targets, None));
            Ok(pred.into_iter().map(|p| p.clamp(epsilon, 1.0 - epsilon)).collect())
        }
    }
}

fn fit_fold(
    dataset: &MrtDataset,
    plan: &CrossFitPlan,
    k: usize,
    specs: &Specs,
    config: &NuisanceConfig,
    need_propensity: bool,
    fit_missing: bool,
) -> Result<FoldOutput> {
    let recs = dataset.records();
    let fold = &plan.folds[k];
    let member = |i: usize, m: &crate::crossfit::Membership| m.contains(recs[i].individual, recs[i].t);
    let train: Vec<usize> =
        (0..recs.len()).filter(|&i| recs[i].is_available() && member(i, &fold.train)).collect();
    let predict: Vec<usize> = (0..recs.len()).filter(|&i| member(i, &fold.predict)).collect();
    if train.is_empty() {
        return Err(Error::Plan(format!("fold {k} has an empty training set")));
    }
    let eps = specs.epsilon;
    let seed = |role: u64| rng::derive_seed(config.seed, 4 * k as u64 + role);

    let numerator = fit_numerator(&specs.numerator, dataset, &train, eps)?;
    let p_tilde: Vec<f64> = predict.iter().map(|&i| numerator.predict(&recs[i])).collect();

    let known = |i: usize| if config.use_known_prob { recs[i].prob } else { None };
    let weighted = config.outcome_weighting == OutcomeWeighting::Wcls;
    let outcome_train: Vec<usize> = train.iter().copied().filter(|&i| recs[i].is_observed()).collect();
    if outcome_train.is_empty() {
        return Err(Error::Plan(format!("fold {k} has no observed outcomes to train on")));
    }

    // Propensity predictions at the predicted rows, and at the outcome
    // training rows when the outcome learner is weighted.
    let mut wanted = predict.clone();
    if weighted {
        wanted.extend(&outcome_train);
    }
    let modelled = if need_propensity {
        let source = config.propensity.as_ref().ok_or_else(|| {
            Error::Config("no known probabilities and no propensity learner configured".into())
        })?;
        Some(fit_probability(source, dataset, &train, &wanted, |r| f64::from(r.a), eps, seed(1))?)
    } else {
        None
    };
    let p_of = |slot: usize, i: usize| match known(i) {
        Some(p) => p,
        None => modelled.as_ref().map_or(f64::NAN, |m| m[slot]),
    };
    let p_hat: Vec<f64> = predict.iter().enumerate().map(|(s, &i)| p_of(s, i)).collect();

    let p_r = if fit_missing {
        let source = config.missingness.as_ref().ok_or_else(|| {
            Error::Config("dataset has missing outcomes but no missingness learner is configured".into())
        })?;
        Some(fit_probability(source, dataset, &train, &predict, |r| f64::from(r.r), eps, seed(2))?)
    } else {
        None
    };

    let (g0, g1) = match &config.outcome {
        NuisanceSource::Constant(c) => (vec![*c; predict.len()], vec![*c; predict.len()]),
        NuisanceSource::Oracle { column } => {
            let j0 = oracle_column(dataset, &format!("{column}0"))?;
            let j1 = oracle_column(dataset, &format!("{column}1"))?;
            (
                predict.iter().map(|&i| recs[i].history[j0]).collect(),
                predict.iter().map(|&i| recs[i].history[j1]).collect(),
            )
        }
        NuisanceSource::Learned { learner, features } => {
            let rows = DesignRows::resolve(features, dataset.feature_names(), true, false)?;
            let x = matrix(&rows, recs, &outcome_train, None);
            let y: Vec<f64> = outcome_train.iter().map(|&i| recs[i].y.unwrap_or(f64::NAN)).collect();
            let w = if weighted {
                let offset = predict.len();
                Some(
                    outcome_train
                        .iter()
                        .enumerate()
                        .map(|(s, &i)| {
                            let pt = numerator.predict(&recs[i]);
                            let ph = p_of(offset + s, i);
                            if recs[i].a == 1 {
                                pt / ph
                            } else {
                                (1.0 - pt) / (1.0 - ph)
                            }
                        })
                        .collect::<Vec<f64>>(),
                )
            } else {
                None
            };
            let model = learner.fit(&x, &y, w.as_deref(), Task::Regression, seed(0))?;
            (
                model.predict(&matrix(&rows, recs, &predict, Some(0))),
                model.predict(&matrix(&rows, recs, &predict, Some(1))),
            )
        }
    };
    Ok(FoldOutput { rows: predict, g0, g1, p_hat, p_tilde, p_r })
}

/// Runs the cross-fitting plan. Each record's predictions are the weighted
/// average over the folds that predict it.
pub fn estimate_nuisances(
    dataset: &MrtDataset,
    specs: &Specs,
    plan: &CrossFitPlan,
    config: &NuisanceConfig,
) -> Result<NuisanceFits> {
    let recs = dataset.records();
    let need_propensity = !config.use_known_prob || recs.iter().any(|r| r.prob.is_none());
    let fit_missing = dataset.has_missing_outcomes();
    let outputs: Vec<FoldOutput> = (0..plan.folds.len())
        .into_par_iter()
        .map(|k| fit_fold(dataset, plan, k, specs, config, need_propensity, fit_missing))
        .collect::<Result<_>>()?;

    let n = recs.len();
    let mut counts = vec![0usize; n];
    for out in &outputs {
        for &i in &out.rows {
            counts[i] += 1;
        }
    }
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Plan(format!(
            "record `{}` t={} is not predicted by any fold",
            dataset.ids()[recs[i].individual],
            recs[i].t
        )));
    }
    let mut fits = NuisanceFits {
        g0: vec![0.0; n],
        g1: vec![0.0; n],
        p_hat: vec![0.0; n],
        p_tilde: vec![0.0; n],
        p_r: fit_missing.then(|| vec![0.0; n]),
        folds: vec![Vec::new(); n],
        epsilon: specs.epsilon,
    };
    for (k, out) in outputs.iter().enumerate() {
        for (s, &i) in out.rows.iter().enumerate() {
            if counts[i] == 1 {
                fits.g0[i] = out.g0[s];
                fits.g1[i] = out.g1[s];
                fits.p_hat[i] = out.p_hat[s];
                fits.p_tilde[i] = out.p_tilde[s];
                if let (Some(dst), Some(src)) = (fits.p_r.as_mut(), out.p_r.as_ref()) {
                    dst[i] = src[s];
                }
            } else {
                let w = 1.0 / counts[i] as f64;
                fits.g0[i] += w * out.g0[s];
                fits.g1[i] += w * out.g1[s];
                fits.p_hat[i] += w * out.p_hat[s];
                fits.p_tilde[i] += w * out.p_tilde[s];
                if let (Some(dst), Some(src)) = (fits.p_r.as_mut(), out.p_r.as_ref()) {
                    dst[i] += w * src[s];
                }
            }
            fits.folds[i].push(k as u32);
        }
    }
    // Known probabilities are used verbatim even when averaged over blocks.
    if config.use_known_prob {
        for (i, rec) in recs.iter().enumerate() {
            if let Some(p) = rec.prob {
                fits.p_hat[i] = p;
            }
        }
    }
    Ok(fits)
}
