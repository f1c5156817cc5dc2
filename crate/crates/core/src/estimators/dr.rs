//! DR-WCLS, its missing-outcome extension and the time-asymptotic variant.

use nalgebra::DMatrix;

use super::panel::dr_residual_term;
use super::result::{Diagnostics, EstimateResult};
use super::{check_dataset, sandwich_folds, solve_linear, LinearProblem, LinearSolution};
use crate::crossfit::CrossFitPlan;
use crate::data::{DesignRows, MrtDataset, SmallSample, Specs};
use crate::error::{Error, Result};
use crate::nuisance::{estimate_nuisances, NuisanceConfig, NuisanceFits};

pub fn dr_wcls(dataset: &MrtDataset, specs: &Specs, config: &NuisanceConfig, plan: &CrossFitPlan) -> Result<EstimateResult> {
    check_dataset(dataset, specs)?;
    if dataset.has_missing_outcomes() {
        return Err(missing_error());
    }
    let fits = estimate_nuisances(dataset, specs, plan, config)?;
    dr_wcls_with_fits(dataset, specs, &fits, Some(plan))
}

fn missing_error() -> Error {
    Error::Incompatible("dataset has missing outcomes; use dr_wcls_missing".into())
}

/// σ̃²-weighted regression of Ỹ^DR on f.
pub fn dr_wcls_with_fits(
    dataset: &MrtDataset,
    specs: &Specs,
    fits: &NuisanceFits,
    plan: Option<&CrossFitPlan>,
) -> Result<EstimateResult> {
    if dataset.has_missing_outcomes() {
        return Err(missing_error());
    }
    let problem = dr_problem(dataset, specs, fits, false)?;
    finish(dataset, specs, &problem, plan, "DR-WCLS")
}

pub fn dr_wcls_missing(
    dataset: &MrtDataset,
    specs: &Specs,
    config: &NuisanceConfig,
    plan: &CrossFitPlan,
) -> Result<EstimateResult> {
    check_dataset(dataset, specs)?;
    let fits = estimate_nuisances(dataset, specs, plan, config)?;
    dr_wcls_missing_with_fits(dataset, specs, &fits, Some(plan))
}

/// DR-WCLS with the residual term weighted by 1(R = 1) / p̂(R = 1 | H).
/// Without missing outcomes this is exactly DR-WCLS.
pub fn dr_wcls_missing_with_fits(
    dataset: &MrtDataset,
    specs: &Specs,
    fits: &NuisanceFits,
    plan: Option<&CrossFitPlan>,
) -> Result<EstimateResult> {
    let problem = dr_problem(dataset, specs, fits, true)?;
    finish(dataset, specs, &problem, plan, "DR-WCLS (missing outcomes)")
}

/// DR-WCLS point estimate with the covariance for few individuals observed
/// over many decision points: per-record estimating-function outer products
/// and derivative blocks, averaged over all records.
pub fn estimate_time_asymptotic(
    dataset: &MrtDataset,
    specs: &Specs,
    config: &NuisanceConfig,
    plan: &CrossFitPlan,
) -> Result<EstimateResult> {
    check_dataset(dataset, specs)?;
    if !plan.is_time_based() {
        return Err(Error::Plan("time-asymptotic estimation needs a time-wise or time-block plan".into()));
    }
    let fits = estimate_nuisances(dataset, specs, plan, config)?;
    time_asymptotic_with_fits(dataset, specs, &fits)
}

pub fn time_asymptotic_with_fits(dataset: &MrtDataset, specs: &Specs, fits: &NuisanceFits) -> Result<EstimateResult> {
    let mut problem = dr_problem(dataset, specs, fits, dataset.has_missing_outcomes())?;
    let records = problem.individual.len();
    problem.individual = (0..records).collect();
    let sol = solve_linear(&problem, records, &vec![0; records], 1, SmallSample::None)?;
    let mut warnings = sol.warnings.clone();
    if specs.small_sample != SmallSample::None {
        warnings.push("small-sample correction is not applied in time-asymptotic mode".into());
    }
    Ok(result(dataset, specs, sol, records, 1, warnings, "DR-WCLS (time-asymptotic)"))
}

fn finish(
    dataset: &MrtDataset,
    specs: &Specs,
    problem: &LinearProblem,
    plan: Option<&CrossFitPlan>,
    label: &str,
) -> Result<EstimateResult> {
    let n = dataset.n();
    let (folds, k) = sandwich_folds(plan, n);
    let sol = solve_linear(problem, n, &folds, k, specs.small_sample)?;
    let warnings = sol.warnings.clone();
    Ok(result(dataset, specs, sol, problem.individual.len(), k, warnings, label))
}

fn result(
    dataset: &MrtDataset,
    specs: &Specs,
    sol: LinearSolution,
    records: usize,
    folds: usize,
    warnings: Vec<String>,
    label: &str,
) -> EstimateResult {
    let diagnostics = Diagnostics {
        n_individuals: dataset.n(),
        n_records: records,
        folds,
        bread_condition: sol.bread_condition,
        warnings,
        ..Default::default()
    }
    .with_residuals(&sol.residuals);
    EstimateResult::new(label, specs.moderator.names(), &sol.beta, &sol.covariance, diagnostics)
}

fn dr_problem(dataset: &MrtDataset, specs: &Specs, fits: &NuisanceFits, allow_missing: bool) -> Result<LinearProblem> {
    let recs = dataset.records();
    let p_r = if allow_missing && dataset.has_missing_outcomes() {
        Some(fits.p_r.as_ref().ok_or_else(|| {
            Error::Incompatible("missing outcomes need a missingness model p(R = 1 | H)".into())
        })?)
    } else {
        None
    };
    let f = DesignRows::resolve(&specs.moderator.terms, dataset.feature_names(), false, false)?;
    let q = f.len();
    let rows: Vec<usize> = (0..recs.len()).filter(|&i| recs[i].is_available()).collect();
    let mut x = DMatrix::zeros(rows.len(), q);
    let (mut z, mut w, mut individual) = (Vec::new(), Vec::new(), Vec::new());
    let mut fb = vec![0.0; q];
    for (r, &i) in rows.iter().enumerate() {
        let rec = &recs[i];
        f.fill(rec, rec.a, &mut fb);
        for j in 0..q {
            x[(r, j)] = fb[j];
        }
        let delta = fits.g1[i] - fits.g0[i];
        let residual = if rec.is_observed() { dr_residual_term(rec, fits, i) } else { None };
        let y_dr = match (residual, p_r) {
            (Some(term), None) => term + delta,
            (Some(term), Some(pr)) => term / pr[i] + delta,
            (None, Some(_)) => delta,
            (None, None) => return Err(missing_error()),
        };
        let pt = fits.p_tilde[i];
        z.push(y_dr);
        w.push(pt * (1.0 - pt));
        individual.push(rec.individual);
    }
    Ok(LinearProblem { names: f.names().to_vec(), x, z, w, bread: None, individual })
}
