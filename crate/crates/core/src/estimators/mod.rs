//! The estimator family and its shared machinery.
//!
//! Linear-contrast estimators build a [`LinearProblem`] (design, response,
//! regression weights, plus the derivative blocks used in the sandwich) and
//! hand it to [`solve_linear`].

mod dr;
mod emee;
mod lagged;
mod panel;
mod registry;
mod result;
mod rwcls;
mod sandwich;
mod wcls;

pub use dr::{dr_wcls, dr_wcls_missing, dr_wcls_missing_with_fits, dr_wcls_with_fits, estimate_time_asymptotic, time_asymptotic_with_fits};
pub use emee::{dr_emee, dr_emee_with_fits, emee, emee_with, EmeeOptions};
pub use lagged::{dr_lagged, lagged_pseudo_outcomes, LaggedStages, ReferencePolicy};
pub use panel::{numerator_weight, pseudo_outcome_dr, pseudo_outcome_r, PseudoOutcomePanel};
pub use registry::{run_analysis, AnalysisConfig, EstimatorConfig, EstimatorKind};
pub use result::{Diagnostics, EstimateResult};
pub use rwcls::{efficient_r_wcls, efficient_r_wcls_with_fits, orthogonalize_basis, r_wcls, r_wcls_with_fits};
pub use sandwich::{mancl_derouen, sandwich_covariance};
pub use wcls::{wcls, wcls_with, WclsInputs};

pub use crate::linalg::{wls_solve, WlsFit};

use nalgebra::{DMatrix, DVector};

use crate::crossfit::CrossFitPlan;
use crate::data::{validate, MrtDataset, SmallSample, SpecRefs, Specs};
use crate::error::Result;
use crate::linalg::checked_inverse;

/// Rows of a linear estimating equation Σ w (z − xᵀβ) x = 0.
#[derive(Clone, Debug)]
pub struct LinearProblem {
    pub names: Vec<String>,
    /// Design rows (one per included record).
    pub x: DMatrix<f64>,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    /// Rows and weights of the derivative block ṁ = Σ v u uᵀ; `None` means
    /// the exact derivative Σ w x xᵀ.
    pub bread: Option<(DMatrix<f64>, Vec<f64>)>,
    /// Individual index of each row.
    pub individual: Vec<usize>,
}

/// Solution of a [`LinearProblem`] with its sandwich covariance.
#[derive(Clone, Debug)]
pub struct LinearSolution {
    pub beta: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Residuals z − xᵀβ of the rows with positive weight.
    pub residuals: Vec<f64>,
    pub bread_condition: f64,
    pub warnings: Vec<String>,
}

/// Fold of each individual for the sandwich: the K-fold assignment when the
/// plan is individual-level, otherwise a single group.
pub fn sandwich_folds(plan: Option<&CrossFitPlan>, n: usize) -> (Vec<usize>, usize) {
    if let Some(plan) = plan {
        let folds: Option<Vec<usize>> = (0..n).map(|i| plan.individual_fold(i)).collect();
        if let Some(folds) = folds {
            return (folds, plan.folds.len());
        }
    }
    (vec![0; n], 1)
}

pub fn solve_linear(
    problem: &LinearProblem,
    n: usize,
    folds: &[usize],
    k: usize,
    small_sample: SmallSample,
) -> Result<LinearSolution> {
    let fit = wls_solve(&problem.x, &problem.z, &problem.w, &problem.names)?;
    let d = problem.x.ncols();
    let residuals: Vec<f64> = (0..problem.x.nrows())
        .map(|r| problem.z[r] - problem.x.row(r).transpose().dot(&fit.beta))
        .collect();
    let mut m = vec![DVector::zeros(d); n];
    let mut m_dot = vec![DMatrix::zeros(d, d); n];
    let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, &i) in problem.individual.iter().enumerate() {
        rows_of[i].push(r);
    }
    let mut warnings = Vec::new();
    let bread_inv = match small_sample {
        SmallSample::ManclDerouen => Some(checked_inverse(&fit.bread, &problem.names)?.0),
        SmallSample::None => None,
    };
    for i in 0..n {
        let rows = &rows_of[i];
        let mut e: Vec<f64> = rows.iter().map(|&r| residuals[r]).collect();
        if let Some(binv) = &bread_inv {
            let xi = DMatrix::from_fn(rows.len(), d, |a, b| problem.x[(rows[a], b)]);
            let wi: Vec<f64> = rows.iter().map(|&r| problem.w[r]).collect();
            match mancl_derouen(&xi, &wi, &e, binv) {
                Some(adj) => e = adj.iter().copied().collect(),
                None => warnings.push(format!(
                    "leverage block of individual {i} is singular; small-sample correction skipped"
                )),
            }
        }
        for (s, &r) in rows.iter().enumerate() {
            let we = problem.w[r] * e[s];
            for a in 0..d {
                m[i][a] += we * problem.x[(r, a)];
            }
            let (u, v) = match &problem.bread {
                Some((bx, bw)) => (bx.row(r), bw[r]),
                None => (problem.x.row(r), problem.w[r]),
            };
            for a in 0..d {
                for b in 0..d {
                    m_dot[i][(a, b)] += v * u[a] * u[b];
                }
            }
        }
    }
    let (covariance, bread_condition) = sandwich_covariance(&m, &m_dot, folds, k, &problem.names)?;
    let residuals = residuals.iter().zip(&problem.w).filter(|(_, &w)| w > 0.0).map(|(&e, _)| e).collect();
    Ok(LinearSolution { beta: fit.beta, covariance, residuals, bread_condition, warnings })
}

/// Validates the dataset against the specs, failing on violations.
pub(crate) fn check_dataset(dataset: &MrtDataset, specs: &Specs) -> Result<()> {
    validate(
        dataset,
        SpecRefs {
            moderator: Some(&specs.moderator),
            controls: Some(&specs.controls),
            extra: None,
            epsilon: Some(specs.epsilon),
        },
    )
    .into_result()
}
