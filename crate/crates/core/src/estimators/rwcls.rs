//! R-WCLS and its efficient variant.

use nalgebra::DMatrix;

use super::panel::{numerator_weight, pseudo_outcome_r};
use super::result::{Diagnostics, EstimateResult};
use super::{check_dataset, sandwich_folds, solve_linear, LinearProblem};
use crate::crossfit::CrossFitPlan;
use crate::data::{DesignRows, MrtDataset, Specs, Term};
use crate::error::{Error, Result};
use crate::linalg::wls_solve;
use crate::nuisance::{estimate_nuisances, NuisanceConfig, NuisanceFits};

/// Cross-fits the nuisances and runs R-WCLS.
pub fn r_wcls(dataset: &MrtDataset, specs: &Specs, config: &NuisanceConfig, plan: &CrossFitPlan) -> Result<EstimateResult> {
    check_dataset(dataset, specs)?;
    let fits = estimate_nuisances(dataset, specs, plan, config)?;
    r_wcls_with_fits(dataset, specs, &fits, Some(plan))
}

/// R-WCLS on precomputed nuisance fits.
pub fn r_wcls_with_fits(
    dataset: &MrtDataset,
    specs: &Specs,
    fits: &NuisanceFits,
    plan: Option<&CrossFitPlan>,
) -> Result<EstimateResult> {
    solve_r(dataset, specs, fits, plan, None, "R-WCLS")
}

/// Efficient R-WCLS: removes the projection of ĝ(H,1) − ĝ(H,0) onto the
/// `perp_basis` directions orthogonal to f before solving.
pub fn efficient_r_wcls(
    dataset: &MrtDataset,
    specs: &Specs,
    config: &NuisanceConfig,
    plan: &CrossFitPlan,
    perp_basis: &[Term],
) -> Result<EstimateResult> {
    check_dataset(dataset, specs)?;
    let fits = estimate_nuisances(dataset, specs, plan, config)?;
    efficient_r_wcls_with_fits(dataset, specs, &fits, Some(plan), perp_basis)
}

pub fn efficient_r_wcls_with_fits(
    dataset: &MrtDataset,
    specs: &Specs,
    fits: &NuisanceFits,
    plan: Option<&CrossFitPlan>,
    perp_basis: &[Term],
) -> Result<EstimateResult> {
    if perp_basis.is_empty() {
        return solve_r(dataset, specs, fits, plan, None, "Efficient R-WCLS");
    }
    if let Some(t) = perp_basis.iter().find(|t| specs.moderator.terms.contains(t)) {
        return Err(Error::Parameter(format!("perp basis term `{t}` is also a moderator")));
    }
    let lambda = lambda_perp(dataset, fits, specs, perp_basis)?;
    solve_r(dataset, specs, fits, plan, Some(&lambda), "Efficient R-WCLS")
}

/// Residualizes the columns of `basis` on `f` under weights `w`, so that
/// Σ w b⊥ fᵀ = 0.
pub fn orthogonalize_basis(f: &DMatrix<f64>, basis: &DMatrix<f64>, w: &[f64], names: &[String]) -> Result<DMatrix<f64>> {
    let mut out = basis.clone();
    for j in 0..basis.ncols() {
        let col: Vec<f64> = basis.column(j).iter().copied().collect();
        let fit = wls_solve(f, &col, w, names)?;
        let fitted = f * &fit.beta;
        for r in 0..basis.nrows() {
            out[(r, j)] -= fitted[r];
        }
    }
    Ok(out)
}

/// Λ⊥ per record (zero for unavailable records).
fn lambda_perp(dataset: &MrtDataset, fits: &NuisanceFits, specs: &Specs, perp: &[Term]) -> Result<Vec<f64>> {
    let recs = dataset.records();
    let rows: Vec<usize> = (0..recs.len()).filter(|&i| recs[i].is_available()).collect();
    let f_rows = DesignRows::resolve(&specs.moderator.terms, dataset.feature_names(), false, false)?;
    let b_rows = DesignRows::resolve(perp, dataset.feature_names(), false, false)?;
    let f = f_rows.matrix(rows.iter().map(|&i| &recs[i]));
    let b = b_rows.matrix(rows.iter().map(|&i| &recs[i]));
    let w: Vec<f64> = rows.iter().map(|&i| fits.p_tilde[i] * (1.0 - fits.p_tilde[i])).collect();
    let b_perp = orthogonalize_basis(&f, &b, &w, f_rows.names())?;
    let (kb, q) = (b.ncols(), f.ncols());
    let design = DMatrix::from_fn(rows.len(), kb + q, |r, c| if c < kb { b_perp[(r, c)] } else { f[(r, c - kb)] });
    let names: Vec<String> = b_rows.names().iter().chain(f_rows.names()).cloned().collect();
    let delta: Vec<f64> = rows.iter().map(|&i| fits.g1[i] - fits.g0[i]).collect();
    let fit = wls_solve(&design, &delta, &w, &names)?;
    let eta = fit.beta.rows(0, kb);
    let mut lambda = vec![0.0; recs.len()];
    for (r, &i) in rows.iter().enumerate() {
        lambda[i] = b_perp.row(r).transpose().dot(&eta);
    }
    Ok(lambda)
}

fn solve_r(
    dataset: &MrtDataset,
    specs: &Specs,
    fits: &NuisanceFits,
    plan: Option<&CrossFitPlan>,
    lambda: Option<&[f64]>,
    label: &str,
) -> Result<EstimateResult> {
    let recs = dataset.records();
    let missing = dataset.has_missing_outcomes();
    if missing && !specs.ipw_missing {
        return Err(Error::Incompatible(
            "dataset has missing outcomes; use dr_wcls_missing or enable inverse-probability weighting".into(),
        ));
    }
    let p_r = if missing {
        Some(fits.p_r.as_ref().ok_or_else(|| {
            Error::Incompatible("inverse-probability weighting needs a missingness model".into())
        })?)
    } else {
        None
    };
    let f = DesignRows::resolve(&specs.moderator.terms, dataset.feature_names(), false, false)?;
    let q = f.len();
    let rows: Vec<usize> = (0..recs.len()).filter(|&i| recs[i].is_available()).collect();
    let mut x = DMatrix::zeros(rows.len(), q);
    let mut bx = DMatrix::zeros(rows.len(), q);
    let (mut z, mut w, mut bw, mut individual) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut fb = vec![0.0; q];
    for (r, &i) in rows.iter().enumerate() {
        let rec = &recs[i];
        let pt = fits.p_tilde[i];
        let centered = f64::from(rec.a) - pt;
        f.fill(rec, rec.a, &mut fb);
        for j in 0..q {
            x[(r, j)] = centered * fb[j];
            bx[(r, j)] = fb[j];
        }
        match pseudo_outcome_r(rec, fits, i).filter(|_| rec.is_observed()) {
            Some(y_r) => {
                let mut weight = numerator_weight(rec.a, pt, fits.p_hat[i]);
                if let Some(pr) = p_r {
                    weight /= pr[i];
                }
                z.push(y_r - lambda.map_or(0.0, |l| centered * l[i]));
                w.push(weight);
            }
            None => {
                z.push(0.0);
                w.push(0.0);
            }
        }
        bw.push(pt * (1.0 - pt));
        individual.push(rec.individual);
    }
    let problem = LinearProblem { names: f.names().to_vec(), x, z, w, bread: Some((bx, bw)), individual };
    let n = dataset.n();
    let (folds, k) = sandwich_folds(plan, n);
    let sol = solve_linear(&problem, n, &folds, k, specs.small_sample)?;
    let diagnostics = Diagnostics {
        n_individuals: n,
        n_records: rows.len(),
        folds: k,
        bread_condition: sol.bread_condition,
        warnings: sol.warnings,
        ..Default::default()
    }
    .with_residuals(&sol.residuals);
    Ok(EstimateResult::new(label, specs.moderator.names(), &sol.beta, &sol.covariance, diagnostics))
}
