//! Weighted, centered least squares.

use nalgebra::DMatrix;

use super::panel::numerator_weight;
use super::result::{Diagnostics, EstimateResult};
use super::{check_dataset, solve_linear, LinearProblem};
use crate::data::{DesignRows, MrtDataset, Specs};
use crate::error::{Error, Result};
use crate::nuisance::fit_numerator;

/// Optional nuisance inputs for WCLS.
#[derive(Clone, Copy, Debug, Default)]
pub struct WclsInputs<'a> {
    /// p̂(A = 1 | H) per record; defaults to the known `prob` column.
    pub p_hat: Option<&'a [f64]>,
    /// p̂(R = 1 | H) per record, used when `specs.ipw_missing` is set.
    pub p_r: Option<&'a [f64]>,
}

/// WCLS with known randomization probabilities.
pub fn wcls(dataset: &MrtDataset, specs: &Specs) -> Result<EstimateResult> {
    wcls_with(dataset, specs, WclsInputs::default())
}

/// Minimises Σ W (Y − gᵀα − (A − p̃) fᵀβ)² jointly in (α, β) and reports β.
pub fn wcls_with(dataset: &MrtDataset, specs: &Specs, inputs: WclsInputs<'_>) -> Result<EstimateResult> {
    check_dataset(dataset, specs)?;
    if specs.controls.terms.is_empty() {
        return Err(Error::Parameter("WCLS needs at least one control term".into()));
    }
    let missing = dataset.has_missing_outcomes();
    if missing && !specs.ipw_missing {
        return Err(Error::Incompatible(
            "dataset has missing outcomes; use dr_wcls_missing or enable inverse-probability weighting".into(),
        ));
    }
    let p_r = if missing {
        Some(inputs.p_r.ok_or_else(|| {
            Error::Incompatible("inverse-probability weighting needs p(R = 1 | H) per record".into())
        })?)
    } else {
        None
    };
    let recs = dataset.records();
    let p_hat: Vec<f64> = match inputs.p_hat {
        Some(p) => p.to_vec(),
        None => recs
            .iter()
            .map(|r| r.prob)
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::Incompatible("WCLS needs known randomization probabilities".into()))?,
    };
    let rows: Vec<usize> = (0..recs.len()).filter(|&i| recs[i].is_available()).collect();
    let numerator = fit_numerator(&specs.numerator, dataset, &rows, specs.epsilon)?;

    let g = DesignRows::resolve(&specs.controls.terms, dataset.feature_names(), false, false)?;
    let f = DesignRows::resolve(&specs.moderator.terms, dataset.feature_names(), false, false)?;
    let (p, q) = (g.len(), f.len());
    let mut x = DMatrix::zeros(rows.len(), p + q);
    let mut z = Vec::with_capacity(rows.len());
    let mut w = Vec::with_capacity(rows.len());
    let mut individual = Vec::with_capacity(rows.len());
    let (mut gb, mut fb) = (vec![0.0; p], vec![0.0; q]);
    for (r, &i) in rows.iter().enumerate() {
        let rec = &recs[i];
        let pt = numerator.predict(rec);
        g.fill(rec, rec.a, &mut gb);
        f.fill(rec, rec.a, &mut fb);
        let centered = f64::from(rec.a) - pt;
        for j in 0..p {
            x[(r, j)] = gb[j];
        }
        for j in 0..q {
            x[(r, p + j)] = centered * fb[j];
        }
        let mut weight = numerator_weight(rec.a, pt, p_hat[i]);
        if let Some(pr) = p_r {
            weight *= f64::from(rec.r) / pr[i];
        }
        z.push(if rec.is_observed() { rec.y.unwrap_or(0.0) } else { 0.0 });
        w.push(if rec.is_observed() { weight } else { 0.0 });
        individual.push(rec.individual);
    }
    let names: Vec<String> = g
        .names()
        .iter()
        .map(|n| format!("control {n}"))
        .chain(f.names().iter().cloned())
        .collect();
    let problem = LinearProblem { names, x, z, w, bread: None, individual };
    let n = dataset.n();
    let sol = solve_linear(&problem, n, &vec![0; n], 1, specs.small_sample)?;
    let beta = sol.beta.rows(p, q).into_owned();
    let cov = sol.covariance.view((p, p), (q, q)).into_owned();
    let diagnostics = Diagnostics {
        n_individuals: n,
        n_records: rows.len(),
        folds: 1,
        bread_condition: sol.bread_condition,
        warnings: sol.warnings,
        ..Default::default()
    }
    .with_residuals(&sol.residuals);
    Ok(EstimateResult::new("WCLS", specs.moderator.names(), &beta, &cov, diagnostics))
}
