//! Log relative risk estimators for binary outcomes: EMEE and DR-EMEE.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::panel::numerator_weight;
use super::result::{Diagnostics, EstimateResult};
use super::{check_dataset, sandwich_covariance, sandwich_folds};
use crate::crossfit::CrossFitPlan;
use crate::data::{DesignRows, MrtDataset, OutcomeKind, Specs};
use crate::error::{Error, Result};
use crate::linalg::{equilibrated_condition, symmetrize, CONDITION_LIMIT};
use crate::nuisance::{estimate_nuisances, fit_numerator, NuisanceConfig, NuisanceFits};

/// Floor applied to outcome-model predictions entering log-risk ratios.
pub const RISK_FLOOR: f64 = 1e-6;

/// Newton–Raphson settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmeeOptions {
    pub max_iter: usize,
    /// Converged once every component of the Newton step is below this.
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for EmeeOptions {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-10, max_halvings: 30 }
    }
}

/// Newton iteration with step halving on ‖U‖. `eval` returns U(θ) and its Jacobian.
fn newton<F>(mut theta: DVector<f64>, options: EmeeOptions, eval: F) -> Result<(DVector<f64>, usize)>
where
    F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    let mut last_step = f64::INFINITY;
    for iter in 1..=options.max_iter {
        let (u, j) = eval(&theta);
        let Some(step) = j.clone().lu().solve(&(-&u)) else {
            return Err(Error::RankDeficient { condition: f64::INFINITY, columns: Vec::new() });
        };
        let norm = u.norm();
        let mut scale = 1.0;
        let mut next = &theta + &step;
        for _ in 0..options.max_halvings {
            let un = eval(&next).0.norm();
            if un.is_finite() && un <= norm {
                break;
            }
            scale *= 0.5;
            next = &theta + &step * scale;
        }
        last_step = step.amax() * scale;
        if !last_step.is_finite() {
            break;
        }
        theta = next;
        if step.amax() < options.tol {
            return Ok((theta, iter));
        }
    }
    Err(Error::Convergence { iterations: options.max_iter, last_step })
}

fn require_binary(dataset: &MrtDataset) -> Result<()> {
    if dataset.outcome_kind() != OutcomeKind::Binary {
        return Err(Error::Incompatible("log relative risk estimation needs a binary outcome".into()));
    }
    if dataset.has_missing_outcomes() {
        return Err(Error::Incompatible("log relative risk estimation does not support missing outcomes".into()));
    }
    Ok(())
}

pub fn emee(dataset: &MrtDataset, specs: &Specs) -> Result<EstimateResult> {
    emee_with(dataset, specs, EmeeOptions::default())
}

/// Solves Σ W e^{−A fᵀβ}(Y − e^{gᵀα + A fᵀβ}) [g; (A − p̃) f] = 0 for (α, β)
/// with known randomization probabilities and reports β.
pub fn emee_with(dataset: &MrtDataset, specs: &Specs, options: EmeeOptions) -> Result<EstimateResult> {
    check_dataset(dataset, specs)?;
    require_binary(dataset)?;
    let recs = dataset.records();
    let rows: Vec<usize> = (0..recs.len()).filter(|&i| recs[i].is_available()).collect();
    let numerator = fit_numerator(&specs.numerator, dataset, &rows, specs.epsilon)?;
    let g = DesignRows::resolve(&specs.controls.terms, dataset.feature_names(), false, false)?;
    let f = DesignRows::resolve(&specs.moderator.terms, dataset.feature_names(), false, false)?;
    let (p, q) = (g.len(), f.len());
    let (mut gm, mut fm) = (DMatrix::zeros(rows.len(), p), DMatrix::zeros(rows.len(), q));
    let (mut a, mut y, mut w, mut centered, mut individual) = (vec![], vec![], vec![], vec![], vec![]);
    let (mut gb, mut fb) = (vec![0.0; p], vec![0.0; q]);
    for (r, &i) in rows.iter().enumerate() {
        let rec = &recs[i];
        let ph = rec
            .prob
            .ok_or_else(|| Error::Incompatible("EMEE needs known randomization probabilities".into()))?;
        let pt = numerator.predict(rec);
        g.fill(rec, rec.a, &mut gb);
        f.fill(rec, rec.a, &mut fb);
        gm.row_mut(r).copy_from_slice(&gb);
        fm.row_mut(r).copy_from_slice(&fb);
        a.push(f64::from(rec.a));
        y.push(rec.y.unwrap_or(0.0));
        w.push(numerator_weight(rec.a, pt, ph));
        centered.push(f64::from(rec.a) - pt);
        individual.push(rec.individual);
    }
    let d = p + q;
    let row_x = |r: usize| {
        DVector::from_iterator(d, gm.row(r).iter().copied().chain(fm.row(r).iter().map(|v| v * centered[r])))
    };
    // Per-row contribution to U and to the Jacobian.
    let contribution = |theta: &DVector<f64>, r: usize| {
        let alpha = theta.rows(0, p);
        let beta = theta.rows(p, q);
        let ga = gm.row(r).transpose().dot(&alpha);
        let fb = fm.row(r).transpose().dot(&beta);
        let x = row_x(r);
        let damped = (-a[r] * fb).exp() * y[r];
        let u = &x * (w[r] * (damped - ga.exp()));
        let mut jac_row = DVector::zeros(d);
        for c in 0..p {
            jac_row[c] = ga.exp() * gm[(r, c)];
        }
        for c in 0..q {
            jac_row[p + c] = a[r] * damped * fm[(r, c)];
        }
        let jac = -(&x * jac_row.transpose()) * w[r];
        (u, jac)
    };
    let eval = |theta: &DVector<f64>| {
        let mut u = DVector::zeros(d);
        let mut j = DMatrix::zeros(d, d);
        for r in 0..rows.len() {
            let (ur, jr) = contribution(theta, r);
            u += ur;
            j += jr;
        }
        (u, j)
    };
    let mut start = DVector::zeros(d);
    if let Some(ic) = specs.controls.terms.iter().position(|t| *t == crate::data::Term::Intercept) {
        let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
        if mean > 0.0 {
            start[ic] = mean.ln();
        }
    }
    let (theta, iterations) = newton(start, options, eval)?;

    let n = dataset.n();
    let mut m = vec![DVector::zeros(d); n];
    let mut m_dot = vec![DMatrix::zeros(d, d); n];
    for r in 0..rows.len() {
        let (ur, jr) = contribution(&theta, r);
        m[individual[r]] += ur;
        m_dot[individual[r]] -= jr;
    }
    let (cov, condition) = general_sandwich(&m, &m_dot)?;
    let beta = theta.rows(p, q).into_owned();
    let cov_b = cov.view((p, p), (q, q)).into_owned();
    let mut warnings = Vec::new();
    if specs.small_sample != crate::data::SmallSample::None {
        warnings.push("small-sample correction is not applied to EMEE".into());
    }
    let diagnostics = Diagnostics {
        n_individuals: n,
        n_records: rows.len(),
        folds: 1,
        bread_condition: condition,
        iterations: Some(iterations),
        warnings,
        ..Default::default()
    };
    Ok(EstimateResult::new("EMEE", specs.moderator.names(), &beta, &cov_b, diagnostics))
}

/// B⁻¹ M B⁻ᵀ / n for a non-symmetric derivative block B.
fn general_sandwich(m: &[DVector<f64>], m_dot: &[DMatrix<f64>]) -> Result<(DMatrix<f64>, f64)> {
    let n = m.len() as f64;
    let d = m[0].len();
    let mut bread = DMatrix::zeros(d, d);
    let mut meat = DMatrix::zeros(d, d);
    for (mi, mdi) in m.iter().zip(m_dot) {
        bread += mdi / n;
        meat += mi * mi.transpose() / n;
    }
    let sv = bread.clone().svd(false, false).singular_values;
    let condition = if sv.min() > 0.0 { sv.max() / sv.min() } else { f64::INFINITY };
    let inv = bread
        .try_inverse()
        .filter(|_| condition < CONDITION_LIMIT)
        .ok_or(Error::RankDeficient { condition, columns: Vec::new() })?;
    Ok((symmetrize(&(&inv * meat * inv.transpose() / n)), condition))
}

pub fn dr_emee(dataset: &MrtDataset, specs: &Specs, config: &NuisanceConfig, plan: &CrossFitPlan) -> Result<EstimateResult> {
    check_dataset(dataset, specs)?;
    require_binary(dataset)?;
    let fits = estimate_nuisances(dataset, specs, plan, config)?;
    dr_emee_with_fits(dataset, specs, &fits, Some(plan), EmeeOptions::default())
}

/// Solves Σ [W e^{−A fᵀβ}(A − p̃)(Y − ĝ(H, A)) + σ̃²(e^{−fᵀβ} ĝ(H, 1) − ĝ(H, 0))] f = 0.
pub fn dr_emee_with_fits(
    dataset: &MrtDataset,
    specs: &Specs,
    fits: &NuisanceFits,
    plan: Option<&CrossFitPlan>,
    options: EmeeOptions,
) -> Result<EstimateResult> {
    require_binary(dataset)?;
    let recs = dataset.records();
    let rows: Vec<usize> = (0..recs.len()).filter(|&i| recs[i].is_available()).collect();
    let f = DesignRows::resolve(&specs.moderator.terms, dataset.feature_names(), false, false)?;
    let q = f.len();
    let mut fm = DMatrix::zeros(rows.len(), q);
    let mut fb = vec![0.0; q];
    let mut clipped = 0usize;
    let mut clip = |v: f64| {
        if v <= 0.0 {
            clipped += 1;
            RISK_FLOOR
        } else {
            v
        }
    };
    struct Row {
        a: f64,
        resid: f64,
        g0: f64,
        g1: f64,
        sigma2: f64,
        individual: usize,
    }
    let mut data = Vec::with_capacity(rows.len());
    for (r, &i) in rows.iter().enumerate() {
        let rec = &recs[i];
        f.fill(rec, rec.a, &mut fb);
        fm.row_mut(r).copy_from_slice(&fb);
        let pt = fits.p_tilde[i];
        let (g0, g1) = (clip(fits.g0[i]), clip(fits.g1[i]));
        let ga = if rec.a == 1 { g1 } else { g0 };
        let w = numerator_weight(rec.a, pt, fits.p_hat[i]);
        data.push(Row {
            a: f64::from(rec.a),
            resid: w * (f64::from(rec.a) - pt) * (rec.y.unwrap_or(0.0) - ga),
            g0,
            g1,
            sigma2: pt * (1.0 - pt),
            individual: rec.individual,
        });
    }
    let contribution = |beta: &DVector<f64>, r: usize| {
        let d = &data[r];
        let fr = fm.row(r).transpose();
        let fb = fr.dot(beta);
        let u = (d.resid * (-d.a * fb).exp() + d.sigma2 * ((-fb).exp() * d.g1 - d.g0)) * &fr;
        let slope = -d.a * d.resid * (-d.a * fb).exp() - d.sigma2 * (-fb).exp() * d.g1;
        (u, &fr * fr.transpose() * slope)
    };
    let eval = |beta: &DVector<f64>| {
        let mut u = DVector::zeros(q);
        let mut j = DMatrix::zeros(q, q);
        for r in 0..data.len() {
            let (ur, jr) = contribution(beta, r);
            u += ur;
            j += jr;
        }
        (u, j)
    };
    let (beta, iterations) = newton(DVector::zeros(q), options, eval)?;
    let n = dataset.n();
    let mut m = vec![DVector::zeros(q); n];
    let mut m_dot = vec![DMatrix::zeros(q, q); n];
    for (r, d) in data.iter().enumerate() {
        m[d.individual] += contribution(&beta, r).0;
        let fr = fm.row(r).transpose();
        m_dot[d.individual] += &fr * fr.transpose() * (d.sigma2 * d.g0);
    }
    let (folds, k) = sandwich_folds(plan, n);
    let names = specs.moderator.names();
    let (cov, condition) = sandwich_covariance(&m, &m_dot, &folds, k, &names)?;
    let mut warnings = Vec::new();
    if clipped > 0 {
        log::warn!("{clipped} outcome-model predictions were <= 0 and clipped to {RISK_FLOOR}");
        warnings.push(format!("{clipped} outcome-model predictions were <= 0 and clipped to {RISK_FLOOR}"));
    }
    if equilibrated_condition(&cov) >= CONDITION_LIMIT {
        warnings.push("covariance is nearly singular".into());
    }
    let diagnostics = Diagnostics {
        n_individuals: n,
        n_records: rows.len(),
        folds: k,
        bread_condition: condition,
        iterations: Some(iterations),
        warnings,
        ..Default::default()
    };
    Ok(EstimateResult::new("DR-EMEE", names, &beta, &cov, diagnostics))
}
