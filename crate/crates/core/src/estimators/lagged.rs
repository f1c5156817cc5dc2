//! Doubly robust estimation of lagged excursion effects over a window Δ.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::panel::numerator_weight;
use super::result::{Diagnostics, EstimateResult};
use super::{check_dataset, dr_wcls, sandwich_folds, solve_linear, LinearProblem};
use crate::crossfit::CrossFitPlan;
use crate::data::{DesignRows, MrtDataset, Specs};
use crate::error::{Error, Result};
use crate::nuisance::{estimate_nuisances, NuisanceConfig, NuisanceFits, NuisanceSource, Task};
use crate::rng;

/// Largest importance-weight product tolerated before giving up.
pub const HORIZON_WEIGHT_LIMIT: f64 = 1e6;

/// Reference treatment policy π for decisions after the anchor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferencePolicy {
    Always0,
    Always1,
    /// π equals the randomization probability.
    SameAsP,
    Constant(f64),
}

impl ReferencePolicy {
    /// π(a | H) given p̂(1 | H).
    pub fn prob(&self, a: u8, p_hat: f64) -> f64 {
        let p1 = match self {
            ReferencePolicy::Always0 => 0.0,
            ReferencePolicy::Always1 => 1.0,
            ReferencePolicy::SameAsP => p_hat,
            ReferencePolicy::Constant(c) => *c,
        };
        if a == 1 {
            p1
        } else {
            1.0 - p1
        }
    }
}

/// Stage-wise outcome models evaluated at every record: `g0[u][s]` and
/// `g1[u][s]` are ĝ_u(H_s, 0) and ĝ_u(H_s, 1), where stage `u` models the
/// window outcome `Δ − 1 − u` decisions ahead.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LaggedStages {
    pub g0: Vec<Vec<f64>>,
    pub g1: Vec<Vec<f64>>,
}

impl LaggedStages {
    fn at(&self, u: usize, s: usize, a: u8) -> f64 {
        if a == 1 {
            self.g1[u][s]
        } else {
            self.g0[u][s]
        }
    }
}

/// Pseudo-outcomes for every usable anchor: returns (anchor record index,
/// Ỹ^DR_{t,Δ}, the telescoping correction Σ_u W_{t,u}[ĝ_u − Σ_a π ĝ_{u+1}]).
pub fn lagged_pseudo_outcomes(
    dataset: &MrtDataset,
    delta: usize,
    policy: ReferencePolicy,
    p_hat: &[f64],
    p_tilde: &[f64],
    stages: &LaggedStages,
) -> Result<Vec<(usize, f64, f64)>> {
    let recs = dataset.records();
    let mut out = Vec::new();
    for ind in 0..dataset.n() {
        let span = dataset.span(ind);
        for t in span.clone() {
            let end = t + delta - 1;
            if end >= span.end || recs[end].t != recs[t].t + (delta as u32 - 1) || !recs[t].is_available() {
                continue;
            }
            let Some(y) = recs[end].y.filter(|_| recs[end].is_observed()) else {
                continue;
            };
            let mut w = 1.0;
            let mut correction = 0.0;
            for u in 0..delta - 1 {
                let (s, next) = (t + u, t + u + 1);
                let expected: f64 = (0..=1u8)
                    .map(|a| policy.prob(a, p_hat[next]) * stages.at(u + 1, next, a))
                    .sum();
                correction += w * (stages.at(u, s, recs[s].a) - expected);
                let a = recs[next].a;
                let p = if a == 1 { p_hat[next] } else { 1.0 - p_hat[next] };
                w *= policy.prob(a, p_hat[next]) / p;
                if w.abs() > HORIZON_WEIGHT_LIMIT {
                    return Err(Error::HorizonWeight {
                        individual: dataset.ids()[ind].clone(),
                        t: recs[t].t,
                        value: w,
                    });
                }
            }
            let last = delta - 1;
            let inner = w * (y - stages.at(last, end, recs[end].a)) - correction;
            let pt = p_tilde[t];
            let lead = numerator_weight(recs[t].a, pt, p_hat[t]) * (f64::from(recs[t].a) - pt) / (pt * (1.0 - pt));
            let effect = stages.g1[0][t] - stages.g0[0][t];
            out.push((t, lead * inner + effect, correction));
        }
    }
    Ok(out)
}

/// Backward recursion of stage models within one fold.
fn fit_stages_fold(
    dataset: &MrtDataset,
    plan: &CrossFitPlan,
    k: usize,
    learner: &NuisanceSource,
    delta: usize,
    policy: ReferencePolicy,
    p_hat: &[f64],
    seed: u64,
) -> Result<(Vec<usize>, LaggedStages)> {
    let recs = dataset.records();
    let fold = &plan.folds[k];
    let train: Vec<usize> = (0..recs.len())
        .filter(|&i| recs[i].is_available() && fold.train.contains(recs[i].individual, recs[i].t))
        .collect();
    let predict: Vec<usize> =
        (0..recs.len()).filter(|&i| fold.predict.contains(recs[i].individual, recs[i].t)).collect();
    let n = recs.len();
    let mut stages = LaggedStages { g0: vec![vec![0.0; n]; delta], g1: vec![vec![0.0; n]; delta] };
    let (model, features) = match learner {
        NuisanceSource::Constant(c) => {
            stages.g0.iter_mut().chain(stages.g1.iter_mut()).for_each(|v| v.fill(*c));
            return Ok((predict, stages));
        }
        NuisanceSource::Learned { learner, features } => (learner, features),
        NuisanceSource::Oracle { .. } => {
            return Err(Error::Incompatible("oracle outcome models are not available for lagged stages".into()))
        }
    };
    let rows = DesignRows::resolve(features, dataset.feature_names(), true, false)?;
    let all: Vec<usize> = train.iter().chain(&predict).copied().collect();
    let matrix = |idx: &[usize], a: Option<u8>| {
        let mut m = DMatrix::zeros(idx.len(), rows.len());
        let mut buf = vec![0.0; rows.len()];
        for (r, &i) in idx.iter().enumerate() {
            rows.fill(&recs[i], a.unwrap_or(recs[i].a), &mut buf);
            for (c, v) in buf.iter().enumerate() {
                m[(r, c)] = *v;
            }
        }
        m
    };
    let (x0, x1) = (matrix(&all, Some(0)), matrix(&all, Some(1)));
    let next_of = |s: usize| {
        let span = dataset.span(recs[s].individual);
        (s + 1 < span.end && recs[s + 1].t == recs[s].t + 1).then_some(s + 1)
    };
    for u in (0..delta).rev() {
        let mut idx = Vec::new();
        let mut target = Vec::new();
        for &s in &train {
            if u == delta - 1 {
                if let Some(y) = recs[s].y.filter(|_| recs[s].is_observed()) {
                    idx.push(s);
                    target.push(y);
                }
            } else if let Some(nx) = next_of(s) {
                let v: f64 = (0..=1u8).map(|a| policy.prob(a, p_hat[nx]) * stages.at(u + 1, nx, a)).sum();
                idx.push(s);
                target.push(v);
            }
        }
        if idx.is_empty() {
            return Err(Error::Plan(format!("fold {k} has no training rows for lagged stage {u}")));
        }
        let fitted = model.fit(&matrix(&idx, None), &target, None, Task::Regression, rng::derive_seed(seed, u as u64))?;
        let (p0, p1) = (fitted.predict(&x0), fitted.predict(&x1));
        for (r, &s) in all.iter().enumerate() {
            stages.g0[u][s] = p0[r];
            stages.g1[u][s] = p1[r];
        }
    }
    Ok((predict, stages))
}

/// Lagged DR estimator with window `delta` under reference policy `policy`.
/// Stage models are fitted by backward recursion within each fold.
pub fn dr_lagged(
    dataset: &MrtDataset,
    specs: &Specs,
    config: &NuisanceConfig,
    plan: &CrossFitPlan,
    delta: usize,
    policy: ReferencePolicy,
) -> Result<EstimateResult> {
    if delta == 0 {
        return Err(Error::Parameter("lag window must be >= 1".into()));
    }
    if delta == 1 {
        return dr_wcls(dataset, specs, config, plan);
    }
    check_dataset(dataset, specs)?;
    if dataset.has_missing_outcomes() {
        return Err(Error::Incompatible("lagged estimation does not support missing outcomes".into()));
    }
    if (dataset.t_max() as usize) < delta {
        return Err(Error::Parameter(format!("T={} is shorter than the lag window {delta}", dataset.t_max())));
    }
    if let ReferencePolicy::Constant(c) = policy {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::Parameter(format!("reference probability {c} outside [0, 1]")));
        }
    }
    let mut base = config.clone();
    base.outcome = NuisanceSource::Constant(0.0);
    let fits: NuisanceFits = estimate_nuisances(dataset, specs, plan, &base)?;
    let per_fold: Vec<(Vec<usize>, LaggedStages)> = (0..plan.folds.len())
        .into_par_iter()
        .map(|k| {
            fit_stages_fold(
                dataset,
                plan,
                k,
                &config.outcome,
                delta,
                policy,
                &fits.p_hat,
                rng::derive_seed(config.seed, 1_000 + k as u64),
            )
        })
        .collect::<Result<_>>()?;
    let n = dataset.len();
    let mut stages = LaggedStages { g0: vec![vec![0.0; n]; delta], g1: vec![vec![0.0; n]; delta] };
    let mut counts = vec![0usize; n];
    for (rows, _) in &per_fold {
        for &s in rows {
            counts[s] += 1;
        }
    }
    for (rows, st) in &per_fold {
        for &s in rows {
            let w = 1.0 / counts[s] as f64;
            for u in 0..delta {
                stages.g0[u][s] += w * st.g0[u][s];
                stages.g1[u][s] += w * st.g1[u][s];
            }
        }
    }
    let pseudo = lagged_pseudo_outcomes(dataset, delta, policy, &fits.p_hat, &fits.p_tilde, &stages)?;
    if pseudo.is_empty() {
        return Err(Error::Parameter("no decision point has a complete lag window".into()));
    }
    let f = DesignRows::resolve(&specs.moderator.terms, dataset.feature_names(), false, false)?;
    let recs = dataset.records();
    let x = f.matrix(pseudo.iter().map(|(t, _, _)| &recs[*t]));
    let z = pseudo.iter().map(|p| p.1).collect();
    let w = pseudo.iter().map(|(t, _, _)| fits.p_tilde[*t] * (1.0 - fits.p_tilde[*t])).collect();
    let individual = pseudo.iter().map(|(t, _, _)| recs[*t].individual).collect();
    let problem = LinearProblem { names: f.names().to_vec(), x, z, w, bread: None, individual };
    let (folds, k) = sandwich_folds(Some(plan), dataset.n());
    let sol = solve_linear(&problem, dataset.n(), &folds, k, specs.small_sample)?;
    let diagnostics = Diagnostics {
        n_individuals: dataset.n(),
        n_records: pseudo.len(),
        folds: k,
        bread_condition: sol.bread_condition,
        warnings: sol.warnings,
        ..Default::default()
    }
    .with_residuals(&sol.residuals);
    let label = format!("DR-WCLS (lag {delta})");
    Ok(EstimateResult::new(&label, specs.moderator.names(), &sol.beta, &sol.covariance, diagnostics))
}
