//! Monte Carlo harness: repeated generation and estimation with summary metrics.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate, GenConfig};
use super::report::{ReportRow, SimulationReport};
use crate::data::{ModeratorSpec, Term};
use crate::error::{Error, Result};
use crate::estimators::{run_analysis, AnalysisConfig, EstimatorKind};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub replicates: usize,
    pub seed: u64,
    pub generator: GenConfig,
    /// Scenario grid over β11; empty runs the generator's own value.
    pub beta11_grid: Vec<f64>,
    /// True coefficients per moderator term; derived from the generator for
    /// the `1` and `1 + S` moderators when omitted.
    pub truth: Option<Vec<f64>>,
    pub analysis: AnalysisConfig,
    /// Label of the estimator used as the efficiency reference; defaults to
    /// the first WCLS estimator.
    pub reference: Option<String>,
    /// Largest tolerated fraction of failed replicates per estimator.
    pub max_failure_rate: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            replicates: 100,
            seed: 0,
            generator: GenConfig::default(),
            beta11_grid: Vec::new(),
            truth: None,
            analysis: AnalysisConfig::default(),
            reference: None,
            max_failure_rate: 0.02,
        }
    }
}

/// One replicate's output for one estimator: coefficients and standard
/// errors, or the failure message.
type Outcome = std::result::Result<(Vec<f64>, Vec<f64>), String>;

fn truth_for(config: &MonteCarloConfig, gen: &GenConfig) -> Result<Vec<f64>> {
    if let Some(t) = &config.truth {
        return Ok(t.clone());
    }
    let moderator = ModeratorSpec::parse(&config.analysis.moderator)?;
    let s = Term::Column("S".into());
    match moderator.terms.as_slice() {
        [Term::Intercept] => Ok(vec![gen.marginal_effect()]),
        [Term::Intercept, t] if *t == s => Ok(vec![gen.beta10, gen.beta11]),
        _ => Err(Error::Config("`truth` is required for this moderator".into())),
    }
}

/// Runs every scenario. Replicate `r` draws its data with seed
/// `derive_seed(seed, r)` and fits with an independent stream, so the report
/// does not depend on the number of worker threads.
pub fn monte_carlo(config: &MonteCarloConfig) -> Result<SimulationReport> {
    if config.replicates < 1 {
        return Err(Error::Config("`replicates` must be >= 1".into()));
    }
    config.generator.validate()?;
    config.analysis.check()?;
    let labels: Vec<String> = config.analysis.estimators.iter().map(|e| e.label()).collect();
    let reference = match &config.reference {
        Some(r) if labels.contains(r) => Some(r.clone()),
        Some(r) => return Err(Error::Config(format!("reference estimator `{r}` is not in the estimator list"))),
        None => config
            .analysis
            .estimators
            .iter()
            .find(|e| e.estimator == EstimatorKind::Wcls)
            .map(|e| e.label()),
    };
    let grid = if config.beta11_grid.is_empty() { vec![config.generator.beta11] } else { config.beta11_grid.clone() };
    let mut rows = Vec::new();
    let mut failures = BTreeMap::new();
    for (scenario, &beta11) in grid.iter().enumerate() {
        let gen = GenConfig { beta11, ..config.generator.clone() };
        let truth = truth_for(config, &gen)?;
        let outcomes: Vec<Vec<Outcome>> = (0..config.replicates)
            .into_par_iter()
            .map(|r| replicate(config, &gen, scenario as u64, r as u64, labels.len()))
            .collect::<Result<_>>()?;
        for (j, label) in labels.iter().enumerate() {
            let failed: Vec<&String> = outcomes.iter().filter_map(|o| o[j].as_ref().err()).collect();
            if failed.len() as f64 > config.max_failure_rate * config.replicates as f64 {
                return Err(Error::Harness(format!(
                    "{label} failed in {} of {} replicates (β11 = {beta11}); first error: {}",
                    failed.len(),
                    config.replicates,
                    failed[0]
                )));
            }
            *failures.entry(label.clone()).or_insert(0) += failed.len();
        }
        let ref_idx = reference.as_ref().and_then(|r| labels.iter().position(|l| l == r));
        for (j, label) in labels.iter().enumerate() {
            for (term, &true_value) in truth.iter().enumerate() {
                let own: Vec<(f64, f64)> = outcomes.iter().filter_map(|o| pick(&o[j], term)).collect();
                let paired: Option<Vec<((f64, f64), (f64, f64))>> = ref_idx.filter(|&k| k != j).map(|k| {
                    outcomes.iter().filter_map(|o| Some((pick(&o[k], term)?, pick(&o[j], term)?))).collect()
                });
                rows.push(ReportRow::summarize(label, term, beta11, true_value, &own, paired.as_deref()));
            }
        }
    }
    Ok(SimulationReport {
        replicates: config.replicates,
        seed: config.seed,
        reference,
        rows,
        failures,
        config: config.clone(),
    })
}

fn pick(o: &Outcome, term: usize) -> Option<(f64, f64)> {
    let (b, s) = o.as_ref().ok()?;
    Some((*b.get(term)?, *s.get(term)?))
}

fn replicate(config: &MonteCarloConfig, gen: &GenConfig, scenario: u64, r: u64, k: usize) -> Result<Vec<Outcome>> {
    let base = rng::derive_seed(config.seed, scenario);
    let data_seed = rng::derive_seed(base, 2 * r);
    let fit_seed = rng::derive_seed(base, 2 * r + 1);
    let dataset = generate(&GenConfig { seed: data_seed, ..gen.clone() })?;
    let results = run_analysis(&dataset, &config.analysis, fit_seed)?;
    debug_assert_eq!(results.len(), k);
    Ok(results
        .into_iter()
        .map(|(_, res)| match res {
            Ok(est) if est.se.iter().all(|s| s.is_finite()) => Ok((est.beta, est.se)),
            Ok(_) => Err("non-finite standard error".to_string()),
            Err(e) => Err(e.to_string()),
        })
        .collect())
}
