//! Outcome deletion mechanisms for missing-data experiments.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{MrtDataset, OptionalColumns, ORACLE_PREFIX};
use crate::error::{Error, Result};
use crate::nuisance::expit;
use crate::rng;

/// Column holding the true observation probability P(R = 1 | H).
pub const ORACLE_PR: &str = "oracle_pr";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "snake_case", deny_unknown_fields)]
pub enum MissingConfig {
    #[default]
    None,
    /// Each outcome is withheld with probability `rate`.
    Mcar { rate: f64 },
    /// P(R = 1 | H) = expit(intercept + Σ coef · column) over history columns.
    Mar { intercept: f64, coefficients: Vec<(String, f64)> },
}

impl MissingConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            MissingConfig::Mcar { rate } if !(0.0..1.0).contains(rate) => {
                Err(Error::Config(format!("missing rate must lie in [0, 1), got {rate}")))
            }
            MissingConfig::Mar { coefficients, .. } => {
                for (name, _) in coefficients {
                    if name.starts_with(ORACLE_PREFIX) || matches!(name.as_str(), "a" | "y") {
                        return Err(Error::Config(format!(
                            "missingness may depend on history columns only, not `{name}`"
                        )));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Withholds outcomes according to `config`, marking them `r = 0`, and appends
/// the true observation probability as `oracle_pr`. `None` and a zero MCAR
/// rate return the dataset unchanged.
pub fn inject_missing(dataset: &MrtDataset, config: &MissingConfig, seed: u64) -> Result<MrtDataset> {
    config.validate()?;
    let probs: Vec<f64> = match config {
        MissingConfig::None => return Ok(dataset.clone()),
        MissingConfig::Mcar { rate } if *rate == 0.0 => return Ok(dataset.clone()),
        MissingConfig::Mcar { rate } => vec![1.0 - rate; dataset.len()],
        MissingConfig::Mar { intercept, coefficients } => {
            let cols = coefficients
                .iter()
                .map(|(name, c)| {
                    let idx = dataset
                        .feature_index(name)
                        .ok_or_else(|| Error::Config(format!("missingness column `{name}` not in dataset")))?;
                    Ok((idx, *c))
                })
                .collect::<Result<Vec<_>>>()?;
            dataset
                .records()
                .iter()
                .map(|r| expit(intercept + cols.iter().map(|(j, c)| c * r.history[*j]).sum::<f64>()))
                .collect()
        }
    };
    let mut names = dataset.feature_names().to_vec();
    let existing = dataset.feature_index(ORACLE_PR);
    if existing.is_none() {
        names.push(ORACLE_PR.to_string());
    }
    let mut records = dataset.records().to_vec();
    for i in 0..dataset.n() {
        let mut r = rng::stream(seed, i as u64);
        for k in dataset.span(i) {
            let rec = &mut records[k];
            let observed = r.random_bool(probs[k]);
            if !observed {
                rec.y = None;
                rec.r = 0;
            }
            match existing {
                Some(j) => rec.history[j] = probs[k],
                None => rec.history.push(probs[k]),
            }
        }
    }
    let optional = OptionalColumns { r: true, ..dataset.optional_columns() };
    MrtDataset::new(names, dataset.ids().to_vec(), records, dataset.outcome_kind(), optional)
}
