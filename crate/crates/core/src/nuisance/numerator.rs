//! The numerator probability p̃(1 | S_t) of the WCLS weights.

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

use super::linear::{expit, fit_logistic};
use crate::data::{DecisionRecord, MrtDataset, NumeratorSpec};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub enum NumeratorModel {
    Constant(f64),
    Strata { columns: Vec<usize>, table: BTreeMap<Vec<u64>, f64>, marginal: f64, epsilon: f64 },
    Logistic { columns: Vec<usize>, coef: DVector<f64>, epsilon: f64 },
}

impl NumeratorModel {
    pub fn predict(&self, rec: &DecisionRecord) -> f64 {
        match self {
            NumeratorModel::Constant(c) => *c,
            NumeratorModel::Strata { columns, table, marginal, epsilon } => {
                let key: Vec<u64> = columns.iter().map(|&j| rec.history[j].to_bits()).collect();
                table.get(&key).copied().unwrap_or(*marginal).clamp(*epsilon, 1.0 - epsilon)
            }
            NumeratorModel::Logistic { columns, coef, epsilon } => {
                let eta = coef[0]
                    + columns.iter().enumerate().map(|(k, &j)| coef[k + 1] * rec.history[j]).sum::<f64>();
                expit(eta).clamp(*epsilon, 1.0 - epsilon)
            }
        }
    }
}

fn column_indices(dataset: &MrtDataset, names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            dataset
                .feature_index(n)
                .ok_or_else(|| Error::Schema(format!("numerator column `{n}` is missing")))
        })
        .collect()
}

/// Fits p̃ on the records at `rows` (indices into the dataset).
pub fn fit_numerator(
    spec: &NumeratorSpec,
    dataset: &MrtDataset,
    rows: &[usize],
    epsilon: f64,
) -> Result<NumeratorModel> {
    let recs = dataset.records();
    match spec {
        NumeratorSpec::Constant { value } => {
            if !(*value > epsilon && *value < 1.0 - epsilon) {
                return Err(Error::Parameter(format!(
                    "constant numerator {value} must lie in ({epsilon}, {})",
                    1.0 - epsilon
                )));
            }
            Ok(NumeratorModel::Constant(*value))
        }
        NumeratorSpec::EmpiricalMean { strata } => {
            if rows.is_empty() {
                return Err(Error::Plan("numerator training set is empty".into()));
            }
            let columns = column_indices(dataset, strata)?;
            let mut acc: BTreeMap<Vec<u64>, (f64, f64)> = BTreeMap::new();
            let mut total = 0.0;
            for &i in rows {
                let rec = &recs[i];
                let key: Vec<u64> = columns.iter().map(|&j| rec.history[j].to_bits()).collect();
                let e = acc.entry(key).or_default();
                e.0 += f64::from(rec.a);
                e.1 += 1.0;
                total += f64::from(rec.a);
            }
            let marginal = total / rows.len() as f64;
            let table = acc.into_iter().map(|(k, (s, c))| (k, s / c)).collect();
            Ok(NumeratorModel::Strata { columns, table, marginal, epsilon })
        }
        NumeratorSpec::LogisticOn { columns } => {
            let idx = column_indices(dataset, columns)?;
            let x = DMatrix::from_fn(rows.len(), idx.len() + 1, |r, c| {
                if c == 0 {
                    1.0
                } else {
                    recs[rows[r]].history[idx[c - 1]]
                }
            });
            let y: Vec<f64> = rows.iter().map(|&i| f64::from(recs[i].a)).collect();
            let coef = fit_logistic(&x, &y, None)?;
            Ok(NumeratorModel::Logistic { columns: idx, coef, epsilon })
        }
    }
}
