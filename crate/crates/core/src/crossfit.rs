//! Cross-fitting plans: which records train each nuisance model and which
//! records that model predicts.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanParams {
    /// Individuals split into K folds.
    IndividualKfold { k: usize, seed: u64 },
    /// One model per time t, trained on times `<= t` or `>= t + gap`.
    TimewiseExpanding { gap: u32 },
    /// Random time blocks of half-width `half_width` with a `gap` buffer.
    TimeBlock { half_width: u32, gap: u32, draws: usize, seed: u64 },
    /// Train and predict on everything. Not cross-fitting; used for
    /// parametric working models where in-sample fits are intended.
    FullSample,
}

impl PlanParams {
    /// Builds the plan for a dataset of `n` individuals and `t_max` decision
    /// points. `salt` perturbs the random seed (for example per replicate).
    pub fn build(&self, n: usize, t_max: u32, salt: u64) -> Result<CrossFitPlan> {
        match *self {
            PlanParams::IndividualKfold { k, seed } => individual_kfold(n, k, rng::derive_seed(seed, salt)),
            PlanParams::TimewiseExpanding { gap } => timewise_expanding(t_max, gap),
            PlanParams::TimeBlock { half_width, gap, draws, seed } => {
                time_block(t_max, half_width, gap, draws, rng::derive_seed(seed, salt))
            }
            PlanParams::FullSample => Ok(full_sample()),
        }
    }
}

impl std::str::FromStr for PlanParams {
    type Err = Error;

    /// Parses `kfold:K=5[,seed=1]`, `timewise:r=1`, `block:q=15,r=3,B=100[,seed=1]` or `full`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut args = std::collections::HashMap::new();
        for kv in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("plan argument `{kv}` is not key=value")))?;
            let v: u64 = v.trim().parse().map_err(|_| Error::Config(format!("plan argument `{kv}` is not an integer")))?;
            args.insert(k.trim().to_string(), v);
        }
        let mut take = |key: &str, default: Option<u64>| {
            args.remove(key)
                .or(default)
                .ok_or_else(|| Error::Config(format!("plan `{s}` needs `{key}=`")))
        };
        let plan = match kind.trim() {
            "kfold" => PlanParams::IndividualKfold { k: take("K", Some(5))? as usize, seed: take("seed", Some(0))? },
            "timewise" => PlanParams::TimewiseExpanding { gap: take("r", Some(1))? as u32 },
            "block" => PlanParams::TimeBlock {
                half_width: take("q", None)? as u32,
                gap: take("r", Some(1))? as u32,
                draws: take("B", Some(100))? as usize,
                seed: take("seed", Some(0))?,
            },
            "full" => PlanParams::FullSample,
            other => return Err(Error::Config(format!("unknown plan kind `{other}`"))),
        };
        if let Some(k) = args.keys().next() {
            return Err(Error::Config(format!("unknown plan argument `{k}` in `{s}`")));
        }
        Ok(plan)
    }
}

/// A set of records described by individual or by decision time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    All,
    Individuals(Vec<usize>),
    Times(Vec<u32>),
}

impl Membership {
    pub fn contains(&self, individual: usize, t: u32) -> bool {
        match self {
            Membership::All => true,
            Membership::Individuals(v) => v.binary_search(&individual).is_ok(),
            Membership::Times(v) => v.binary_search(&t).is_ok(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Membership,
    pub predict: Membership,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossFitPlan {
    pub params: PlanParams,
    pub folds: Vec<Fold>,
    /// For time blocks, how many blocks predict each time `1..=t_max`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<Vec<usize>>,
}

impl CrossFitPlan {
    /// Folds whose models predict record (individual, t), with averaging weights.
    pub fn predicting_folds(&self, individual: usize, t: u32) -> Vec<(usize, f64)> {
        let hits: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(_, f)| f.predict.contains(individual, t))
            .map(|(k, _)| k)
            .collect();
        let w = 1.0 / hits.len().max(1) as f64;
        hits.into_iter().map(|k| (k, w)).collect()
    }

    /// Fold of individual `i` under an individual K-fold plan.
    pub fn individual_fold(&self, i: usize) -> Option<usize> {
        match self.params {
            PlanParams::IndividualKfold { .. } => self
                .folds
                .iter()
                .position(|f| f.predict.contains(i, 0)),
            _ => None,
        }
    }

    pub fn is_time_based(&self) -> bool {
        matches!(self.params, PlanParams::TimewiseExpanding { .. } | PlanParams::TimeBlock { .. })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Random K-fold partition of `n` individuals; fold sizes differ by at most one.
pub fn individual_kfold(n: usize, k: usize, seed: u64) -> Result<CrossFitPlan> {
    if k < 2 || k > n {
        return Err(Error::Parameter(format!("K-fold needs 2 <= K <= n, got K={k}, n={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, 0));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut predict = order[start..start + size].to_vec();
        predict.sort_unstable();
        let mut train: Vec<usize> =
            order[..start].iter().chain(&order[start + size..]).copied().collect();
        train.sort_unstable();
        folds.push(Fold { train: Membership::Individuals(train), predict: Membership::Individuals(predict) });
        start += size;
    }
    Ok(CrossFitPlan { params: PlanParams::IndividualKfold { k, seed }, folds, coverage: None })
}

/// Training times for the model that predicts time `t`.
pub fn expanding_train_times(t_max: u32, gap: u32, t: u32) -> Vec<u32> {
    (1..=t_max).filter(|&s| s <= t || s >= t + gap).collect()
}

pub fn timewise_expanding(t_max: u32, gap: u32) -> Result<CrossFitPlan> {
    if gap < 1 {
        return Err(Error::Parameter("time-wise gap r must be >= 1".into()));
    }
    let folds = (1..=t_max)
        .map(|t| Fold {
            train: Membership::Times(expanding_train_times(t_max, gap, t)),
            predict: Membership::Times(vec![t]),
        })
        .collect();
    Ok(CrossFitPlan { params: PlanParams::TimewiseExpanding { gap }, folds, coverage: None })
}

/// Test and training times of the block centred at `center`.
pub fn block_for_center(t_max: u32, center: u32, half_width: u32, gap: u32) -> (Vec<u32>, Vec<u32>) {
    let lo = center.saturating_sub(half_width).max(1);
    let hi = (center + half_width).min(t_max);
    let test = (lo..=hi).collect();
    let train = (1..=t_max).filter(|&s| s + gap <= lo || s >= hi + gap).collect();
    (test, train)
}

pub fn time_block(t_max: u32, half_width: u32, gap: u32, draws: usize, seed: u64) -> Result<CrossFitPlan> {
    if gap < 1 || draws < 1 || t_max < 1 {
        return Err(Error::Parameter(format!(
            "time blocks need r >= 1, B >= 1, t_max >= 1 (got r={gap}, B={draws}, t_max={t_max})"
        )));
    }
    let mut rng = rng::stream(seed, 0);
    let mut coverage = vec![0usize; t_max as usize];
    let mut folds = Vec::with_capacity(draws);
    for _ in 0..draws {
        let center = rng.random_range(1..=t_max);
        let (test, train) = block_for_center(t_max, center, half_width, gap);
        for &s in &test {
            coverage[s as usize - 1] += 1;
        }
        folds.push(Fold { train: Membership::Times(train), predict: Membership::Times(test) });
    }
    let uncovered: Vec<u32> =
        (1..=t_max).filter(|&s| coverage[s as usize - 1] == 0).collect();
    if !uncovered.is_empty() {
        return Err(Error::IncompleteCoverage { times: uncovered });
    }
    Ok(CrossFitPlan {
        params: PlanParams::TimeBlock { half_width, gap, draws, seed },
        folds,
        coverage: Some(coverage),
    })
}

pub fn full_sample() -> CrossFitPlan {
    CrossFitPlan {
        params: PlanParams::FullSample,
        folds: vec![Fold { train: Membership::All, predict: Membership::All }],
        coverage: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_strings() {
        assert_eq!("kfold:K=5".parse::<PlanParams>().unwrap(), PlanParams::IndividualKfold { k: 5, seed: 0 });
        assert_eq!(
            "block:q=15,r=3,B=100,seed=2".parse::<PlanParams>().unwrap(),
            PlanParams::TimeBlock { half_width: 15, gap: 3, draws: 100, seed: 2 }
        );
        assert_eq!("timewise:r=2".parse::<PlanParams>().unwrap(), PlanParams::TimewiseExpanding { gap: 2 });
        assert_eq!("full".parse::<PlanParams>().unwrap(), PlanParams::FullSample);
        assert!("kfold:J=2".parse::<PlanParams>().is_err());
        assert!("block:r=2".parse::<PlanParams>().is_err());
    }
    use std::collections::BTreeSet;

    fn individuals(m: &Membership) -> Vec<usize> {
        match m {
            Membership::Individuals(v) => v.clone(),
            _ => panic!("not an individual membership"),
        }
    }

    #[test]
    fn kfold_two_of_four() {
        let plan = individual_kfold(4, 2, 1).unwrap();
        assert_eq!(plan.folds.len(), 2);
        let a = individuals(&plan.folds[0].predict);
        let b = individuals(&plan.folds[1].predict);
        assert_eq!((a.len(), b.len()), (2, 2));
        let all: BTreeSet<usize> = a.iter().chain(&b).copied().collect();
        assert_eq!(all.len(), 4);
    }

    #[test]
    fn kfold_five_of_hundred() {
        let plan = individual_kfold(100, 5, 9).unwrap();
        assert!(plan.folds.iter().all(|f| individuals(&f.predict).len() == 20));
    }

    #[test]
    fn kfold_uneven_sizes() {
        let plan = individual_kfold(5, 2, 3).unwrap();
        let mut sizes: Vec<usize> = plan.folds.iter().map(|f| individuals(&f.predict).len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 3]);
        for f in &plan.folds {
            let p = individuals(&f.predict);
            let t = individuals(&f.train);
            assert!(p.iter().all(|i| !t.contains(i)));
            let union: BTreeSet<usize> = p.iter().chain(&t).copied().collect();
            assert_eq!(union, (0..5).collect());
        }
        assert!(individual_kfold(3, 4, 0).is_err());
        assert!(individual_kfold(3, 1, 0).is_err());
    }

    #[test]
    fn expanding_gap_rule() {
        assert_eq!(expanding_train_times(5, 2, 3), vec![1, 2, 3, 5]);
        assert_eq!(expanding_train_times(6, 6, 4), vec![1, 2, 3, 4]);
        assert_eq!(expanding_train_times(4, 1, 1), vec![1, 2, 3, 4]);
        assert!(timewise_expanding(5, 0).is_err());
        let plan = timewise_expanding(5, 2).unwrap();
        assert_eq!(plan.predicting_folds(0, 3), vec![(2, 1.0)]);
    }

    #[test]
    fn block_distance_rule() {
        let (test, train) = block_for_center(12, 5, 2, 3);
        assert_eq!(test, vec![3, 4, 5, 6, 7]);
        assert_eq!(train, vec![10, 11, 12]);
    }

    #[test]
    fn zero_width_blocks_cover_everything() {
        let plan = time_block(10, 0, 1, 500, 4).unwrap();
        assert!(plan.coverage.as_ref().unwrap().iter().all(|&c| c >= 1));
        for f in &plan.folds {
            match &f.predict {
                Membership::Times(v) => assert_eq!(v.len(), 1),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn block_averaging_weights() {
        let plan = time_block(12, 2, 1, 40, 11).unwrap();
        for t in 1..=12u32 {
            let folds = plan.predicting_folds(0, t);
            assert_eq!(folds.len(), plan.coverage.as_ref().unwrap()[t as usize - 1]);
            let total: f64 = folds.iter().map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn incomplete_coverage_names_times() {
        match time_block(50, 0, 1, 3, 2) {
            Err(Error::IncompleteCoverage { times }) => assert!(times.len() >= 47),
            other => panic!("expected coverage error, got {other:?}"),
        }
    }

    #[test]
    fn plans_are_deterministic_and_serializable() {
        assert_eq!(individual_kfold(30, 5, 8).unwrap(), individual_kfold(30, 5, 8).unwrap());
        assert_eq!(time_block(30, 3, 2, 40, 5).unwrap(), time_block(30, 3, 2, 40, 5).unwrap());
        let json = individual_kfold(6, 3, 1).unwrap().to_json().unwrap();
        let back: CrossFitPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back, individual_kfold(6, 3, 1).unwrap());
    }
}
