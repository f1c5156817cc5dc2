//! Synthetic micro-randomized trials with known excursion effects.

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::missing::{inject_missing, MissingConfig};
use super::tree::{covariate_names, draw_covariates, gen_tree, TreeSpec};
use crate::data::{DecisionRecord, MrtDataset, OptionalColumns, OutcomeKind};
use crate::error::{Error, Result};
use crate::nuisance::expit;
use crate::rng;

/// Probability bounds of the clipped bandit policy.
pub const BANDIT_CLIP: (f64, f64) = (0.01, 0.99);

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// p = expit(η1 A_{t−1} + η2 S_t).
    #[default]
    ExpitHistory,
    /// p = expit(η1 A_{t−1}).
    Static,
    /// p = clip(expit(2(γ̂1 + γ̂3 S_t)), 0.01, 0.99), with γ̂ from an online
    /// pooled least-squares fit of Y ~ 1 + A + S + A·S on all earlier decisions.
    ClippedBandit,
}

/// Configuration of the tree-baseline generator
/// Y = g_tree(X) + (A − p)(β10 + β11 S) + δ A_{t−1} + e.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n: usize,
    pub t: u32,
    pub beta10: f64,
    pub beta11: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// ρ with Corr(e_u, e_t) = ρ^{|u−t|/2}; 0 gives independent errors.
    pub error_corr_base: f64,
    /// δ: effect of the previous treatment on the current outcome.
    pub carryover: f64,
    pub policy: Policy,
    pub missing: MissingConfig,
    pub tree_seed: u64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n: 100,
            t: 30,
            beta10: -0.2,
            beta11: 0.5,
            eta1: -0.8,
            eta2: 0.8,
            error_corr_base: 0.5,
            carryover: 0.0,
            policy: Policy::ExpitHistory,
            missing: MissingConfig::None,
            tree_seed: 1,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 || self.t < 1 {
            return Err(Error::Config(format!("n and T must be >= 1 (got n={}, T={})", self.n, self.t)));
        }
        if !(0.0..1.0).contains(&self.error_corr_base) {
            return Err(Error::Config(format!("error_corr_base must lie in [0, 1), got {}", self.error_corr_base)));
        }
        self.missing.validate()
    }

    /// Marginal excursion effect: E[β10 + β11 S] = β10.
    pub fn marginal_effect(&self) -> f64 {
        self.beta10
    }
}

/// Column names of generated datasets, in history order.
pub fn generated_columns() -> Vec<String> {
    let mut names = covariate_names();
    names.extend(["S", "a_prev", "y_prev", "oracle_g0", "oracle_g1", "oracle_p"].map(String::from));
    names
}

/// Online pooled OLS of Y on (1, A, S, A·S).
#[derive(Default)]
struct BanditFit {
    xtx: Matrix4<f64>,
    xty: Vector4<f64>,
    gamma: Vector4<f64>,
}

impl BanditFit {
    fn prob(&self, s: f64) -> f64 {
        expit(2.0 * (self.gamma[1] + self.gamma[3] * s)).clamp(BANDIT_CLIP.0, BANDIT_CLIP.1)
    }

    fn add(&mut self, a: f64, s: f64, y: f64) {
        let x = Vector4::new(1.0, a, s, a * s);
        self.xtx += x * x.transpose();
        self.xty += x * y;
    }

    fn refit(&mut self) {
        if let Some(chol) = self.xtx.cholesky() {
            let d = self.xtx.diagonal();
            let min = chol.l().diagonal().iter().map(|v| v * v).fold(f64::INFINITY, f64::min);
            if min > 1e-10 * d.max() {
                self.gamma = chol.solve(&self.xty);
            }
        }
    }
}

struct State {
    a_prev: f64,
    y_prev: f64,
    e_prev: f64,
    rng: rand_chacha::ChaCha8Rng,
}

/// Draws a dataset. Known probabilities go to `prob`; the true propensity and
/// the true E[Y | H, a] go to the `oracle_p` and `oracle_g0`/`oracle_g1` columns.
pub fn generate(config: &GenConfig) -> Result<MrtDataset> {
    config.validate()?;
    let tree = gen_tree(config.tree_seed);
    generate_with_tree(config, &tree)
}

pub fn generate_with_tree(config: &GenConfig, tree: &TreeSpec) -> Result<MrtDataset> {
    config.validate()?;
    let phi = config.error_corr_base.sqrt();
    let innovation_sd = (1.0 - phi * phi).sqrt();
    let mut states: Vec<State> = (0..config.n)
        .map(|i| State { a_prev: 0.0, y_prev: 0.0, e_prev: 0.0, rng: rng::stream(config.seed, i as u64) })
        .collect();
    let mut bandit = BanditFit::default();
    let mut records = Vec::with_capacity(config.n * config.t as usize);
    for t in 1..=config.t {
        let mut observed = Vec::new();
        for (i, st) in states.iter_mut().enumerate() {
            let x = draw_covariates(&mut st.rng);
            let s = if st.rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let p = match config.policy {
                Policy::ExpitHistory => expit(config.eta1 * st.a_prev + config.eta2 * s),
                Policy::Static => expit(config.eta1 * st.a_prev),
                Policy::ClippedBandit => bandit.prob(s),
            };
            let a = if st.rng.random_bool(p) { 1u8 } else { 0u8 };
            let z: f64 = StandardNormal.sample(&mut st.rng);
            let e = if t == 1 { z } else { phi * st.e_prev + innovation_sd * z };
            let base = tree.eval(&x) + config.carryover * st.a_prev + phi * st.e_prev;
            let effect = config.beta10 + config.beta11 * s;
            let mean = |arm: f64| base + (arm - p) * effect;
            let y = mean(f64::from(a)) + (e - phi * st.e_prev);
            let mut history = x;
            history.extend([s, st.a_prev, st.y_prev, mean(0.0), mean(1.0), p]);
            records.push(DecisionRecord { individual: i, t, a, y: Some(y), r: 1, prob: Some(p), available: 1, history });
            observed.push((f64::from(a), s, y));
            st.a_prev = f64::from(a);
            st.y_prev = y;
            st.e_prev = e;
        }
        if config.policy == Policy::ClippedBandit {
            for (a, s, y) in observed {
                bandit.add(a, s, y);
            }
            bandit.refit();
        }
    }
    let ids = (0..config.n).map(|i| format!("{}", i + 1)).collect();
    let optional = OptionalColumns { prob: true, r: false, avail: false };
    let dataset = MrtDataset::new(generated_columns(), ids, records, OutcomeKind::Continuous, optional)?;
    inject_missing(&dataset, &config.missing, rng::derive_seed(config.seed, u64::MAX))
}

/// Binary-outcome generator with a log-linear mean:
/// P(Y = 1 | x, A) = exp(α0 + α1 x + β0 A), x ~ Bernoulli(1/2) and
/// P(A = 1 | x) = `p0` when x = 0 and `p1` when x = 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinaryGenConfig {
    pub n: usize,
    pub t: u32,
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta0: f64,
    pub p0: f64,
    pub p1: f64,
    pub seed: u64,
}

impl Default for BinaryGenConfig {
    fn default() -> Self {
        Self { n: 1000, t: 20, alpha0: -1.2, alpha1: 0.3, beta0: 0.3, p0: 0.3, p1: 0.6, seed: 0 }
    }
}

pub fn generate_binary(config: &BinaryGenConfig) -> Result<MrtDataset> {
    if config.n < 1 || config.t < 1 {
        return Err(Error::Config("n and T must be >= 1".into()));
    }
    let top = config.alpha0 + config.alpha1.max(0.0) + config.beta0.max(0.0);
    if top >= 0.0 {
        return Err(Error::Config("log-linear risks must stay below 1: need α0 + max(α1, 0) + max(β0, 0) < 0".into()));
    }
    for p in [config.p0, config.p1] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Config(format!("randomization probability {p} outside (0, 1)")));
        }
    }
    let mut records = Vec::with_capacity(config.n * config.t as usize);
    for i in 0..config.n {
        let mut r = rng::stream(config.seed, i as u64);
        for t in 1..=config.t {
            let x = if r.random_bool(0.5) { 1.0 } else { 0.0 };
            let p = if x == 1.0 { config.p1 } else { config.p0 };
            let a = u8::from(r.random_bool(p));
            let risk = |arm: f64| (config.alpha0 + config.alpha1 * x + config.beta0 * arm).exp();
            let y = if r.random_bool(risk(f64::from(a))) { 1.0 } else { 0.0 };
            records.push(DecisionRecord {
                individual: i,
                t,
                a,
                y: Some(y),
                r: 1,
                prob: Some(p),
                available: 1,
                history: vec![x, risk(0.0), risk(1.0), p],
            });
        }
    }
    let names = ["x", "oracle_g0", "oracle_g1", "oracle_p"].map(String::from).to_vec();
    let ids = (0..config.n).map(|i| format!("{}", i + 1)).collect();
    MrtDataset::new(names, ids, records, OutcomeKind::Binary, OptionalColumns { prob: true, r: false, avail: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(ds: &MrtDataset, name: &str) -> Vec<f64> {
        ds.column(name).unwrap()
    }

    #[test]
    fn null_policy_gives_half() {
        let cfg = GenConfig { n: 5, t: 10, eta1: 0.0, eta2: 0.0, ..Default::default() };
        let ds = generate(&cfg).unwrap();
        assert!(ds.records().iter().all(|r| r.prob == Some(0.5)));
    }

    #[test]
    fn error_correlation_at_lag_two() {
        let cfg = GenConfig { n: 100_000, t: 3, beta10: 0.0, beta11: 0.0, ..Default::default() };
        let tree = gen_tree(cfg.tree_seed);
        let ds = generate_with_tree(&cfg, &tree).unwrap();
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for i in 0..ds.n() {
            let recs = ds.individual_records(i);
            let e = |r: &DecisionRecord| r.y.unwrap() - tree.eval(&r.history[..20]);
            let (e1, e3) = (e(&recs[0]), e(&recs[2]));
            sxy += e1 * e3;
            sxx += e1 * e1;
            syy += e3 * e3;
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!((corr - 0.5).abs() < 0.01, "corr = {corr}");
    }

    #[test]
    fn oracle_columns_are_conditional_means() {
        let cfg = GenConfig { n: 2000, t: 5, beta11: 0.8, ..Default::default() };
        let ds = generate(&cfg).unwrap();
        let (g0, g1) = (col(&ds, "oracle_g0"), col(&ds, "oracle_g1"));
        let mut resid = [0.0; 2];
        let mut count = [0.0; 2];
        for (i, r) in ds.records().iter().enumerate() {
            let m = if r.a == 1 { g1[i] } else { g0[i] };
            resid[r.a as usize] += r.y.unwrap() - m;
            count[r.a as usize] += 1.0;
        }
        for a in 0..2 {
            let mean = resid[a] / count[a];
            assert!(mean.abs() < 4.0 / count[a].sqrt(), "arm {a}: {mean}");
        }
        let s = col(&ds, "S");
        for (i, r) in ds.records().iter().enumerate() {
            let p = r.prob.unwrap();
            let expect = (g1[i] - g0[i]) - (cfg.beta10 + cfg.beta11 * s[i]);
            assert!(expect.abs() < 1e-12);
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn bandit_probabilities_are_clipped() {
        let cfg = GenConfig { n: 3, t: 150, beta11: 0.8, error_corr_base: 0.0, policy: Policy::ClippedBandit, ..Default::default() };
        let ds = generate(&cfg).unwrap();
        let probs: Vec<f64> = ds.records().iter().map(|r| r.prob.unwrap()).collect();
        assert!(probs.iter().all(|p| (0.01..=0.99).contains(p)));
        assert!(probs.iter().any(|p| (p - 0.5).abs() > 0.1), "bandit never moved off 0.5");
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = GenConfig { n: 4, t: 6, seed: 11, ..Default::default() };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
    }

    #[test]
    fn binary_generator_risks() {
        let ds = generate_binary(&BinaryGenConfig { n: 20, t: 5, ..Default::default() }).unwrap();
        assert_eq!(ds.outcome_kind(), OutcomeKind::Binary);
        let (g0, g1) = (col(&ds, "oracle_g0"), col(&ds, "oracle_g1"));
        for i in 0..ds.len() {
            assert!(((g1[i] / g0[i]).ln() - 0.3).abs() < 1e-12);
        }
    }
}
