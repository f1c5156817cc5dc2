//! Pseudo-outcomes of the R-WCLS and DR-WCLS constructions.

use crate::data::{DecisionRecord, MrtDataset};
use crate::nuisance::NuisanceFits;

/// W = p̃(A | S) / p̂(A | H).
pub fn numerator_weight(a: u8, p_tilde: f64, p_hat: f64) -> f64 {
    if a == 1 {
        p_tilde / p_hat
    } else {
        (1.0 - p_tilde) / (1.0 - p_hat)
    }
}

/// Ỹ^R = Y − ĝ(H, A) + (A − p̃)(ĝ(H, 1) − ĝ(H, 0)). `None` if Y is missing.
pub fn pseudo_outcome_r(rec: &DecisionRecord, fits: &NuisanceFits, i: usize) -> Option<f64> {
    let y = rec.y?;
    let centered = f64::from(rec.a) - fits.p_tilde[i];
    Some(y - fits.g_at(i, rec.a) + centered * (fits.g1[i] - fits.g0[i]))
}

/// W (A − p̃)(Y − ĝ(H, A)) / (p̃(1 − p̃)): the weighted residual part of Ỹ^DR.
pub(crate) fn dr_residual_term(rec: &DecisionRecord, fits: &NuisanceFits, i: usize) -> Option<f64> {
    let y = rec.y?;
    let pt = fits.p_tilde[i];
    let w = numerator_weight(rec.a, pt, fits.p_hat[i]);
    let centered = f64::from(rec.a) - pt;
    Some(w * centered * (y - fits.g_at(i, rec.a)) / (pt * (1.0 - pt)))
}

/// Ỹ^DR = W (A − p̃)(Y − ĝ(H, A)) / (p̃(1 − p̃)) + ĝ(H, 1) − ĝ(H, 0). `None` if Y is missing.
pub fn pseudo_outcome_dr(rec: &DecisionRecord, fits: &NuisanceFits, i: usize) -> Option<f64> {
    Some(dr_residual_term(rec, fits, i)? + (fits.g1[i] - fits.g0[i]))
}

/// Regression inputs per included record.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PseudoOutcomePanel {
    /// Dataset positions of the included records.
    pub rows: Vec<usize>,
    pub y_tilde: Vec<f64>,
    pub weight: Vec<f64>,
    /// A − p̃.
    pub centered: Vec<f64>,
}

impl PseudoOutcomePanel {
    /// Available records with observed outcomes: Ỹ^R with weight W.
    pub fn r_wcls(dataset: &MrtDataset, fits: &NuisanceFits) -> Self {
        let mut panel = Self::default();
        for (i, rec) in dataset.records().iter().enumerate() {
            if !rec.is_available() {
                continue;
            }
            if let Some(z) = pseudo_outcome_r(rec, fits, i).filter(|_| rec.is_observed()) {
                panel.push(i, z, numerator_weight(rec.a, fits.p_tilde[i], fits.p_hat[i]), rec.a, fits);
            }
        }
        panel
    }

    /// Available records with observed outcomes: Ỹ^DR with weight σ̃².
    pub fn dr_wcls(dataset: &MrtDataset, fits: &NuisanceFits) -> Self {
        let mut panel = Self::default();
        for (i, rec) in dataset.records().iter().enumerate() {
            if !rec.is_available() {
                continue;
            }
            if let Some(z) = pseudo_outcome_dr(rec, fits, i).filter(|_| rec.is_observed()) {
                let pt = fits.p_tilde[i];
                panel.push(i, z, pt * (1.0 - pt), rec.a, fits);
            }
        }
        panel
    }

    fn push(&mut self, i: usize, z: f64, w: f64, a: u8, fits: &NuisanceFits) {
        self.rows.push(i);
        self.y_tilde.push(z);
        self.weight.push(w);
        self.centered.push(f64::from(a) - fits.p_tilde[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(a: u8, y: f64) -> DecisionRecord {
        DecisionRecord { individual: 0, t: 1, a, y: Some(y), r: 1, prob: Some(0.5), available: 1, history: vec![] }
    }

    fn fits(g0: f64, g1: f64, p_tilde: f64, p_hat: f64) -> NuisanceFits {
        NuisanceFits {
            g0: vec![g0],
            g1: vec![g1],
            p_hat: vec![p_hat],
            p_tilde: vec![p_tilde],
            p_r: None,
            folds: vec![vec![0]],
            epsilon: 0.01,
        }
    }

    #[test]
    fn r_pseudo_outcome_cases() {
        assert_eq!(pseudo_outcome_r(&rec(1, 2.0), &fits(2.0, 2.0, 0.5, 0.5), 0), Some(0.0));
        assert_eq!(pseudo_outcome_r(&rec(1, 3.0), &fits(1.0, 2.0, 0.5, 0.5), 0), Some(1.5));
    }

    #[test]
    fn dr_pseudo_outcome_cases() {
        let z = pseudo_outcome_dr(&rec(0, 1.25), &fits(1.25, 0.75, 0.4, 0.3), 0).unwrap();
        assert!((z - (-0.5)).abs() < 1e-15);
        assert_eq!(pseudo_outcome_dr(&rec(1, 1.0), &fits(0.0, 0.0, 0.5, 0.5), 0), Some(2.0));
    }

    #[test]
    fn missing_outcome_gives_none() {
        let mut r = rec(1, 0.0);
        r.y = None;
        assert_eq!(pseudo_outcome_r(&r, &fits(0.0, 0.0, 0.5, 0.5), 0), None);
        assert_eq!(pseudo_outcome_dr(&r, &fits(0.0, 0.0, 0.5, 0.5), 0), None);
    }
}
