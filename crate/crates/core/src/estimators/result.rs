//! Estimation output: coefficients, covariance, Wald inference, diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::fmt::Write;

/// z quantile of the two-sided 95% interval.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_individuals: usize,
    /// Records entering the estimating equation.
    pub n_records: usize,
    pub folds: usize,
    /// Condition number of the (equilibrated) sandwich bread.
    pub bread_condition: f64,
    /// Mean and standard deviation of the second-stage residuals.
    pub residual_mean: f64,
    pub residual_sd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub fn with_residuals(mut self, residuals: &[f64]) -> Self {
        let n = residuals.len().max(1) as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        self.residual_mean = mean;
        self.residual_sd = var.sqrt();
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimator: String,
    pub terms: Vec<String>,
    pub beta: Vec<f64>,
    /// Coefficient covariance (already divided by the sample size).
    pub covariance: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    pub ci95: Vec<[f64; 2]>,
    pub p_values: Vec<f64>,
    pub diagnostics: Diagnostics,
}

/// Two-sided normal p-value for the statistic `z`.
pub fn wald_p_value(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

impl EstimateResult {
    pub fn new(
        estimator: &str,
        terms: Vec<String>,
        beta: &DVector<f64>,
        covariance: &DMatrix<f64>,
        diagnostics: Diagnostics,
    ) -> Self {
        let q = beta.len();
        let se: Vec<f64> = (0..q).map(|j| covariance[(j, j)].max(0.0).sqrt()).collect();
        let ci95 = (0..q).map(|j| [beta[j] - Z95 * se[j], beta[j] + Z95 * se[j]]).collect();
        let p_values = (0..q).map(|j| wald_p_value(beta[j] / se[j])).collect();
        Self {
            estimator: estimator.to_string(),
            terms,
            beta: beta.iter().copied().collect(),
            covariance: (0..q).map(|i| (0..q).map(|j| covariance[(i, j)]).collect()).collect(),
            se,
            ci95,
            p_values,
            diagnostics,
        }
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let q = self.beta.len();
        DMatrix::from_fn(q, q, |i, j| self.covariance[i][j])
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    /// Fixed-width table with Estimation, Std.err, 95% CI and P-value columns.
    pub fn to_table(&self) -> String {
        let width = self.terms.iter().map(|t| t.len()).max().unwrap_or(4).max(4);
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.estimator);
        let _ = writeln!(
            out,
            "{:<width$}  {:>10}  {:>9}  {:>22}  {:>9}",
            "Term", "Estimation", "Std.err", "95% CI", "P-value"
        );
        for j in 0..self.beta.len() {
            let ci = format!("[{:.4}, {:.4}]", self.ci95[j][0], self.ci95[j][1]);
            let p = if self.p_values[j] < 1e-4 {
                format!("{:.2e}", self.p_values[j])
            } else {
                format!("{:.4}", self.p_values[j])
            };
            let _ = writeln!(
                out,
                "{:<width$}  {:>10.4}  {:>9.4}  {:>22}  {:>9}",
                self.terms[j], self.beta[j], self.se[j], ci, p
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wald_quantities() {
        let beta = DVector::from_vec(vec![0.5, 0.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[0.04, 0.0, 0.0, 1.0]);
        let r = EstimateResult::new("test", vec!["a".into(), "b".into()], &beta, &cov, Diagnostics::default());
        assert!((r.se[0] - 0.2).abs() < 1e-15);
        assert!((r.p_values[0] - 0.012_419_330_651_552_2).abs() < 1e-12);
        assert_eq!(r.p_values[1], 1.0);
        assert!((r.ci95[0][0] - (0.5 - Z95 * 0.2)).abs() < 1e-15);
        let table = r.to_table();
        assert!(table.contains("Estimation") && table.contains("Std.err") && table.contains("P-value"));
        let back: EstimateResult = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
