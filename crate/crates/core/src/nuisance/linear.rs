//! Parametric learners: least squares for regression, logistic regression
//! for probabilities.

use nalgebra::{DMatrix, DVector};

use super::{FittedModel, Learner, Task};
use crate::error::Result;
use crate::linalg::wls_solve;

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}

fn column_names(p: usize) -> Vec<String> {
    std::iter::once("(Intercept)".to_string()).chain((0..p).map(|j| format!("feature {j}"))).collect()
}

/// Logistic regression by iteratively reweighted least squares. The design
/// is used as given (include an intercept column if wanted).
pub fn fit_logistic(x: &DMatrix<f64>, y: &[f64], w: Option<&[f64]>) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    let names: Vec<String> = (0..p).map(|j| format!("column {j}")).collect();
    let mut beta = DVector::zeros(p);
    let mut work_w = vec![0.0; n];
    let mut z = vec![0.0; n];
    for _ in 0..100 {
        let eta = x * &beta;
        for i in 0..n {
            let mu = expit(eta[i]).clamp(1e-10, 1.0 - 1e-10);
            let v = mu * (1.0 - mu);
            work_w[i] = w.map_or(1.0, |w| w[i]) * v;
            z[i] = eta[i] + (y[i] - mu) / v;
        }
        let next = match wls_solve(x, &z, &work_w, &names) {
            Ok(fit) => fit.beta,
            Err(e) if beta.iter().all(|&b| b == 0.0) => return Err(e),
            Err(_) => break,
        };
        let step = (&next - &beta).abs().max();
        beta = next;
        if step < 1e-10 || beta.abs().max() > 30.0 {
            break;
        }
    }
    Ok(beta)
}

#[derive(Clone, Debug)]
pub struct LinearModel {
    coef: DVector<f64>,
    clip: Option<f64>,
}

impl LinearModel {
    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coef
    }
}

impl FittedModel for LinearModel {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let eta = with_intercept(x) * &self.coef;
        match self.clip {
            None => eta.iter().copied().collect(),
            Some(eps) => eta.iter().map(|&v| expit(v).clamp(eps, 1.0 - eps)).collect(),
        }
    }
}

/// Least squares (regression) or logistic regression (probability) with an intercept.
#[derive(Clone, Copy, Debug, Default)]
pub struct Linear;

impl Learner for Linear {
    fn name(&self) -> &str {
        "linear"
    }

    fn fit(
        &self,
        x: &DMatrix<f64>,
        y: &[f64],
        weights: Option<&[f64]>,
        task: Task,
        _seed: u64,
    ) -> Result<Box<dyn FittedModel>> {
        let design = with_intercept(x);
        let model = match task {
            Task::Regression => {
                let unit = vec![1.0; y.len()];
                let fit = wls_solve(&design, y, weights.unwrap_or(&unit), &column_names(x.ncols()))?;
                LinearModel { coef: fit.beta, clip: None }
            }
            Task::Probability { epsilon } => {
                LinearModel { coef: fit_logistic(&design, y, weights)?, clip: Some(epsilon) }
            }
        };
        Ok(Box::new(model))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_recovers_plane() {
        let x = DMatrix::from_fn(10, 2, |i, j| ((i + 1) * (j + 2)) as f64 % 7.0);
        let y: Vec<f64> = (0..10).map(|i| 1.0 - 2.0 * x[(i, 0)] + 0.5 * x[(i, 1)]).collect();
        let m = Linear.fit(&x, &y, None, Task::Regression, 0).unwrap();
        let pred = m.predict(&x);
        assert!(pred.iter().zip(&y).all(|(p, t)| (p - t).abs() < 1e-10));
    }

    #[test]
    fn logistic_matches_group_frequencies() {
        // Saturated model on one binary covariate reproduces the group means.
        let x = DMatrix::from_fn(8, 1, |i, _| (i % 2) as f64);
        let y = [1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0];
        let m = Linear.fit(&x, &y, None, Task::Probability { epsilon: 0.01 }, 0).unwrap();
        let p = m.predict(&x);
        assert!((p[0] - 0.5).abs() < 1e-8);
        assert!((p[1] - 0.75).abs() < 1e-8);
    }

    #[test]
    fn expit_is_stable() {
        assert_eq!(expit(0.0), 0.5);
        assert!(expit(-800.0) >= 0.0 && expit(800.0) <= 1.0);
    }
}
