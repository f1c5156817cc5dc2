//! Weighted least squares and small dense helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition number above which a bread matrix is treated as singular.
pub const CONDITION_LIMIT: f64 = 1e10;

/// Solution of a weighted least-squares problem.
#[derive(Clone, Debug)]
pub struct WlsFit {
    pub beta: DVector<f64>,
    /// Σ w x xᵀ.
    pub bread: DMatrix<f64>,
    /// Condition number of the column-equilibrated bread.
    pub condition: f64,
}

/// Condition number of `b` after scaling to unit diagonal. Zero diagonal
/// entries give infinity.
pub fn equilibrated_condition(b: &DMatrix<f64>) -> f64 {
    let q = b.nrows();
    if q == 0 {
        return 1.0;
    }
    let d: Vec<f64> = (0..q).map(|j| b[(j, j)]).collect();
    if d.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return f64::INFINITY;
    }
    let scaled = DMatrix::from_fn(q, q, |i, j| b[(i, j)] / (d[i] * d[j]).sqrt());
    let sym = 0.5 * (&scaled + scaled.transpose());
    let eig = sym.symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Names of columns that are (numerically) linear combinations of earlier ones.
pub fn collinear_columns(b: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut kept: Vec<usize> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..b.nrows() {
        let mut idx = kept.clone();
        idx.push(j);
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| b[(idx[r], idx[c])]);
        if equilibrated_condition(&sub) < CONDITION_LIMIT {
            kept.push(j);
        } else {
            bad.push(names.get(j).cloned().unwrap_or_else(|| format!("column {j}")));
        }
    }
    bad
}

/// Checks conditioning and returns the inverse of a symmetric positive definite matrix.
pub fn checked_inverse(b: &DMatrix<f64>, names: &[String]) -> Result<(DMatrix<f64>, f64)> {
    let condition = equilibrated_condition(b);
    if condition >= CONDITION_LIMIT {
        return Err(Error::RankDeficient { condition, columns: collinear_columns(b, names) });
    }
    let q = b.nrows();
    let d: Vec<f64> = (0..q).map(|j| b[(j, j)].sqrt()).collect();
    let scaled = DMatrix::from_fn(q, q, |i, j| b[(i, j)] / (d[i] * d[j]));
    let inv = scaled
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| scaled.try_inverse())
        .ok_or_else(|| Error::RankDeficient { condition, columns: collinear_columns(b, names) })?;
    let out = DMatrix::from_fn(q, q, |i, j| inv[(i, j)] / (d[i] * d[j]));
    Ok((symmetrize(&out), condition))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Minimises Σ w (y − xᵀβ)² by a QR decomposition of the row-scaled design.
pub fn wls_solve(design: &DMatrix<f64>, y: &[f64], w: &[f64], names: &[String]) -> Result<WlsFit> {
    let (n, q) = design.shape();
    if y.len() != n || w.len() != n {
        return Err(Error::Parameter(format!(
            "wls: design has {n} rows but response has {} and weights {}",
            y.len(),
            w.len()
        )));
    }
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Parameter("wls: weights must be finite and non-negative".into()));
    }
    let mut bread = DMatrix::zeros(q, q);
    for i in 0..n {
        if w[i] == 0.0 {
            continue;
        }
        for a in 0..q {
            let xa = w[i] * design[(i, a)];
            for b in a..q {
                bread[(a, b)] += xa * design[(i, b)];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            bread[(a, b)] = bread[(b, a)];
        }
    }
    let condition = equilibrated_condition(&bread);
    if condition >= CONDITION_LIMIT || n < q {
        return Err(Error::RankDeficient { condition, columns: collinear_columns(&bread, names) });
    }
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let xs = DMatrix::from_fn(n, q, |i, j| sw[i] * design[(i, j)]);
    let ys = DVector::from_iterator(n, (0..n).map(|i| sw[i] * y[i]));
    let qr = xs.qr();
    let qty = qr.q().transpose() * ys;
    let beta = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient { condition, columns: collinear_columns(&bread, names) })?;
    Ok(WlsFit { beta, bread, condition })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(q: usize) -> Vec<String> {
        (0..q).map(|j| format!("x{j}")).collect()
    }

    #[test]
    fn intercept_only_gives_mean() {
        let x = DMatrix::from_element(4, 1, 1.0);
        let y = [1.0, 2.0, 4.0, 9.0];
        let fit = wls_solve(&x, &y, &[1.0; 4], &names(1)).unwrap();
        assert!((fit.beta[0] - 4.0).abs() < 1e-14);
        assert_eq!(fit.bread[(0, 0)], 4.0);
    }

    #[test]
    fn exact_line_recovered_under_any_weights() {
        let xs = [0.0, 1.0, 2.5, -3.0, 7.0];
        let x = DMatrix::from_fn(5, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let y: Vec<f64> = xs.iter().map(|v| 2.0 + 3.0 * v).collect();
        let fit = wls_solve(&x, &y, &[0.1, 5.0, 2.0, 0.7, 3.3], &names(2)).unwrap();
        assert!((fit.beta[0] - 2.0).abs() < 1e-12);
        assert!((fit.beta[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn five_point_normal_equations() {
        // Normal equations for x = (1,2,3,4,5), y = (1,3,2,5,4), w = (1,2,1,2,1):
        // Sw = 7, Swx = 21, Swx² = 75, Swy = 23, Swxy = 79.
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.0, 3.0, 2.0, 5.0, 4.0];
        let w = [1.0, 2.0, 1.0, 2.0, 1.0];
        let x = DMatrix::from_fn(5, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let fit = wls_solve(&x, &y, &w, &names(2)).unwrap();
        let det = 7.0 * 75.0 - 21.0 * 21.0;
        let b0 = (75.0 * 23.0 - 21.0 * 79.0) / det;
        let b1 = (7.0 * 79.0 - 21.0 * 23.0) / det;
        assert!((fit.beta[0] - b0).abs() < 1e-12);
        assert!((fit.beta[1] - b1).abs() < 1e-12);
    }

    #[test]
    fn collinear_design_names_column() {
        let x = DMatrix::from_fn(6, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => 2.0 * i as f64 + 1.0,
        });
        let y = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        match wls_solve(&x, &y, &[1.0; 6], &names(3)) {
            Err(Error::RankDeficient { columns, .. }) => assert_eq!(columns, vec!["x2".to_string()]),
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn inverse_matches_direct() {
        let b = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let (inv, cond) = checked_inverse(&b, &names(2)).unwrap();
        let id = &b * &inv;
        assert!((id - DMatrix::identity(2, 2)).abs().max() < 1e-14);
        assert!(cond > 1.0);
    }
}
