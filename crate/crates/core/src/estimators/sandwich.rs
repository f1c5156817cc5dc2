//! Cross-fitted sandwich covariance and the Mancl–DeRouen adjustment.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{checked_inverse, symmetrize};

/// B⁻¹ M B⁻¹ / n, where B and M average the per-individual derivative
/// blocks ṁ_i and outer products m_i m_iᵀ within each fold and then across
/// folds. `folds[i]` is individual i's fold in `0..k`.
pub fn sandwich_covariance(
    m: &[DVector<f64>],
    m_dot: &[DMatrix<f64>],
    folds: &[usize],
    k: usize,
    names: &[String],
) -> Result<(DMatrix<f64>, f64)> {
    let n = m.len();
    if n == 0 || m_dot.len() != n || folds.len() != n {
        return Err(Error::Parameter("sandwich needs one m and ṁ per individual".into()));
    }
    let d = m[0].len();
    let mut size = vec![0usize; k];
    for &f in folds {
        size[f] += 1;
    }
    let used = size.iter().filter(|&&s| s > 0).count() as f64;
    let mut bread = DMatrix::zeros(d, d);
    let mut meat = DMatrix::zeros(d, d);
    for i in 0..n {
        let s = size[folds[i]] as f64 * used;
        bread += &m_dot[i] / s;
        meat += (&m[i] * m[i].transpose()) / s;
    }
    let (inv, condition) = checked_inverse(&bread, names)?;
    let cov = &inv * meat * &inv / n as f64;
    Ok((symmetrize(&cov), condition))
}

/// Per-individual residual inflation e* = (I − H_ii)⁻¹ e with
/// H_ii = X_i (XᵀWX)⁻¹ X_iᵀ W_i. Returns `None` if I − H_ii is singular.
pub fn mancl_derouen(
    x_i: &DMatrix<f64>,
    w_i: &[f64],
    e_i: &[f64],
    bread_inv: &DMatrix<f64>,
) -> Option<DVector<f64>> {
    let m = x_i.nrows();
    let xw = DMatrix::from_fn(x_i.ncols(), m, |c, r| x_i[(r, c)] * w_i[r]);
    let hat = x_i * bread_inv * xw;
    let lhs = DMatrix::identity(m, m) - hat;
    lhs.lu().solve(&DVector::from_column_slice(e_i))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|j| format!("b{j}")).collect()
    }

    #[test]
    fn scalar_case_is_heteroskedastic_variance() {
        let m: Vec<DVector<f64>> = [0.5, -1.0, 2.0, 0.25].iter().map(|&v| DVector::from_element(1, v)).collect();
        let md: Vec<DMatrix<f64>> = [1.0, 2.0, 1.5, 0.5].iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        let (cov, _) = sandwich_covariance(&m, &md, &[0; 4], 1, &names(1)).unwrap();
        let mean_m2 = m.iter().map(|v| v[0] * v[0]).sum::<f64>() / 4.0;
        let mean_md = md.iter().map(|v| v[(0, 0)]).sum::<f64>() / 4.0;
        assert!((cov[(0, 0)] - mean_m2 / (mean_md * mean_md) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn two_dimensional_three_individuals() {
        // Hand computation: m = (1,0), (0,2), (1,1); ṁ = I, 2I, [[2,1],[1,2]].
        // B = (1/3)[[5,1],[1,5]], M = (1/3)[[2,1],[1,5]].
        let m = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 2.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        ];
        let md = vec![
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2) * 2.0,
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]),
        ];
        let (cov, _) = sandwich_covariance(&m, &md, &[0, 0, 0], 1, &names(2)).unwrap();
        // B⁻¹ = (3/24)[[5,-1],[-1,5]]; cov = B⁻¹ M B⁻¹ / 3.
        let binv = DMatrix::from_row_slice(2, 2, &[5.0, -1.0, -1.0, 5.0]) * (3.0 / 24.0);
        let meat = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 5.0]) / 3.0;
        let expected = &binv * meat * &binv / 3.0;
        assert!((cov - expected).abs().max() < 1e-12);
    }

    #[test]
    fn folds_average_within_then_across() {
        let m: Vec<DVector<f64>> = [1.0, 3.0, 2.0].iter().map(|&v| DVector::from_element(1, v)).collect();
        let md: Vec<DMatrix<f64>> = [1.0, 1.0, 4.0].iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        let (cov, _) = sandwich_covariance(&m, &md, &[0, 0, 1], 2, &names(1)).unwrap();
        let b = 0.5 * ((1.0 + 1.0) / 2.0 + 4.0);
        let meat = 0.5 * ((1.0 + 9.0) / 2.0 + 4.0);
        assert!((cov[(0, 0)] - meat / (b * b) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_leverage_is_identity() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 0.0]);
        let e = [0.3, -1.2];
        let out = mancl_derouen(&x, &[1.0, 1.0], &e, &DMatrix::identity(1, 1)).unwrap();
        assert_eq!(out.as_slice(), &e);
    }
}
