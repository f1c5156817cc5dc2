#![allow(dead_code)]

use mrt_excursion::data::{DecisionRecord, MrtDataset, OptionalColumns, OutcomeKind};
use mrt_excursion::nuisance::NuisanceFits;

/// (individual, t, a, y, prob, x, S)
pub const MICRO: [(usize, u32, u8, f64, f64, f64, f64); 6] = [
    (0, 1, 1, 1.0, 0.5, 0.3, 1.0),
    (0, 2, 0, 0.2, 0.6, -1.0, -1.0),
    (1, 1, 0, -0.4, 0.4, 1.2, 1.0),
    (1, 2, 1, 2.1, 0.7, 0.1, -1.0),
    (2, 1, 1, 0.9, 0.3, -0.5, -1.0),
    (2, 2, 0, 0.0, 0.5, 2.0, 1.0),
];

/// Three individuals observed at two decision points, columns `x` and `S`.
pub fn micro_dataset() -> MrtDataset {
    let records = MICRO
        .iter()
        .map(|&(individual, t, a, y, p, x, s)| DecisionRecord {
            individual,
            t,
            a,
            y: Some(y),
            r: 1,
            prob: Some(p),
            available: 1,
            history: vec![x, s],
        })
        .collect();
    MrtDataset::new(
        vec!["x".into(), "S".into()],
        vec!["1".into(), "2".into(), "3".into()],
        records,
        OutcomeKind::Continuous,
        OptionalColumns { prob: true, r: false, avail: false },
    )
    .unwrap()
}

/// Hand-picked nuisance values for [`micro_dataset`]: ĝ(H, a) = 0.2 + 0.1 x + a (0.5 + 0.3 S),
/// p̂ = known probability, p̃ = 0.5.
pub fn micro_fits() -> NuisanceFits {
    let g = |x: f64, s: f64, a: f64| 0.2 + 0.1 * x + a * (0.5 + 0.3 * s);
    NuisanceFits {
        g0: MICRO.iter().map(|r| g(r.5, r.6, 0.0)).collect(),
        g1: MICRO.iter().map(|r| g(r.5, r.6, 1.0)).collect(),
        p_hat: MICRO.iter().map(|r| r.4).collect(),
        p_tilde: vec![0.5; 6],
        p_r: None,
        folds: vec![vec![0]; 6],
        epsilon: 0.01,
    }
}

/// Solves Σ w x xᵀ β = Σ w x y by Gaussian elimination with partial pivoting.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
    let d = x[0].len();
    let mut m = vec![vec![0.0; d + 1]; d];
    for ((row, &yi), &wi) in x.iter().zip(y).zip(w) {
        for a in 0..d {
            for b in 0..d {
                m[a][b] += wi * row[a] * row[b];
            }
            m[a][d] += wi * row[a] * yi;
        }
    }
    for c in 0..d {
        let p = (c..d).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        for r in 0..d {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..=d {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    (0..d).map(|i| m[i][d] / m[i][i]).collect()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}
