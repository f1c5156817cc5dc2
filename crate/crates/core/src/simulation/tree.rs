//! Random decision tree used as the baseline outcome function g(H).

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::rng;

pub const N_CONTINUOUS: usize = 10;
pub const N_DISCRETE: usize = 10;
/// Discrete covariates take values in {0, …, DISCRETE_LEVELS − 1}.
pub const DISCRETE_LEVELS: u32 = 3;

/// Covariate column names: `x1..x10` are N(0, 1), `d1..d10` uniform on {0, 1, 2}.
pub fn covariate_names() -> Vec<String> {
    (1..=N_CONTINUOUS)
        .map(|j| format!("x{j}"))
        .chain((1..=N_DISCRETE).map(|j| format!("d{j}")))
        .collect()
}

/// Draws one covariate vector in the order of [`covariate_names`].
pub fn draw_covariates<R: Rng>(rng: &mut R) -> Vec<f64> {
    let mut x: Vec<f64> = (0..N_CONTINUOUS).map(|_| StandardNormal.sample(rng)).collect();
    x.extend((0..N_DISCRETE).map(|_| f64::from(rng.random_range(0..DISCRETE_LEVELS))));
    x
}

/// A split `x[column] <= cutoff` goes left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub column: usize,
    pub cutoff: f64,
}

/// Four-split tree with five leaves:
///
/// ```text
/// root (continuous)
/// ├── left (discrete): leaves 0 | 1
/// └── right (continuous)
///     ├── leaf 2
///     └── right-right (discrete): leaves 3 | 4
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub root: Split,
    pub left: Split,
    pub right: Split,
    pub right_right: Split,
    pub leaves: [f64; 5],
    pub seed: u64,
}

impl TreeSpec {
    pub fn leaf(&self, x: &[f64]) -> usize {
        let goes_left = |s: &Split| x[s.column] <= s.cutoff;
        if goes_left(&self.root) {
            if goes_left(&self.left) {
                0
            } else {
                1
            }
        } else if goes_left(&self.right) {
            2
        } else if goes_left(&self.right_right) {
            3
        } else {
            4
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.leaves[self.leaf(x)]
    }
}

/// Picks two continuous and two discrete split variables at random, puts
/// continuous cutoffs at a N(0, 1) quantile in [0.35, 0.65] and discrete
/// cutoffs at 0.5 or 1.5, and draws leaf values from U(−1, 1).
pub fn gen_tree(seed: u64) -> TreeSpec {
    let mut r = rng::stream(seed, 0);
    let cont = sample(&mut r, N_CONTINUOUS, 2);
    let disc = sample(&mut r, N_DISCRETE, 2);
    let normal = Normal::standard();
    let continuous = |column: usize, r: &mut rand_chacha::ChaCha8Rng| Split {
        column,
        cutoff: normal.inverse_cdf(r.random_range(0.35..0.65)),
    };
    let root = continuous(cont.index(0), &mut r);
    let right = continuous(cont.index(1), &mut r);
    let discrete = |column: usize, r: &mut rand_chacha::ChaCha8Rng| Split {
        column: N_CONTINUOUS + column,
        cutoff: if r.random_bool(0.5) { 0.5 } else { 1.5 },
    };
    let left = discrete(disc.index(0), &mut r);
    let right_right = discrete(disc.index(1), &mut r);
    let mut leaves = [0.0; 5];
    for v in &mut leaves {
        // Open interval (−1, 1).
        loop {
            let u: f64 = r.random_range(-1.0..1.0);
            if u > -1.0 {
                *v = u;
                break;
            }
        }
    }
    TreeSpec { root, left, right, right_right, leaves, seed }
}
