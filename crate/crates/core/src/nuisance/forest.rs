//! Random forest of CART trees on histogram-binned features.
//!
//! Bin edges come from the training matrix only, so a fitted model depends
//! on nothing but its own training rows. Splits minimise weighted squared
//! error, which for 0/1 targets coincides with the Gini criterion.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FittedModel, Learner, Task};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means ⌈√p⌉.
    pub mtry: Option<usize>,
    /// Maximum histogram bins per feature.
    pub max_bins: usize,
    pub seed: u64,
    /// Draw a bootstrap sample per tree.
    pub bootstrap: bool,
}

impl Default for RandomForestConfig {
    fn default() -> Self {
        Self { n_trees: 200, max_depth: 8, min_leaf: 5, mtry: None, max_bins: 64, seed: 0, bootstrap: true }
    }
}

impl RandomForestConfig {
    fn check(&self, p: usize) -> Result<usize> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_leaf == 0 || self.max_bins < 2 {
            return Err(Error::Parameter(
                "random forest counts must be >= 1 (and max_bins >= 2)".into(),
            ));
        }
        let mtry = self.mtry.unwrap_or(((p as f64).sqrt().ceil() as usize).max(1));
        if mtry == 0 || mtry > p.max(1) {
            return Err(Error::Parameter(format!("mtry={mtry} must lie in 1..={p}")));
        }
        Ok(mtry)
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, x: &DMatrix<f64>, i: usize) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    k = if x[(i, feature)] <= threshold { left } else { right };
                }
            }
        }
    }
}

/// Per-feature bin edges and the binned training matrix (column-major).
struct Binned {
    edges: Vec<Vec<f64>>,
    bins: Vec<Vec<u16>>,
}

fn bin_features(x: &DMatrix<f64>, max_bins: usize) -> Binned {
    let n = x.nrows();
    let mut edges = Vec::with_capacity(x.ncols());
    let mut bins = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let mut vals: Vec<f64> = x.column(j).iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        let cuts: Vec<f64> = if vals.len() <= max_bins {
            vals.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
        } else {
            let mut sorted: Vec<f64> = x.column(j).iter().copied().collect();
            sorted.sort_by(f64::total_cmp);
            let mut c: Vec<f64> = (1..max_bins)
                .map(|b| {
                    let pos = b * n / max_bins;
                    0.5 * (sorted[pos - 1] + sorted[pos])
                })
                .collect();
            c.dedup();
            c
        };
        let col: Vec<u16> = x
            .column(j)
            .iter()
            .map(|&v| cuts.partition_point(|&c| c < v) as u16)
            .collect();
        edges.push(cuts);
        bins.push(col);
    }
    Binned { edges, bins }
}

struct Builder<'a> {
    binned: &'a Binned,
    y: &'a [f64],
    w: &'a [f64],
    mtry: usize,
    max_depth: usize,
    min_leaf: usize,
}

#[derive(Clone, Copy, Default)]
struct Acc {
    w: f64,
    wy: f64,
    n: usize,
}

impl Builder<'_> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let first = self.y[rows[0]];
        if rows.iter().all(|&i| self.y[i] == first) {
            return first;
        }
        let (mut sw, mut swy) = (0.0, 0.0);
        for &i in rows {
            sw += self.w[i];
            swy += self.w[i] * self.y[i];
        }
        if sw > 0.0 {
            swy / sw
        } else {
            0.0
        }
    }

    /// Best (feature, bin, gain) among `mtry` random features.
    fn best_split(&self, rows: &[usize], rng: &mut impl Rng, hist: &mut Vec<Acc>) -> Option<(usize, usize)> {
        let p = self.binned.bins.len();
        let (mut tw, mut twy, mut twyy) = (0.0, 0.0, 0.0);
        for &i in rows {
            tw += self.w[i];
            twy += self.w[i] * self.y[i];
            twyy += self.w[i] * self.y[i] * self.y[i];
        }
        if tw <= 0.0 || twyy - twy * twy / tw <= 1e-12 * twyy {
            return None;
        }
        let base = twy * twy / tw;
        let mut best: Option<(usize, usize, f64)> = None;
        for j in sample(rng, p, self.mtry.min(p)).into_iter() {
            let nb = self.binned.edges[j].len() + 1;
            if nb < 2 {
                continue;
            }
            hist.clear();
            hist.resize(nb, Acc::default());
            let col = &self.binned.bins[j];
            for &i in rows {
                let h = &mut hist[col[i] as usize];
                h.w += self.w[i];
                h.wy += self.w[i] * self.y[i];
                h.n += 1;
            }
            let mut left = Acc::default();
            for b in 0..nb - 1 {
                left.w += hist[b].w;
                left.wy += hist[b].wy;
                left.n += hist[b].n;
                let rn = rows.len() - left.n;
                if left.n < self.min_leaf {
                    continue;
                }
                if rn < self.min_leaf {
                    break;
                }
                let rw = tw - left.w;
                if left.w <= 0.0 || rw <= 0.0 || hist[b].n == 0 {
                    continue;
                }
                let rwy = twy - left.wy;
                let gain = left.wy * left.wy / left.w + rwy * rwy / rw - base;
                if gain > 0.0 && best.is_none_or(|(_, _, g)| gain > g) {
                    best = Some((j, b, gain));
                }
            }
        }
        best.map(|(j, b, _)| (j, b))
    }

    fn build(&self, mut rows: Vec<usize>, rng: &mut impl Rng) -> Tree {
        let mut nodes = vec![Node::Leaf(0.0)];
        let mut stack = vec![(0usize, 0usize, 0usize, rows.len())];
        let mut hist = Vec::new();
        while let Some((node, depth, lo, hi)) = stack.pop() {
            let slice = &mut rows[lo..hi];
            let split = if depth < self.max_depth && slice.len() >= 2 * self.min_leaf {
                self.best_split(slice, rng, &mut hist)
            } else {
                None
            };
            match split {
                None => nodes[node] = Node::Leaf(self.leaf_value(slice)),
                Some((j, b)) => {
                    let col = &self.binned.bins[j];
                    let mut k = 0;
                    for m in 0..slice.len() {
                        if (col[slice[m]] as usize) <= b {
                            slice.swap(k, m);
                            k += 1;
                        }
                    }
                    let left = nodes.len();
                    nodes.push(Node::Leaf(0.0));
                    nodes.push(Node::Leaf(0.0));
                    nodes[node] = Node::Split {
                        feature: j,
                        threshold: self.binned.edges[j][b],
                        left,
                        right: left + 1,
                    };
                    stack.push((left + 1, depth + 1, lo + k, hi));
                    stack.push((left, depth + 1, lo, lo + k));
                }
            }
        }
        Tree { nodes }
    }
}

/// Fitted forest. Probability forests clip their averaged output.
#[derive(Clone, Debug)]
pub struct ForestModel {
    trees: Vec<Tree>,
    clip: Option<f64>,
    oob: Option<Vec<Option<f64>>>,
}

impl ForestModel {
    /// Out-of-bag prediction per training row, when requested at fit time.
    pub fn oob_predictions(&self) -> Option<&[Option<f64>]> {
        self.oob.as_deref()
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

impl FittedModel for ForestModel {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let m = self.trees.len() as f64;
        (0..x.nrows())
            .map(|i| {
                let (mut sum, mut lo, mut hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
                for t in &self.trees {
                    let v = t.predict_row(x, i);
                    sum += v;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                let v = if lo == hi { lo } else { sum / m };
                match self.clip {
                    Some(eps) => v.clamp(eps, 1.0 - eps),
                    None => v,
                }
            })
            .collect()
    }
}

/// Fits a random forest. `seed` is mixed with the configured seed, and tree
/// `k` uses its own stream, so the result is independent of thread count.
pub fn fit_random_forest(
    x: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    config: &RandomForestConfig,
    task: Task,
    seed: u64,
    with_oob: bool,
) -> Result<ForestModel> {
    let n = x.nrows();
    if n < 2 || y.len() != n {
        return Err(Error::Parameter(format!(
            "random forest needs >= 2 rows with matching targets (rows={n}, targets={})",
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Parameter("random forest inputs must be finite".into()));
    }
    let mtry = config.check(x.ncols())?;
    let unit = vec![1.0; n];
    let w = weights.unwrap_or(&unit);
    let binned = bin_features(x, config.max_bins);
    let builder = Builder { binned: &binned, y, w, mtry, max_depth: config.max_depth, min_leaf: config.min_leaf };
    let base = rng::derive_seed(config.seed, seed);
    let fitted: Vec<(Tree, Vec<bool>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(base, k as u64);
            let mut in_bag = vec![!config.bootstrap; n];
            let rows: Vec<usize> = if config.bootstrap {
                (0..n)
                    .map(|_| {
                        let i = r.random_range(0..n);
                        in_bag[i] = true;
                        i
                    })
                    .collect()
            } else {
                (0..n).collect()
            };
            (builder.build(rows, &mut r), if with_oob { in_bag } else { Vec::new() })
        })
        .collect();
    let clip = match task {
        Task::Regression => None,
        Task::Probability { epsilon } => Some(epsilon),
    };
    let oob = with_oob.then(|| {
        (0..n)
            .map(|i| {
                let (mut s, mut c) = (0.0, 0usize);
                for (tree, bag) in &fitted {
                    if !bag[i] {
                        s += tree.predict_row(x, i);
                        c += 1;
                    }
                }
                (c > 0).then(|| s / c as f64)
            })
            .collect()
    });
    Ok(ForestModel { trees: fitted.into_iter().map(|(t, _)| t).collect(), clip, oob })
}

/// Registry entry for the random forest.
#[derive(Clone, Debug, Default)]
pub struct RandomForest {
    pub config: RandomForestConfig,
}

impl Learner for RandomForest {
    fn name(&self) -> &str {
        "random_forest"
    }

    fn fit(
        &self,
        x: &DMatrix<f64>,
        y: &[f64],
        weights: Option<&[f64]>,
        task: Task,
        seed: u64,
    ) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(fit_random_forest(x, y, weights, &self.config, task, seed, false)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn config(n_trees: usize) -> RandomForestConfig {
        RandomForestConfig { n_trees, ..Default::default() }
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x = DMatrix::from_fn(50, 3, |i, j| (i * (j + 1)) as f64);
        let y = vec![2.5; 50];
        let m = fit_random_forest(&x, &y, None, &config(10), Task::Regression, 1, false).unwrap();
        let test = DMatrix::from_fn(7, 3, |i, j| (i as f64) - (j as f64) * 100.0);
        assert!(m.predict(&test).iter().all(|&v| v == 2.5));
    }

    #[test]
    fn constant_features_are_not_an_error() {
        let x = DMatrix::from_element(20, 2, 1.0);
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let m = fit_random_forest(&x, &y, None, &config(5), Task::Regression, 1, false).unwrap();
        assert_eq!(m.n_trees(), 5);
    }

    #[test]
    fn min_leaf_n_gives_global_mean() {
        let n = 40;
        let x = DMatrix::from_fn(n, 2, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let y: Vec<f64> = (0..n).map(|i| (i % 5) as f64).collect();
        let cfg = RandomForestConfig { n_trees: 1, min_leaf: n, bootstrap: false, ..Default::default() };
        let m = fit_random_forest(&x, &y, None, &cfg, Task::Regression, 1, false).unwrap();
        let mean = y.iter().sum::<f64>() / n as f64;
        assert!(m.predict(&x).iter().all(|&v| (v - mean).abs() < 1e-12));
    }

    #[test]
    fn step_function_out_of_bag_accuracy() {
        let mut r = rng::stream(5, 0);
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
        let x = DMatrix::from_column_slice(n, 1, &xs);
        let y: Vec<f64> = xs.iter().map(|&v| f64::from(u8::from(v > 0.0))).collect();
        let cfg = RandomForestConfig { n_trees: 100, max_depth: 1, ..Default::default() };
        let m = fit_random_forest(&x, &y, None, &cfg, Task::Probability { epsilon: 0.01 }, 3, true).unwrap();
        let oob = m.oob_predictions().unwrap();
        let scored: Vec<(f64, f64)> =
            oob.iter().zip(&y).filter_map(|(p, &t)| p.map(|p| (p, t))).collect();
        let acc = scored.iter().filter(|(p, t)| (*p > 0.5) == (*t == 1.0)).count() as f64
            / scored.len() as f64;
        assert!(scored.len() > 950);
        assert!(acc >= 0.95, "oob accuracy {acc}");
    }

    #[test]
    fn probability_outputs_are_clipped() {
        let x = DMatrix::from_fn(30, 1, |i, _| i as f64);
        let y: Vec<f64> = (0..30).map(|i| f64::from(u8::from(i >= 15))).collect();
        let m = fit_random_forest(&x, &y, None, &config(20), Task::Probability { epsilon: 0.01 }, 2, false)
            .unwrap();
        assert!(m.predict(&x).iter().all(|&p| (0.01..=0.99).contains(&p)));
    }

    #[test]
    fn identical_across_thread_counts() {
        let x = DMatrix::from_fn(200, 4, |i, j| ((i * 31 + j * 17) % 23) as f64);
        let y: Vec<f64> = (0..200).map(|i| ((i * 13) % 7) as f64).collect();
        let fit = |threads: usize| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                fit_random_forest(&x, &y, None, &config(16), Task::Regression, 9, false).unwrap().predict(&x)
            })
        };
        assert_eq!(fit(1), fit(8));
    }

    #[test]
    fn rejects_bad_config() {
        let x = DMatrix::from_element(4, 2, 0.0);
        let y = vec![0.0; 4];
        let cfg = RandomForestConfig { mtry: Some(3), ..Default::default() };
        assert!(fit_random_forest(&x, &y, None, &cfg, Task::Regression, 0, false).is_err());
        let cfg = RandomForestConfig { n_trees: 0, ..Default::default() };
        assert!(fit_random_forest(&x, &y, None, &cfg, Task::Regression, 0, false).is_err());
        assert!(fit_random_forest(&x.rows(0, 1).into(), &y[..1], None, &config(1), Task::Regression, 0, false).is_err());
    }
}
