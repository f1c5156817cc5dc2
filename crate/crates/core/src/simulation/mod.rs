//! Generative models of micro-randomized trials and the Monte Carlo harness.

mod generate;
mod missing;
mod monte_carlo;
mod report;
mod tree;

pub use generate::{generate, generate_binary, generate_with_tree, generated_columns, BinaryGenConfig, GenConfig, Policy, BANDIT_CLIP};
pub use missing::{inject_missing, MissingConfig, ORACLE_PR};
pub use monte_carlo::{monte_carlo, MonteCarloConfig};
pub use report::{ReportRow, SimulationReport};
pub use tree::{covariate_names, draw_covariates, gen_tree, Split, TreeSpec, DISCRETE_LEVELS, N_CONTINUOUS, N_DISCRETE};
