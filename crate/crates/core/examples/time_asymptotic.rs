//! Few individuals followed for many decision points: time-block
//! cross-fitting and the time-asymptotic sandwich.
//!
//! ```text
//! cargo run --release --example time_asymptotic
//! ```

use mrt_excursion::crossfit::time_block;
use mrt_excursion::data::Specs;
use mrt_excursion::estimators::estimate_time_asymptotic;
use mrt_excursion::nuisance::{NuisanceConfig, NuisanceSource, RandomForest, RandomForestConfig};
use mrt_excursion::simulation::{generate, GenConfig, Policy};

fn main() -> mrt_excursion::Result<()> {
    for (label, policy) in [("static policy", Policy::Static), ("clipped bandit", Policy::ClippedBandit)] {
        let panel = generate(&GenConfig { n: 3, t: 150, policy, error_corr_base: 0.1, seed: 8, ..Default::default() })?;
        // 100 random blocks of ±15 decisions, with a 3-decision buffer
        // between each block and its training times.
        let plan = time_block(panel.t_max(), 15, 3, 100, 1)?;
        let forest = RandomForest { config: RandomForestConfig { n_trees: 30, ..Default::default() } };
        let config = NuisanceConfig::new(NuisanceSource::learned(forest, "x1 + x2 + x3 + S + a_prev + a + a*S")?);
        let est = estimate_time_asymptotic(&panel, &Specs::marginal(), &config, &plan)?;
        println!("{label}\n{}", est.to_table());
    }
    Ok(())
}
