//! Binary outcomes on the log relative-risk scale: EMEE and its doubly
//! robust version.
//!
//! ```text
//! cargo run --release --example binary_outcomes
//! ```

use mrt_excursion::crossfit::individual_kfold;
use mrt_excursion::data::{ControlSpec, ModeratorSpec, Specs};
use mrt_excursion::estimators::{dr_emee, emee};
use mrt_excursion::nuisance::{NuisanceConfig, NuisanceSource, RandomForest, RandomForestConfig};
use mrt_excursion::simulation::{generate_binary, BinaryGenConfig};

fn main() -> mrt_excursion::Result<()> {
    // log P(Y = 1 | x, a) = −1.2 + 0.3 x + 0.3 a.
    let panel = generate_binary(&BinaryGenConfig { n: 500, t: 20, seed: 6, ..Default::default() })?;
    let specs = Specs::new(ModeratorSpec::intercept(), ControlSpec::parse("1 + x")?);
    let fit = emee(&panel, &specs)?;
    println!("{}", fit.to_table());
    println!("relative risk {:.3} (true {:.3})", fit.beta[0].exp(), 0.3f64.exp());

    let plan = individual_kfold(panel.n(), 5, 0)?;
    let forest = RandomForest { config: RandomForestConfig { n_trees: 50, ..Default::default() } };
    let config = NuisanceConfig::new(NuisanceSource::learned(forest, "x + a")?);
    println!("{}", dr_emee(&panel, &Specs::marginal(), &config, &plan)?.to_table());
    Ok(())
}
