//! Effects on outcomes further in the future: the lagged DR estimator
//! recovers a planted carryover effect of the previous treatment.
//!
//! ```text
//! cargo run --release --example lagged_effects
//! ```

use mrt_excursion::crossfit::individual_kfold;
use mrt_excursion::data::Specs;
use mrt_excursion::estimators::{dr_lagged, ReferencePolicy};
use mrt_excursion::nuisance::{Linear, NuisanceConfig, NuisanceSource};
use mrt_excursion::simulation::{generate, GenConfig};

fn main() -> mrt_excursion::Result<()> {
    // A_{t-1} shifts Y_{t+1} by 0.4, so the effect of A_t on the outcome one
    // decision later is 0.4 whatever happens in between.
    let panel = generate(&GenConfig { n: 300, t: 10, carryover: 0.4, seed: 0, ..Default::default() })?;
    let plan = individual_kfold(panel.n(), 5, 0)?;
    let config = NuisanceConfig::new(NuisanceSource::learned(Linear, "x1 + x2 + S + a_prev + a + a*S")?);
    for delta in 1..=3 {
        let est = dr_lagged(&panel, &Specs::marginal(), &config, &plan, delta, ReferencePolicy::SameAsP)?;
        println!("Δ = {delta}\n{}", est.to_table());
    }
    Ok(())
}
