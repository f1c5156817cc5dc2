//! R-WCLS and DR-WCLS with a cross-fitted random forest outcome model,
//! compared with WCLS on the same panel.
//!
//! ```text
//! cargo run --release --example cross_fitted_dr
//! ```

use mrt_excursion::crossfit::individual_kfold;
use mrt_excursion::data::{ControlSpec, ModeratorSpec, Specs};
use mrt_excursion::estimators::{dr_wcls_with_fits, efficient_r_wcls_with_fits, r_wcls_with_fits, wcls};
use mrt_excursion::nuisance::{estimate_nuisances, NuisanceConfig, NuisanceSource, RandomForest, RandomForestConfig};
use mrt_excursion::simulation::{generate, GenConfig};

const FEATURES: &str = "x1 + x2 + x3 + x4 + x5 + x6 + x7 + x8 + x9 + x10 \
    + d1 + d2 + d3 + d4 + d5 + d6 + d7 + d8 + d9 + d10 + S + a_prev + a + a*S";

fn main() -> mrt_excursion::Result<()> {
    let panel = generate(&GenConfig { n: 100, t: 30, beta11: 0.2, seed: 11, ..Default::default() })?;
    let specs = Specs::new(ModeratorSpec::intercept(), ControlSpec::parse("1 + S + a_prev")?);

    // Five folds over individuals; each record is predicted by the forest
    // that never saw its individual.
    let plan = individual_kfold(panel.n(), 5, 3)?;
    let forest = RandomForest { config: RandomForestConfig { n_trees: 100, ..Default::default() } };
    let mut config = NuisanceConfig::new(NuisanceSource::learned(forest, FEATURES)?);
    config.seed = 3;
    let fits = estimate_nuisances(&panel, &specs, &plan, &config)?;

    let base = wcls(&panel, &specs)?;
    let r = r_wcls_with_fits(&panel, &specs, &fits, Some(&plan))?;
    let dr = dr_wcls_with_fits(&panel, &specs, &fits, Some(&plan))?;
    // Projecting out the S direction leaves the marginal estimand unchanged.
    let eff = efficient_r_wcls_with_fits(&panel, &specs, &fits, Some(&plan), &mrt_excursion::data::parse_terms("S")?)?;
    for est in [&base, &r, &dr, &eff] {
        println!("{}", est.to_table());
    }
    for est in [&r, &dr, &eff] {
        let re = (base.se[0] / est.se[0]).powi(2);
        println!("{:<22} relative efficiency vs WCLS: {re:.3}", est.estimator);
    }
    Ok(())
}
