//! Outcomes missing at random: DR-WCLS with a missingness model against
//! inverse-probability-weighted WCLS.
//!
//! ```text
//! cargo run --release --example missing_outcomes
//! ```

use mrt_excursion::crossfit::individual_kfold;
use mrt_excursion::data::{ControlSpec, ModeratorSpec, Specs};
use mrt_excursion::estimators::{dr_wcls_missing_with_fits, wcls_with, WclsInputs};
use mrt_excursion::nuisance::{estimate_nuisances, Linear, NuisanceConfig, NuisanceSource};
use mrt_excursion::simulation::{generate, GenConfig, MissingConfig};

fn main() -> mrt_excursion::Result<()> {
    // P(R = 1 | H) = expit(1.5 − 0.8 S + 0.6 x1): missingness depends on
    // the observed history only.
    let missing = MissingConfig::Mar { intercept: 1.5, coefficients: vec![("S".into(), -0.8), ("x1".into(), 0.6)] };
    let panel = generate(&GenConfig { n: 200, t: 20, seed: 4, missing, ..Default::default() })?;
    let observed = panel.records().iter().filter(|r| r.is_observed()).count();
    println!("{observed} of {} outcomes observed", panel.len());

    let mut specs = Specs::new(ModeratorSpec::parse("1 + S")?, ControlSpec::parse("1 + S + a_prev")?);
    let plan = individual_kfold(panel.n(), 5, 0)?;
    let mut config = NuisanceConfig::new(NuisanceSource::learned(Linear, "x1 + x2 + S + a_prev + a + a*S")?);
    config.missingness = Some(NuisanceSource::learned(Linear, "x1 + S + a_prev")?);
    let fits = estimate_nuisances(&panel, &specs, &plan, &config)?;

    let dr = dr_wcls_missing_with_fits(&panel, &specs, &fits, Some(&plan))?;
    println!("{}", dr.to_table());

    specs.ipw_missing = true;
    let ipw = wcls_with(&panel, &specs, WclsInputs { p_hat: None, p_r: fits.p_r.as_deref() })?;
    println!("{}", ipw.to_table());
    Ok(())
}
