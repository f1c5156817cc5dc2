//! Weighted, centered least squares with known randomization probabilities.
//!
//! Simulates a 100-person, 30-decision trial and estimates the marginal
//! effect and its moderation by the binary state `S`.
//!
//! ```text
//! cargo run --release --example wcls_basics
//! ```

use mrt_excursion::data::{ControlSpec, ModeratorSpec, Specs};
use mrt_excursion::estimators::wcls;
use mrt_excursion::simulation::{generate, GenConfig};

fn main() -> mrt_excursion::Result<()> {
    let panel = generate(&GenConfig { n: 100, t: 30, beta11: 0.5, seed: 1, ..Default::default() })?;
    println!("{} individuals, {} decisions", panel.n(), panel.len());

    // Marginal effect: f(S) = 1, controls g(H) = (1, S, A_{t-1}).
    let marginal = Specs::new(ModeratorSpec::intercept(), ControlSpec::parse("1 + S + a_prev")?);
    println!("{}", wcls(&panel, &marginal)?.to_table());

    // Effect moderated by S: β0 + β1 S with β1 = 0.5 in the generator.
    let moderated = Specs::new(ModeratorSpec::parse("1 + S")?, ControlSpec::parse("1 + S + a_prev")?);
    println!("{}", wcls(&panel, &moderated)?.to_table());
    Ok(())
}
