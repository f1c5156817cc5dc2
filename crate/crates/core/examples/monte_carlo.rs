//! Monte Carlo comparison of WCLS, R-WCLS and DR-WCLS in the fully marginal
//! setting, driven by `examples/configs/marginal_study.toml`.
//!
//! ```text
//! cargo run --release --example monte_carlo -- 100
//! ```
//!
//! The optional argument overrides the replicate count (1000 in the file).

use mrt_excursion::cli::RunConfig;
use mrt_excursion::simulation::monte_carlo;

fn main() -> mrt_excursion::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/marginal_study.toml");
    let mut run = RunConfig::load(path.as_ref())?;
    if let Some(r) = std::env::args().nth(1) {
        run.simulation.replicates = r.parse().map_err(|_| mrt_excursion::Error::Config(format!("bad replicate count `{r}`")))?;
    }
    let start = std::time::Instant::now();
    let report = monte_carlo(&run.monte_carlo()?)?;
    println!("{}", report.to_markdown());
    println!("{:.1?} elapsed", start.elapsed());
    Ok(())
}
