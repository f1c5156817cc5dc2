//! File-based workflow: write a panel to CSV, read it back, and run several
//! estimators from a TOML analysis description.
//!
//! ```text
//! cargo run --release --example csv_analysis
//! ```

use mrt_excursion::data::{read_csv, validate, write_csv, SpecRefs};
use mrt_excursion::estimators::{run_analysis, AnalysisConfig};
use mrt_excursion::simulation::{generate, GenConfig};

const ANALYSIS: &str = r#"
moderator = "1 + S"
controls = "1 + S + a_prev"
plan = { kind = "individual_kfold", k = 5, seed = 2 }

[forest]
n_trees = 50

[[estimators]]
estimator = "wcls"

[[estimators]]
estimator = "r_wcls"
outcome_features = "x1 + x2 + x3 + S + a_prev + a"

[[estimators]]
estimator = "dr_wcls"
label = "DR-WCLS (linear)"
outcome_learner = "linear"
outcome_features = "x1 + x2 + x3 + S + a_prev + a + a*S"
"#;

fn main() -> mrt_excursion::Result<()> {
    let dir = std::env::temp_dir().join("mrt-excursion-csv-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("panel.csv");
    write_csv(&generate(&GenConfig { n: 80, t: 20, seed: 5, ..Default::default() })?, &path)?;
    println!("wrote {}", path.display());

    let panel = read_csv(&path)?;
    let config: AnalysisConfig = toml::from_str(ANALYSIS).map_err(|e| mrt_excursion::Error::Config(e.to_string()))?;
    let specs = config.specs()?;
    let refs = SpecRefs { moderator: Some(&specs.moderator), controls: Some(&specs.controls), ..Default::default() };
    let report = validate(&panel, refs);
    println!("{} validation issues", report.issues.len());
    for issue in &report.issues {
        println!("{issue:?}");
    }
    for (label, result) in run_analysis(&panel, &config, 1)? {
        match result {
            Ok(est) => println!("{}", est.to_table()),
            Err(e) => println!("{label}: {e}"),
        }
    }
    Ok(())
}
