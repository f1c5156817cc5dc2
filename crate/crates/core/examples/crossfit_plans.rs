//! The three cross-fitting schemes and what each fold trains on.
//!
//! ```text
//! cargo run --release --example crossfit_plans
//! ```

use mrt_excursion::crossfit::{individual_kfold, time_block, timewise_expanding, CrossFitPlan};

fn summarize(name: &str, plan: &CrossFitPlan) {
    println!("{name}: {} folds", plan.folds.len());
    for (k, fold) in plan.folds.iter().take(3).enumerate() {
        println!("  fold {k}: train {:?}", fold.train);
        println!("          predict {:?}", fold.predict);
    }
}

fn main() -> mrt_excursion::Result<()> {
    summarize("individual 3-fold", &individual_kfold(9, 3, 0)?);
    summarize("time-wise, gap 2", &timewise_expanding(8, 2)?);
    let blocks = time_block(40, 4, 2, 25, 0)?;
    summarize("time blocks", &blocks);
    println!("times covered per block draw: {:?}", blocks.coverage);
    // (individual, t) → folds whose models predict it, with averaging weights.
    println!("t = 20 predicted by {:?}", blocks.predicting_folds(0, 20));
    Ok(())
}
