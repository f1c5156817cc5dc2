mod common;

use common::{close, micro_dataset, micro_fits, normal_equations, MICRO};
use mrt_excursion::crossfit::{full_sample, individual_kfold, timewise_expanding};
use mrt_excursion::data::{ControlSpec, ModeratorSpec, NumeratorSpec, Specs};
use mrt_excursion::estimators::{
    dr_emee_with_fits, dr_lagged, dr_wcls, dr_wcls_with_fits, efficient_r_wcls_with_fits, emee, emee_with,
    lagged_pseudo_outcomes, r_wcls_with_fits, time_asymptotic_with_fits, wcls, EmeeOptions, LaggedStages,
    ReferencePolicy,
};
use mrt_excursion::nuisance::{estimate_nuisances, NuisanceConfig, NuisanceSource};
use mrt_excursion::simulation::{generate, generate_binary, BinaryGenConfig, GenConfig};
use mrt_excursion::Error;

fn specs(moderator: &str, controls: &str) -> Specs {
    Specs::new(ModeratorSpec::parse(moderator).unwrap(), ControlSpec::parse(controls).unwrap())
        .with_numerator(NumeratorSpec::Constant { value: 0.5 })
}

fn w_of(a: u8, p: f64) -> f64 {
    if a == 1 {
        0.5 / p
    } else {
        0.5 / (1.0 - p)
    }
}

#[test]
fn wcls_matches_hand_normal_equations() {
    let ds = micro_dataset();
    let est = wcls(&ds, &specs("1 + S", "1 + x")).unwrap();
    let x: Vec<Vec<f64>> =
        MICRO.iter().map(|r| vec![1.0, r.5, f64::from(r.2) - 0.5, (f64::from(r.2) - 0.5) * r.6]).collect();
    let y: Vec<f64> = MICRO.iter().map(|r| r.3).collect();
    let w: Vec<f64> = MICRO.iter().map(|r| w_of(r.2, r.4)).collect();
    let beta = normal_equations(&x, &y, &w);
    assert!(close(est.beta[0], beta[2], 1e-12), "{} vs {}", est.beta[0], beta[2]);
    assert!(close(est.beta[1], beta[3], 1e-12));
    assert_eq!(est.terms, vec!["(Intercept)", "S"]);
}

#[test]
fn r_and_dr_wcls_match_hand_solutions() {
    let ds = micro_dataset();
    let fits = micro_fits();
    let sp = specs("1 + S", "1");
    let y: Vec<f64> = MICRO.iter().map(|r| r.3).collect();
    let a: Vec<f64> = MICRO.iter().map(|r| f64::from(r.2)).collect();

    let x_r: Vec<Vec<f64>> = MICRO.iter().map(|r| vec![f64::from(r.2) - 0.5, (f64::from(r.2) - 0.5) * r.6]).collect();
    let y_r: Vec<f64> = (0..6)
        .map(|i| {
            let ga = if a[i] == 1.0 { fits.g1[i] } else { fits.g0[i] };
            y[i] - ga + (a[i] - 0.5) * (fits.g1[i] - fits.g0[i])
        })
        .collect();
    let w: Vec<f64> = MICRO.iter().map(|r| w_of(r.2, r.4)).collect();
    let beta_r = normal_equations(&x_r, &y_r, &w);
    let r = r_wcls_with_fits(&ds, &sp, &fits, None).unwrap();
    assert!(close(r.beta[0], beta_r[0], 1e-12) && close(r.beta[1], beta_r[1], 1e-12));

    let x_dr: Vec<Vec<f64>> = MICRO.iter().map(|r| vec![1.0, r.6]).collect();
    let y_dr: Vec<f64> = (0..6)
        .map(|i| {
            let ga = if a[i] == 1.0 { fits.g1[i] } else { fits.g0[i] };
            w[i] * (a[i] - 0.5) * (y[i] - ga) / 0.25 + fits.g1[i] - fits.g0[i]
        })
        .collect();
    let beta_dr = normal_equations(&x_dr, &y_dr, &[0.25; 6]);
    let dr = dr_wcls_with_fits(&ds, &sp, &fits, None).unwrap();
    assert!(close(dr.beta[0], beta_dr[0], 1e-12) && close(dr.beta[1], beta_dr[1], 1e-12));

    // Single-group sandwich for DR-WCLS by hand: B = Σ σ̃² f fᵀ / n, M = Σ_i m_i m_iᵀ / n.
    let n = 3.0;
    let mut b = [[0.0; 2]; 2];
    let mut m = [[0.0; 2]; 2];
    for ind in 0..3 {
        let mut mi = [0.0; 2];
        for k in 0..6 {
            if MICRO[k].0 != ind {
                continue;
            }
            let f = [1.0, MICRO[k].6];
            let e = y_dr[k] - beta_dr[0] - beta_dr[1] * f[1];
            for p in 0..2 {
                mi[p] += 0.25 * e * f[p];
                for q in 0..2 {
                    b[p][q] += 0.25 * f[p] * f[q] / n;
                }
            }
        }
        for p in 0..2 {
            for q in 0..2 {
                m[p][q] += mi[p] * mi[q] / n;
            }
        }
    }
    let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
    let inv = [[b[1][1] / det, -b[0][1] / det], [-b[1][0] / det, b[0][0] / det]];
    let mut cov = [[0.0; 2]; 2];
    for p in 0..2 {
        for q in 0..2 {
            for s in 0..2 {
                for t in 0..2 {
                    cov[p][q] += inv[p][s] * m[s][t] * inv[t][q] / n;
                }
            }
        }
    }
    let got = dr.covariance_matrix();
    for p in 0..2 {
        for q in 0..2 {
            assert!(close(got[(p, q)], cov[p][q], 1e-10), "cov[{p}][{q}]: {} vs {}", got[(p, q)], cov[p][q]);
        }
    }
}

#[test]
fn efficient_r_wcls_with_empty_basis_is_r_wcls() {
    let ds = micro_dataset();
    let fits = micro_fits();
    let sp = specs("1", "1");
    let r = r_wcls_with_fits(&ds, &sp, &fits, None).unwrap();
    let e = efficient_r_wcls_with_fits(&ds, &sp, &fits, None, &[]).unwrap();
    assert_eq!(r.beta, e.beta);
    assert_eq!(r.se, e.se);
}

#[test]
fn time_asymptotic_point_estimate_equals_dr() {
    let ds = generate(&GenConfig { n: 3, t: 40, seed: 2, ..Default::default() }).unwrap();
    let sp = Specs::marginal();
    let plan = timewise_expanding(40, 1).unwrap();
    let fits = estimate_nuisances(&ds, &sp, &plan, &NuisanceConfig::new(NuisanceSource::oracle("oracle_g"))).unwrap();
    let a = time_asymptotic_with_fits(&ds, &sp, &fits).unwrap();
    let b = dr_wcls_with_fits(&ds, &sp, &fits, Some(&plan)).unwrap();
    assert!((a.beta[0] - b.beta[0]).abs() < 1e-12);
}

#[test]
fn dr_wcls_refuses_missing_outcomes() {
    let cfg = GenConfig {
        n: 20,
        t: 5,
        missing: mrt_excursion::simulation::MissingConfig::Mcar { rate: 0.2 },
        ..Default::default()
    };
    let ds = generate(&cfg).unwrap();
    let err = dr_wcls(&ds, &Specs::marginal(), &NuisanceConfig::new(NuisanceSource::oracle("oracle_g")), &full_sample())
        .unwrap_err();
    assert!(matches!(err, Error::Incompatible(ref m) if m.contains("dr_wcls_missing")));
}

#[test]
fn emee_closed_form_with_intercepts() {
    // Six records: W = 1 because p̃ = p = 0.5.
    let mut ds = micro_dataset();
    let ys = [1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
    for (rec, y) in ds.records_mut().iter_mut().zip(ys) {
        rec.y = Some(y);
        rec.prob = Some(0.5);
    }
    ds.set_outcome_kind(mrt_excursion::data::OutcomeKind::Binary);
    let est = emee(&ds, &specs("1", "1")).unwrap();
    let arm_mean = |a: u8| {
        let v: Vec<f64> = ds.records().iter().filter(|r| r.a == a).map(|r| r.y.unwrap()).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let expect = arm_mean(1).ln() - arm_mean(0).ln();
    assert!((est.beta[0] - expect).abs() < 1e-10, "{} vs {expect}", est.beta[0]);
}

#[test]
fn emee_newton_matches_bisection() {
    let ds = generate_binary(&BinaryGenConfig { n: 40, t: 5, seed: 3, ..Default::default() }).unwrap();
    let sp = Specs::new(ModeratorSpec::intercept(), ControlSpec::empty()).with_numerator(NumeratorSpec::Constant { value: 0.4 });
    let est = emee_with(&ds, &sp, EmeeOptions::default()).unwrap();
    // U(β) = Σ W (A − p̃)(e^{−Aβ} Y − 1) is decreasing in β.
    let u = |beta: f64| -> f64 {
        ds.records()
            .iter()
            .map(|r| {
                let a = f64::from(r.a);
                let p = r.prob.unwrap();
                let w = if r.a == 1 { 0.4 / p } else { 0.6 / (1.0 - p) };
                w * (a - 0.4) * ((-a * beta).exp() * r.y.unwrap() - 1.0)
            })
            .sum()
    };
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if u(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((est.beta[0] - 0.5 * (lo + hi)).abs() < 1e-8);
}

#[test]
fn emee_rejects_continuous_outcomes() {
    let ds = micro_dataset();
    assert!(matches!(emee(&ds, &specs("1", "1")), Err(Error::Incompatible(_))));
}

#[test]
fn dr_emee_null_effect_with_oracle() {
    let ds = generate_binary(&BinaryGenConfig { n: 300, t: 10, beta0: 0.0, seed: 5, ..Default::default() }).unwrap();
    let sp = Specs::marginal();
    let plan = individual_kfold(300, 5, 1).unwrap();
    let fits = estimate_nuisances(&ds, &sp, &plan, &NuisanceConfig::new(NuisanceSource::oracle("oracle_g"))).unwrap();
    let est = dr_emee_with_fits(&ds, &sp, &fits, Some(&plan), EmeeOptions::default()).unwrap();
    assert!(est.beta[0].abs() < 3.0 * est.se[0], "{} (se {})", est.beta[0], est.se[0]);
}

#[test]
fn lagged_window_one_is_dr_wcls() {
    let ds = generate(&GenConfig { n: 30, t: 6, seed: 4, ..Default::default() }).unwrap();
    let sp = Specs::marginal();
    let plan = individual_kfold(30, 3, 1).unwrap();
    let config = NuisanceConfig::new(NuisanceSource::oracle("oracle_g"));
    let a = dr_lagged(&ds, &sp, &config, &plan, 1, ReferencePolicy::SameAsP).unwrap();
    let b = dr_wcls(&ds, &sp, &config, &plan).unwrap();
    assert_eq!(a.beta, b.beta);
}

#[test]
fn lagged_weight_guard_trips() {
    let ds = generate(&GenConfig { n: 5, t: 8, eta1: 0.0, eta2: 0.0, seed: 4, ..Default::default() }).unwrap();
    let n = ds.len();
    // π(A = 1) = 1 with p = 0.5 doubles the weight at each treated step; a
    // single untreated step sends it to zero, so make every decision treated.
    let mut ds = ds;
    for r in ds.records_mut() {
        r.a = 1;
    }
    let stages = LaggedStages { g0: vec![vec![0.0; n]; 25], g1: vec![vec![0.0; n]; 25] };
    let p = vec![0.5; n];
    assert!(lagged_pseudo_outcomes(&ds, 8, ReferencePolicy::Always1, &p, &p, &stages).is_ok());
    let tiny = vec![1e-4; n];
    let err = lagged_pseudo_outcomes(&ds, 8, ReferencePolicy::Always1, &tiny, &p, &stages).unwrap_err();
    assert!(matches!(err, Error::HorizonWeight { .. }));
}

#[test]
fn lagged_recovers_planted_carryover() {
    let delta_true = 0.4;
    let cfg = GenConfig { n: 300, t: 10, carryover: delta_true, error_corr_base: 0.0, seed: 8, ..Default::default() };
    let ds = generate(&cfg).unwrap();
    let sp = Specs::marginal();
    let plan = individual_kfold(300, 5, 2).unwrap();
    let features = "x1 + x2 + x3 + x4 + x5 + x6 + x7 + x8 + x9 + x10 + d1 + d2 + d3 + d4 + d5 + d6 + d7 + d8 + d9 + d10 + S + a_prev + a + a*S";
    let learner = NuisanceSource::learned(
        mrt_excursion::nuisance::RandomForest { config: mrt_excursion::nuisance::RandomForestConfig { n_trees: 30, ..Default::default() } },
        features,
    )
    .unwrap();
    let est = dr_lagged(&ds, &sp, &NuisanceConfig::new(learner), &plan, 2, ReferencePolicy::SameAsP).unwrap();
    assert!((est.beta[0] - delta_true).abs() < 3.0 * est.se[0], "{} (se {})", est.beta[0], est.se[0]);
}

mod affine {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn scaling_outcomes_scales_estimates(c in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0]) {
            let ds = micro_dataset();
            let scaled = ds.scale_outcomes(c);
            let sp = specs("1 + S", "1 + x");
            let mut fits = micro_fits();
            let base_w = wcls(&ds, &sp).unwrap();
            let new_w = wcls(&scaled, &sp).unwrap();
            let base_dr = dr_wcls_with_fits(&ds, &sp, &fits, None).unwrap();
            let base_r = r_wcls_with_fits(&ds, &sp, &fits, None).unwrap();
            for v in fits.g0.iter_mut().chain(fits.g1.iter_mut()) {
                *v *= c;
            }
            let new_dr = dr_wcls_with_fits(&scaled, &sp, &fits, None).unwrap();
            let new_r = r_wcls_with_fits(&scaled, &sp, &fits, None).unwrap();
            for (b, n) in [(&base_w, &new_w), (&base_dr, &new_dr), (&base_r, &new_r)] {
                for j in 0..b.beta.len() {
                    prop_assert!(close(n.beta[j], c * b.beta[j], 1e-10));
                    prop_assert!(close(n.se[j], c.abs() * b.se[j], 1e-10));
                }
            }
        }
    }
}
