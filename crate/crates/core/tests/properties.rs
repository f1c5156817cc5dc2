use nalgebra::SymmetricEigen;
use proptest::prelude::*;

use mrt_excursion::crossfit::individual_kfold;
use mrt_excursion::data::{read_csv_from, write_csv_to, ControlSpec, ModeratorSpec, Specs};
use mrt_excursion::estimators::{dr_wcls, r_wcls, wcls};
use mrt_excursion::nuisance::{Linear, NuisanceConfig, NuisanceSource};
use mrt_excursion::simulation::{generate, GenConfig, MissingConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn csv_round_trip(n in 1usize..8, t in 1u32..6, seed in 0u64..1000, missing in prop::bool::ANY) {
        let missing = if missing { MissingConfig::Mcar { rate: 0.3 } } else { MissingConfig::None };
        let ds = generate(&GenConfig { n, t, seed, missing, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&ds, &mut buf).unwrap();
        let back = read_csv_from(buf.as_slice()).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn covariances_are_psd_and_p_values_consistent(seed in 0u64..1000) {
        let ds = generate(&GenConfig { n: 12, t: 6, seed, ..Default::default() }).unwrap();
        let specs = Specs::new(ModeratorSpec::parse("1 + S").unwrap(), ControlSpec::parse("1 + S").unwrap());
        let plan = individual_kfold(12, 3, seed).unwrap();
        let config = NuisanceConfig::new(NuisanceSource::learned(Linear, "x1 + S + a + a*S").unwrap());
        let results = [
            wcls(&ds, &specs).unwrap(),
            r_wcls(&ds, &specs, &config, &plan).unwrap(),
            dr_wcls(&ds, &specs, &config, &plan).unwrap(),
        ];
        for est in &results {
            let cov = est.covariance_matrix();
            prop_assert!((&cov - cov.transpose()).abs().max() == 0.0);
            let scale = cov.abs().max().max(1e-300);
            let eig = SymmetricEigen::new(cov).eigenvalues;
            prop_assert!(eig.iter().all(|&l| l >= -1e-12 * scale));
            for j in 0..est.beta.len() {
                let p = est.p_values[j];
                prop_assert!((0.0..=1.0).contains(&p));
                let covers_zero = est.ci95[j][0] <= 0.0 && 0.0 <= est.ci95[j][1];
                let z = (est.beta[j] / est.se[j]).abs();
                if (z - 1.959964).abs() > 1e-4 {
                    prop_assert_eq!(covers_zero, p > 0.05);
                }
            }
        }
    }
}
