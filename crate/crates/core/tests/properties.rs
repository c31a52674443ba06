//! Structural invariants checked over random seeds and parameters.

use std::sync::Arc;

use gpp_core::gp::{apply_t, NormingFunctions};
use gpp_core::lifting::{estimate_norming, lift, FieldSample, SelectionPolicy};
use gpp_core::maxstable::{MaxStableSampler, PenroseConfig};
use gpp_core::pareto::ParetoSampler;
use gpp_core::{Field, Grid, ProfileSampler, RandomStream, SpectralProfileSpec};
use proptest::prelude::*;

fn spec_for(kind: u8, omega0: f64) -> SpectralProfileSpec {
    match kind % 4 {
        0 => SpectralProfileSpec::constant(omega0),
        1 => SpectralProfileSpec::gaussian_moving_max(omega0, 0.25),
        2 => SpectralProfileSpec::rescaled_positive_field(omega0, 0.2),
        _ => SpectralProfileSpec::bernoulli_pair(omega0),
    }
}

fn grid_for(kind: u8, sites: usize) -> Arc<Grid> {
    let n = if kind % 4 == 3 { 2 } else { sites };
    Arc::new(Grid::uniform_1d(0.0, 1.0, n).unwrap())
}

fn gev_sample(n: usize, sites: usize, gamma: f64, seed: u64) -> FieldSample {
    let grid = Arc::new(Grid::uniform_1d(0.0, 1.0, sites).unwrap());
    let s = ParetoSampler::new(
        &SpectralProfileSpec::gaussian_moving_max(1.0, 0.25),
        grid.clone(),
    )
    .unwrap();
    let mut rng = RandomStream::new(seed);
    let fields = (0..n)
        .map(|_| {
            let w = s.sample(&mut rng).w;
            w.map(|x| {
                if gamma == 0.0 {
                    x.ln()
                } else {
                    (x.powf(gamma) - 1.0) / gamma
                }
            })
            .unwrap()
        })
        .collect();
    FieldSample::new(fields, "gp", None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(48) })]

    #[test]
    fn profile_sup_is_omega0_exactly(kind in 0u8..4, omega0 in 0.1f64..20.0, sites in 2usize..24, seed in any::<u64>()) {
        let spec = spec_for(kind, omega0);
        let p = ProfileSampler::new(&spec, grid_for(kind, sites)).unwrap();
        let mut rng = RandomStream::new(seed);
        for _ in 0..20 {
            let v = p.sample(&mut rng);
            prop_assert_eq!(v.sup().0, omega0);
            prop_assert!(v.is_nonnegative());
        }
    }

    #[test]
    fn pareto_sample_decomposes(kind in 0u8..4, omega0 in 0.1f64..20.0, sites in 2usize..24, seed in any::<u64>()) {
        let s = ParetoSampler::new(&spec_for(kind, omega0), grid_for(kind, sites)).unwrap();
        let mut rng = RandomStream::new(seed);
        for x in s.sample_batch(50, &mut rng) {
            prop_assert!(x.y >= 1.0);
            prop_assert_eq!(x.w.sup().0, x.y * omega0);
            for (w, v) in x.w.values().iter().zip(x.v.values()) {
                prop_assert_eq!(*w, x.y * v);
            }
        }
    }

    #[test]
    fn max_stable_draws_nonnegative_finite(kind in 0u8..4, seed in any::<u64>()) {
        let cfg = PenroseConfig::new(spec_for(kind, 1.0), grid_for(kind, 8)).with_truncation(1e-3);
        let ms = MaxStableSampler::new(&cfg).unwrap();
        let mut rng = RandomStream::new(seed);
        for _ in 0..20 {
            let f = ms.sample(&mut rng);
            prop_assert!(f.values().iter().all(|x| x.is_finite() && *x >= 0.0));
        }
    }

    #[test]
    fn selection_matches_normalized_sup(gamma in -0.4f64..0.6, k in 10usize..60, seed in any::<u64>()) {
        let data = gev_sample(400, 6, gamma, seed);
        let nf = estimate_norming(&data, k).unwrap();
        let report = lift(&data, &nf, 5.0, &SelectionPolicy::SupAnywhere).unwrap();
        let expected: Vec<usize> = data
            .fields
            .iter()
            .enumerate()
            .filter(|(_, x)| apply_t(x, &nf).unwrap().field.sup().0 > 1.0)
            .map(|(i, _)| i)
            .collect();
        prop_assert_eq!(&report.selected_ids, &expected);
    }

    #[test]
    fn unit_factor_leaves_fields_unchanged(gamma in -0.4f64..0.6, seed in any::<u64>()) {
        let data = gev_sample(300, 5, gamma, seed);
        let nf = estimate_norming(&data, 30).unwrap();
        let report = lift(&data, &nf, 1.0, &SelectionPolicy::SupAnywhere).unwrap();
        for (id, l) in report.selected_ids.iter().zip(&report.lifted) {
            for (x, y) in data.fields[*id].values().iter().zip(l.values()) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()), "{} vs {}", x, y);
            }
        }
    }
}

#[test]
fn true_pareto_norming_selects_sup_exceedances() {
    let data = gev_sample(2000, 8, 1.0, 3);
    let g = data.grid().clone();
    let t = 10.0;
    let nf = NormingFunctions::new(
        Field::constant(g.clone(), 1.0).unwrap(),
        Field::constant(g.clone(), t).unwrap(),
        Field::constant(g, t - 1.0).unwrap(),
        t,
        None,
    )
    .unwrap();
    // With gamma = 1 the sample is W - 1, so T_t X = W / t.
    let report = lift(&data, &nf, 2.0, &SelectionPolicy::SupAnywhere).unwrap();
    for (i, x) in data.fields.iter().enumerate() {
        let hit = x.sup().0 + 1.0 > t;
        assert_eq!(report.selected_ids.contains(&i), hit, "field {i}");
    }
}
