use fin_core::environment::{sample_environment_increments, sample_environment_ppp};
use fin_core::space::{build_gasket_space, build_path_space, SpaceModel};
use fin_core::stats::log_grid;
use fin_core::volume::{power_ratio_report, uniform_infimum_scan, uniform_supremum_scan, EnvelopeKind};
use proptest::prelude::*;
use std::sync::OnceLock;

fn path() -> &'static SpaceModel {
    static P: OnceLock<SpaceModel> = OnceLock::new();
    P.get_or_init(|| build_path_space(512, 1.0).unwrap())
}

fn radii() -> Vec<f64> {
    log_grid(0.004, 0.2, 12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn infimum_lies_below_every_local_curve(seed in any::<u64>(), start in 0usize..400, len in 1usize..100) {
        let s = path();
        let env = sample_environment_increments(s, 0.5, seed).unwrap();
        let region: Vec<usize> = (start..start + len).collect();
        let inf = uniform_infimum_scan(s, &env, &region, &radii(), 20.0).unwrap();
        for &x in &region {
            let local = uniform_infimum_scan(s, &env, &[x], &radii(), 20.0).unwrap();
            for (a, b) in inf.ratio_series.iter().zip(&local.ratio_series) {
                prop_assert!(a <= b);
            }
        }
        let wider: Vec<usize> = (start.saturating_sub(50)..(start + len + 50).min(s.vertex_count())).collect();
        let wide = uniform_infimum_scan(s, &env, &wider, &radii(), 20.0).unwrap();
        for (a, b) in wide.ratio_series.iter().zip(&inf.ratio_series) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn reports_are_positive_deterministic_and_consistent(seed in any::<u64>(), x in 0usize..513) {
        let s = path();
        let env = sample_environment_increments(s, 0.5, seed).unwrap();
        let a = power_ratio_report(s, &env, x, &radii(), 0.5).unwrap();
        let b = power_ratio_report(s, &env, x, &radii(), 0.5).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.ratio_series.iter().all(|&q| q > 0.0));
        let lo = a.ratio_series.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = a.ratio_series.iter().copied().fold(0.0, f64::max);
        prop_assert_eq!(a.band, (lo, hi));
        prop_assert_eq!(a.envelope_kind, EnvelopeKind::Power);
    }

    #[test]
    fn supremum_between_deepest_atom_and_total_mass(seed in any::<u64>(), start in 0usize..400) {
        let s = path();
        let env = sample_environment_ppp(s, 0.5, 1e-4, seed).unwrap();
        let region: Vec<usize> = (start..start + 100).collect();
        let (rep, floor) = uniform_supremum_scan(s, &env, &region, &radii()).unwrap();
        prop_assert!(rep.pass);
        prop_assert!(rep.observed.iter().all(|&o| o >= floor && o <= env.total_mass() * (1.0 + 1e-12)));
    }

    #[test]
    fn refining_the_radius_grid_widens_the_band_boundedly(seed in any::<u64>(), x in 100usize..400) {
        let s = path();
        let env = sample_environment_increments(s, 0.5, seed).unwrap();
        let coarse = log_grid(0.004, 0.256, 7);
        let fine = log_grid(0.004, 0.256, 13);
        let a = power_ratio_report(s, &env, x, &coarse, 0.5).unwrap();
        let b = power_ratio_report(s, &env, x, &fine, 0.5).unwrap();
        prop_assert!(b.band.0 <= a.band.0 && b.band.1 >= a.band.1);
        let c_d: f64 = 2.0;
        prop_assert!(b.band_width() <= a.band_width() * c_d.powf(1.0 / 0.5) * (1.0 + 1e-12));
    }
}

#[test]
fn gasket_supremum_band_is_narrow() {
    let s = build_gasket_space(5).unwrap();
    let all: Vec<usize> = (0..s.vertex_count()).collect();
    let diameter = s.resistance_table().diameter();
    let radii = log_grid(s.lattice_scale() * 1.01, diameter, 9);
    for seed in 0..5 {
        let env = sample_environment_increments(&s, 0.5, seed).unwrap();
        let (rep, _) = uniform_supremum_scan(&s, &env, &all, &radii).unwrap();
        let width = rep.observed.last().unwrap() / rep.observed[0];
        assert!(width < 10.0, "seed {seed}: {width}");
    }
}
