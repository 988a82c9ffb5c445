use fin_core::environment::{sample_environment_increments, sample_environment_ppp};
use fin_core::space::build_path_space;
use fin_core::stats::ks_two_sample;
use proptest::prelude::*;

#[test]
fn ppp_total_mass_approaches_increments() {
    let space = build_path_space(20, 1.0).unwrap();
    let n = 5000u64;
    let exact: Vec<f64> = (0..n)
        .map(|s| sample_environment_increments(&space, 0.5, s).unwrap().total_mass())
        .collect();
    let mut last = f64::INFINITY;
    for (k, &v_min) in [1e-2, 1e-3, 1e-4].iter().enumerate() {
        let approx: Vec<f64> = (0..n)
            .map(|s| {
                sample_environment_ppp(&space, 0.5, v_min, 1_000_000 * (k as u64 + 1) + s)
                    .unwrap()
                    .total_mass()
            })
            .collect();
        let d = ks_two_sample(&exact, &approx);
        assert!(d <= last + 0.01, "v_min {v_min}: {d} after {last}");
        last = d;
    }
    assert!(last < 0.03, "{last}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn environments_are_positive_and_reproducible(seed in any::<u64>(), alpha in 0.2f64..0.95) {
        let space = build_path_space(64, 1.0).unwrap();
        let a = sample_environment_increments(&space, alpha, seed).unwrap();
        let b = sample_environment_increments(&space, alpha, seed).unwrap();
        prop_assert!(a.nu_mass().iter().all(|&m| m > 0.0));
        prop_assert_eq!(a.nu_mass(), b.nu_mass());
    }
}
