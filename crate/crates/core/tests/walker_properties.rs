use fin_core::backend::{build_generator, mean_exit_times};
use fin_core::environment::sample_environment_increments;
use fin_core::rng::stream_rng;
use fin_core::space::build_path_space;
use fin_core::stats::mean_se;
use fin_core::walker::{exit_time_samples_seeded, occupation_profile, simulate_path};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn same_seed_same_trajectory(env_seed in any::<u64>(), seed in any::<u64>(), x0 in 0usize..41) {
        let space = build_path_space(40, 1.0).unwrap();
        let env = sample_environment_increments(&space, 0.6, env_seed).unwrap();
        let g = build_generator(&space, &env).unwrap();
        let a = simulate_path(&g, x0, 0.5, &mut stream_rng(seed, 0)).unwrap();
        let b = simulate_path(&g, x0, 0.5, &mut stream_rng(seed, 0)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn occupation_mass_is_total_time(env_seed in any::<u64>(), seed in any::<u64>(), horizon in 0.01f64..2.0) {
        let space = build_path_space(40, 1.0).unwrap();
        let env = sample_environment_increments(&space, 0.6, env_seed).unwrap();
        let g = build_generator(&space, &env).unwrap();
        let traj = simulate_path(&g, 20, horizon, &mut stream_rng(seed, 3)).unwrap();
        let profile = occupation_profile(&traj, &env).unwrap();
        let mass = profile.mass(env.nu_mass());
        prop_assert!((mass - traj.total_time).abs() <= 1e-12 * traj.total_time);
        prop_assert!((traj.total_time - horizon).abs() <= 1e-12 * horizon);
    }
}

#[test]
fn empirical_exit_means_match_exact_values() {
    let space = build_path_space(40, 1.0).unwrap();
    for env_seed in 0..3u64 {
        let env = sample_environment_increments(&space, 0.5, env_seed).unwrap();
        let g = build_generator(&space, &env).unwrap();
        let domain: Vec<usize> = (10..=30).collect();
        let exact = mean_exit_times(&g, &domain).unwrap();
        let samples = exit_time_samples_seeded(&g, 20, &domain, 5000, 100 + env_seed).unwrap();
        let (m, se) = mean_se(&samples);
        let want = exact[20];
        assert!((m - want).abs() < 3.0 * se, "env {env_seed}: {m} vs {want} (se {se})");
    }
}
