use fin_core::backend::{ball_exit_resistance_ratio, build_generator, HeatKernelTable};
use fin_core::environment::sample_environment_increments;
use fin_core::space::{build_gasket_space, build_path_space, dyadic_radii};
use fin_core::stats::log_grid;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_tables_satisfy_every_invariant(seed in any::<u64>(), alpha in 0.3f64..0.9, gasket in any::<bool>()) {
        let space = if gasket { build_gasket_space(3).unwrap() } else { build_path_space(60, 1.0).unwrap() };
        let env = sample_environment_increments(&space, alpha, seed).unwrap();
        let g = build_generator(&space, &env).unwrap();
        let times: Vec<f64> = (0..6).map(|k| 1e-3 * 2f64.powi(k)).collect();
        let table = g.heat_kernel(&times).unwrap();
        let rep = table.check_invariants(env.nu_mass());
        prop_assert!(rep.holds(), "{:?}", rep);
    }

    #[test]
    fn kernel_dominates_hitting_probability_times_diagonal(seed in any::<u64>(), x in 0usize..61, y in 0usize..61) {
        let space = build_path_space(60, 1.0).unwrap();
        let env = sample_environment_increments(&space, 0.5, seed).unwrap();
        let g = build_generator(&space, &env).unwrap();
        let times = log_grid(1e-4, 1.0, 9);
        let half: Vec<f64> = times.iter().map(|t| t / 2.0).collect();
        let hit = g.hitting_cdf(x, y, &half).unwrap();
        let spec = g.spectral().unwrap();
        for (k, &t) in times.iter().enumerate() {
            let lhs = spec.entry(x, y, t);
            let rhs = hit[k] * spec.diagonal(y, t);
            let scale = (spec.diagonal(x, t) * spec.diagonal(y, t)).sqrt();
            prop_assert!(lhs >= rhs - 1e-10 * scale, "t {}: {} < {}", t, lhs, rhs);
        }
    }
}

#[test]
fn ball_exit_resistance_is_at_most_radius_and_stable_across_levels() {
    let mut lower = Vec::new();
    for level in [4, 5, 6] {
        let s = build_gasket_space(level).unwrap();
        let step = s.lattice_scale();
        let radii = dyadic_radii(1.5 * step, s.resistance_table().diameter() / 2.0);
        let centres: Vec<usize> = (0..s.vertex_count()).step_by(7).collect();
        let (lo, hi) = ball_exit_resistance_ratio(&s, &centres, &radii).unwrap();
        let r_min = radii[0];
        assert!(hi <= 1.0 + step / r_min, "level {level}: {hi}");
        lower.push(lo);
    }
    let max = lower.iter().copied().fold(0.0, f64::max);
    let min = lower.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(max / min < 2.0, "{lower:?}");
}

#[test]
fn binary_cache_round_trips() {
    let space = build_gasket_space(2).unwrap();
    let env = sample_environment_increments(&space, 0.6, 9).unwrap();
    let g = build_generator(&space, &env).unwrap();
    let table = g.heat_kernel(&[0.01, 0.1]).unwrap();
    let mut buf = Vec::new();
    table.write_binary(&mut buf).unwrap();
    let back = HeatKernelTable::read_binary(buf.as_slice()).unwrap();
    assert_eq!(back, table);
    assert_eq!(back.cache_key(), table.cache_key());
    buf[0] ^= 1;
    assert!(HeatKernelTable::read_binary(buf.as_slice()).is_err());
}
