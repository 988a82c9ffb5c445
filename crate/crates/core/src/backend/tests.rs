use super::*;
use crate::environment::sample_environment_increments;
use crate::space::{build_gasket_space, build_path_space};

fn two_state(a: f64, b: f64, c: f64) -> Generator {
    Generator::new(Network::new(2, [(0, 1, c)]).unwrap(), vec![a, b]).unwrap()
}

fn rough_line(n: usize) -> Generator {
    let net = Network::new(n, (0..n - 1).map(|i| (i, i + 1, 1.0 + (i % 3) as f64))).unwrap();
    let nu = (0..n).map(|i| 0.05 + ((i * 7919) % 13) as f64 / 13.0).collect();
    Generator::new(net, nu).unwrap()
}

#[test]
fn two_state_kernel_is_exact() {
    let (a, b, c) = (0.3, 1.7, 2.0);
    let g = two_state(a, b, c);
    let lambda = c * (1.0 / a + 1.0 / b);
    for &t in &[1e-3, 0.1, 1.0, 5.0] {
        let p = g.kernel_entries_spectral(0, &[0, 1], &[t]).unwrap();
        let e = (-lambda * t).exp();
        let p00 = (a + b * e) / (a * (a + b));
        let p01 = (1.0 - e) / (a + b);
        assert!((p[0][0] - p00).abs() < 1e-12 * p00);
        assert!((p[0][1] - p01).abs() < 1e-12 * p00);
    }
    let eig = g.spectral().unwrap().eigenvalues();
    assert_eq!(eig[0], 0.0);
    assert!((eig[1] - lambda).abs() < 1e-12 * lambda);
}

#[test]
fn laplace_route_matches_spectral_on_line() {
    let g = rough_line(80);
    let times = [1e-2, 0.3, 3.0];
    let targets = [10, 11, 20, 40];
    let a = g.kernel_entries_spectral(10, &targets, &times).unwrap();
    let b = g.kernel_entries_laplace(10, &targets, &times, DEFAULT_NODES).unwrap();
    for (ra, rb) in a.iter().zip(&b) {
        let scale = ra[0];
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() < 1e-9 * scale, "{x} vs {y}");
        }
    }
}

#[test]
fn generator_kills_constants_and_is_self_adjoint() {
    let g = rough_line(30);
    let lf = g.apply(&[2.5; 30]);
    assert!(lf.iter().all(|v| v.abs() < 1e-12));
    assert!(g.symmetry_defect() < 1e-12);
}

#[test]
fn heat_kernel_table_invariants_on_gasket() {
    let space = build_gasket_space(3).unwrap();
    let env = sample_environment_increments(&space, 0.6, 11).unwrap();
    let g = build_generator(&space, &env).unwrap();
    let table = g.heat_kernel(&[0.01, 0.02, 0.04, 0.08]).unwrap();
    let report = table.check_invariants(env.nu_mass());
    assert!(report.holds(), "{report:?}");
    assert!(report.chapman_kolmogorov.is_some());
}

#[test]
fn exit_time_routes_agree() {
    let g = rough_line(40);
    let domain: Vec<usize> = (5..30).collect();
    let means = mean_exit_times(&g, &domain).unwrap();
    let green = green_killed(&g, &domain).unwrap();
    let killed = KilledSemigroup::new(&g, &domain).unwrap();
    for &x in &[5, 12, 29] {
        let via_green: f64 = domain.iter().map(|&y| green.get(x, y) * g.nu()[y]).sum();
        assert!((means[x] - via_green).abs() < 1e-10 * means[x]);
        let via_spec = killed.mean_exit_time(x).unwrap();
        assert!((means[x] - via_spec).abs() < 1e-8 * means[x]);
    }
    assert_eq!(means[0], 0.0);
    assert_eq!(green.get(0, 12), 0.0);
}

#[test]
fn survival_decreases_from_one() {
    let g = rough_line(40);
    let domain: Vec<usize> = (5..30).collect();
    let s = survival_probability(&g, &domain, 17, &[1e-6, 0.1, 1.0, 10.0]).unwrap();
    assert!((s[0] - 1.0).abs() < 1e-6);
    assert!(s.windows(2).all(|w| w[1] <= w[0]));
    assert!(survival_probability(&g, &domain, 2, &[1.0]).is_err());
}

#[test]
fn hitting_routes_agree() {
    let g = rough_line(60);
    let times = [0.5, 2.0, 8.0];
    let a = g.hitting_cdf_spectral(10, 25, &times).unwrap();
    let b = g.hitting_cdf_laplace(10, 25, &times, DEFAULT_NODES).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-8, "{x} vs {y}");
    }
    assert!(a.windows(2).all(|w| w[1] >= w[0]));
    let means = g.mean_hitting_times(25).unwrap();
    assert!(means[10] > 0.0 && means[25] == 0.0);
}

#[test]
fn exit_tail_bounds_lie_below_survival() {
    let space = build_path_space(200, 1.0).unwrap();
    let env = sample_environment_increments(&space, 0.7, 5).unwrap();
    let g = build_generator(&space, &env).unwrap();
    let x = 100;
    let r = 0.2;
    let ball = space.resistance_ball(x, r).unwrap();
    let means = mean_exit_times(&g, &ball).unwrap();
    for frac in [0.05, 0.2, 0.5] {
        let t = frac * means[x];
        let bound = exit_tail_lower_bound(&space, &g, x, r, t).unwrap();
        let s = survival_probability(&g, &ball, x, &[t]).unwrap()[0];
        assert!(bound.mean_form <= s + 1e-12, "{bound:?} vs {s}");
        assert!(bound.ball_form <= s + 1e-12, "{bound:?} vs {s}");
    }
}

#[test]
fn dirichlet_energy_of_linear_function() {
    let g = rough_line(5);
    let f: Vec<f64> = (0..5).map(|i| i as f64).collect();
    let e = dirichlet_energy(&g, &f).unwrap();
    let expected: f64 = (0..4).map(|i| 1.0 + (i % 3) as f64).sum();
    assert!((e - expected).abs() < 1e-12);
    assert!(dirichlet_energy(&g, &[1.0]).is_err());
}

#[test]
fn ball_exit_resistance_on_path_is_radius() {
    let space = build_path_space(400, 1.0).unwrap();
    let (lo, hi) = ball_exit_resistance_ratio(&space, &[200], &[0.05, 0.1, 0.2]).unwrap();
    let step = 1.0 / 400.0;
    assert!(lo >= 0.5 - 1e-9, "{lo}");
    assert!(hi <= 1.0 + step / 0.05, "{hi}");
}

#[test]
fn kernel_inequalities_on_gasket() {
    let space = build_gasket_space(3).unwrap();
    let env = sample_environment_increments(&space, 0.5, 21).unwrap();
    let g = build_generator(&space, &env).unwrap();
    for x in [0, 5, 20] {
        for k in 1..6 {
            let r = space.resistance_table().diameter() / 2f64.powi(k);
            assert!(diagonal_upper_bound(&space, &g, x, r).unwrap().holds());
        }
        for &t in &[1e-4, 1e-2, 1.0] {
            let (e, b) = energy_kernel_bound(&g, x, t).unwrap();
            assert!(e <= b * (1.0 + 1e-9));
            let (l, r) = kernel_continuity_bound(&space, &g, x, 7, t).unwrap();
            assert!(l <= r * (1.0 + 1e-9));
        }
    }
}
