use fin_core::space::{build_gasket_space, build_path_space, dyadic_radii, SpaceModel};
use proptest::prelude::*;
use std::sync::OnceLock;

fn gasket() -> &'static SpaceModel {
    static G: OnceLock<SpaceModel> = OnceLock::new();
    G.get_or_init(|| build_gasket_space(4).unwrap())
}

fn path() -> &'static SpaceModel {
    static P: OnceLock<SpaceModel> = OnceLock::new();
    P.get_or_init(|| build_path_space(300, 2.5).unwrap())
}

proptest! {
    #[test]
    fn resistance_is_a_metric(a in 0usize..123, b in 0usize..123, c in 0usize..123) {
        let t = gasket().resistance_table();
        prop_assert!(t.get(a, c) <= t.get(a, b) + t.get(b, c) + 1e-12);
        prop_assert!((t.get(a, b) - t.get(b, a)).abs() < 1e-12);
    }

    #[test]
    fn path_resistance_is_coordinate_distance(a in 0usize..301, b in 0usize..301) {
        let s = path();
        let d = (s.coordinates()[a][0] - s.coordinates()[b][0]).abs();
        prop_assert!((s.effective_resistance(a, b).unwrap() - d).abs() < 1e-10);
    }

    #[test]
    fn balls_grow_with_radius(x in 0usize..123, r1 in 0.01f64..1.0, f in 1.0f64..3.0) {
        let s = gasket();
        let small = s.resistance_ball(x, r1).unwrap();
        let large = s.resistance_ball(x, r1 * f).unwrap();
        prop_assert!(small.iter().all(|y| large.contains(y)));
    }
}

#[test]
fn gasket_volume_constants_are_stable_across_levels() {
    let mut fits = Vec::new();
    for level in [3, 4, 5] {
        let s = build_gasket_space(level).unwrap();
        let all: Vec<usize> = (0..s.vertex_count()).collect();
        let diameter = s.resistance_table().diameter();
        let radii = dyadic_radii(1.5 * s.lattice_scale(), diameter);
        fits.push(s.fit_uvd(&all, &radii).unwrap());
    }
    for f in &fits {
        assert!(f.max_spread < 10.0, "{}", f.max_spread);
        assert!(f.c_l > 0.5 * fits[0].c_l && f.c_u < 2.0 * fits[0].c_u);
    }
}
