use fin_core::rng::stream_rng;
use fin_core::stable::{chung_constant, StableLaw};
use fin_core::stats::{ks_two_sample, mean_se};

#[test]
fn laplace_transform_of_increments() {
    for (i, &alpha) in [0.3, 0.5, 0.8].iter().enumerate() {
        let law = StableLaw::new(alpha).unwrap();
        for &t in &[0.5, 2.0] {
            let mut rng = stream_rng(40 + i as u64, (t * 10.0) as u64);
            let samples: Vec<f64> = (0..100_000).map(|_| law.sample_increment(t, &mut rng)).collect();
            for &lambda in &[0.3, 1.0, 3.0] {
                let values: Vec<f64> = samples.iter().map(|s| (-lambda * s).exp()).collect();
                let (m, se) = mean_se(&values);
                let exact = (-t * law.laplace_exponent(lambda).unwrap()).exp();
                // 18 checks share one family-wise bound.
                assert!((m - exact).abs() < 4.0 * se, "alpha {alpha} t {t} lambda {lambda}: {m} vs {exact}");
            }
        }
    }
}

#[test]
fn self_similarity_in_distribution() {
    for (i, &alpha) in [0.3, 0.5, 0.8].iter().enumerate() {
        let law = StableLaw::new(alpha).unwrap();
        let t = 3.0f64;
        let mut a_rng = stream_rng(50 + i as u64, 0);
        let mut b_rng = stream_rng(50 + i as u64, 1);
        let a: Vec<f64> = (0..10_000).map(|_| law.sample_increment(t, &mut a_rng)).collect();
        let b: Vec<f64> = (0..10_000)
            .map(|_| t.powf(1.0 / alpha) * law.sample_increment(1.0, &mut b_rng))
            .collect();
        assert!(ks_two_sample(&a, &b) < 0.02);
    }
}

#[test]
fn small_ball_log_law_from_closed_form() {
    // Standard scale at alpha = 1/2: P(S <= x) = erfc(1 / (2 sqrt x)).
    let law = StableLaw::new(0.5).unwrap();
    let mut prev = f64::INFINITY;
    for &x in &[0.01f64, 0.003, 0.001] {
        let p = statrs::function::erf::erfc(0.5 / x.sqrt());
        let err = (-p.ln() * x / law.c2() - 1.0).abs();
        assert!(err < 0.1 && err < prev, "x {x}: relative error {err}");
        prev = err;
    }
}

#[test]
fn constants_follow_their_formulas() {
    for &alpha in &[0.2, 0.5, 0.9] {
        let law = StableLaw::new(alpha).unwrap();
        let c2 = (1.0 - alpha) * alpha.powf(alpha / (1.0 - alpha));
        assert!((law.c2() - c2).abs() < 1e-12);
        let chung = alpha * (1.0 - alpha).powf((1.0 - alpha) / alpha);
        assert!((chung_constant(alpha).unwrap() - chung).abs() < 1e-12);
    }
}
