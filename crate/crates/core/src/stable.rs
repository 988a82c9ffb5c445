//! One-sided alpha-stable subordinator with Levy measure `alpha v^{-1-alpha} dv`.
//!
//! Under that Levy measure the Laplace exponent is `Gamma(1-alpha) lambda^alpha`.
//! The "standard" convention `E exp(-lambda S) = exp(-lambda^alpha)` is used for
//! the exact distribution function and the small-ball asymptote; converters
//! between the two scales are provided.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Exp1, OpenClosed01};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::stats::linear_regression;

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("must lie in (0,1), got {alpha}")))
    }
}

#[derive(Debug, Clone)]
pub struct StableLaw {
    alpha: f64,
    laplace_scale: f64,
    upper_tail_constant: OnceLock<f64>,
}

impl StableLaw {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            alpha,
            laplace_scale: gamma(1.0 - alpha),
            upper_tail_constant: OnceLock::new(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `Gamma(1 - alpha)`.
    pub fn laplace_scale(&self) -> f64 {
        self.laplace_scale
    }

    /// `-log E exp(-lambda L_1) = Gamma(1-alpha) lambda^alpha`.
    pub fn laplace_exponent(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(invalid("lambda", format!("must be non-negative, got {lambda}")));
        }
        if lambda == 0.0 {
            return Ok(0.0);
        }
        Ok(self.laplace_scale * lambda.powf(self.alpha))
    }

    /// Factor `(Gamma(1-alpha) t)^{1/alpha}` mapping a standard variate to `L_t`.
    pub fn scale_factor(&self, duration: f64) -> f64 {
        (self.laplace_scale * duration).powf(1.0 / self.alpha)
    }

    /// Converts a value of `L_1` to the standard scale.
    pub fn to_standard(&self, x: f64) -> f64 {
        x / self.scale_factor(1.0)
    }

    /// Converts a standard-scale value to the scale of `L_1`.
    pub fn from_standard(&self, x: f64) -> f64 {
        x * self.scale_factor(1.0)
    }

    /// Standard variate (`E exp(-lambda S) = exp(-lambda^alpha)`) by Kanter's
    /// representation.
    pub fn sample_standard<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = self.alpha;
        let v: f64 = OpenClosed01.sample(rng);
        let u = PI * v;
        let w: f64 = Exp1.sample(rng);
        let u = if u >= PI { PI * (1.0 - f64::EPSILON) } else { u };
        let left = (a * u).sin() / u.sin().powf(1.0 / a);
        let right = (((1.0 - a) * u).sin() / w).powf((1.0 - a) / a);
        (left * right).max(f64::MIN_POSITIVE)
    }

    /// One draw of `L_duration`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, duration: f64, rng: &mut R) -> f64 {
        debug_assert!(duration > 0.0);
        (self.scale_factor(duration) * self.sample_standard(rng)).max(f64::MIN_POSITIVE)
    }

    /// Values of `L` at the times of `grid` by independent increments.
    pub fn sample_path<R: Rng + ?Sized>(&self, grid: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut prev = 0.0;
        for &t in grid {
            if !(t > prev) {
                return Err(invalid("grid", "times must be positive and strictly increasing"));
            }
            prev = t;
        }
        let mut out = Vec::with_capacity(grid.len());
        let mut prev_t = 0.0;
        let mut acc = 0.0;
        for &t in grid {
            acc += self.sample_increment(t - prev_t, rng);
            out.push(acc);
            prev_t = t;
        }
        Ok(out)
    }

    fn zolotarev(&self, u: f64) -> f64 {
        let a = self.alpha;
        let s = u.sin();
        if s <= 0.0 {
            return f64::INFINITY;
        }
        ((1.0 - a) * u).sin() * (a * u).sin().powf(a / (1.0 - a)) / s.powf(1.0 / (1.0 - a))
    }

    /// Exact `P(S <= x)` for the standard variate, by quadrature of
    /// Zolotarev's integral representation.
    pub fn standard_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let k = x.powf(-self.alpha / (1.0 - self.alpha));
        let f = |u: f64| (-self.zolotarev(u) * k).exp();
        (integrate(&f, 0.0, PI) / PI).clamp(0.0, 1.0)
    }

    /// Exact `P(S > x)` for the standard variate, accurate in the far tail.
    pub fn standard_sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let k = x.powf(-self.alpha / (1.0 - self.alpha));
        let f = |u: f64| -(-self.zolotarev(u) * k).exp_m1();
        (integrate(&f, 0.0, PI) / PI).clamp(0.0, 1.0)
    }

    /// Exact `P(L_t <= x)`.
    pub fn cdf(&self, x: f64, duration: f64) -> f64 {
        self.standard_cdf(x / self.scale_factor(duration))
    }

    /// Exact `P(L_t > x)`.
    pub fn sf(&self, x: f64, duration: f64) -> f64 {
        self.standard_sf(x / self.scale_factor(duration))
    }

    /// `C_2 = (1-alpha) alpha^{alpha/(1-alpha)}`.
    pub fn c2(&self) -> f64 {
        let a = self.alpha;
        (1.0 - a) * a.powf(a / (1.0 - a))
    }

    /// Saddle-point prefactor `(2 pi alpha (1-alpha))^{-1/2} alpha^{-alpha/(2(1-alpha))}`
    /// of the standard small-ball law.
    pub fn c1(&self) -> f64 {
        let a = self.alpha;
        (2.0 * PI * a * (1.0 - a)).powf(-0.5) * a.powf(-a / (2.0 * (1.0 - a)))
    }

    /// The prefactor in the printed form `(2 pi (1-alpha) alpha^{alpha/(2(1-alpha))})^{-1/2}`.
    /// It disagrees with the exact law at `alpha = 1/2` and is kept only for reporting.
    pub fn printed_c1(&self) -> f64 {
        let a = self.alpha;
        (2.0 * PI * (1.0 - a) * a.powf(a / (2.0 * (1.0 - a)))).powf(-0.5)
    }

    /// Small-x asymptote of `P(S <= x)` for the standard variate:
    /// `C_1 x^{alpha/(2(1-alpha))} exp(-C_2 x^{-alpha/(1-alpha)})`.
    pub fn small_ball_asymptote(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(invalid("x", format!("must be positive, got {x}")));
        }
        let a = self.alpha;
        Ok(self.c1() * x.powf(a / (2.0 * (1.0 - a))) * (-self.c2() * x.powf(-a / (1.0 - a))).exp())
    }

    /// The same asymptote for `P(L_1 <= x)` on the Levy-measure scale.
    pub fn small_ball_asymptote_levy_scale(&self, x: f64) -> Result<f64> {
        self.small_ball_asymptote(self.to_standard(x))
    }

    /// `C_3 = sup_x x^alpha P(L_1 > x)`, evaluated on a log grid from the exact
    /// law. On the Levy-measure scale the tail behaves like `x^{-alpha}`, so
    /// `C_3 >= 1`.
    pub fn upper_tail_constant(&self) -> f64 {
        *self.upper_tail_constant.get_or_init(|| {
            let mut best = 1.0f64;
            for i in 0..=240 {
                let x = 10f64.powf(-3.0 + 9.0 * i as f64 / 240.0);
                best = best.max(x.powf(self.alpha) * self.sf(x, 1.0));
            }
            best * (1.0 + 1e-9)
        })
    }

    /// `C_3 x^{-alpha}`, bounding `P(L_t >= x t^{1/alpha})` for every `t`.
    pub fn upper_tail_bound(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(invalid("x", format!("must be positive, got {x}")));
        }
        Ok(self.upper_tail_constant() * x.powf(-self.alpha))
    }
}

/// `alpha (1-alpha)^{(1-alpha)/alpha}`.
pub fn chung_constant(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(alpha * (1.0 - alpha).powf((1.0 - alpha) / alpha))
}

/// Rate estimates from small-ball probabilities `P(S <= x)` of the standard
/// variate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallBallFit {
    /// Slope of `-log P` against `x^{-alpha/(1-alpha)}`.
    pub plain_slope: f64,
    /// Same slope after adding back `alpha/(2(1-alpha)) log x`, which removes
    /// the power prefactor of the asymptote.
    pub corrected_slope: f64,
    pub plain_r_squared: f64,
    pub corrected_r_squared: f64,
}

pub fn small_ball_rate_fit(alpha: f64, xs: &[f64], probs: &[f64]) -> Result<SmallBallFit> {
    check_alpha(alpha)?;
    if xs.len() != probs.len() || xs.len() < 3 {
        return Err(Error::InsufficientData("need at least 3 (x, P) pairs".into()));
    }
    if probs.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::InsufficientData("probabilities must lie in (0,1)".into()));
    }
    let k = alpha / (1.0 - alpha);
    let u: Vec<f64> = xs.iter().map(|x| x.powf(-k)).collect();
    let plain: Vec<f64> = probs.iter().map(|p| -p.ln()).collect();
    let corrected: Vec<f64> = plain
        .iter()
        .zip(xs)
        .map(|(y, x)| y + 0.5 * k * x.ln())
        .collect();
    let p = linear_regression(&u, &plain)?;
    let c = linear_regression(&u, &corrected)?;
    Ok(SmallBallFit {
        plain_slope: p.slope,
        corrected_slope: c.slope,
        plain_r_squared: p.r_squared,
        corrected_r_squared: c.r_squared,
    })
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature with a relative tolerance set from a coarse
/// 64-panel pass.
pub(crate) fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const PANELS: usize = 64;
    let h = (b - a) / PANELS as f64;
    let mut coarse = 0.0;
    let mut pieces = Vec::with_capacity(PANELS);
    for i in 0..PANELS {
        let x0 = a + i as f64 * h;
        let x1 = x0 + h;
        let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
        let s = simpson(f0, fm, f1, h);
        coarse += s.abs();
        pieces.push((x0, x1, f0, fm, f1, s));
    }
    let tol = (coarse * 1e-13).max(f64::MIN_POSITIVE) / PANELS as f64;
    pieces
        .into_iter()
        .map(|(x0, x1, f0, fm, f1, s)| adapt(f, x0, x1, f0, fm, f1, s, tol, 40))
        .sum()
}
