//! Closed-form exponents, time-scale functions, the chaining count and the
//! log-log fits used to compare simulations with the predicted laws.

use rand::Rng;
use serde::Serialize;

use crate::backend::HeatKernelTable;
use crate::error::{invalid, Error, Result};
use crate::rng::stream_rng;
use crate::space::EnvelopeParams;
use crate::stable::check_alpha;
use crate::stats::{linear_regression, quantile};

/// Default bootstrap resample count.
pub const DEFAULT_BOOTSTRAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentSet {
    pub alpha: f64,
    pub beta: f64,
    pub d_f: f64,
    /// Walk dimension `d_f/alpha + 1/beta`.
    pub d_w: f64,
    /// Spectral dimension `2 d_f / (alpha d_w)`.
    pub d_s: f64,
    /// Volume growth exponent in the resistance metric, `beta d_f`.
    pub gamma: f64,
    pub q: f64,
    /// Critical trap exponent `(sqrt(gamma^2 + 4 gamma) - gamma) / 2`.
    pub alpha_c: f64,
}

pub fn exponent_set(alpha: f64, beta: f64, d_f: f64) -> Result<ExponentSet> {
    check_alpha(alpha)?;
    for (name, v) in [("beta", beta), ("d_f", d_f)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(name, format!("must be positive, got {v}")));
        }
    }
    let d_w = d_f / alpha + 1.0 / beta;
    let gamma = beta * d_f;
    Ok(ExponentSet {
        alpha,
        beta,
        d_f,
        d_w,
        d_s: 2.0 * d_f / (alpha * d_w),
        gamma,
        q: 1.0 + gamma / alpha,
        alpha_c: ((gamma * gamma + 4.0 * gamma).sqrt() - gamma) / 2.0,
    })
}

/// Which time-scale function: plain, log-corrected or log-log-corrected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TimeScale {
    H,
    HLog,
    HLogLog,
}

/// `h(r) = r v(r)^{1/alpha}`.
pub fn time_scale_h(params: &EnvelopeParams, alpha: f64, r: f64) -> f64 {
    r * params.v(r).powf(1.0 / alpha)
}

/// `h_l(r) = r v^{1/alpha} |log v|^{1 - 1/alpha}`.
pub fn time_scale_hl(params: &EnvelopeParams, alpha: f64, r: f64) -> f64 {
    let v = params.v(r);
    r * v.powf(1.0 / alpha) * v.ln().abs().powf(1.0 - 1.0 / alpha)
}

/// `h_ll(r) = r v^{1/alpha} (log |log v|)^{1 - 1/alpha}`.
pub fn time_scale_hll(params: &EnvelopeParams, alpha: f64, r: f64) -> f64 {
    let v = params.v(r);
    r * v.powf(1.0 / alpha) * v.ln().abs().ln().powf(1.0 - 1.0 / alpha)
}

impl TimeScale {
    pub fn eval(self, params: &EnvelopeParams, alpha: f64, r: f64) -> f64 {
        match self {
            TimeScale::H => time_scale_h(params, alpha, r),
            TimeScale::HLog => time_scale_hl(params, alpha, r),
            TimeScale::HLogLog => time_scale_hll(params, alpha, r),
        }
    }

    /// Whether the correction factor is defined at radius `r`: `|log v| > 1`
    /// for the log form, `|log v| > e` for the log-log form.
    pub fn valid_at(self, params: &EnvelopeParams, r: f64) -> bool {
        let l = params.v(r).ln().abs();
        match self {
            TimeScale::H => true,
            TimeScale::HLog => l > 1.0,
            TimeScale::HLogLog => l > std::f64::consts::E,
        }
    }

    /// Inverse on the small-radius branch by bisection in `log r`, relative
    /// tolerance `1e-10`. `None` when `t` lies outside the range where the
    /// corrected form is defined and increasing.
    pub fn inverse(self, params: &EnvelopeParams, alpha: f64, t: f64) -> Option<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return None;
        }
        let f = |r: f64| self.eval(params, alpha, r);
        // Upper end of the branch: where the correction stops being valid.
        let mut hi = match self {
            TimeScale::H => 1.0,
            _ => {
                let edge = match self {
                    TimeScale::HLog => 1.0,
                    _ => std::f64::consts::E,
                };
                // v(r) = e^{-edge}
                (((-edge).exp() / params.v_const).ln() / params.delta_f).exp() * (1.0 - 1e-9)
            }
        };
        if self == TimeScale::H {
            while f(hi) < t {
                hi *= 2.0;
                if hi > 1e300 {
                    return None;
                }
            }
        } else if f(hi) < t {
            return None;
        }
        let mut lo = hi;
        while f(lo) > t {
            lo *= 0.5;
            if lo < 1e-300 {
                return None;
            }
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if f(mid) < t {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 < 1e-12 {
                break;
            }
        }
        Some((lo * hi).sqrt())
    }
}

/// Inverse of `h` by bisection.
pub fn inverse_h(params: &EnvelopeParams, alpha: f64, t: f64) -> Result<f64> {
    TimeScale::H
        .inverse(params, alpha, t)
        .ok_or_else(|| invalid("t", format!("must be positive, got {t}")))
}

/// Largest `n >= 1` with `a t / n <= h((distance / n)^{1/beta})`, or 0 when
/// no `n` qualifies.
pub fn chain_count_n(a: f64, t: f64, distance: f64, params: &EnvelopeParams, alpha: f64) -> Result<u64> {
    for (name, v) in [("a", a), ("t", t), ("distance", distance)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(name, format!("must be positive, got {v}")));
        }
    }
    check_alpha(alpha)?;
    let holds = |n: u64| {
        let nf = n as f64;
        a * t / nf <= time_scale_h(params, alpha, (distance / nf).powf(1.0 / params.beta))
    };
    // The right side decays faster than 1/n, so the set is an initial segment.
    // Bracket by doubling until several successive powers of two fail, then
    // bisect between the last success and the next power.
    let mut top = 1u64;
    let mut last_hit = 0u64;
    let mut misses = 0;
    while misses < 8 {
        if holds(top) {
            last_hit = top;
            misses = 0;
        } else {
            misses += 1;
        }
        top = top.checked_mul(2).ok_or_else(|| Error::Numerical("chain count overflow".into()))?;
    }
    if last_hit == 0 {
        return Ok(0);
    }
    let (mut lo, mut hi) = (last_hit, 2 * last_hit);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub exponent: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    /// 95% percentile bootstrap interval, widened to contain the estimate.
    pub bootstrap_ci: (f64, f64),
    pub n_points: usize,
}

impl FitResult {
    pub fn csv_header() -> [&'static str; 8] {
        ["experiment", "exponent", "stderr", "ci_lo", "ci_hi", "r2", "window_lo", "window_hi"]
    }

    pub fn csv_row(&self, experiment: &str) -> Vec<String> {
        vec![
            experiment.to_string(),
            format!("{:e}", self.exponent),
            format!("{:e}", self.stderr),
            format!("{:e}", self.bootstrap_ci.0),
            format!("{:e}", self.bootstrap_ci.1),
            format!("{:e}", self.r_squared),
            format!("{:e}", self.window.0),
            format!("{:e}", self.window.1),
        ]
    }
}

/// Least squares of `log y` on `log x` over points with `x` in `window`.
pub fn fit_power_law(xs: &[f64], ys: &[f64], window: (f64, f64)) -> Result<FitResult> {
    fit_power_law_with(xs, ys, window, DEFAULT_BOOTSTRAP, 0)
}

pub fn fit_power_law_with(xs: &[f64], ys: &[f64], window: (f64, f64), resamples: usize, seed: u64) -> Result<FitResult> {
    if xs.len() != ys.len() {
        return Err(invalid("ys", "length differs from xs"));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, _)| **x >= window.0 && **x <= window.1)
        .map(|(x, y)| {
            if *x > 0.0 && *y > 0.0 {
                Ok((x.ln(), y.ln()))
            } else {
                Err(invalid("data", format!("non-positive point ({x}, {y})")))
            }
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    fit_log_points(&lx, &ly, resamples, seed)
}

fn fit_log_points(lx: &[f64], ly: &[f64], resamples: usize, seed: u64) -> Result<FitResult> {
    let n = lx.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("{n} points in the fit window, need 3")));
    }
    let fit = linear_regression(lx, ly)?;
    let mut rng = stream_rng(seed, 0);
    let mut slopes = Vec::with_capacity(resamples);
    let mut bx = vec![0.0; n];
    let mut by = vec![0.0; n];
    for _ in 0..resamples {
        for i in 0..n {
            let k = rng.random_range(0..n);
            bx[i] = lx[k];
            by[i] = ly[k];
        }
        // Degenerate resamples (all abscissae equal) are skipped.
        if let Ok(f) = linear_regression(&bx, &by) {
            slopes.push(f.slope);
        }
    }
    let (lo, hi) = if slopes.is_empty() {
        (fit.slope, fit.slope)
    } else {
        (quantile(&slopes, 0.025), quantile(&slopes, 0.975))
    };
    let lo_x = lx.iter().fold(f64::INFINITY, |a, &b| a.min(b)).exp();
    let hi_x = lx.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)).exp();
    Ok(FitResult {
        exponent: fit.slope,
        intercept: fit.intercept,
        stderr: fit.slope_stderr,
        window: (lo_x, hi_x),
        r_squared: fit.r_squared,
        bootstrap_ci: (lo.min(fit.slope), hi.max(fit.slope)),
        n_points: n,
    })
}

/// Ensemble statistics of a family of curves sampled on a common grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnealedCurve {
    pub mean: Vec<f64>,
    /// Half-width of the normal 95% interval.
    pub ci_half: Vec<f64>,
    /// Mean with the top 1% of values per grid point removed.
    pub trimmed: Vec<f64>,
    pub ensemble: usize,
}

/// Pointwise mean over `curves` (one per environment).
pub fn annealed_mean(curves: &[Vec<f64>]) -> Result<AnnealedCurve> {
    if curves.len() < 2 {
        return Err(Error::InsufficientData("annealed average needs at least 2 environments".into()));
    }
    let len = curves[0].len();
    if curves.iter().any(|c| c.len() != len) {
        return Err(invalid("curves", "curves have different lengths"));
    }
    let m = curves.len();
    let drop = m / 100;
    let mut mean = Vec::with_capacity(len);
    let mut ci_half = Vec::with_capacity(len);
    let mut trimmed = Vec::with_capacity(len);
    let mut column = vec![0.0; m];
    for j in 0..len {
        for (c, v) in curves.iter().zip(column.iter_mut()) {
            *v = c[j];
        }
        // Sorting makes the sums independent of ensemble order.
        column.sort_by(f64::total_cmp);
        let mu = column.iter().sum::<f64>() / m as f64;
        let var = column.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (m - 1) as f64;
        mean.push(mu);
        ci_half.push(1.96 * (var / m as f64).sqrt());
        let kept = &column[..m - drop];
        trimmed.push(kept.iter().sum::<f64>() / kept.len() as f64);
    }
    Ok(AnnealedCurve {
        mean,
        ci_half,
        trimmed,
        ensemble: m,
    })
}

/// Annealed `E p_t(x, y)` for each pair, over tables sharing a time grid.
pub fn annealed_average(tables: &[HeatKernelTable], pairs: &[(usize, usize)]) -> Result<Vec<AnnealedCurve>> {
    let first = tables
        .first()
        .ok_or_else(|| Error::InsufficientData("no tables".into()))?;
    for t in tables {
        if t.times != first.times || t.space_id != first.space_id {
            return Err(invalid("tables", "tables differ in time grid or space"));
        }
    }
    let n = first.vertex_count();
    pairs
        .iter()
        .map(|&(x, y)| {
            if x >= n || y >= n {
                return Err(Error::InvalidVertex { vertex: x.max(y), count: n });
            }
            let curves: Vec<Vec<f64>> = tables
                .iter()
                .map(|t| t.values.iter().map(|m| m[(x, y)]).collect())
                .collect();
            annealed_mean(&curves)
        })
        .collect()
}

/// Ratio series of a quenched diagonal against one time scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioSeries {
    pub scale: TimeScale,
    pub times: Vec<f64>,
    /// `p_t t / g^{-1}(t)`, `None` where the corrected scale is undefined.
    pub ratio: Vec<Option<f64>>,
    pub band: (f64, f64),
    /// Times of the band minimum and maximum.
    pub argmin: f64,
    pub argmax: f64,
}

impl RatioSeries {
    /// `max / min` of the ratio.
    pub fn band_width(&self) -> f64 {
        self.band.1 / self.band.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionReport {
    pub h: RatioSeries,
    pub h_l: Option<RatioSeries>,
    pub h_ll: Option<RatioSeries>,
}

/// Ratio of a quenched on-diagonal curve to the scale `t -> g^{-1}(t) / t` for
/// `g` in `{h, h_l, h_ll}`.
pub fn quenched_correction_fit(
    times: &[f64],
    diagonal: &[f64],
    params: &EnvelopeParams,
    alpha: f64,
) -> Result<CorrectionReport> {
    check_alpha(alpha)?;
    if times.len() != diagonal.len() {
        return Err(invalid("diagonal", "length differs from times"));
    }
    check_span(times, 2.0)?;
    let series = |scale: TimeScale| -> Option<RatioSeries> {
        let ratio: Vec<Option<f64>> = times
            .iter()
            .zip(diagonal)
            .map(|(&t, &p)| scale.inverse(params, alpha, t).map(|r| p * t / r))
            .collect();
        let mut band = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut argmin, mut argmax) = (f64::NAN, f64::NAN);
        for (&t, r) in times.iter().zip(&ratio) {
            if let Some(r) = *r {
                if r < band.0 {
                    band.0 = r;
                    argmin = t;
                }
                if r > band.1 {
                    band.1 = r;
                    argmax = t;
                }
            }
        }
        if ratio.iter().filter(|r| r.is_some()).count() < 2 {
            return None;
        }
        Some(RatioSeries {
            scale,
            times: times.to_vec(),
            ratio,
            band,
            argmin,
            argmax,
        })
    };
    let h = series(TimeScale::H).ok_or_else(|| Error::InsufficientData("no valid ratio points".into()))?;
    Ok(CorrectionReport {
        h,
        h_l: series(TimeScale::HLog),
        h_ll: series(TimeScale::HLogLog),
    })
}

/// Band check of a ratio series against `[c lower(t), C upper(t)]` with the
/// constants fitted on the points whose times lie in `calibration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandCheck {
    pub c_lower: f64,
    pub c_upper: f64,
    /// Fraction of all points inside the band.
    pub inside_fraction: f64,
}

pub fn band_check(
    times: &[f64],
    ratio: &[f64],
    lower: impl Fn(f64) -> f64,
    upper: impl Fn(f64) -> f64,
    calibration: (f64, f64),
) -> Result<BandCheck> {
    let mut c_lower = f64::INFINITY;
    let mut c_upper = 0.0f64;
    for (&t, &r) in times.iter().zip(ratio) {
        if t >= calibration.0 && t <= calibration.1 {
            c_lower = c_lower.min(r / lower(t));
            c_upper = c_upper.max(r / upper(t));
        }
    }
    if !(c_lower.is_finite() && c_lower > 0.0 && c_upper > 0.0) {
        return Err(Error::InsufficientData("no calibration points".into()));
    }
    let tol = 1e-12;
    let inside = times
        .iter()
        .zip(ratio)
        .filter(|(&t, &r)| r >= c_lower * lower(t) * (1.0 - tol) && r <= c_upper * upper(t) * (1.0 + tol))
        .count();
    Ok(BandCheck {
        c_lower,
        c_upper,
        inside_fraction: inside as f64 / times.len() as f64,
    })
}

fn check_span(times: &[f64], decades: f64) -> Result<()> {
    let lo = times.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = times.iter().fold(0.0f64, |a, &b| a.max(b));
    if !(lo > 0.0) || (hi / lo).log10() < decades - 1e-9 {
        return Err(Error::InsufficientData(format!(
            "time grid spans {:.2} decades, need {decades}",
            (hi / lo).log10()
        )));
    }
    Ok(())
}

/// Off-diagonal decay fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OffdiagFit {
    /// Free fit of `log(-log ratio)` on `log(d^{d_w} / t)`.
    pub stretch: FitResult,
    /// Linear fit of `-log ratio` on `(d^{d_w}/t)^{1/(d_w - 1)}`.
    pub linear_slope: f64,
    pub linear_r_squared: f64,
}

/// Fits `-log(p(0,x)/p(0,0))` against the scaling variable `d^{d_w}/t`.
/// `profile[i][j]` is the mean kernel at `times[i]` and `distances[j]`; the
/// on-diagonal value is `diagonal[i]`. Only points with `d^{d_w}/t >= 1` and
/// a ratio below one enter.
pub fn offdiag_profile_fit(
    times: &[f64],
    distances: &[f64],
    diagonal: &[f64],
    profile: &[Vec<f64>],
    exponents: &ExponentSet,
) -> Result<OffdiagFit> {
    if profile.len() != times.len() || diagonal.len() != times.len() {
        return Err(invalid("profile", "rows must match times"));
    }
    let d_w = exponents.d_w;
    let mut u = Vec::new();
    let mut decay = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        if profile[i].len() != distances.len() {
            return Err(invalid("profile", "columns must match distances"));
        }
        for (j, &d) in distances.iter().enumerate() {
            let s = d.powf(d_w) / t;
            let ratio = profile[i][j] / diagonal[i];
            if s >= 1.0 && ratio > 0.0 && ratio < 1.0 {
                u.push(s);
                decay.push(-ratio.ln());
            }
        }
    }
    let lo = u.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = u.iter().fold(0.0f64, |a, &b| a.max(b));
    if u.len() < 3 || hi / lo < 10.0 {
        return Err(Error::InsufficientData(format!(
            "scaling variable spans {:.2} decades over {} points, need 1",
            (hi / lo).log10(),
            u.len()
        )));
    }
    let stretch = fit_power_law(&u, &decay, (0.0, f64::INFINITY))?;
    let w: Vec<f64> = u.iter().map(|s| s.powf(1.0 / (d_w - 1.0))).collect();
    let lin = linear_regression(&w, &decay)?;
    Ok(OffdiagFit {
        stretch,
        linear_slope: lin.slope,
        linear_r_squared: lin.r_squared,
    })
}

/// Inner fit for one distance: `-log P(tau_D <= t)` against `t^{-alpha}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InnerFit {
    pub distance: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitTailFit {
    pub inner: Vec<InnerFit>,
    /// Power-law fit of the inner slopes against `D`; the predicted exponent
    /// is `1 + alpha`, equivalently `D^{1 + 1/alpha}` inside `t^{-alpha}`.
    pub outer: Option<FitResult>,
}

/// One hitting-probability curve `P(tau_D <= t)` on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCurve {
    pub distance: f64,
    pub times: Vec<f64>,
    pub probability: Vec<f64>,
}

/// Two-level fit of small-time hitting tails. Points with probability in
/// `[p_range.0, p_range.1]` enter the inner fits; each curve needs 3 such
/// points. The lower end keeps values above the numerical floor of the
/// backend.
pub fn exit_tail_fit(curves: &[TailCurve], alpha: f64, p_range: (f64, f64)) -> Result<ExitTailFit> {
    check_alpha(alpha)?;
    let (p_min, p_max) = p_range;
    let mut inner = Vec::with_capacity(curves.len());
    for c in curves {
        if c.times.len() != c.probability.len() {
            return Err(invalid("curves", "probability length differs from times"));
        }
        let (x, y): (Vec<f64>, Vec<f64>) = c
            .times
            .iter()
            .zip(&c.probability)
            .filter(|(_, &p)| p > 0.0 && p >= p_min && p <= p_max)
            .map(|(&t, &p)| (t.powf(-alpha), -p.ln()))
            .unzip();
        if x.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "distance {}: {} points in the small-time regime",
                c.distance,
                x.len()
            )));
        }
        let f = linear_regression(&x, &y)?;
        inner.push(InnerFit {
            distance: c.distance,
            slope: f.slope,
            intercept: f.intercept,
            r_squared: f.r_squared,
            n_points: x.len(),
        });
    }
    let outer = if inner.len() >= 3 && inner.iter().all(|f| f.slope > 0.0) {
        let d: Vec<f64> = inner.iter().map(|f| f.distance).collect();
        let s: Vec<f64> = inner.iter().map(|f| f.slope).collect();
        Some(fit_power_law(&d, &s, (0.0, f64::INFINITY))?)
    } else {
        None
    };
    Ok(ExitTailFit { inner, outer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{gasket_beta, gasket_dimension};

    #[test]
    fn one_dimensional_exponents() {
        let e = exponent_set(0.5, 1.0, 1.0).unwrap();
        assert!((e.d_w - 3.0).abs() < 1e-15);
        assert!((e.d_s - 4.0 / 3.0).abs() < 1e-15);
        assert!((e.alpha_c - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-12);
        assert!((e.q - 3.0).abs() < 1e-15);
        let near = exponent_set(1.0 - 1e-6, 1.0, 1.0).unwrap();
        assert!((near.d_w - 2.0).abs() < 1e-4 && (near.d_s - 1.0).abs() < 1e-4);
        assert!(exponent_set(1.2, 1.0, 1.0).is_err());
    }

    #[test]
    fn gasket_critical_exponent() {
        let e = exponent_set(0.5, gasket_beta(), gasket_dimension()).unwrap();
        assert!((e.alpha_c - 0.743).abs() < 5e-4, "{}", e.alpha_c);
    }

    #[test]
    fn cube_time_scale() {
        let p = EnvelopeParams::power_law(1.0, 1.0);
        assert!((time_scale_h(&p, 0.5, 2.0) - 8.0).abs() < 1e-12);
        assert!((inverse_h(&p, 0.5, 8.0).unwrap() - 2.0).abs() < 1e-9);
        for &t in &crate::stats::log_grid(1e-12, 1e6, 37) {
            let r = inverse_h(&p, 0.5, t).unwrap();
            assert!((time_scale_h(&p, 0.5, r) / t - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn corrected_scales_match_formula() {
        let p = EnvelopeParams::power_law(1.0, 1.0);
        let (a, r) = (0.6, 0.01f64);
        let v = r;
        let direct_l = r * v.powf(1.0 / a) * v.ln().abs().powf(1.0 - 1.0 / a);
        let direct_ll = r * v.powf(1.0 / a) * v.ln().abs().ln().powf(1.0 - 1.0 / a);
        assert_eq!(time_scale_hl(&p, a, r), direct_l);
        assert_eq!(time_scale_hll(&p, a, r), direct_ll);
        let t = time_scale_hll(&p, a, r);
        let back = TimeScale::HLogLog.inverse(&p, a, t).unwrap();
        assert!((back / r - 1.0).abs() < 1e-9);
    }

    #[test]
    fn chain_count_examples() {
        let p = EnvelopeParams::power_law(1.0, 1.0);
        assert_eq!(chain_count_n(1.0, 1.0, 10.0, &p, 0.5).unwrap(), 31);
        assert_eq!(chain_count_n(1.0, 2.0, 1.0, &p, 0.5).unwrap(), 0);
        let mut last = u64::MAX;
        for &t in &[0.01, 0.1, 1.0, 10.0] {
            let n = chain_count_n(1.0, t, 10.0, &p, 0.5).unwrap();
            assert!(n <= last);
            last = n;
        }
    }

    #[test]
    fn exact_power_law_fit() {
        let xs: Vec<f64> = (1..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let f = fit_power_law(&xs, &ys, (0.0, 100.0)).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(f.bootstrap_ci.0 <= f.exponent && f.exponent <= f.bootstrap_ci.1);
        assert!(fit_power_law(&xs, &ys, (1.5, 2.5)).is_err());
    }

    #[test]
    fn noisy_power_law_fit() {
        let mut rng = stream_rng(5, 0);
        let xs = crate::stats::log_grid(1.0, 100.0, 50);
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| x.powf(1.5) * (1.0 + 0.01 * (2.0 * rng.random::<f64>() - 1.0)))
            .collect();
        let f = fit_power_law(&xs, &ys, (0.0, 1e9)).unwrap();
        assert!((1.45..=1.55).contains(&f.exponent));
    }

    #[test]
    fn window_excludes_contaminated_head() {
        let xs = crate::stats::log_grid(1.0, 1000.0, 30);
        let ys: Vec<f64> = xs.iter().map(|&x| if x < 10.0 { 1.0 } else { x.powi(3) }).collect();
        let full = fit_power_law(&xs, &ys, (0.0, 1e9)).unwrap();
        let windowed = fit_power_law(&xs, &ys, (10.0, 1e9)).unwrap();
        assert!((windowed.exponent - 3.0).abs() < 1e-10);
        assert!((full.exponent - 3.0).abs() > 0.1);
    }

    #[test]
    fn annealed_of_identical_curves() {
        let c = vec![1.0, 0.5, 0.25];
        let a = annealed_mean(&[c.clone(), c.clone(), c.clone()]).unwrap();
        assert_eq!(a.mean, c);
        assert!(a.ci_half.iter().all(|&w| w == 0.0));
        assert!(annealed_mean(&[c]).is_err());
    }

    #[test]
    fn trimmed_mean_drops_top_percent() {
        let mut curves: Vec<Vec<f64>> = (0..200).map(|_| vec![1.0]).collect();
        curves[17][0] = 1e6;
        curves[99][0] = 1e6;
        let a = annealed_mean(&curves).unwrap();
        assert_eq!(a.trimmed[0], 1.0);
        assert!(a.mean[0] > 1e4);
    }

    #[test]
    fn unit_ratio_for_exact_scale() {
        let p = EnvelopeParams::power_law(1.0, 1.0);
        let times = crate::stats::log_grid(1e-6, 1e-3, 20);
        let diag: Vec<f64> = times.iter().map(|&t| inverse_h(&p, 0.5, t).unwrap() / t).collect();
        let rep = quenched_correction_fit(&times, &diag, &p, 0.5).unwrap();
        assert!((rep.h.band.0 - 1.0).abs() < 1e-9 && (rep.h.band.1 - 1.0).abs() < 1e-9);
        assert!(quenched_correction_fit(&times[..5], &diag[..5], &p, 0.5).is_err());
    }

    #[test]
    fn loglog_inflation_narrows_corrected_band() {
        let p = EnvelopeParams::power_law(1.0, 1.0);
        let a = 0.5;
        let times = crate::stats::log_grid(1e-12, 1e-6, 25);
        let diag: Vec<f64> = times
            .iter()
            .map(|&t| {
                let r = TimeScale::HLogLog.inverse(&p, a, t).unwrap();
                r / t
            })
            .collect();
        let rep = quenched_correction_fit(&times, &diag, &p, a).unwrap();
        let ll = rep.h_ll.unwrap();
        assert!(ll.band_width() < rep.h.band_width());
        assert!((ll.band_width() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn offdiag_recovers_synthetic_stretch() {
        let e = exponent_set(0.8, 1.0, 1.0).unwrap();
        let times = [1e-4, 3e-4, 1e-3];
        let distances = [0.05, 0.1, 0.2, 0.3, 0.4];
        let diag = vec![1.0; 3];
        let profile: Vec<Vec<f64>> = times
            .iter()
            .map(|&t| {
                distances
                    .iter()
                    .map(|&d: &f64| (-0.7 * (d.powf(e.d_w) / t).powf(1.0 / (e.d_w - 1.0))).exp())
                    .collect()
            })
            .collect();
        let f = offdiag_profile_fit(&times, &distances, &diag, &profile, &e).unwrap();
        assert!((f.stretch.exponent - 1.0 / (e.d_w - 1.0)).abs() < 1e-6);
        assert!((f.linear_r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exit_tail_recovers_synthetic_exponents() {
        let a = 0.5;
        let times = crate::stats::log_grid(1e-3, 1e-1, 20);
        let curves: Vec<TailCurve> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&d: &f64| TailCurve {
                distance: d,
                times: times.clone(),
                probability: times.iter().map(|&t| (-(d.powf(1.0 + 1.0 / a) / t).powf(a)).exp()).collect(),
            })
            .collect();
        let f = exit_tail_fit(&curves, a, (0.0, 1.0)).unwrap();
        for i in &f.inner {
            assert!((i.slope / i.distance.powf(1.0 + a) - 1.0).abs() < 1e-9);
        }
        assert!((f.outer.unwrap().exponent - (1.0 + a)).abs() < 1e-6);
    }

    #[test]
    fn band_check_calibrates_on_window() {
        let times = crate::stats::log_grid(1e-4, 1e-2, 21);
        let ratio: Vec<f64> = times.iter().map(|t| 1.0 + t.ln().abs() * 0.0).collect();
        let b = band_check(&times, &ratio, |_| 1.0, |_| 1.0, (0.0, 1.0)).unwrap();
        assert_eq!(b.inside_fraction, 1.0);
        assert_eq!((b.c_lower, b.c_upper), (1.0, 1.0));
    }
}
