//! Numerical inversion of Laplace transforms along a cotangent contour, with
//! resolvent solvers `(sN + K) g = b` for complex `s`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::network::Network;

/// Default number of contour nodes (the quadrature uses half of them).
pub const DEFAULT_NODES: usize = 32;

// Contour z(theta) = (n/t) (A + B theta cot(C theta) + i D theta).
const A: f64 = -0.6122;
const B: f64 = 0.5017;
const C: f64 = 0.6407;
const D: f64 = 0.2645;

/// Node `z` and weight `z'(theta)` for `t = 1`; scale both by `1/t`.
#[derive(Debug, Clone)]
pub struct Contour {
    nodes: Vec<(Complex64, Complex64)>,
    n: usize,
}

impl Contour {
    pub fn new(n: usize) -> Self {
        assert!(n >= 4 && n.is_multiple_of(2), "contour needs an even node count >= 4");
        let nf = n as f64;
        let nodes = (n / 2..n)
            .map(|k| {
                let theta = -std::f64::consts::PI + (k as f64 + 0.5) * 2.0 * std::f64::consts::PI / nf;
                let (s, c) = (C * theta).sin_cos();
                let cot = c / s;
                let z = Complex64::new(nf * (A + B * theta * cot), nf * D * theta);
                let dz = Complex64::new(nf * (B * cot - B * C * theta / (s * s)), nf * D);
                (z, dz)
            })
            .collect();
        Self { nodes, n }
    }

    /// Points `s` at which the transform is needed for time `t`.
    pub fn points(&self, t: f64) -> impl Iterator<Item = Complex64> + '_ {
        self.nodes.iter().map(move |(z, _)| z / t)
    }

    /// `f(t)` from transform values at [`Contour::points`]`(t)`.
    pub fn invert(&self, t: f64, values: &[Complex64]) -> f64 {
        debug_assert_eq!(values.len(), self.nodes.len());
        let mut acc = 0.0;
        for ((z, dz), f) in self.nodes.iter().zip(values) {
            let term = z.exp() * f * dz / t;
            acc += term.im;
        }
        2.0 * acc / self.n as f64
    }

    /// Inverts a closure-defined transform at time `t`.
    pub fn invert_fn(&self, t: f64, f: impl Fn(Complex64) -> Complex64) -> f64 {
        let values: Vec<Complex64> = self.points(t).map(f).collect();
        self.invert(t, &values)
    }
}

/// Solves `(s N + K) g = b` on a line network (tridiagonal, Thomas sweep).
pub fn line_resolvent(net: &Network, nu: &[f64], s: Complex64, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = net.vertex_count();
    debug_assert!(net.is_line());
    let off: Vec<f64> = net.edges().iter().map(|e| -e.conductance).collect();
    let mut cp = vec![Complex64::new(0.0, 0.0); n];
    let mut dp = vec![Complex64::new(0.0, 0.0); n];
    let diag = |i: usize| s * nu[i] + net.weighted_degree(i);
    let mut denom = diag(0);
    for i in 0..n {
        if i > 0 {
            denom = diag(i) - off[i - 1] * cp[i - 1];
        }
        if denom.norm() == 0.0 || !denom.is_finite() {
            return Err(Error::Numerical("singular tridiagonal resolvent".into()));
        }
        cp[i] = if i + 1 < n { off[i] / denom } else { Complex64::new(0.0, 0.0) };
        let prev = if i > 0 { off[i - 1] * dp[i - 1] } else { Complex64::new(0.0, 0.0) };
        dp[i] = (b[i] - prev) / denom;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        let next = dp[i + 1];
        dp[i] -= cp[i] * next;
    }
    Ok(dp)
}

/// Solves `(s N + K) g = b` with a dense pivoted LU; reference implementation.
pub fn dense_resolvent(net: &Network, nu: &[f64], s: Complex64, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = net.vertex_count();
    let k = net.laplacian();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let base = Complex64::new(k[(i, j)], 0.0);
        if i == j {
            base + s * nu[i]
        } else {
            base
        }
    });
    let rhs = DVector::from_column_slice(b);
    m.lu()
        .solve(&rhs)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::Numerical("singular dense resolvent".into()))
}

/// Resolvent column `G_s(., x)` using the tridiagonal solver on lines and the
/// dense solver otherwise.
pub fn resolvent_column(net: &Network, nu: &[f64], s: Complex64, x: usize) -> Result<Vec<Complex64>> {
    let mut b = vec![Complex64::new(0.0, 0.0); net.vertex_count()];
    b[x] = Complex64::new(1.0, 0.0);
    if net.is_line() {
        line_resolvent(net, nu, s, &b)
    } else {
        dense_resolvent(net, nu, s, &b)
    }
}
