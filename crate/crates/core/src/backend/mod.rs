//! Exact quenched computations for the speed-measure chain
//! `(Lf)(x) = nu(x)^{-1} sum_y c_xy (f(y) - f(x))`: heat kernels, killed
//! Green operators, exit times, survival and hitting probabilities.

pub mod laplace;
pub mod table;

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::environment::TrapEnvironment;
use crate::error::{invalid, Error, Result};
use crate::network::Network;
use crate::space::SpaceModel;
use laplace::{resolvent_column, Contour, DEFAULT_NODES};
pub use table::{HeatKernelTable, InvariantReport};
use table::check_times;

/// Largest state space for dense eigendecomposition.
pub const SPECTRAL_LIMIT: usize = 5000;

/// Line networks above this size use resolvent inversion by default.
pub const LAPLACE_THRESHOLD: usize = 1000;

/// Eigenpairs of a symmetrized generator: `lambda_k` ascending and the
/// `nu`-orthonormal eigenfunctions as columns of `phi`.
#[derive(Debug, Clone)]
pub struct Spectral {
    eigenvalues: Vec<f64>,
    phi: DMatrix<f64>,
}

impl Spectral {
    /// Decomposes `N^{-1/2} K N^{-1/2}` for a symmetric positive semi-definite
    /// `k`. When `conservative` is set the null vector `sqrt(nu)` is imposed
    /// exactly.
    fn new(k: DMatrix<f64>, nu: &[f64], conservative: bool) -> Result<Self> {
        let n = nu.len();
        let inv_sqrt: Vec<f64> = nu.iter().map(|m| 1.0 / m.sqrt()).collect();
        let s = DMatrix::from_fn(n, n, |i, j| k[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
        let eig = SymmetricEigen::new(s);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let scale = eig.eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut eigenvalues = Vec::with_capacity(n);
        let mut u = DMatrix::zeros(n, n);
        for (col, &k) in order.iter().enumerate() {
            let mut lambda = eig.eigenvalues[k];
            if lambda < 0.0 {
                if lambda < -1e-10 * scale {
                    return Err(Error::Numerical(format!("negative eigenvalue {lambda}")));
                }
                lambda = 0.0;
            }
            eigenvalues.push(lambda);
            u.set_column(col, &eig.eigenvectors.column(k));
        }
        if conservative {
            let norm: f64 = nu.iter().sum::<f64>().sqrt();
            let ground = DVector::from_iterator(n, nu.iter().map(|m| m.sqrt() / norm));
            eigenvalues[0] = 0.0;
            u.set_column(0, &ground);
            // Remove the solver's leakage onto the ground state; with strongly
            // uneven masses it is what breaks conservation.
            for col in 1..n {
                let mut v = u.column(col).clone_owned();
                let overlap = v.dot(&ground);
                v.axpy(-overlap, &ground, 1.0);
                let len = v.norm();
                if len > 0.0 {
                    v /= len;
                }
                u.set_column(col, &v);
            }
        }
        let phi = DMatrix::from_fn(n, n, |i, j| u[(i, j)] * inv_sqrt[i]);
        Ok(Self { eigenvalues, phi })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `phi_k(x)`.
    pub fn eigenfunction(&self, k: usize) -> Vec<f64> {
        self.phi.column(k).iter().copied().collect()
    }

    /// `sum_k e^{-lambda_k t} phi_k(x) phi_k(y)`.
    pub fn entry(&self, x: usize, y: usize, t: f64) -> f64 {
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(k, l)| (-l * t).exp() * self.phi[(x, k)] * self.phi[(y, k)])
            .sum()
    }

    /// Diagonal as a sum of non-negative terms in fixed order, so that it is
    /// exactly non-increasing in `t`.
    pub fn diagonal(&self, x: usize, t: f64) -> f64 {
        let mut acc = 0.0;
        for (k, l) in self.eigenvalues.iter().enumerate() {
            let p = self.phi[(x, k)];
            acc += (-l * t).exp() * (p * p);
        }
        acc
    }

    pub fn row(&self, x: usize, t: f64) -> Vec<f64> {
        let n = self.phi.nrows();
        let w: Vec<f64> = self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, l)| (-l * t).exp() * self.phi[(x, k)])
            .collect();
        (0..n)
            .map(|y| w.iter().enumerate().map(|(k, c)| c * self.phi[(y, k)]).sum())
            .collect()
    }

    pub fn matrix(&self, t: f64) -> DMatrix<f64> {
        let n = self.phi.nrows();
        let mut a = self.phi.clone();
        for (k, l) in self.eigenvalues.iter().enumerate() {
            let w = (-0.5 * l * t).exp();
            a.column_mut(k).scale_mut(w);
        }
        let mut m = &a * a.transpose();
        for x in 0..n {
            for y in (x + 1)..n {
                let v = 0.5 * (m[(x, y)] + m[(y, x)]);
                m[(x, y)] = v;
                m[(y, x)] = v;
            }
            m[(x, x)] = self.diagonal(x, t);
        }
        m
    }
}

#[derive(Debug)]
pub struct Generator {
    space_id: String,
    env_id: String,
    env_seed: u64,
    net: Network,
    nu: Vec<f64>,
    spectral: OnceLock<Spectral>,
}

/// Generator of the chain on `space` with speed measure `env`.
pub fn build_generator(space: &SpaceModel, env: &TrapEnvironment) -> Result<Generator> {
    env.check_space(space)?;
    let mut g = Generator::new(space.network().clone(), env.nu_mass().to_vec())?;
    g.space_id = space.id();
    g.env_id = env.id();
    g.env_seed = env.seed();
    Ok(g)
}

impl Generator {
    /// Generator on an arbitrary network, for fixtures.
    pub fn new(net: Network, nu: Vec<f64>) -> Result<Self> {
        if nu.len() != net.vertex_count() {
            return Err(invalid("nu", "length does not match vertex count"));
        }
        if let Some(m) = nu.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(invalid("nu", format!("speed measure must be positive, got {m}")));
        }
        Ok(Self {
            space_id: String::from("custom"),
            env_id: String::from("custom"),
            env_seed: 0,
            net,
            nu,
            spectral: OnceLock::new(),
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn vertex_count(&self) -> usize {
        self.nu.len()
    }

    pub fn env_id(&self) -> &str {
        &self.env_id
    }

    /// Total jump rate `q(x) = sum_y c_xy / nu(x)`.
    pub fn rate(&self, x: usize) -> f64 {
        self.net.weighted_degree(x) / self.nu[x]
    }

    /// `(Lf)(x)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.net.apply_laplacian(f, &mut out);
        out.iter().zip(&self.nu).map(|(v, m)| -v / m).collect()
    }

    /// Largest `|nu(x) L(x,y) - nu(y) L(y,x)|` relative to the entry size.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for x in 0..self.vertex_count() {
            for &(y, c) in self.net.neighbors(x) {
                let a = self.nu[x] * (c / self.nu[x]);
                let b = self.nu[y] * (c / self.nu[y]);
                worst = worst.max((a - b).abs() / c);
            }
        }
        worst
    }

    /// Eigendecomposition, computed on first use.
    pub fn spectral(&self) -> Result<&Spectral> {
        if let Some(s) = self.spectral.get() {
            return Ok(s);
        }
        if self.vertex_count() > SPECTRAL_LIMIT {
            return Err(Error::Unsupported(format!(
                "{} states exceed the spectral limit {SPECTRAL_LIMIT}",
                self.vertex_count()
            )));
        }
        let s = Spectral::new(self.net.laplacian(), &self.nu, true)?;
        Ok(self.spectral.get_or_init(|| s))
    }

    pub fn heat_kernel(&self, times: &[f64]) -> Result<HeatKernelTable> {
        check_times(times)?;
        let spec = self.spectral()?;
        Ok(HeatKernelTable {
            space_id: self.space_id.clone(),
            env_id: self.env_id.clone(),
            env_seed: self.env_seed,
            times: times.to_vec(),
            values: times.iter().map(|&t| spec.matrix(t)).collect(),
        })
    }

    fn use_laplace(&self) -> bool {
        self.net.is_line() && self.vertex_count() > LAPLACE_THRESHOLD
    }

    /// `p_t(x, y)` for each `t` (outer) and `y` in `targets` (inner).
    pub fn kernel_entries(&self, x: usize, targets: &[usize], times: &[f64]) -> Result<Vec<Vec<f64>>> {
        if self.use_laplace() {
            self.kernel_entries_laplace(x, targets, times, DEFAULT_NODES)
        } else {
            self.kernel_entries_spectral(x, targets, times)
        }
    }

    pub fn kernel_entries_spectral(&self, x: usize, targets: &[usize], times: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_times(times)?;
        self.check_targets(x, targets)?;
        let spec = self.spectral()?;
        Ok(times
            .iter()
            .map(|&t| {
                targets
                    .iter()
                    .map(|&y| if y == x { spec.diagonal(x, t) } else { spec.entry(x, y, t) })
                    .collect()
            })
            .collect())
    }

    /// Inverts the resolvent `(sN + K)^{-1}(x, y)`, the Laplace transform of
    /// `t -> p_t(x, y)`.
    pub fn kernel_entries_laplace(
        &self,
        x: usize,
        targets: &[usize],
        times: &[f64],
        nodes: usize,
    ) -> Result<Vec<Vec<f64>>> {
        check_times(times)?;
        self.check_targets(x, targets)?;
        let contour = Contour::new(nodes);
        times
            .iter()
            .map(|&t| {
                let mut values = vec![Vec::with_capacity(nodes / 2); targets.len()];
                for s in contour.points(t) {
                    let g = resolvent_column(&self.net, &self.nu, s, x)?;
                    for (j, &y) in targets.iter().enumerate() {
                        values[j].push(g[y]);
                    }
                }
                Ok(values.iter().map(|v| contour.invert(t, v)).collect())
            })
            .collect()
    }

    fn check_targets(&self, x: usize, targets: &[usize]) -> Result<()> {
        self.net.check_vertex(x)?;
        for &y in targets {
            self.net.check_vertex(y)?;
        }
        Ok(())
    }

    /// `P_x(tau_y <= t)` for each time.
    pub fn hitting_cdf(&self, x: usize, y: usize, times: &[f64]) -> Result<Vec<f64>> {
        if self.use_laplace() {
            self.hitting_cdf_laplace(x, y, times, DEFAULT_NODES)
        } else {
            self.hitting_cdf_spectral(x, y, times)
        }
    }

    pub fn hitting_cdf_spectral(&self, x: usize, y: usize, times: &[f64]) -> Result<Vec<f64>> {
        check_times(times)?;
        self.check_targets(x, &[y])?;
        if x == y {
            return Ok(vec![1.0; times.len()]);
        }
        let domain: Vec<usize> = (0..self.vertex_count()).filter(|&z| z != y).collect();
        let killed = KilledSemigroup::new(self, &domain)?;
        Ok(times.iter().map(|&t| 1.0 - killed.survival(x, t)).collect())
    }

    /// The transform of `P_x(tau_y <= t)` is `G_s(x,y) / (s G_s(y,y))`.
    pub fn hitting_cdf_laplace(&self, x: usize, y: usize, times: &[f64], nodes: usize) -> Result<Vec<f64>> {
        check_times(times)?;
        self.check_targets(x, &[y])?;
        if x == y {
            return Ok(vec![1.0; times.len()]);
        }
        let contour = Contour::new(nodes);
        times
            .iter()
            .map(|&t| {
                let values = contour
                    .points(t)
                    .map(|s| {
                        let g = resolvent_column(&self.net, &self.nu, s, y)?;
                        Ok(g[x] / (g[y] * s))
                    })
                    .collect::<Result<Vec<Complex64>>>()?;
                Ok(contour.invert(t, &values).clamp(0.0, 1.0))
            })
            .collect()
    }

    /// `E_x tau_y` for every start `x`.
    pub fn mean_hitting_times(&self, y: usize) -> Result<Vec<f64>> {
        self.net.check_vertex(y)?;
        let domain: Vec<usize> = (0..self.vertex_count()).filter(|&z| z != y).collect();
        mean_exit_times(self, &domain)
    }
}

fn domain_mask(gen: &Generator, domain: &[usize]) -> Result<Vec<bool>> {
    if domain.is_empty() {
        return Err(invalid("domain", "empty domain"));
    }
    let mut inside = vec![false; gen.vertex_count()];
    for &x in domain {
        gen.net.check_vertex(x)?;
        inside[x] = true;
    }
    if inside.iter().all(|&b| b) {
        return Err(invalid("domain", "domain is the whole space, nothing kills the process"));
    }
    Ok(inside)
}

fn sorted_domain(domain: &[usize]) -> Vec<usize> {
    let mut d = domain.to_vec();
    d.sort_unstable();
    d.dedup();
    d
}

fn restricted_laplacian(net: &Network, domain: &[usize]) -> DMatrix<f64> {
    let m = domain.len();
    let mut index = vec![usize::MAX; net.vertex_count()];
    for (i, &x) in domain.iter().enumerate() {
        index[x] = i;
    }
    let mut k = DMatrix::zeros(m, m);
    for (i, &x) in domain.iter().enumerate() {
        k[(i, i)] = net.weighted_degree(x);
        for &(y, c) in net.neighbors(x) {
            if index[y] != usize::MAX {
                k[(i, index[y])] -= c;
            }
        }
    }
    k
}

/// Green operator of the chain killed on leaving `domain`.
#[derive(Debug, Clone)]
pub struct GreenOperator {
    pub domain: Vec<usize>,
    pub values: DMatrix<f64>,
    index: Vec<usize>,
}

impl GreenOperator {
    /// `g_B(x, y)`, zero when either point lies outside the domain.
    pub fn get(&self, x: usize, y: usize) -> f64 {
        match (self.index.get(x), self.index.get(y)) {
            (Some(&i), Some(&j)) if i != usize::MAX && j != usize::MAX => self.values[(i, j)],
            _ => 0.0,
        }
    }
}

/// `g_B = (K_BB)^{-1}`, so that `E_x T_B = sum_y g_B(x,y) nu(y)`.
pub fn green_killed(gen: &Generator, domain: &[usize]) -> Result<GreenOperator> {
    domain_mask(gen, domain)?;
    let domain = sorted_domain(domain);
    if domain.len() > SPECTRAL_LIMIT {
        return Err(Error::Unsupported(format!("dense Green operator on {} states", domain.len())));
    }
    let k = restricted_laplacian(&gen.net, &domain);
    let values = k
        .cholesky()
        .ok_or_else(|| Error::Numerical("killed Laplacian not positive definite".into()))?
        .inverse();
    let mut index = vec![usize::MAX; gen.vertex_count()];
    for (i, &x) in domain.iter().enumerate() {
        index[x] = i;
    }
    Ok(GreenOperator { domain, values, index })
}

/// `E_x T_B` for every vertex (zero outside `domain`), by one grounded solve.
pub fn mean_exit_times(gen: &Generator, domain: &[usize]) -> Result<Vec<f64>> {
    let inside = domain_mask(gen, domain)?;
    let grounded: Vec<bool> = inside.iter().map(|b| !b).collect();
    let rhs: Vec<f64> = gen
        .nu
        .iter()
        .zip(&inside)
        .map(|(m, &b)| if b { *m } else { 0.0 })
        .collect();
    gen.net.grounded_solve(&grounded, &rhs)
}

/// Spectral form of the semigroup killed on leaving a domain.
#[derive(Debug, Clone)]
pub struct KilledSemigroup {
    domain: Vec<usize>,
    index: Vec<usize>,
    spectral: Spectral,
    /// `<phi_k, 1>_nu` for each eigenfunction.
    mass: Vec<f64>,
}

impl KilledSemigroup {
    pub fn new(gen: &Generator, domain: &[usize]) -> Result<Self> {
        domain_mask(gen, domain)?;
        let domain = sorted_domain(domain);
        if domain.len() > SPECTRAL_LIMIT {
            return Err(Error::Unsupported(format!("killed spectrum on {} states", domain.len())));
        }
        let nu: Vec<f64> = domain.iter().map(|&x| gen.nu[x]).collect();
        let spectral = Spectral::new(restricted_laplacian(&gen.net, &domain), &nu, false)?;
        let mass = (0..domain.len())
            .map(|k| (0..domain.len()).map(|i| spectral.phi[(i, k)] * nu[i]).sum())
            .collect();
        let mut index = vec![usize::MAX; gen.vertex_count()];
        for (i, &x) in domain.iter().enumerate() {
            index[x] = i;
        }
        Ok(Self {
            domain,
            index,
            spectral,
            mass,
        })
    }

    pub fn domain(&self) -> &[usize] {
        &self.domain
    }

    fn local(&self, x: usize) -> Result<usize> {
        match self.index.get(x) {
            Some(&i) if i != usize::MAX => Ok(i),
            _ => Err(invalid("x", format!("vertex {x} lies outside the domain"))),
        }
    }

    /// `P_x(T_B > t)`.
    pub fn survival(&self, x: usize, t: f64) -> f64 {
        let i = self.local(x).expect("start inside the domain");
        let s: f64 = self
            .spectral
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, l)| (-l * t).exp() * self.spectral.phi[(i, k)] * self.mass[k])
            .sum();
        s.clamp(0.0, 1.0)
    }

    /// `int_0^inf P_x(T_B > t) dt` from the spectral form.
    pub fn mean_exit_time(&self, x: usize) -> Result<f64> {
        let i = self.local(x)?;
        Ok(self
            .spectral
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, l)| self.spectral.phi[(i, k)] * self.mass[k] / l)
            .sum())
    }
}

/// `P_x(T_B > t)` for each time.
pub fn survival_probability(gen: &Generator, domain: &[usize], x: usize, times: &[f64]) -> Result<Vec<f64>> {
    check_times(times)?;
    let killed = KilledSemigroup::new(gen, domain)?;
    killed.local(x)?;
    Ok(times.iter().map(|&t| killed.survival(x, t)).collect())
}

/// `E(f,f) = 1/2 sum_{x,y} c_xy (f(x) - f(y))^2`.
pub fn dirichlet_energy(gen: &Generator, f: &[f64]) -> Result<f64> {
    if f.len() != gen.vertex_count() {
        return Err(invalid("f", "length does not match vertex count"));
    }
    Ok(gen.net.dirichlet_energy(f))
}

/// Two exact lower bounds on `P_x(T_B > t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitTailBound {
    /// `(E_x T_B - t) / max_y E_y T_B`, from the Markov property.
    pub mean_form: f64,
    /// `(kappa r V(x, r/4) - t) / (R_max V(x, r))` with `kappa = min_{y in
    /// B(x,r/4)} g_B(x,y) / r` and `R_max = max_y g_B(y,y)`.
    pub ball_form: f64,
    pub kappa: f64,
    pub r_max: f64,
}

/// Exit-tail lower bounds for `B = B_R(x, r)`.
pub fn exit_tail_lower_bound(space: &SpaceModel, gen: &Generator, x: usize, r: f64, t: f64) -> Result<ExitTailBound> {
    let ball = space.resistance_ball(x, r)?;
    let inner = space.resistance_ball(x, r / 4.0)?;
    let green = green_killed(gen, &ball)?;
    let means = mean_exit_times(gen, &ball)?;
    let max_mean = ball.iter().map(|&y| means[y]).fold(0.0, f64::max);
    let v_r: f64 = ball.iter().map(|&y| gen.nu[y]).sum();
    let v_inner: f64 = inner.iter().map(|&y| gen.nu[y]).sum();
    let kappa = inner.iter().map(|&y| green.get(x, y)).fold(f64::INFINITY, f64::min) / r;
    let r_max = ball.iter().map(|&y| green.get(y, y)).fold(0.0, f64::max);
    Ok(ExitTailBound {
        mean_form: (means[x] - t) / max_mean,
        ball_form: (kappa * r * v_inner - t) / (r_max * v_r),
        kappa,
        r_max,
    })
}

/// Measured ball-exit resistance: `R(x, B_R(x,r)^c) / r` over the given
/// centres and radii, reported as `(min, max)`.
pub fn ball_exit_resistance_ratio(space: &SpaceModel, centres: &[usize], radii: &[f64]) -> Result<(f64, f64)> {
    let n = space.vertex_count();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &x in centres {
        for &r in radii {
            let ball = space.resistance_ball(x, r)?;
            if ball.len() == n {
                continue;
            }
            let mut inside = vec![false; n];
            ball.iter().for_each(|&y| inside[y] = true);
            let outside: Vec<usize> = (0..n).filter(|&y| !inside[y]).collect();
            let q = space.network().resistance_to_set(x, &outside)? / r;
            lo = lo.min(q);
            hi = hi.max(q);
        }
    }
    if !lo.is_finite() {
        return Err(Error::InsufficientData("every ball covers the space".into()));
    }
    Ok((lo, hi))
}

/// One evaluation of `p_{2rV(x,r)}(x,x) <= 2 / V(x,r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagonalBoundPoint {
    pub r: f64,
    pub volume: f64,
    pub t: f64,
    pub p: f64,
    pub bound: f64,
}

impl DiagonalBoundPoint {
    pub fn holds(&self) -> bool {
        self.p <= self.bound * (1.0 + 1e-10)
    }
}

/// Diagonal upper bound at time `2 r V(x, r)`, with `V` the speed measure of
/// the resistance ball.
pub fn diagonal_upper_bound(space: &SpaceModel, gen: &Generator, x: usize, r: f64) -> Result<DiagonalBoundPoint> {
    let ball = space.resistance_ball(x, r)?;
    let volume: f64 = ball.iter().map(|&y| gen.nu[y]).sum();
    let t = 2.0 * r * volume;
    let p = gen.spectral()?.diagonal(x, t);
    Ok(DiagonalBoundPoint {
        r,
        volume,
        t,
        p,
        bound: 2.0 / volume,
    })
}

/// `(E(p_t(x,.), p_t(x,.)), p_t(x,x) / t)`; the first never exceeds the second.
pub fn energy_kernel_bound(gen: &Generator, x: usize, t: f64) -> Result<(f64, f64)> {
    gen.net.check_vertex(x)?;
    let spec = gen.spectral()?;
    let row = spec.row(x, t);
    Ok((gen.net.dirichlet_energy(&row), spec.diagonal(x, t) / t))
}

/// `(|p_t(x,y) - p_t(x,x)|^2, p_t(x,x) R(x,y) / t)`; the first never exceeds
/// the second.
pub fn kernel_continuity_bound(space: &SpaceModel, gen: &Generator, x: usize, y: usize, t: f64) -> Result<(f64, f64)> {
    gen.check_targets(x, &[y])?;
    let spec = gen.spectral()?;
    let pxx = spec.diagonal(x, t);
    let d = if x == y { 0.0 } else { spec.entry(x, y, t) - spec.entry(x, x, t) };
    Ok((d * d, pxx * space.effective_resistance(x, y)? / t))
}

#[cfg(test)]
mod tests;
