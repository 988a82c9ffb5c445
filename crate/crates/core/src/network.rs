//! Weighted graphs (electrical networks) and their resistance metric.
//!
//! A [`Network`] is a finite connected graph whose edges carry conductances.
//! Its Dirichlet form is `E(f,f) = sum over edges c_xy (f(x) - f(y))^2` and the
//! effective resistance `R(x,y) = 1 / min{E(f,f) : f(x) = 1, f(y) = 0}` is
//! obtained from grounded Laplacian solves.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Vertex count above which grounded solves switch from dense Cholesky to
/// conjugate gradients.
const DENSE_SOLVE_LIMIT: usize = 2500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub conductance: f64,
}

#[derive(Debug, Clone)]
pub struct Network {
    n: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
    line: bool,
}

impl Network {
    /// Builds a network from `(a, b, conductance)` triples. Parallel edges are
    /// merged by adding conductances.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "a network needs at least one vertex"));
        }
        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (a, b, c) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidVertex {
                    vertex: a.max(b),
                    count: n,
                });
            }
            if a == b {
                return Err(invalid("edges", format!("self-loop at vertex {a}")));
            }
            if !(c > 0.0 && c.is_finite()) {
                return Err(invalid(
                    "conductance",
                    format!("edge ({a},{b}) has conductance {c}"),
                ));
            }
            add_or_merge(&mut adjacency[a], b, c);
            add_or_merge(&mut adjacency[b], a, c);
        }
        let mut edges = Vec::new();
        for (a, nbrs) in adjacency.iter_mut().enumerate() {
            nbrs.sort_by_key(|&(b, _)| b);
            for &(b, c) in nbrs.iter() {
                if a < b {
                    edges.push(Edge { a, b, conductance: c });
                }
            }
        }
        let line = n >= 2
            && edges.len() == n - 1
            && edges.iter().enumerate().all(|(i, e)| e.a == i && e.b == i + 1);
        let net = Self {
            n,
            edges,
            adjacency,
            line,
        };
        if !net.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(net)
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, x: usize) -> &[(usize, f64)] {
        &self.adjacency[x]
    }

    /// Total conductance at `x`.
    pub fn weighted_degree(&self, x: usize) -> f64 {
        self.adjacency[x].iter().map(|&(_, c)| c).sum()
    }

    pub fn conductance(&self, x: usize, y: usize) -> Option<f64> {
        self.adjacency[x]
            .binary_search_by_key(&y, |&(b, _)| b)
            .ok()
            .map(|i| self.adjacency[x][i].1)
    }

    /// True when the edges are exactly `(i, i+1)` for consecutive vertices.
    pub fn is_line(&self) -> bool {
        self.line
    }

    pub fn check_vertex(&self, x: usize) -> Result<()> {
        if x < self.n {
            Ok(())
        } else {
            Err(Error::InvalidVertex {
                vertex: x,
                count: self.n,
            })
        }
    }

    fn is_connected(&self) -> bool {
        self.hop_distances(0).iter().all(|d| d.is_some())
    }

    /// Breadth-first hop counts from `source`.
    pub fn hop_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(x) = queue.pop_front() {
            let d = dist[x].unwrap_or(0);
            for &(y, _) in &self.adjacency[x] {
                if dist[y].is_none() {
                    dist[y] = Some(d + 1);
                    queue.push_back(y);
                }
            }
        }
        dist
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            k[(e.a, e.a)] += e.conductance;
            k[(e.b, e.b)] += e.conductance;
            k[(e.a, e.b)] -= e.conductance;
            k[(e.b, e.a)] -= e.conductance;
        }
        k
    }

    /// `E(f,f) = 1/2 sum_{x,y} c_xy (f(x) - f(y))^2`.
    pub fn dirichlet_energy(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.n, "function length must match vertex count");
        self.edges
            .iter()
            .map(|e| {
                let d = f[e.a] - f[e.b];
                e.conductance * d * d
            })
            .sum()
    }

    /// Applies the Laplacian `K f` where `(K f)(x) = sum_y c_xy (f(x) - f(y))`.
    pub fn apply_laplacian(&self, f: &[f64], out: &mut [f64]) {
        for x in 0..self.n {
            out[x] = self.adjacency[x]
                .iter()
                .map(|&(y, c)| c * (f[x] - f[y]))
                .sum();
        }
    }

    /// Solves `K_U u = rhs` on the free set `U` (vertices with `grounded[x] == false`),
    /// with `u = 0` on grounded vertices. Returns the full-length vector.
    pub fn grounded_solve(&self, grounded: &[bool], rhs: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(grounded.len(), self.n);
        assert_eq!(rhs.len(), self.n);
        if grounded.iter().all(|&g| !g) {
            return Err(invalid("grounded", "at least one vertex must be grounded"));
        }
        let free: Vec<usize> = (0..self.n).filter(|&x| !grounded[x]).collect();
        let mut out = vec![0.0; self.n];
        if free.is_empty() {
            return Ok(out);
        }
        if self.line {
            return self.grounded_solve_line(grounded, rhs);
        }
        let m = free.len();
        if m <= DENSE_SOLVE_LIMIT {
            let mut index = vec![usize::MAX; self.n];
            for (i, &x) in free.iter().enumerate() {
                index[x] = i;
            }
            let mut k = DMatrix::zeros(m, m);
            for (i, &x) in free.iter().enumerate() {
                for &(y, c) in &self.adjacency[x] {
                    k[(i, i)] += c;
                    if !grounded[y] {
                        k[(i, index[y])] -= c;
                    }
                }
            }
            let b = DVector::from_iterator(m, free.iter().map(|&x| rhs[x]));
            let chol = k
                .cholesky()
                .ok_or_else(|| Error::Numerical("grounded Laplacian not positive definite".into()))?;
            let u = chol.solve(&b);
            for (i, &x) in free.iter().enumerate() {
                out[x] = u[i];
            }
            Ok(out)
        } else {
            self.grounded_solve_cg(grounded, rhs)
        }
    }

    fn grounded_solve_line(&self, grounded: &[bool], rhs: &[f64]) -> Result<Vec<f64>> {
        // Grounded vertices split the line into independent tridiagonal blocks.
        let n = self.n;
        let mut out = vec![0.0; n];
        let mut start = 0;
        while start < n {
            if grounded[start] {
                start += 1;
                continue;
            }
            let mut end = start;
            while end + 1 < n && !grounded[end + 1] {
                end += 1;
            }
            let len = end - start + 1;
            let mut diag = vec![0.0; len];
            let mut off = vec![0.0; len.saturating_sub(1)];
            for (i, x) in (start..=end).enumerate() {
                diag[i] = self.weighted_degree(x);
                if x < end {
                    off[i] = -self.adjacency_line(x);
                }
            }
            let b: Vec<f64> = (start..=end).map(|x| rhs[x]).collect();
            let sol = solve_tridiagonal(&diag, &off, &b)?;
            out[start..=end].copy_from_slice(&sol);
            start = end + 1;
        }
        Ok(out)
    }

    /// Conductance of the line edge `(x, x+1)`.
    fn adjacency_line(&self, x: usize) -> f64 {
        self.edges[x].conductance
    }

    fn grounded_solve_cg(&self, grounded: &[bool], rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let diag: Vec<f64> = (0..n).map(|x| self.weighted_degree(x)).collect();
        let apply = |v: &[f64], out: &mut [f64]| {
            for x in 0..n {
                out[x] = if grounded[x] {
                    0.0
                } else {
                    diag[x] * v[x]
                        - self.adjacency[x]
                            .iter()
                            .filter(|&&(y, _)| !grounded[y])
                            .map(|&(y, c)| c * v[y])
                            .sum::<f64>()
                };
            }
        };
        let b: Vec<f64> = (0..n).map(|x| if grounded[x] { 0.0 } else { rhs[x] }).collect();
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut r = b.clone();
        let mut z: Vec<f64> = (0..n).map(|i| if grounded[i] { 0.0 } else { r[i] / diag[i] }).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        for _ in 0..(20 * n).max(1000) {
            apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            let step = rz / pap;
            for i in 0..n {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rnorm <= 1e-14 * bnorm {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = if grounded[i] { 0.0 } else { r[i] / diag[i] };
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::Numerical("conjugate gradients did not converge".into()))
    }

    /// Effective resistance between `x` and `y` from a grounded solve at `y`.
    pub fn effective_resistance(&self, x: usize, y: usize) -> Result<f64> {
        self.check_vertex(x)?;
        self.check_vertex(y)?;
        if x == y {
            return Ok(0.0);
        }
        let mut grounded = vec![false; self.n];
        grounded[y] = true;
        let mut rhs = vec![0.0; self.n];
        rhs[x] = 1.0;
        Ok(self.grounded_solve(&grounded, &rhs)?[x])
    }

    /// Effective resistance from `x` to a set `target` (all of `target` shorted
    /// together). Zero when `x` lies in `target`.
    pub fn resistance_to_set(&self, x: usize, target: &[usize]) -> Result<f64> {
        self.check_vertex(x)?;
        if target.is_empty() {
            return Err(invalid("target", "empty target set"));
        }
        let mut grounded = vec![false; self.n];
        for &t in target {
            self.check_vertex(t)?;
            grounded[t] = true;
        }
        if grounded[x] {
            return Ok(0.0);
        }
        let mut rhs = vec![0.0; self.n];
        rhs[x] = 1.0;
        Ok(self.grounded_solve(&grounded, &rhs)?[x])
    }
}

fn add_or_merge(list: &mut Vec<(usize, f64)>, y: usize, c: f64) {
    if let Some(entry) = list.iter_mut().find(|(b, _)| *b == y) {
        entry.1 += c;
    } else {
        list.push((y, c));
    }
}

/// Thomas algorithm for a symmetric tridiagonal system with diagonal `diag`
/// and off-diagonal `off` (length `diag.len() - 1`).
pub(crate) fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(Error::Numerical("singular tridiagonal system".into()));
    }
    if n > 1 {
        c[0] = off[0] / denom;
    }
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - off[i - 1] * c[i - 1];
        if denom == 0.0 {
            return Err(Error::Numerical("singular tridiagonal system".into()));
        }
        if i + 1 < n {
            c[i] = off[i] / denom;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// All-pairs effective resistance.
#[derive(Debug, Clone)]
pub enum ResistanceTable {
    /// Series law along a line: `R(x,y) = |prefix[x] - prefix[y]|`.
    Line { prefix: Vec<f64> },
    /// Dense matrix from the Laplacian pseudo-inverse.
    Dense(DMatrix<f64>),
}

impl ResistanceTable {
    pub fn build(net: &Network) -> Result<Self> {
        if net.is_line() {
            let mut prefix = Vec::with_capacity(net.n);
            let mut acc = 0.0;
            prefix.push(0.0);
            for e in &net.edges {
                acc += 1.0 / e.conductance;
                prefix.push(acc);
            }
            return Ok(Self::Line { prefix });
        }
        let n = net.n;
        let mut k = net.laplacian();
        let shift = 1.0 / n as f64;
        k.add_scalar_mut(shift);
        let chol = k
            .cholesky()
            .ok_or_else(|| Error::Numerical("shifted Laplacian not positive definite".into()))?;
        let gamma = chol.inverse();
        let mut r = DMatrix::zeros(n, n);
        for x in 0..n {
            for y in (x + 1)..n {
                let v = (gamma[(x, x)] + gamma[(y, y)] - 2.0 * gamma[(x, y)]).max(0.0);
                r[(x, y)] = v;
                r[(y, x)] = v;
            }
        }
        Ok(Self::Dense(r))
    }

    pub fn vertex_count(&self) -> usize {
        match self {
            Self::Line { prefix } => prefix.len(),
            Self::Dense(m) => m.nrows(),
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        match self {
            Self::Line { prefix } => (prefix[x] - prefix[y]).abs(),
            Self::Dense(m) => m[(x, y)],
        }
    }

    pub fn row(&self, x: usize) -> Vec<f64> {
        (0..self.vertex_count()).map(|y| self.get(x, y)).collect()
    }

    /// Vertices ordered by resistance distance from `x` (ties by index).
    pub fn sorted_from(&self, x: usize) -> Vec<(f64, usize)> {
        let mut v: Vec<(f64, usize)> = (0..self.vertex_count())
            .map(|y| (self.get(x, y), y))
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        v
    }

    /// For a line, the index range `lo..hi` of the ball `{y : R(x,y) < r}`.
    pub fn line_ball(&self, x: usize, r: f64) -> Option<(usize, usize)> {
        match self {
            Self::Line { prefix } => {
                let px = prefix[x];
                let lo = prefix[..=x].partition_point(|&p| px - p >= r);
                let hi = x + prefix[x..].partition_point(|&p| p - px < r);
                Some((lo, hi))
            }
            Self::Dense(_) => None,
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Self::Line { prefix } => prefix.last().copied().unwrap_or(0.0),
            Self::Dense(m) => m.iter().copied().fold(0.0, f64::max),
        }
    }
}
