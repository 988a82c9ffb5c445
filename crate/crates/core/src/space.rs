//! Discrete resistance spaces: the unit interval lattice and Sierpinski gasket
//! pre-fractals, each carrying conductances, cell masses for the base measure,
//! coordinates and a marked vertex.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::{Network, ResistanceTable};

/// Largest vertex count for which the all-pairs resistance table is built.
pub const RESISTANCE_TABLE_LIMIT: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Path,
    Gasket,
}

/// Serializable description of a space: `{kind, level_or_cells, length}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub kind: SpaceKind,
    pub level_or_cells: usize,
    #[serde(default = "default_length")]
    pub length: f64,
}

fn default_length() -> f64 {
    1.0
}

impl SpaceSpec {
    pub fn path(n_cells: usize, length: f64) -> Self {
        Self {
            kind: SpaceKind::Path,
            level_or_cells: n_cells,
            length,
        }
    }

    pub fn gasket(level: usize) -> Self {
        Self {
            kind: SpaceKind::Gasket,
            level_or_cells: level,
            length: 1.0,
        }
    }

    pub fn build(&self) -> Result<SpaceModel> {
        match self.kind {
            SpaceKind::Path => build_path_space(self.level_or_cells, self.length),
            SpaceKind::Gasket => build_gasket_space(self.level_or_cells),
        }
    }

    /// Stable identifier used to tie environments and caches to a space.
    pub fn id(&self) -> String {
        match self.kind {
            SpaceKind::Path => format!("path-{}-{}", self.level_or_cells, self.length),
            SpaceKind::Gasket => format!("gasket-{}", self.level_or_cells),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    Geodesic,
    Euclidean,
}

/// The comparison metric `d ~ R^beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    pub beta: f64,
    pub distance: DistanceKind,
}

/// Volume profile constants for `c_l v(r) <= mu(B_R(x,r)) <= c_u v(r)` with
/// `v(r) = v_const * r^delta_f` in the resistance metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub delta_f: f64,
    pub v_const: f64,
    pub c_l: f64,
    pub c_u: f64,
    pub c_d: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl EnvelopeParams {
    pub fn new(delta_f: f64, v_const: f64, c_l: f64, c_u: f64, c_d: f64, beta: f64) -> Result<Self> {
        for (name, v) in [
            ("delta_f", delta_f),
            ("v_const", v_const),
            ("c_l", c_l),
            ("c_u", c_u),
            ("beta", beta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if c_l > c_u {
            return Err(invalid("c_l", format!("c_l = {c_l} exceeds c_u = {c_u}")));
        }
        if !(c_d >= 1.0) {
            return Err(invalid("c_d", format!("doubling constant {c_d} < 1")));
        }
        Ok(Self {
            delta_f,
            v_const,
            c_l,
            c_u,
            c_d,
            gamma: c_d.ln() / 2f64.ln(),
            beta,
        })
    }

    /// Pure power law `v(r) = r^delta_f`, doubling constant `2^delta_f`.
    pub fn power_law(delta_f: f64, beta: f64) -> Self {
        Self {
            delta_f,
            v_const: 1.0,
            c_l: 1.0,
            c_u: 1.0,
            c_d: 2f64.powf(delta_f),
            gamma: delta_f,
            beta,
        }
    }

    pub fn v(&self, r: f64) -> f64 {
        self.v_const * r.powf(self.delta_f)
    }
}

/// Measured two-sided volume constants over a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UvdFit {
    pub c_l: f64,
    pub c_u: f64,
    /// Largest `max_x mu(B(x,r)) / min_x mu(B(x,r))` over the scanned radii.
    pub max_spread: f64,
}

#[derive(Debug)]
pub struct SpaceModel {
    spec: SpaceSpec,
    network: Network,
    coordinates: Vec<[f64; 2]>,
    cell_mass: Vec<f64>,
    marked: usize,
    metric: MetricParams,
    d_f: f64,
    hop_length: f64,
    resistance: OnceLock<ResistanceTable>,
}

impl SpaceModel {
    pub fn spec(&self) -> &SpaceSpec {
        &self.spec
    }

    pub fn id(&self) -> String {
        self.spec.id()
    }

    pub fn kind(&self) -> SpaceKind {
        self.spec.kind
    }

    pub fn level_or_cells(&self) -> usize {
        self.spec.level_or_cells
    }

    pub fn vertex_count(&self) -> usize {
        self.network.vertex_count()
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn coordinates(&self) -> &[[f64; 2]] {
        &self.coordinates
    }

    pub fn cell_mass(&self) -> &[f64] {
        &self.cell_mass
    }

    pub fn total_mass(&self) -> f64 {
        self.cell_mass.iter().sum()
    }

    pub fn marked_vertex(&self) -> usize {
        self.marked
    }

    pub fn metric(&self) -> MetricParams {
        self.metric
    }

    /// Dimension of the base measure with respect to the metric `d`.
    pub fn d_f(&self) -> f64 {
        self.d_f
    }

    /// Volume exponent with respect to the resistance metric, `beta * d_f`.
    pub fn volume_exponent(&self) -> f64 {
        self.metric.beta * self.d_f
    }

    /// Volume profile `v(r)`: `2r` on the path (interior balls are intervals of
    /// length `2r`), `r^{beta d_f}` on the gasket.
    pub fn envelope_params(&self) -> EnvelopeParams {
        let mut p = EnvelopeParams::power_law(self.volume_exponent(), self.metric.beta);
        if self.spec.kind == SpaceKind::Path {
            p.v_const = 2.0;
        }
        p
    }

    /// Largest single-edge resistance: the resolution of resistance balls.
    pub fn lattice_scale(&self) -> f64 {
        self.network
            .edges()
            .iter()
            .map(|e| 1.0 / e.conductance)
            .fold(0.0, f64::max)
    }

    /// All-pairs resistance table, built on first use.
    ///
    /// Panics for spaces above [`RESISTANCE_TABLE_LIMIT`] vertices that are not
    /// lines; use [`SpaceModel::try_resistance_table`] to get an error instead.
    pub fn resistance_table(&self) -> &ResistanceTable {
        self.try_resistance_table()
            .expect("resistance table unavailable for this space")
    }

    pub fn try_resistance_table(&self) -> Result<&ResistanceTable> {
        if let Some(t) = self.resistance.get() {
            return Ok(t);
        }
        if !self.network.is_line() && self.vertex_count() > RESISTANCE_TABLE_LIMIT {
            return Err(Error::Unsupported(format!(
                "all-pairs resistance for {} vertices exceeds the dense limit {}",
                self.vertex_count(),
                RESISTANCE_TABLE_LIMIT
            )));
        }
        let table = ResistanceTable::build(&self.network)?;
        Ok(self.resistance.get_or_init(|| table))
    }

    /// `R(x,y)` by an exact grounded-Laplacian solve.
    pub fn effective_resistance(&self, x: usize, y: usize) -> Result<f64> {
        self.network.effective_resistance(x, y)
    }

    /// `B_R(x,r) = {y : R(x,y) < r}`, sorted by vertex index.
    pub fn resistance_ball(&self, x: usize, r: f64) -> Result<Vec<usize>> {
        self.network.check_vertex(x)?;
        if !(r > 0.0) {
            return Err(invalid("r", format!("radius must be positive, got {r}")));
        }
        let table = self.try_resistance_table()?;
        Ok((0..self.vertex_count())
            .filter(|&y| table.get(x, y) < r)
            .collect())
    }

    /// `mu(B_R(x,r))`.
    pub fn mu_ball_mass(&self, x: usize, r: f64) -> Result<f64> {
        Ok(self
            .resistance_ball(x, r)?
            .into_iter()
            .map(|y| self.cell_mass[y])
            .sum())
    }

    /// Comparison metric `d(x,y)`: coordinate distance on the path, scaled hop
    /// count on the gasket.
    pub fn metric_distance(&self, x: usize, y: usize) -> Result<f64> {
        self.network.check_vertex(x)?;
        self.network.check_vertex(y)?;
        match self.spec.kind {
            SpaceKind::Path => Ok((self.coordinates[x][0] - self.coordinates[y][0]).abs()),
            SpaceKind::Gasket => {
                let hops = self.network.hop_distances(x)[y].ok_or(Error::Disconnected)?;
                Ok(hops as f64 * self.hop_length)
            }
        }
    }

    /// Scans `mu(B_R(x,r)) / v(r)` over `vertices` and `radii`.
    pub fn fit_uvd(&self, vertices: &[usize], radii: &[f64]) -> Result<UvdFit> {
        if vertices.is_empty() || radii.is_empty() {
            return Err(Error::InsufficientData("empty UVD scan".into()));
        }
        let params = self.envelope_params();
        let table = self.try_resistance_table()?;
        let mut c_l = f64::INFINITY;
        let mut c_u = 0.0f64;
        let mut max_spread = 1.0f64;
        let sorted: Vec<Vec<(f64, usize)>> = vertices.iter().map(|&x| table.sorted_from(x)).collect();
        for &r in radii {
            let v = params.v(r);
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for row in &sorted {
                let mass: f64 = row
                    .iter()
                    .take_while(|(d, _)| *d < r)
                    .map(|&(_, y)| self.cell_mass[y])
                    .sum();
                lo = lo.min(mass);
                hi = hi.max(mass);
            }
            c_l = c_l.min(lo / v);
            c_u = c_u.max(hi / v);
            max_spread = max_spread.max(hi / lo);
        }
        Ok(UvdFit { c_l, c_u, max_spread })
    }
}

/// Interval `[0, length]` cut into `n_cells` cells: `n_cells + 1` vertices,
/// edge resistance `length / n_cells`, trapezoidal cell masses.
pub fn build_path_space(n_cells: usize, length: f64) -> Result<SpaceModel> {
    if n_cells < 2 {
        return Err(invalid("n_cells", format!("need at least 2 cells, got {n_cells}")));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(invalid("length", format!("must be positive, got {length}")));
    }
    let h = length / n_cells as f64;
    let conductance = 1.0 / h;
    let network = Network::new(n_cells + 1, (0..n_cells).map(|i| (i, i + 1, conductance)))?;
    let coordinates = (0..=n_cells).map(|i| [i as f64 * h, 0.0]).collect();
    let mut cell_mass = vec![h; n_cells + 1];
    cell_mass[0] = 0.5 * h;
    cell_mass[n_cells] = 0.5 * h;
    Ok(SpaceModel {
        spec: SpaceSpec::path(n_cells, length),
        network,
        coordinates,
        cell_mass,
        marked: n_cells / 2,
        metric: MetricParams {
            beta: 1.0,
            distance: DistanceKind::Euclidean,
        },
        d_f: 1.0,
        hop_length: h,
        resistance: OnceLock::new(),
    })
}

/// Resistance exponent of the gasket, `beta = ln 2 / ln(5/3)`.
pub fn gasket_beta() -> f64 {
    2f64.ln() / (5.0f64 / 3.0).ln()
}

/// Hausdorff dimension of the gasket, `ln 3 / ln 2`.
pub fn gasket_dimension() -> f64 {
    3f64.ln() / 2f64.ln()
}

/// Level-`m` Sierpinski gasket graph with edge resistance `(3/5)^m` and each
/// of the `3^m` smallest triangles carrying mass `3^-m`, split equally over
/// its corners. The marked vertex is the corner at the origin.
pub fn build_gasket_space(level: usize) -> Result<SpaceModel> {
    if !(1..=8).contains(&level) {
        return Err(invalid("level", format!("must be in 1..=8, got {level}")));
    }
    let side: i64 = 1 << level;
    // Triangles in lattice coordinates (a, b) with a, b >= 0, a + b <= side.
    let mut triangles: Vec<(i64, i64, i64)> = vec![(0, 0, side)];
    for _ in 0..level {
        let mut next = Vec::with_capacity(triangles.len() * 3);
        for (a, b, s) in triangles {
            let h = s / 2;
            next.push((a, b, h));
            next.push((a + h, b, h));
            next.push((a, b + h, h));
        }
        triangles = next;
    }
    let mut index: HashMap<(i64, i64), usize> = HashMap::new();
    let mut lattice: Vec<(i64, i64)> = Vec::new();
    let mut vertex = |p: (i64, i64), lattice: &mut Vec<(i64, i64)>| -> usize {
        *index.entry(p).or_insert_with(|| {
            lattice.push(p);
            lattice.len() - 1
        })
    };
    let conductance = (5.0f64 / 3.0).powi(level as i32);
    let small_mass = 3f64.powi(-(level as i32));
    let mut edges = Vec::with_capacity(triangles.len() * 3);
    let mut masses: Vec<f64> = Vec::new();
    for &(a, b, _) in &triangles {
        let corners = [
            vertex((a, b), &mut lattice),
            vertex((a + 1, b), &mut lattice),
            vertex((a, b + 1), &mut lattice),
        ];
        if masses.len() < lattice.len() {
            masses.resize(lattice.len(), 0.0);
        }
        for &c in &corners {
            masses[c] += small_mass / 3.0;
        }
        edges.push((corners[0], corners[1], conductance));
        edges.push((corners[1], corners[2], conductance));
        edges.push((corners[0], corners[2], conductance));
    }
    let n = lattice.len();
    let network = Network::new(n, edges)?;
    let scale = 1.0 / side as f64;
    let coordinates = lattice
        .iter()
        .map(|&(a, b)| {
            let (a, b) = (a as f64, b as f64);
            [(a + 0.5 * b) * scale, b * 3f64.sqrt() * 0.5 * scale]
        })
        .collect();
    Ok(SpaceModel {
        spec: SpaceSpec::gasket(level),
        network,
        coordinates,
        cell_mass: masses,
        marked: 0,
        metric: MetricParams {
            beta: gasket_beta(),
            distance: DistanceKind::Geodesic,
        },
        d_f: gasket_dimension(),
        hop_length: scale,
        resistance: OnceLock::new(),
    })
}

/// Dyadic radii `r_max * 2^-k` that lie strictly above `r_min`, ascending.
pub fn dyadic_radii(r_min: f64, r_max: f64) -> Vec<f64> {
    let mut radii = Vec::new();
    let mut r = r_max;
    while r > r_min {
        radii.push(r);
        r *= 0.5;
    }
    radii.reverse();
    radii
}
