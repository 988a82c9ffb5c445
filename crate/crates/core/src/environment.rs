//! Random trap measures on a space: independent subordinator increments per
//! cell, or a truncated Poisson point process of atoms with a deterministic
//! small-trap compensation.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::stream_rng;
use crate::space::SpaceModel;
use crate::stable::{check_alpha, StableLaw};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Increments,
    Ppp,
    /// Masses supplied by the caller (fixtures, loaded files).
    Given,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub depth: f64,
    pub vertex: usize,
}

/// JSON sidecar written next to the `(vertex, nu_mass)` CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentHeader {
    pub space_id: String,
    pub vertex_count: usize,
    pub alpha: f64,
    pub seed: u64,
    pub representation: Representation,
    pub v_min: Option<f64>,
    #[serde(default)]
    pub atoms: Option<Vec<Atom>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrapEnvironment {
    space_id: String,
    alpha: f64,
    seed: u64,
    representation: Representation,
    v_min: Option<f64>,
    nu_mass: Vec<f64>,
    atoms: Option<Vec<Atom>>,
}

impl TrapEnvironment {
    /// Environment with explicit masses, e.g. `nu = mu`.
    pub fn given(space: &SpaceModel, nu_mass: Vec<f64>) -> Result<Self> {
        if nu_mass.len() != space.vertex_count() {
            return Err(invalid(
                "nu_mass",
                format!("{} masses for {} vertices", nu_mass.len(), space.vertex_count()),
            ));
        }
        if let Some(m) = nu_mass.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(invalid("nu_mass", format!("masses must be positive and finite, got {m}")));
        }
        Ok(Self {
            space_id: space.id(),
            alpha: 1.0,
            seed: 0,
            representation: Representation::Given,
            v_min: None,
            nu_mass,
            atoms: None,
        })
    }

    /// The base measure itself as a trap environment.
    pub fn base_measure(space: &SpaceModel) -> Self {
        Self::given(space, space.cell_mass().to_vec()).expect("cell masses are positive")
    }

    pub fn space_id(&self) -> &str {
        &self.space_id
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn v_min(&self) -> Option<f64> {
        self.v_min
    }

    pub fn nu_mass(&self) -> &[f64] {
        &self.nu_mass
    }

    pub fn atoms(&self) -> Option<&[Atom]> {
        self.atoms.as_deref()
    }

    pub fn vertex_count(&self) -> usize {
        self.nu_mass.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.nu_mass.iter().sum()
    }

    /// Stable identifier `space/representation/alpha/seed`.
    pub fn id(&self) -> String {
        format!(
            "{}/{:?}/a{}/s{}",
            self.space_id, self.representation, self.alpha, self.seed
        )
        .to_lowercase()
    }

    /// Copy with every mass multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(invalid("factor", format!("must be positive, got {factor}")));
        }
        let mut out = self.clone();
        out.nu_mass.iter_mut().for_each(|m| *m *= factor);
        if let Some(atoms) = out.atoms.as_mut() {
            atoms.iter_mut().for_each(|a| a.depth *= factor);
        }
        Ok(out)
    }

    pub fn check_space(&self, space: &SpaceModel) -> Result<()> {
        if self.space_id != space.id() || self.nu_mass.len() != space.vertex_count() {
            return Err(Error::SpaceMismatch {
                env: self.id(),
                space: space.id(),
            });
        }
        Ok(())
    }

    pub fn header(&self) -> EnvironmentHeader {
        EnvironmentHeader {
            space_id: self.space_id.clone(),
            vertex_count: self.nu_mass.len(),
            alpha: self.alpha,
            seed: self.seed,
            representation: self.representation,
            v_min: self.v_min,
            atoms: self.atoms.clone(),
        }
    }

    /// Writes the `(vertex, nu_mass)` table as CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["vertex", "nu_mass"])?;
        for (x, m) in self.nu_mass.iter().enumerate() {
            w.write_record([x.to_string(), format!("{m:e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Saves `<stem>.csv` and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join(format!("{stem}.csv")))?)?;
        let header = serde_json::to_string_pretty(&self.header())?;
        std::fs::write(dir.join(format!("{stem}.json")), header)?;
        Ok(())
    }

    /// Rebuilds an environment from a CSV body and its header.
    pub fn from_csv<R: Read>(header: EnvironmentHeader, reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut nu_mass = vec![f64::NAN; header.vertex_count];
        let mut seen = 0usize;
        for row in r.deserialize::<(usize, f64)>() {
            let (x, m) = row?;
            if x >= nu_mass.len() {
                return Err(Error::Format(format!("vertex {x} beyond vertex count {}", nu_mass.len())));
            }
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::Format(format!("non-positive mass {m} at vertex {x}")));
            }
            nu_mass[x] = m;
            seen += 1;
        }
        if seen != header.vertex_count || nu_mass.iter().any(|m| m.is_nan()) {
            return Err(Error::Format("environment CSV does not cover every vertex".into()));
        }
        Ok(Self {
            space_id: header.space_id,
            alpha: header.alpha,
            seed: header.seed,
            representation: header.representation,
            v_min: header.v_min,
            nu_mass,
            atoms: header.atoms,
        })
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let header: EnvironmentHeader =
            serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        Self::from_csv(header, std::fs::File::open(dir.join(format!("{stem}.csv")))?)
    }
}

/// Each cell receives an independent increment of duration `mu(cell)`.
pub fn sample_environment_increments(space: &SpaceModel, alpha: f64, seed: u64) -> Result<TrapEnvironment> {
    let mut rng = stream_rng(seed, 0);
    sample_increments_with(space, alpha, seed, &mut rng)
}

/// As [`sample_environment_increments`] with a caller-supplied stream; `seed` is
/// only recorded.
pub fn sample_increments_with<R: Rng + ?Sized>(
    space: &SpaceModel,
    alpha: f64,
    seed: u64,
    rng: &mut R,
) -> Result<TrapEnvironment> {
    let law = StableLaw::new(alpha)?;
    let nu_mass = space
        .cell_mass()
        .iter()
        .map(|&m| law.sample_increment(m, rng))
        .collect();
    Ok(TrapEnvironment {
        space_id: space.id(),
        alpha,
        seed,
        representation: Representation::Increments,
        v_min: None,
        nu_mass,
        atoms: None,
    })
}

/// Expected number of atoms deeper than `v_min` per unit base mass.
pub fn ppp_atom_rate(alpha: f64, v_min: f64) -> f64 {
    v_min.powf(-alpha)
}

/// Mean mass of atoms shallower than `v_min` per unit base mass.
pub fn ppp_compensation(alpha: f64, v_min: f64) -> f64 {
    alpha * v_min.powf(1.0 - alpha) / (1.0 - alpha)
}

/// Atoms deeper than `v_min` from a Poisson process of intensity
/// `alpha v^{-1-alpha} dv mu(dx)`, plus the mean of the truncated part.
pub fn sample_environment_ppp(space: &SpaceModel, alpha: f64, v_min: f64, seed: u64) -> Result<TrapEnvironment> {
    let mut rng = stream_rng(seed, 0);
    sample_ppp_with(space, alpha, v_min, seed, &mut rng)
}

pub fn sample_ppp_with<R: Rng + ?Sized>(
    space: &SpaceModel,
    alpha: f64,
    v_min: f64,
    seed: u64,
    rng: &mut R,
) -> Result<TrapEnvironment> {
    check_alpha(alpha)?;
    if !(v_min > 0.0 && v_min.is_finite()) {
        return Err(invalid("v_min", format!("must be positive, got {v_min}")));
    }
    let rate = ppp_atom_rate(alpha, v_min);
    let floor = ppp_compensation(alpha, v_min);
    let mut nu_mass = Vec::with_capacity(space.vertex_count());
    let mut atoms = Vec::new();
    for (x, &m) in space.cell_mass().iter().enumerate() {
        let poisson = Poisson::new(m * rate).map_err(|e| Error::Numerical(e.to_string()))?;
        let count = poisson.sample(rng) as u64;
        let mut mass = m * floor;
        for _ in 0..count {
            let u: f64 = rng.random();
            let depth = v_min * (1.0 - u).powf(-1.0 / alpha);
            mass += depth;
            atoms.push(Atom { depth, vertex: x });
        }
        nu_mass.push(mass);
    }
    Ok(TrapEnvironment {
        space_id: space.id(),
        alpha,
        seed,
        representation: Representation::Ppp,
        v_min: Some(v_min),
        nu_mass,
        atoms: Some(atoms),
    })
}

/// `V(x,r) = nu(B_R(x,r))`.
pub fn nu_ball_volume(space: &SpaceModel, env: &TrapEnvironment, x: usize, r: f64) -> Result<f64> {
    env.check_space(space)?;
    Ok(space
        .resistance_ball(x, r)?
        .into_iter()
        .map(|y| env.nu_mass[y])
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeCurve {
    pub center: usize,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

/// `V(x, r)` for every radius in one sweep over vertices sorted by resistance.
pub fn volume_curve(space: &SpaceModel, env: &TrapEnvironment, x: usize, radii: &[f64]) -> Result<VolumeCurve> {
    env.check_space(space)?;
    space.network().check_vertex(x)?;
    check_radii(radii)?;
    let sorted = space.try_resistance_table()?.sorted_from(x);
    Ok(VolumeCurve {
        center: x,
        radii: radii.to_vec(),
        values: sweep(&sorted, &env.nu_mass, radii),
    })
}

pub(crate) fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(invalid("radii", "empty radius grid"));
    }
    let mut prev = 0.0;
    for &r in radii {
        if !(r > prev) {
            return Err(invalid("radii", "radii must be positive and strictly increasing"));
        }
        prev = r;
    }
    Ok(())
}

/// Cumulative masses of `(distance, vertex)` pairs below each radius.
pub(crate) fn sweep(sorted: &[(f64, usize)], mass: &[f64], radii: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(radii.len());
    let mut acc = 0.0;
    let mut i = 0;
    for &r in radii {
        while i < sorted.len() && sorted[i].0 < r {
            acc += mass[sorted[i].1];
            i += 1;
        }
        out.push(acc);
    }
    out
}
