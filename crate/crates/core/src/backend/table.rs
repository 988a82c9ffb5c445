//! Quenched heat-kernel tables, their invariant checks and persistence.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{invalid, Error, Result};

const MAGIC: &[u8; 8] = b"FINHKT\0\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct HeatKernelTable {
    pub space_id: String,
    pub env_id: String,
    pub env_seed: u64,
    pub times: Vec<f64>,
    /// One symmetric `n x n` matrix per time.
    pub values: Vec<DMatrix<f64>>,
}

/// Worst defects of the table invariants. Symmetry and Chapman–Kolmogorov
/// defects are relative to `sqrt(p(x,x) p(y,y))`; conservation is absolute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantReport {
    pub symmetry: f64,
    pub conservation: f64,
    pub chapman_kolmogorov: Option<f64>,
    pub diagonal_monotone: bool,
    pub cauchy_schwarz: bool,
    /// Most negative `p(x,y) / sqrt(p(x,x) p(y,y))` (0 when all positive).
    pub positivity: f64,
}

impl InvariantReport {
    pub fn holds(&self) -> bool {
        self.symmetry < 1e-10
            && self.conservation < 1e-8
            && self.chapman_kolmogorov.is_none_or(|d| d < 1e-8)
            && self.diagonal_monotone
            && self.cauchy_schwarz
            && self.positivity > -1e-12
    }
}

/// FNV-1a over the bit patterns of `times`.
pub fn times_hash(times: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for t in times {
        for b in t.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

impl HeatKernelTable {
    pub fn vertex_count(&self) -> usize {
        self.values.first().map_or(0, |m| m.nrows())
    }

    pub fn get(&self, time_index: usize, x: usize, y: usize) -> f64 {
        self.values[time_index][(x, y)]
    }

    pub fn diagonal_series(&self, x: usize) -> Vec<f64> {
        self.values.iter().map(|m| m[(x, x)]).collect()
    }

    /// Cache key `(space, env seed, times hash)`.
    pub fn cache_key(&self) -> (String, u64, u64) {
        (self.space_id.clone(), self.env_seed, times_hash(&self.times))
    }

    pub fn check_invariants(&self, nu: &[f64]) -> InvariantReport {
        let n = self.vertex_count();
        let mut symmetry = 0.0f64;
        let mut conservation = 0.0f64;
        let mut cauchy_schwarz = true;
        let mut positivity = 0.0f64;
        for m in &self.values {
            for x in 0..n {
                let mut mass = 0.0;
                for y in 0..n {
                    let scale = (m[(x, x)] * m[(y, y)]).sqrt();
                    symmetry = symmetry.max((m[(x, y)] - m[(y, x)]).abs() / scale);
                    positivity = positivity.min(m[(x, y)] / scale);
                    if m[(x, y)] * m[(x, y)] > m[(x, x)] * m[(y, y)] * (1.0 + 1e-12) {
                        cauchy_schwarz = false;
                    }
                    mass += m[(x, y)] * nu[y];
                }
                conservation = conservation.max((mass - 1.0).abs());
            }
        }
        let mut diagonal_monotone = true;
        for w in self.values.windows(2) {
            for x in 0..n {
                if w[1][(x, x)] > w[0][(x, x)] {
                    diagonal_monotone = false;
                }
            }
        }
        // Chapman–Kolmogorov on every (s, t, s + t) triple present in the grid.
        let mut ck: Option<f64> = None;
        let nu_diag = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(nu));
        for i in 0..self.times.len() {
            for j in i..self.times.len() {
                let target = self.times[i] + self.times[j];
                if let Some(k) = self
                    .times
                    .iter()
                    .position(|&t| (t - target).abs() <= 1e-12 * target)
                {
                    let prod = &self.values[i] * &nu_diag * &self.values[j];
                    let m = &self.values[k];
                    let mut worst = 0.0f64;
                    for x in 0..n {
                        for y in 0..n {
                            let scale = (m[(x, x)] * m[(y, y)]).sqrt();
                            worst = worst.max((prod[(x, y)] - m[(x, y)]).abs() / scale);
                        }
                    }
                    ck = Some(ck.map_or(worst, |c: f64| c.max(worst)));
                }
            }
        }
        InvariantReport {
            symmetry,
            conservation,
            chapman_kolmogorov: ck,
            diagonal_monotone,
            cauchy_schwarz,
            positivity,
        }
    }

    /// Rows `(t, x, y, p)`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "x", "y", "p"])?;
        let n = self.vertex_count();
        for (t, m) in self.times.iter().zip(&self.values) {
            for x in 0..n {
                for y in 0..n {
                    w.write_record([format!("{t:e}"), x.to_string(), y.to_string(), format!("{:e}", m[(x, y)])])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Versioned little-endian binary cache.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        for s in [&self.space_id, &self.env_id] {
            w.write_u32::<LittleEndian>(s.len() as u32)?;
            w.write_all(s.as_bytes())?;
        }
        w.write_u64::<LittleEndian>(self.env_seed)?;
        w.write_u64::<LittleEndian>(times_hash(&self.times))?;
        w.write_u32::<LittleEndian>(self.vertex_count() as u32)?;
        w.write_u32::<LittleEndian>(self.times.len() as u32)?;
        for &t in &self.times {
            w.write_f64::<LittleEndian>(t)?;
        }
        for m in &self.values {
            for v in m.iter() {
                w.write_f64::<LittleEndian>(*v)?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let mut strings = Vec::new();
        for _ in 0..2 {
            let len = r.read_u32::<LittleEndian>()? as usize;
            if len > 1 << 16 {
                return Err(Error::Format("identifier too long".into()));
            }
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            strings.push(String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))?);
        }
        let env_seed = r.read_u64::<LittleEndian>()?;
        let hash = r.read_u64::<LittleEndian>()?;
        let n = r.read_u32::<LittleEndian>()? as usize;
        let nt = r.read_u32::<LittleEndian>()? as usize;
        let times = (0..nt)
            .map(|_| r.read_f64::<LittleEndian>())
            .collect::<std::io::Result<Vec<f64>>>()?;
        if times_hash(&times) != hash {
            return Err(Error::Format("time grid hash mismatch".into()));
        }
        let mut values = Vec::with_capacity(nt);
        for _ in 0..nt {
            let data = (0..n * n)
                .map(|_| r.read_f64::<LittleEndian>())
                .collect::<std::io::Result<Vec<f64>>>()?;
            values.push(DMatrix::from_vec(n, n, data));
        }
        let env_id = strings.pop().unwrap();
        let space_id = strings.pop().unwrap();
        Ok(Self {
            space_id,
            env_id,
            env_seed,
            times,
            values,
        })
    }
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(invalid("times", "empty time grid"));
    }
    if let Some(t) = times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(invalid("times", format!("times must be positive, got {t}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> HeatKernelTable {
        HeatKernelTable {
            space_id: "s".into(),
            env_id: "e".into(),
            env_seed: 3,
            times: vec![0.5, 1.0],
            values: vec![DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.3, 0.7]), DMatrix::identity(2, 2) * 0.5],
        }
    }

    #[test]
    fn binary_round_trip() {
        let t = table();
        let mut buf = Vec::new();
        t.write_binary(&mut buf).unwrap();
        assert_eq!(HeatKernelTable::read_binary(buf.as_slice()).unwrap(), t);
        buf[0] = b'X';
        assert!(HeatKernelTable::read_binary(buf.as_slice()).is_err());
    }

    #[test]
    fn corrupted_hash_rejected() {
        let t = table();
        let mut buf = Vec::new();
        t.write_binary(&mut buf).unwrap();
        // Flip a bit inside the first stored time.
        let offset = 8 + 4 + 4 + 1 + 4 + 1 + 8 + 8 + 4 + 4;
        buf[offset] ^= 1;
        assert!(matches!(HeatKernelTable::read_binary(buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn csv_rows() {
        let mut buf = Vec::new();
        table().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 8);
        assert!(text.starts_with("t,x,y,p"));
    }
}
