//! Finite-scale checks of the volume fluctuation laws of the trap measure:
//! local envelopes around the marked vertex and uniform infimum / supremum
//! over a region.

use rayon::prelude::*;
use serde::Serialize;

use crate::environment::{check_radii, sweep, TrapEnvironment};
use crate::error::{invalid, Error, Result};
use crate::network::ResistanceTable;
use crate::space::{EnvelopeParams, SpaceModel};
use crate::stats::quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    /// `v^{1/alpha}`, no correction.
    Power,
    /// `v^{1/alpha} |log v|^{(1+eps)/alpha}`, bound from above for all r.
    LocalUpperLog,
    /// `v^{1/alpha} (log|log v|)^{1-1/alpha}`, bound from below for all r.
    LocalLowerLoglog,
    /// `v^{1/alpha} |log v|^{1/alpha}`, reached from above along a sequence.
    LocalSeqUpper,
    /// `v^{1/alpha} (log|log v|)^{1-1/alpha}`, reached from below along a sequence.
    LocalSeqLower,
    /// `v^{1/alpha} |log v|^{1-1/alpha}` against the infimum over a region.
    UniformInfPhi,
    /// Supremum over a region against the total mass.
    UniformSup,
}

impl EnvelopeKind {
    /// Envelope value at volume `v`, or `None` where the correction factor is
    /// not meaningful (`|log v| <= 1`, or `|log v| <= e` for log-log forms).
    pub fn value(self, v: f64, alpha: f64, epsilon: f64) -> Option<f64> {
        let base = v.powf(1.0 / alpha);
        let l = v.ln().abs();
        match self {
            Self::Power => Some(base),
            Self::UniformSup => Some(1.0),
            Self::LocalUpperLog if l > 1.0 => Some(base * l.powf((1.0 + epsilon) / alpha)),
            Self::LocalSeqUpper if l > 1.0 => Some(base * l.powf(1.0 / alpha)),
            Self::UniformInfPhi if l > 1.0 => Some(base * l.powf(1.0 - 1.0 / alpha)),
            Self::LocalLowerLoglog | Self::LocalSeqLower if l > std::f64::consts::E => {
                Some(base * l.ln().powf(1.0 - 1.0 / alpha))
            }
            _ => None,
        }
    }

    /// Whether the ratio is bounded above (`true`) or below (`false`).
    pub fn is_upper(self) -> bool {
        matches!(self, Self::LocalUpperLog | Self::LocalSeqLower | Self::UniformSup | Self::Power)
    }

    /// Whether the law holds for all radii (`true`) or along a sequence.
    pub fn is_uniform_in_r(self) -> bool {
        !matches!(self, Self::LocalSeqUpper | Self::LocalSeqLower)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub envelope_kind: EnvelopeKind,
    pub radii: Vec<f64>,
    pub observed: Vec<f64>,
    pub envelope: Vec<f64>,
    pub ratio_series: Vec<f64>,
    pub band: (f64, f64),
    pub pass: bool,
}

impl EnvelopeReport {
    fn new(kind: EnvelopeKind, radii: Vec<f64>, observed: Vec<f64>, envelope: Vec<f64>) -> Self {
        let ratio_series: Vec<f64> = observed.iter().zip(&envelope).map(|(o, e)| o / e).collect();
        let band = ratio_series
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
        Self {
            envelope_kind: kind,
            radii,
            observed,
            envelope,
            ratio_series,
            band,
            pass: true,
        }
    }

    /// `max / min` of the ratio series.
    pub fn band_width(&self) -> f64 {
        self.band.1 / self.band.0
    }

    /// Rows `(r, observed, envelope, ratio)`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["r", "observed", "envelope", "ratio"])?;
        for i in 0..self.radii.len() {
            w.write_record([
                format!("{:e}", self.radii[i]),
                format!("{:e}", self.observed[i]),
                format!("{:e}", self.envelope[i]),
                format!("{:e}", self.ratio_series[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanConfig {
    pub epsilon: f64,
    /// Required fraction of environments satisfying each band.
    pub pass_fraction: f64,
    pub min_ensemble: usize,
    /// Span of the radius grid required, in decades.
    pub min_decades: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            pass_fraction: 0.95,
            min_ensemble: 100,
            min_decades: 2.0,
        }
    }
}

/// Ensemble summary for one envelope kind.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleBand {
    pub envelope_kind: EnvelopeKind,
    /// Radii where the envelope is defined.
    pub radii: Vec<f64>,
    /// Constant fitted at the largest valid radius: the ensemble maximum for
    /// upper bounds, minimum for lower bounds, median for sequence laws.
    pub constant: f64,
    /// Fraction of environments violating the band.
    pub violation_fraction: f64,
    pub pass: bool,
    pub reports: Vec<EnvelopeReport>,
}

/// Ball volumes `nu(B_R(x,r))` for each radius.
pub fn ball_volume_series(space: &SpaceModel, mass: &[f64], x: usize, radii: &[f64]) -> Result<Vec<f64>> {
    space.network().check_vertex(x)?;
    if mass.len() != space.vertex_count() {
        return Err(invalid("mass", "length does not match vertex count"));
    }
    let table = space.try_resistance_table()?;
    Ok(match table {
        ResistanceTable::Line { .. } => radii
            .iter()
            .map(|&r| {
                let (lo, hi) = table.line_ball(x, r).expect("line table");
                mass[lo..hi.max(lo)].iter().sum()
            })
            .collect(),
        ResistanceTable::Dense(_) => sweep(&table.sorted_from(x), mass, radii),
    })
}

fn check_scan_radii(space: &SpaceModel, radii: &[f64]) -> Result<()> {
    check_radii(radii)?;
    if radii[0] < space.lattice_scale() {
        return Err(invalid(
            "radii",
            format!("smallest radius {} below lattice scale {}", radii[0], space.lattice_scale()),
        ));
    }
    Ok(())
}

fn envelope_series(
    kind: EnvelopeKind,
    params: &EnvelopeParams,
    radii: &[f64],
    alpha: f64,
    epsilon: f64,
) -> (Vec<usize>, Vec<f64>) {
    let mut keep = Vec::new();
    let mut env = Vec::new();
    for (i, &r) in radii.iter().enumerate() {
        if let Some(e) = kind.value(params.v(r), alpha, epsilon) {
            keep.push(i);
            env.push(e);
        }
    }
    (keep, env)
}

/// Local volume laws around `center` for every environment of the ensemble.
pub fn local_fluctuation_scan(
    space: &SpaceModel,
    envs: &[TrapEnvironment],
    center: usize,
    radii: &[f64],
    config: &ScanConfig,
) -> Result<Vec<EnsembleBand>> {
    if envs.len() < config.min_ensemble {
        return Err(Error::InsufficientData(format!(
            "ensemble of {} below the minimum {}",
            envs.len(),
            config.min_ensemble
        )));
    }
    check_scan_radii(space, radii)?;
    let span = (radii[radii.len() - 1] / radii[0]).log10();
    if span < config.min_decades {
        return Err(invalid("radii", format!("span {span:.2} decades below {}", config.min_decades)));
    }
    let alpha = envs[0].alpha();
    for env in envs {
        env.check_space(space)?;
        if env.alpha() != alpha {
            return Err(invalid("envs", "ensemble mixes different alpha"));
        }
    }
    let volumes: Vec<Vec<f64>> = envs
        .par_iter()
        .map(|env| ball_volume_series(space, env.nu_mass(), center, radii))
        .collect::<Result<_>>()?;
    let params = space.envelope_params();
    let kinds = [
        EnvelopeKind::LocalUpperLog,
        EnvelopeKind::LocalLowerLoglog,
        EnvelopeKind::LocalSeqUpper,
        EnvelopeKind::LocalSeqLower,
    ];
    let mut out = Vec::new();
    for kind in kinds {
        let (keep, envelope) = envelope_series(kind, &params, radii, alpha, config.epsilon);
        if keep.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "envelope {kind:?} defined at fewer than 2 radii"
            )));
        }
        let kept_radii: Vec<f64> = keep.iter().map(|&i| radii[i]).collect();
        let mut reports: Vec<EnvelopeReport> = volumes
            .iter()
            .map(|v| {
                let obs = keep.iter().map(|&i| v[i]).collect();
                EnvelopeReport::new(kind, kept_radii.clone(), obs, envelope.clone())
            })
            .collect();
        let reference: Vec<f64> = reports.iter().map(|r| *r.ratio_series.last().unwrap()).collect();
        let constant = match (kind.is_uniform_in_r(), kind.is_upper()) {
            (true, true) => reference.iter().copied().fold(0.0, f64::max),
            (true, false) => reference.iter().copied().fold(f64::INFINITY, f64::min),
            (false, _) => quantile(&reference, 0.5),
        };
        let mut violations = 0usize;
        for rep in &mut reports {
            let ok = match (kind.is_uniform_in_r(), kind.is_upper()) {
                (true, true) => rep.ratio_series.iter().all(|&q| q <= constant),
                (true, false) => rep.ratio_series.iter().all(|&q| q >= constant),
                (false, true) => rep.ratio_series.iter().any(|&q| q <= constant),
                (false, false) => rep.ratio_series.iter().any(|&q| q >= constant),
            };
            rep.pass = ok;
            if !ok {
                violations += 1;
            }
        }
        let violation_fraction = violations as f64 / reports.len() as f64;
        out.push(EnsembleBand {
            envelope_kind: kind,
            radii: kept_radii,
            constant,
            violation_fraction,
            pass: 1.0 - violation_fraction >= config.pass_fraction,
            reports,
        });
    }
    Ok(out)
}

/// `V(x, r) / v(r)^{1/alpha}` for one vertex.
pub fn power_ratio_report(
    space: &SpaceModel,
    env: &TrapEnvironment,
    x: usize,
    radii: &[f64],
    alpha: f64,
) -> Result<EnvelopeReport> {
    env.check_space(space)?;
    check_scan_radii(space, radii)?;
    let params = space.envelope_params();
    let observed = ball_volume_series(space, env.nu_mass(), x, radii)?;
    let envelope = radii.iter().map(|&r| params.v(r).powf(1.0 / alpha)).collect();
    Ok(EnvelopeReport::new(EnvelopeKind::Power, radii.to_vec(), observed, envelope))
}

fn region_volumes(space: &SpaceModel, env: &TrapEnvironment, region: &[usize], radii: &[f64]) -> Result<Vec<Vec<f64>>> {
    if region.is_empty() {
        return Err(invalid("region", "empty region"));
    }
    env.check_space(space)?;
    check_scan_radii(space, radii)?;
    region
        .iter()
        .map(|&x| ball_volume_series(space, env.nu_mass(), x, radii))
        .collect()
}

/// `inf_{x in region} V(x,r) / phi(r)` with `phi(r) = v^{1/alpha}|log v|^{1-1/alpha}`.
/// `band_limit` bounds the accepted `max/min` of the ratio series.
pub fn uniform_infimum_scan(
    space: &SpaceModel,
    env: &TrapEnvironment,
    region: &[usize],
    radii: &[f64],
    band_limit: f64,
) -> Result<EnvelopeReport> {
    let vols = region_volumes(space, env, region, radii)?;
    let params = space.envelope_params();
    let (keep, envelope) = envelope_series(EnvelopeKind::UniformInfPhi, &params, radii, env.alpha(), 0.0);
    if keep.is_empty() {
        return Err(Error::InsufficientData("no radius with |log v| > 1".into()));
    }
    let observed = keep
        .iter()
        .map(|&i| vols.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min))
        .collect();
    let kept = keep.iter().map(|&i| radii[i]).collect();
    let mut rep = EnvelopeReport::new(EnvelopeKind::UniformInfPhi, kept, observed, envelope);
    rep.pass = rep.band_width() < band_limit;
    Ok(rep)
}

/// `sup_{x in region} V(x,r)` against the total mass. The report passes when
/// the series lies between the deepest atom in the region (largest vertex
/// mass when no atoms are recorded) and the total mass.
pub fn uniform_supremum_scan(
    space: &SpaceModel,
    env: &TrapEnvironment,
    region: &[usize],
    radii: &[f64],
) -> Result<(EnvelopeReport, f64)> {
    let vols = region_volumes(space, env, region, radii)?;
    let total = env.total_mass();
    let observed: Vec<f64> = (0..radii.len())
        .map(|i| vols.iter().map(|v| v[i]).fold(0.0, f64::max))
        .collect();
    let floor = match env.atoms() {
        Some(atoms) => {
            let mut in_region = vec![false; space.vertex_count()];
            region.iter().for_each(|&x| in_region[x] = true);
            atoms
                .iter()
                .filter(|a| in_region[a.vertex])
                .map(|a| a.depth)
                .fold(0.0, f64::max)
        }
        None => region.iter().map(|&x| env.nu_mass()[x]).fold(0.0, f64::max),
    };
    let mut rep = EnvelopeReport::new(EnvelopeKind::UniformSup, radii.to_vec(), observed, vec![total; radii.len()]);
    rep.pass = rep
        .observed
        .iter()
        .all(|&o| o >= floor && o <= total * (1.0 + 1e-12));
    Ok((rep, floor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{nu_ball_volume, sample_environment_increments, sample_environment_ppp};
    use crate::space::{build_gasket_space, build_path_space, dyadic_radii};
    use crate::stats::log_grid;

    #[test]
    fn envelope_validity() {
        assert!(EnvelopeKind::LocalUpperLog.value(0.5, 0.5, 0.5).is_none());
        assert!(EnvelopeKind::LocalUpperLog.value(0.1, 0.5, 0.5).is_some());
        assert!(EnvelopeKind::LocalLowerLoglog.value(0.1, 0.5, 0.5).is_none());
        let v = 1e-3f64;
        let l = v.ln().abs();
        let e = EnvelopeKind::UniformInfPhi.value(v, 0.5, 0.0).unwrap();
        assert!((e - v * v / l).abs() < 1e-20);
    }

    #[test]
    fn ball_volumes_match_pointwise() {
        let s = build_path_space(200, 1.0).unwrap();
        let env = sample_environment_increments(&s, 0.5, 4).unwrap();
        let radii = log_grid(0.006, 0.4, 9);
        let v = ball_volume_series(&s, env.nu_mass(), 100, &radii).unwrap();
        for (r, got) in radii.iter().zip(&v) {
            let want = nu_ball_volume(&s, &env, 100, *r).unwrap();
            assert!((got - want).abs() <= 1e-12 * want);
        }
        let g = build_gasket_space(3).unwrap();
        let env = sample_environment_increments(&g, 0.5, 4).unwrap();
        let v = ball_volume_series(&g, env.nu_mass(), 0, &radii).unwrap();
        for (r, got) in radii.iter().zip(&v) {
            let want = nu_ball_volume(&g, &env, 0, *r).unwrap();
            assert!((got - want).abs() <= 1e-12 * want);
        }
    }

    #[test]
    fn base_measure_power_ratio_is_one() {
        let s = build_path_space(1024, 1.0).unwrap();
        let env = TrapEnvironment::base_measure(&s);
        let radii = log_grid(0.01, 0.4, 8);
        let rep = power_ratio_report(&s, &env, 512, &radii, 1.0).unwrap();
        for (r, q) in radii.iter().zip(&rep.ratio_series) {
            assert!((q - 1.0).abs() <= 1.0 / 1024.0 / r, "r {r}: {q}");
        }
    }

    #[test]
    fn local_scan_rejects_bad_inputs() {
        let s = build_path_space(256, 1.0).unwrap();
        let envs: Vec<_> = (0..10).map(|i| sample_environment_increments(&s, 0.5, i).unwrap()).collect();
        let radii = log_grid(0.004, 0.45, 12);
        assert!(local_fluctuation_scan(&s, &envs, 128, &radii, &ScanConfig::default()).is_err());
        let cfg = ScanConfig {
            min_ensemble: 5,
            ..ScanConfig::default()
        };
        assert!(local_fluctuation_scan(&s, &envs, 128, &log_grid(0.001, 0.3, 10), &cfg).is_err());
        assert!(local_fluctuation_scan(&s, &envs, 128, &log_grid(0.05, 0.3, 10), &cfg).is_err());
        let bands = local_fluctuation_scan(&s, &envs, 128, &radii, &cfg).unwrap();
        assert_eq!(bands.len(), 4);
        for b in &bands {
            assert!(b.reports.iter().all(|r| r.ratio_series.iter().all(|&q| q > 0.0)));
        }
    }

    #[test]
    fn infimum_monotone_in_region() {
        let s = build_path_space(512, 1.0).unwrap();
        let env = sample_environment_increments(&s, 0.5, 8).unwrap();
        let radii = log_grid(0.004, 0.1, 8);
        let small: Vec<usize> = (200..260).collect();
        let large: Vec<usize> = (128..384).collect();
        let a = uniform_infimum_scan(&s, &env, &small, &radii, 1e9).unwrap();
        let b = uniform_infimum_scan(&s, &env, &large, &radii, 1e9).unwrap();
        for (x, y) in a.ratio_series.iter().zip(&b.ratio_series) {
            assert!(y <= x);
        }
        let single = uniform_infimum_scan(&s, &env, &[300], &radii, 1e9).unwrap();
        let direct = ball_volume_series(&s, env.nu_mass(), 300, &single.radii).unwrap();
        assert_eq!(single.observed, direct);
        assert!(uniform_infimum_scan(&s, &env, &[], &radii, 1e9).is_err());
    }

    #[test]
    fn supremum_between_atom_and_total() {
        let g = build_gasket_space(3).unwrap();
        let env = sample_environment_ppp(&g, 0.5, 1e-3, 2).unwrap();
        let region: Vec<usize> = (0..g.vertex_count()).collect();
        let radii = dyadic_radii(g.lattice_scale(), 1.0);
        let (rep, floor) = uniform_supremum_scan(&g, &env, &region, &radii).unwrap();
        assert!(rep.pass);
        assert!(floor > 0.0);
    }
}
