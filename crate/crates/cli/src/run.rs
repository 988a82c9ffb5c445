use std::path::PathBuf;
use std::time::Instant;

use fin_core::backend::build_generator;
use fin_core::environment::{sample_environment_increments, TrapEnvironment};
use fin_core::rng::{derive_seed, stream_rng};
use fin_core::scaling::{annealed_mean, exit_tail_fit, exponent_set, fit_power_law, fit_power_law_with, FitResult, TailCurve};
use fin_core::space::{dyadic_radii, SpaceModel};
use fin_core::stable::{small_ball_rate_fit, StableLaw};
use fin_core::stats::log_grid;
use fin_core::volume::{local_fluctuation_scan, uniform_infimum_scan, ScanConfig};
use rayon::prelude::*;

use crate::bundle::{csv_bytes, num, Bundle, Manifest, TaskRecord};
use crate::config::{Experiment, ExperimentConfig};

pub const DEFAULT_P_RANGE: (f64, f64) = (1e-12, 0.3);
const SUBORDINATOR_CHUNK: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Core(#[from] fin_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

pub type RunResult<T> = Result<T, RunError>;

pub struct Runner {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub workers: usize,
    pub cache_dir: PathBuf,
}

impl Runner {
    pub fn new(config: ExperimentConfig) -> Self {
        let out = config.output_dir.clone().unwrap_or_else(|| PathBuf::from("fin-out"));
        let cache_dir = config.cache_dir.clone().unwrap_or_else(|| out.join("cache"));
        let workers = config.workers.unwrap_or(1);
        Self {
            config,
            out,
            workers,
            cache_dir,
        }
    }

    /// Runs the experiment and writes the manifest, also when a stage fails
    /// after some tasks completed; the error is recorded and returned.
    pub fn run(&self) -> RunResult<Manifest> {
        let start = Instant::now();
        let mut bundle = Bundle::create(&self.out)?;
        let mut records = Vec::new();
        let res = match self.config.experiment {
            Experiment::Exponents => self.exponents(&mut bundle),
            Experiment::Subordinator => self.subordinator(&mut bundle, &mut records),
            Experiment::Volume => self.volume(&mut bundle, &mut records),
            Experiment::Heatkernel => self.heatkernel(&mut bundle, &mut records),
            Experiment::Exit => self.exit(&mut bundle, &mut records),
            Experiment::Report => Err(RunError::Other("report runs through the report module".into())),
        };
        let error = res.as_ref().err().map(|e| e.to_string());
        let manifest = bundle.finish(&self.config, records, error, start.elapsed().as_secs_f64())?;
        res.map(|_| manifest)
    }

    fn pool(&self) -> RunResult<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| RunError::Other(format!("cannot start worker pool: {e}")))
    }

    /// Runs `f(index, seed)` for every task on the worker pool and returns
    /// `(index, value)` for the tasks that succeeded, in index order. Seeds are
    /// derived from the master seed by task index, so the merged output does
    /// not depend on the worker count.
    fn tasks<T, F>(&self, count: usize, records: &mut Vec<TaskRecord>, f: F) -> RunResult<Vec<(usize, T)>>
    where
        T: Send,
        F: Fn(usize, u64) -> RunResult<T> + Sync,
    {
        let master = self.config.seed();
        let results: Vec<(TaskRecord, Option<T>)> = self.pool()?.install(|| {
            (0..count)
                .into_par_iter()
                .map(|i| {
                    let seed = derive_seed(master, i as u64);
                    let start = Instant::now();
                    let res = f(i, seed);
                    let wall_seconds = start.elapsed().as_secs_f64();
                    match res {
                        Ok(v) => (
                            TaskRecord {
                                index: i,
                                seed,
                                status: "ok",
                                error: None,
                                wall_seconds,
                            },
                            Some(v),
                        ),
                        Err(e) => (
                            TaskRecord {
                                index: i,
                                seed,
                                status: "failed",
                                error: Some(e.to_string()),
                                wall_seconds,
                            },
                            None,
                        ),
                    }
                })
                .collect()
        });
        let mut values = Vec::with_capacity(count);
        for (rec, v) in results {
            if let Some(v) = v {
                values.push((rec.index, v));
            }
            records.push(rec);
        }
        Ok(values)
    }

    fn space(&self) -> RunResult<SpaceModel> {
        let cfg = self.config.space.as_ref().ok_or_else(|| RunError::Other("no space configured".into()))?;
        Ok(cfg.spec().build()?)
    }

    /// Environment for `(space, alpha, seed)`, read from the cache when present.
    fn environment(&self, space: &SpaceModel, seed: u64) -> RunResult<TrapEnvironment> {
        let alpha = self.config.alpha();
        let stem = cache_stem(space, alpha, seed);
        if self.cache_dir.join(format!("{stem}.json")).exists() {
            let env = TrapEnvironment::load(&self.cache_dir, &stem)?;
            env.check_space(space)?;
            if env.alpha() != alpha || env.seed() != seed {
                return Err(RunError::Other(format!("cached environment {stem} does not match its key")));
            }
            return Ok(env);
        }
        let env = sample_environment_increments(space, alpha, seed)?;
        env.save(&self.cache_dir, &stem)?;
        Ok(env)
    }

    /// Records cache files that live inside the bundle in the manifest.
    fn track_cache(&self, bundle: &mut Bundle, space: &SpaceModel, seeds: &[u64]) -> RunResult<()> {
        let Ok(rel) = self.cache_dir.strip_prefix(&self.out) else {
            return Ok(());
        };
        for &seed in seeds {
            let stem = cache_stem(space, self.config.alpha(), seed);
            for ext in ["csv", "json"] {
                let name = rel.join(format!("{stem}.{ext}"));
                if bundle.dir().join(&name).exists() {
                    bundle.track(&name.to_string_lossy())?;
                }
            }
        }
        Ok(())
    }

    fn exponents(&self, bundle: &mut Bundle) -> RunResult<()> {
        let space = self.space()?;
        let e = exponent_set(self.config.alpha(), space.metric().beta, space.d_f())?;
        let header = ["alpha", "beta", "d_f", "d_w", "d_s", "gamma", "q", "alpha_c"];
        let row = vec![e.alpha, e.beta, e.d_f, e.d_w, e.d_s, e.gamma, e.q, e.alpha_c]
            .into_iter()
            .map(num)
            .collect();
        bundle.write("exponents.csv", &csv_bytes(&header, &[row]))?;
        Ok(())
    }

    fn subordinator(&self, bundle: &mut Bundle, records: &mut Vec<TaskRecord>) -> RunResult<()> {
        let law = StableLaw::new(self.config.alpha())?;
        let n = self.config.samples.unwrap_or(100_000);
        let chunks = n.div_ceil(SUBORDINATOR_CHUNK);
        let out = self.tasks(chunks, records, |i, seed| {
            let len = SUBORDINATOR_CHUNK.min(n - i * SUBORDINATOR_CHUNK);
            let mut rng = stream_rng(seed, 0);
            Ok((0..len).map(|_| law.sample_standard(&mut rng)).collect::<Vec<f64>>())
        })?;
        let mut samples: Vec<f64> = out.into_iter().flat_map(|(_, v)| v).collect();
        samples.sort_by(f64::total_cmp);
        let m = samples.len().max(1) as f64;
        let grid = log_grid(0.05, 50.0, 40);
        let mut rows = Vec::new();
        let (mut xs, mut ps) = (Vec::new(), Vec::new());
        for &x in &grid {
            let count = samples.partition_point(|&s| s <= x);
            let emp = count as f64 / m;
            rows.push(vec![num(x), num(emp), num(law.standard_cdf(x))]);
            if count >= 10 && emp < 0.5 {
                xs.push(x);
                ps.push(emp);
            }
        }
        bundle.write("subordinator.csv", &csv_bytes(&["x", "empirical_cdf", "exact_cdf"], &rows))?;
        let mut fit_rows = Vec::new();
        if let Ok(fit) = small_ball_rate_fit(law.alpha(), &xs, &ps) {
            fit_rows.push(vec![
                num(fit.plain_slope),
                num(fit.corrected_slope),
                num(law.c2()),
                num(fit.corrected_r_squared),
                xs.len().to_string(),
            ]);
        }
        bundle.write(
            "small_ball.csv",
            &csv_bytes(&["plain_slope", "corrected_slope", "c2", "r2", "n_points"], &fit_rows),
        )?;
        Ok(())
    }

    fn environment_seeds(&self) -> Vec<u64> {
        let n = self.config.ensemble_size.unwrap_or(1);
        (0..n).map(|i| derive_seed(self.config.seed(), i as u64)).collect()
    }

    fn volume(&self, bundle: &mut Bundle, records: &mut Vec<TaskRecord>) -> RunResult<()> {
        let space = self.space()?;
        let seeds = self.environment_seeds();
        let out = self.tasks(seeds.len(), records, |_, seed| self.environment(&space, seed))?;
        self.track_cache(bundle, &space, &seeds)?;
        let diameter = space.resistance_table().diameter();
        let radii = match &self.config.radius_grid {
            Some(g) => g.values(),
            None => dyadic_radii(2.0 * space.lattice_scale(), diameter / 2.0),
        };
        let envs: Vec<TrapEnvironment> = out.iter().map(|(_, e)| e.clone()).collect();
        let index: Vec<usize> = out.iter().map(|(i, _)| *i).collect();
        let bands = local_fluctuation_scan(&space, &envs, space.marked_vertex(), &radii, &ScanConfig::default())?;
        let mut ratio_rows = Vec::new();
        let mut band_rows = Vec::new();
        for band in &bands {
            let kind = serde_json::to_value(band.envelope_kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            band_rows.push(vec![
                kind.clone(),
                num(band.constant),
                num(band.violation_fraction),
                band.pass.to_string(),
            ]);
            for (rep, &i) in band.reports.iter().zip(&index) {
                for k in 0..rep.radii.len() {
                    ratio_rows.push(vec![
                        i.to_string(),
                        kind.clone(),
                        num(rep.radii[k]),
                        num(rep.observed[k]),
                        num(rep.envelope[k]),
                        num(rep.ratio_series[k]),
                    ]);
                }
            }
        }
        let all: Vec<usize> = (0..space.vertex_count()).collect();
        let mut inf_rows = Vec::new();
        for (env, &i) in envs.iter().zip(&index) {
            if let Ok(rep) = uniform_infimum_scan(&space, env, &all, &radii, f64::INFINITY) {
                for k in 0..rep.radii.len() {
                    inf_rows.push(vec![i.to_string(), num(rep.radii[k]), num(rep.ratio_series[k])]);
                }
            }
        }
        bundle.write(
            "volume_ratios.csv",
            &csv_bytes(&["env", "kind", "r", "observed", "envelope", "ratio"], &ratio_rows),
        )?;
        bundle.write(
            "volume_bands.csv",
            &csv_bytes(&["kind", "constant", "violation_fraction", "pass"], &band_rows),
        )?;
        bundle.write("volume_infimum.csv", &csv_bytes(&["env", "r", "ratio"], &inf_rows))?;
        Ok(())
    }

    fn targets(&self, space: &SpaceModel) -> RunResult<(Vec<f64>, Vec<usize>)> {
        let rho = space.marked_vertex();
        let distances = self.config.distances.clone().unwrap_or_default();
        let mut targets = Vec::with_capacity(distances.len());
        for &d in &distances {
            targets.push(nearest_at_distance(space, rho, d)?);
        }
        Ok((distances, targets))
    }

    fn heatkernel(&self, bundle: &mut Bundle, records: &mut Vec<TaskRecord>) -> RunResult<()> {
        let space = self.space()?;
        let rho = space.marked_vertex();
        let times = self.config.time_grid.expect("validated").values();
        let (distances, mut targets) = self.targets(&space)?;
        targets.insert(0, rho);
        let mut all_distances = vec![0.0];
        all_distances.extend(&distances);
        let seeds = self.environment_seeds();
        let out = self.tasks(seeds.len(), records, |_, seed| {
            let env = self.environment(&space, seed)?;
            Ok(build_generator(&space, &env)?.kernel_entries(rho, &targets, &times)?)
        })?;
        self.track_cache(bundle, &space, &seeds)?;
        let mut rows = Vec::new();
        for (i, k) in &out {
            for (ti, &t) in times.iter().enumerate() {
                for (j, &d) in all_distances.iter().enumerate() {
                    rows.push(vec![i.to_string(), num(t), num(d), targets[j].to_string(), num(k[ti][j])]);
                }
            }
        }
        bundle.write("kernel.csv", &csv_bytes(&["env", "t", "distance", "target", "p"], &rows))?;
        if out.len() >= 2 {
            let mut ann_rows = Vec::new();
            let mut diag_mean = Vec::new();
            for (j, &d) in all_distances.iter().enumerate() {
                let curves: Vec<Vec<f64>> = out
                    .iter()
                    .map(|(_, k)| k.iter().map(|row| row[j]).collect())
                    .collect();
                let a = annealed_mean(&curves)?;
                for (ti, &t) in times.iter().enumerate() {
                    ann_rows.push(vec![num(t), num(d), num(a.mean[ti]), num(a.ci_half[ti]), num(a.trimmed[ti])]);
                }
                if j == 0 {
                    diag_mean = a.mean;
                }
            }
            bundle.write(
                "annealed.csv",
                &csv_bytes(&["t", "distance", "mean", "ci_half", "trimmed"], &ann_rows),
            )?;
            let window = self.config.fit_window.unwrap_or((0.0, f64::INFINITY));
            let fit = fit_power_law_with(&times, &diag_mean, window, 1000, self.config.seed())?;
            bundle.write("fit.csv", &csv_bytes(&FitResult::csv_header(), &[fit.csv_row("diagonal")]))?;
        }
        Ok(())
    }

    fn exit(&self, bundle: &mut Bundle, records: &mut Vec<TaskRecord>) -> RunResult<()> {
        let space = self.space()?;
        let rho = space.marked_vertex();
        let alpha = self.config.alpha();
        let times = self.config.time_grid.expect("validated").values();
        let (distances, targets) = self.targets(&space)?;
        let p_range = self.config.p_range.unwrap_or(DEFAULT_P_RANGE);
        let seeds = self.environment_seeds();
        let out = self.tasks(seeds.len(), records, |_, seed| {
            let env = self.environment(&space, seed)?;
            let g = build_generator(&space, &env)?;
            distances
                .iter()
                .zip(&targets)
                .map(|(&d, &y)| {
                    Ok(TailCurve {
                        distance: d,
                        times: times.clone(),
                        probability: g.hitting_cdf(rho, y, &times)?,
                    })
                })
                .collect::<RunResult<Vec<_>>>()
        })?;
        self.track_cache(bundle, &space, &seeds)?;
        let mut tail_rows = Vec::new();
        let mut inner_rows = Vec::new();
        let mut outer_rows = Vec::new();
        let mut log_slopes = vec![Vec::new(); distances.len()];
        for (i, curves) in &out {
            for c in curves {
                for (t, p) in c.times.iter().zip(&c.probability) {
                    tail_rows.push(vec![i.to_string(), num(c.distance), num(*t), num(*p)]);
                }
            }
            let Ok(fit) = exit_tail_fit(curves, alpha, p_range) else {
                continue;
            };
            for (j, inner) in fit.inner.iter().enumerate() {
                inner_rows.push(vec![
                    i.to_string(),
                    num(inner.distance),
                    num(inner.slope),
                    num(inner.intercept),
                    num(inner.r_squared),
                    inner.n_points.to_string(),
                ]);
                log_slopes[j].push(inner.slope.ln());
            }
            if let Some(outer) = fit.outer {
                outer_rows.push(outer.csv_row(&format!("env{i}")));
            }
        }
        if log_slopes.iter().all(|v| !v.is_empty()) {
            let geo: Vec<f64> = log_slopes
                .iter()
                .map(|v| (v.iter().sum::<f64>() / v.len() as f64).exp())
                .collect();
            if let Ok(fit) = fit_power_law(&distances, &geo, (0.0, f64::INFINITY)) {
                outer_rows.push(fit.csv_row("ensemble"));
            }
        }
        bundle.write("tail.csv", &csv_bytes(&["env", "distance", "t", "probability"], &tail_rows))?;
        bundle.write(
            "exit_fit.csv",
            &csv_bytes(&["env", "distance", "slope", "intercept", "r2", "n_points"], &inner_rows),
        )?;
        bundle.write("exit_exponent.csv", &csv_bytes(&FitResult::csv_header(), &outer_rows))?;
        Ok(())
    }
}

pub fn cache_stem(space: &SpaceModel, alpha: f64, seed: u64) -> String {
    format!("{}_a{}_s{}", space.id(), alpha, seed)
}

/// Vertex whose metric distance from `x` is closest to `d`; must be within
/// one lattice scale of it.
fn nearest_at_distance(space: &SpaceModel, x: usize, d: f64) -> RunResult<usize> {
    let mut best = (f64::INFINITY, x);
    for y in 0..space.vertex_count() {
        let gap = (space.metric_distance(x, y)? - d).abs();
        if gap < best.0 {
            best = (gap, y);
        }
    }
    if best.0 > space.lattice_scale() {
        return Err(RunError::Other(format!(
            "no vertex at distance {d} from the marked vertex (closest is off by {:.3e})",
            best.0
        )));
    }
    Ok(best.1)
}
