//! Event-driven simulation of the quenched chain: exponential holding at
//! rate `q(x) = sum_y c_xy / nu(x)`, then a jump to `y` with probability
//! `c_xy / sum_y c_xy`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use rayon::prelude::*;
use serde::Serialize;

use crate::backend::Generator;
use crate::environment::TrapEnvironment;
use crate::error::{invalid, Error, Result};
use crate::rng::stream_rng;

/// Default per-run event cap.
pub const DEFAULT_EVENT_CAP: u64 = 100_000_000;

/// Samples per independent random stream in the seeded batch samplers.
const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub env_id: String,
    pub start: usize,
    /// `(vertex, holding duration)` in visiting order.
    pub visited: Vec<(usize, f64)>,
    pub total_time: f64,
}

/// Local time per vertex: time spent divided by `nu(vertex)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationProfile {
    pub values: Vec<f64>,
}

/// Jump tables for one generator.
#[derive(Debug, Clone)]
pub struct Walker<'a> {
    gen: &'a Generator,
    rates: Vec<f64>,
    /// Cumulative jump probabilities per vertex, aligned with the neighbour list.
    cumulative: Vec<Vec<f64>>,
    event_cap: u64,
}

impl<'a> Walker<'a> {
    pub fn new(gen: &'a Generator) -> Self {
        let net = gen.network();
        let n = gen.vertex_count();
        let rates = (0..n).map(|x| gen.rate(x)).collect();
        let cumulative = (0..n)
            .map(|x| {
                let total = net.weighted_degree(x);
                let mut acc = 0.0;
                let mut c: Vec<f64> = net
                    .neighbors(x)
                    .iter()
                    .map(|&(_, w)| {
                        acc += w;
                        acc / total
                    })
                    .collect();
                if let Some(last) = c.last_mut() {
                    *last = 1.0;
                }
                c
            })
            .collect();
        Self {
            gen,
            rates,
            cumulative,
            event_cap: DEFAULT_EVENT_CAP,
        }
    }

    pub fn with_event_cap(mut self, cap: u64) -> Self {
        self.event_cap = cap;
        self
    }

    fn hold<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> f64 {
        let e: f64 = Exp1.sample(rng);
        e / self.rates[x]
    }

    fn jump<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let c = &self.cumulative[x];
        let k = c.iter().position(|&p| u < p).unwrap_or(c.len() - 1);
        self.gen.network().neighbors(x)[k].0
    }

    /// Path up to `horizon`, the last holding truncated at the horizon.
    pub fn simulate_path<R: Rng + ?Sized>(&self, x0: usize, horizon: f64, rng: &mut R) -> Result<Trajectory> {
        self.gen.network().check_vertex(x0)?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("horizon", format!("must be positive, got {horizon}")));
        }
        let mut visited = Vec::new();
        let mut x = x0;
        let mut time = 0.0;
        loop {
            if visited.len() as u64 >= self.event_cap {
                return Err(Error::EventCapExceeded { cap: self.event_cap });
            }
            let h = self.hold(x, rng);
            if time + h >= horizon {
                visited.push((x, horizon - time));
                break;
            }
            visited.push((x, h));
            time += h;
            x = self.jump(x, rng);
        }
        Ok(Trajectory {
            env_id: self.gen.env_id().to_string(),
            start: x0,
            visited,
            total_time: horizon,
        })
    }

    /// Runs from `x0` until `stop(vertex)` holds on arrival; returns the time.
    fn run_until<R: Rng + ?Sized>(&self, x0: usize, stop: impl Fn(usize) -> bool, rng: &mut R) -> Result<f64> {
        let mut x = x0;
        let mut time = 0.0;
        let mut events = 0u64;
        loop {
            time += self.hold(x, rng);
            x = self.jump(x, rng);
            events += 1;
            if stop(x) {
                return Ok(time);
            }
            if events >= self.event_cap {
                return Err(Error::EventCapExceeded { cap: self.event_cap });
            }
        }
    }

    /// One sample of the exit time from `inside`.
    pub fn exit_time<R: Rng + ?Sized>(&self, x0: usize, inside: &[bool], rng: &mut R) -> Result<f64> {
        self.run_until(x0, |y| !inside[y], rng)
    }

    /// One sample of the hitting time of `target`.
    pub fn hitting_time<R: Rng + ?Sized>(&self, x0: usize, target: usize, rng: &mut R) -> Result<f64> {
        self.run_until(x0, |y| y == target, rng)
    }

    /// Exit time from `inside` and hitting time of `target` read off the same
    /// path.
    pub fn coupled_exit_hitting<R: Rng + ?Sized>(
        &self,
        x0: usize,
        inside: &[bool],
        target: usize,
        rng: &mut R,
    ) -> Result<(f64, f64)> {
        let mut x = x0;
        let mut time = 0.0;
        let mut exit = None;
        let mut events = 0u64;
        loop {
            time += self.hold(x, rng);
            x = self.jump(x, rng);
            events += 1;
            if exit.is_none() && !inside[x] {
                exit = Some(time);
            }
            if x == target {
                return Ok((exit.unwrap_or(time), time));
            }
            if events >= self.event_cap {
                return Err(Error::EventCapExceeded { cap: self.event_cap });
            }
        }
    }
}

fn domain_mask(gen: &Generator, x0: usize, domain: &[usize]) -> Result<Vec<bool>> {
    gen.network().check_vertex(x0)?;
    let mut inside = vec![false; gen.vertex_count()];
    for &y in domain {
        gen.network().check_vertex(y)?;
        inside[y] = true;
    }
    if !inside[x0] {
        return Err(invalid("x0", format!("start {x0} lies outside the domain")));
    }
    if inside.iter().all(|&b| b) {
        return Err(invalid("domain", "domain is the whole space"));
    }
    Ok(inside)
}

pub fn simulate_path<R: Rng + ?Sized>(gen: &Generator, x0: usize, horizon: f64, rng: &mut R) -> Result<Trajectory> {
    Walker::new(gen).simulate_path(x0, horizon, rng)
}

/// `n` i.i.d. exit times from `domain` started at `x0`.
pub fn exit_time_samples<R: Rng + ?Sized>(
    gen: &Generator,
    x0: usize,
    domain: &[usize],
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let inside = domain_mask(gen, x0, domain)?;
    check_count(n)?;
    let w = Walker::new(gen);
    (0..n).map(|_| w.exit_time(x0, &inside, rng)).collect()
}

/// `n` i.i.d. hitting times of `target` started at `x0`.
pub fn hitting_time_samples<R: Rng + ?Sized>(
    gen: &Generator,
    x0: usize,
    target: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_hitting(gen, x0, target)?;
    check_count(n)?;
    let w = Walker::new(gen);
    (0..n).map(|_| w.hitting_time(x0, target, rng)).collect()
}

/// Exit times drawn in parallel; chunk `k` of [`CHUNK`] samples uses stream
/// `k` of `seed`, so the output does not depend on the thread count.
pub fn exit_time_samples_seeded(gen: &Generator, x0: usize, domain: &[usize], n: usize, seed: u64) -> Result<Vec<f64>> {
    let inside = domain_mask(gen, x0, domain)?;
    check_count(n)?;
    let w = Walker::new(gen);
    chunked(n, seed, |rng| w.exit_time(x0, &inside, rng))
}

pub fn hitting_time_samples_seeded(gen: &Generator, x0: usize, target: usize, n: usize, seed: u64) -> Result<Vec<f64>> {
    check_hitting(gen, x0, target)?;
    check_count(n)?;
    let w = Walker::new(gen);
    chunked(n, seed, |rng| w.hitting_time(x0, target, rng))
}

fn chunked<F>(n: usize, seed: u64, draw: F) -> Result<Vec<f64>>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<f64> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let len = CHUNK.min(n - k * CHUNK);
            (0..len).map(|_| draw(&mut rng)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(parts.concat())
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("n", "need at least one sample"));
    }
    Ok(())
}

fn check_hitting(gen: &Generator, x0: usize, target: usize) -> Result<()> {
    gen.network().check_vertex(x0)?;
    gen.network().check_vertex(target)?;
    if x0 == target {
        return Err(invalid("target", "start and target coincide"));
    }
    Ok(())
}

pub fn occupation_profile(traj: &Trajectory, env: &TrapEnvironment) -> Result<OccupationProfile> {
    if traj.env_id != env.id() {
        return Err(Error::SpaceMismatch {
            env: traj.env_id.clone(),
            space: env.id(),
        });
    }
    let nu = env.nu_mass();
    let mut values = vec![0.0; nu.len()];
    for &(x, d) in &traj.visited {
        if x >= nu.len() {
            return Err(Error::InvalidVertex { vertex: x, count: nu.len() });
        }
        values[x] += d;
    }
    for (v, m) in values.iter_mut().zip(nu) {
        *v /= m;
    }
    Ok(OccupationProfile { values })
}

impl OccupationProfile {
    /// `sum_x profile(x) nu(x)`, the total time.
    pub fn mass(&self, nu: &[f64]) -> f64 {
        self.values.iter().zip(nu).map(|(v, m)| v * m).sum()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &b| a.max(b))
    }
}

/// Outcome of the interval local-time experiment.
#[derive(Debug, Clone, Serialize)]
pub struct SmallBallExperiment {
    pub lattice_n: usize,
    pub lambdas: Vec<f64>,
    /// Empirical `P(sup_x L(x) <= lambda)` on `lambdas`.
    pub cdf: Vec<f64>,
    /// Sup of the local-time profile per sample.
    pub sup_samples: Vec<f64>,
    /// Samples that left through the right end.
    pub right_exits: usize,
}

/// Unit-trap walk on `[-1, 1]` with lattice step `2 / lattice_n`, started at 0
/// and stopped at `±1`; records the sup of its local-time profile.
///
/// With unit conductance `1/step` and mass `step` per interior vertex, every
/// holding time is exponential with mean `step^2 / 2`, so the time spent at a
/// vertex visited `k` times is Gamma(`k`, `step^2 / 2`). The jump chain is a
/// simple symmetric walk, simulated from random bits.
pub fn interval_local_time_smallball(
    lattice_n: usize,
    n_samples: usize,
    lambdas: &[f64],
    seed: u64,
) -> Result<SmallBallExperiment> {
    if lattice_n < 100 || !lattice_n.is_multiple_of(2) {
        return Err(invalid("lattice_n", format!("need an even value >= 100, got {lattice_n}")));
    }
    check_count(n_samples)?;
    let step = 2.0 / lattice_n as f64;
    let mean_hold = step * step / 2.0;
    let half = lattice_n / 2;
    let chunks = n_samples.div_ceil(CHUNK);
    let parts: Vec<(Vec<f64>, usize)> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let len = CHUNK.min(n_samples - k * CHUNK);
            let mut visits = vec![0u32; lattice_n + 1];
            let mut sups = Vec::with_capacity(len);
            let mut right = 0;
            for _ in 0..len {
                visits.iter_mut().for_each(|v| *v = 0);
                let mut pos = half;
                'walk: loop {
                    let mut bits: u64 = rng.random();
                    for _ in 0..64 {
                        visits[pos] += 1;
                        if bits & 1 == 1 {
                            pos += 1;
                        } else {
                            pos -= 1;
                        }
                        bits >>= 1;
                        if pos == 0 || pos == lattice_n {
                            break 'walk;
                        }
                    }
                }
                if pos == lattice_n {
                    right += 1;
                }
                let mut sup = 0.0f64;
                for &count in &visits[1..lattice_n] {
                    if count > 0 {
                        let g = Gamma::new(count as f64, mean_hold).expect("positive shape");
                        sup = sup.max(g.sample(&mut rng) / step);
                    }
                }
                sups.push(sup);
            }
            (sups, right)
        })
        .collect();
    let right_exits = parts.iter().map(|p| p.1).sum();
    let sup_samples: Vec<f64> = parts.into_iter().flat_map(|p| p.0).collect();
    let cdf = crate::stats::ecdf_at(&sup_samples, lambdas);
    Ok(SmallBallExperiment {
        lattice_n,
        lambdas: lambdas.to_vec(),
        cdf,
        sup_samples,
        right_exits,
    })
}
