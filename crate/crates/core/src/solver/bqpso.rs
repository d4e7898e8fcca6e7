//! Binary quantum-behaved particle swarm search over caching decisions.
//!
//! A particle is the row-major vectorization of `x` (RSU-major, `I * K` bits).
//! Allocation is never searched: every candidate `x` is completed by
//! [`allocate_y`] and scored with the penalty fitness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{LoadProfile, PenaltyConfig, PenaltyScale, SlotInstance};
use crate::lyapunov::{SlotDecision, SlotSolver};
use crate::model::types::{AllocationDecision, BitMatrix, CachingDecision};
use crate::real::Real;

/// What the Hamming distance between a particle and its attractor is compared with
/// before a crossover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossoverThreshold {
    /// Half the population size.
    #[default]
    HalfParticles,
    /// Half the particle dimension.
    HalfDimension,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BqpsoConfig {
    pub particles: usize,
    pub max_iterations: usize,
    pub omega1: f64,
    pub omega2: f64,
    pub penalty: PenaltyConfig,
    pub crossover: CrossoverThreshold,
    pub rng_seed: u64,
    /// Record the global best fitness after initialization and after every iteration.
    pub record_trace: bool,
}

impl Default for BqpsoConfig {
    fn default() -> Self {
        Self {
            particles: 100,
            max_iterations: 100,
            omega1: 0.5,
            omega2: 1.0,
            penalty: PenaltyConfig::default(),
            crossover: CrossoverThreshold::default(),
            rng_seed: 0,
            record_trace: true,
        }
    }
}

impl BqpsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidConfig("particles and iterations must be positive".into()));
        }
        if !(self.omega1 > 0.0 && self.omega2 >= self.omega1) {
            return Err(Error::InvalidConfig(format!(
                "need omega2 >= omega1 > 0, got {} and {}",
                self.omega1, self.omega2
            )));
        }
        if let Some(g) = self.penalty.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidConfig(format!("penalty gamma must be positive, got {g}")));
            }
        }
        Ok(())
    }

    fn crossover_threshold(&self, dim: usize) -> f64 {
        match self.crossover {
            CrossoverThreshold::HalfParticles => self.particles as f64 / 2.0,
            CrossoverThreshold::HalfDimension => dim as f64 / 2.0,
        }
    }
}

/// Splits each `d_jk` equally over the covering RSUs that cache `k`; the
/// remainder goes one unit at a time to the lowest RSU indices.
pub fn allocate_y<T: Real>(x: &CachingDecision, inst: &SlotInstance<T>) -> AllocationDecision {
    let (ni, nj, nk) = inst.dims();
    let mut y = AllocationDecision::zeros(ni, nj, nk);
    let mut servers = Vec::with_capacity(ni);
    for j in 0..nj {
        for k in 0..nk {
            let d = inst.demand.get(j, k);
            if d == 0 {
                continue;
            }
            servers.clear();
            servers.extend(inst.topology.rsus_of(j).iter().copied().filter(|&i| x.get(i, k)));
            if servers.is_empty() {
                continue;
            }
            servers.sort_unstable();
            let n = servers.len() as u32;
            let (share, rest) = (d / n, d % n);
            for (pos, &i) in servers.iter().enumerate() {
                y.set(i, j, k, share + u32::from((pos as u32) < rest));
            }
        }
    }
    y
}

/// Penalty fitness of `x` with its equal-split allocation. Lower is better.
pub fn fitness<T: Real>(x: &CachingDecision, inst: &SlotInstance<T>, penalty: &PenaltyConfig) -> T {
    let y = allocate_y(x, inst);
    inst.fitness_of(&inst.assess(x, &y), penalty)
}

/// [`fitness`] for the vectorized `x`, visiting only demanded cells.
///
/// `allocate_y` never breaks coverage, C4 or C5, so only storage, stability
/// and delay can be violated. Agrees with [`fitness`] up to summation order.
pub struct FitnessEvaluator<'a, T> {
    inst: &'a SlotInstance<T>,
    /// `(j, k, d_jk)` with `d_jk > 0`.
    cells: Vec<(usize, usize, u32)>,
    gamma: T,
    scale: PenaltyScale,
}

impl<'a, T: Real> FitnessEvaluator<'a, T> {
    pub fn new(inst: &'a SlotInstance<T>, penalty: &PenaltyConfig) -> Self {
        let (_, nj, nk) = inst.dims();
        let cells = (0..nj)
            .flat_map(|j| (0..nk).map(move |k| (j, k)))
            .filter_map(|(j, k)| {
                let d = inst.demand.get(j, k);
                (d > 0).then_some((j, k, d))
            })
            .collect();
        Self { inst, cells, gamma: inst.gamma(penalty), scale: penalty.scale }
    }

    pub fn eval(&self, bits: &[bool]) -> T {
        let inst = self.inst;
        let topo = &*inst.topology;
        let (ni, nj, nk) = inst.dims();
        let mut obj = inst.constant();
        let mut storage = vec![0u64; ni];
        for i in 0..ni {
            for k in 0..nk {
                if bits[i * nk + k] {
                    obj = obj + inst.cache_coef(i, k);
                    storage[i] += inst.sizes[k];
                }
            }
        }
        let mut p = LoadProfile {
            rsu_load: vec![0; ni],
            link_bits: vec![0; ni * nj],
            residual: vec![0; nj],
            residual_bits: vec![0; nj],
            bs_load: 0,
            oversubscribed: false,
        };
        let mut servers = Vec::with_capacity(ni);
        for &(j, k, d) in &self.cells {
            let size = inst.sizes[k];
            servers.clear();
            servers.extend(topo.rsus_of(j).iter().copied().filter(|&i| bits[i * nk + k]));
            if servers.is_empty() {
                p.residual[j] += u64::from(d);
                p.residual_bits[j] += u64::from(d) * size;
                continue;
            }
            servers.sort_unstable();
            let n = servers.len() as u32;
            let (share, rest) = (d / n, d % n);
            for (pos, &i) in servers.iter().enumerate() {
                let v = share + u32::from((pos as u32) < rest);
                if v > 0 {
                    p.rsu_load[i] += u64::from(v);
                    p.link_bits[i * nj + j] += u64::from(v) * size;
                    obj = obj + inst.unit_coef(i, j, k) * T::from_count(u64::from(v));
                }
            }
        }
        p.bs_load = p.residual.iter().sum();

        let mut violated = false;
        let mut pen = T::zero();
        let mut charge = |slack: T, bound: T| {
            violated = true;
            pen = pen + match self.scale {
                PenaltyScale::Relative if bound > T::zero() => slack / bound,
                _ => slack,
            };
        };
        for (i, rsu) in topo.rsus.iter().enumerate() {
            if storage[i] > rsu.storage_bits {
                charge(T::from_count(storage[i] - rsu.storage_bits), T::from_count(rsu.storage_bits));
            }
        }
        let margin = inst.stability_margin;
        for (i, rsu) in topo.rsus.iter().enumerate() {
            let load = T::from_count(p.rsu_load[i]);
            if load > rsu.service_rate - margin {
                charge(load - (rsu.service_rate - margin), rsu.service_rate);
            }
        }
        let mu0 = topo.base_station.service_rate;
        let load0 = T::from_count(p.bs_load);
        if load0 > mu0 - margin {
            charge(load0 - (mu0 - margin), mu0);
        }
        for (j, region) in topo.regions.iter().enumerate() {
            let delta = region.delay_tolerance_s;
            match inst.expected_delay(&p, j) {
                Some(d) if d > delta => charge(d - delta, delta),
                Some(_) => {}
                None => charge(T::lit(crate::instance::UNBOUNDED_DELAY_PENALTY) * delta, delta),
            }
        }
        if violated {
            obj + self.gamma * pen
        } else {
            obj
        }
    }
}

/// `eta = omega1 + (omega2 - omega1) (max_iter - iter) / max_iter`.
pub fn contraction_factor(iter: usize, max_iter: usize, omega1: f64, omega2: f64) -> Result<f64> {
    if iter > max_iter {
        return Err(Error::IterationOutOfRange { iter, max: max_iter });
    }
    if max_iter == 0 {
        return Ok(omega1);
    }
    Ok(omega1 + (omega2 - omega1) * (max_iter - iter) as f64 / max_iter as f64)
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Continuous attractor and its binary image.
#[derive(Debug, Clone, PartialEq)]
pub struct Attractor {
    pub continuous: Vec<f64>,
    pub binary: Vec<bool>,
}

/// Per dimension: `phi` mixes personal and global best, then `psi` samples the
/// bit with probability `sigmoid(L)`. Draw order is `phi, psi` per dimension.
pub fn local_attractor<R: Rng + ?Sized>(p_n: &[bool], p_star: &[bool], rng: &mut R) -> Attractor {
    assert_eq!(p_n.len(), p_star.len(), "attractor inputs differ in length");
    let mut continuous = Vec::with_capacity(p_n.len());
    let mut binary = Vec::with_capacity(p_n.len());
    for (&p, &g) in p_n.iter().zip(p_star) {
        let phi: f64 = rng.random();
        let l = phi * f64::from(u8::from(p)) + (1.0 - phi) * f64::from(u8::from(g));
        let psi: f64 = rng.random();
        continuous.push(l);
        binary.push(psi < sigmoid(l));
    }
    Attractor { continuous, binary }
}

/// Moves one particle around its continuous attractor and discretizes it
/// against the row mean. Per dimension draws a sign (`u < 0.5` is `+`) and
/// `G`, redrawing `G = 0`.
pub fn position_update<R: Rng + ?Sized>(
    position: &mut [f64],
    attractor: &[f64],
    mean_best: &[f64],
    eta: f64,
    rng: &mut R,
) -> Vec<bool> {
    for d in 0..position.len() {
        let plus = rng.random::<f64>() < 0.5;
        let g = loop {
            let g: f64 = rng.random();
            if g > 0.0 {
                break g;
            }
        };
        let step = eta * (mean_best[d] - position[d]).abs() * (1.0 / g).ln();
        position[d] = if plus { attractor[d] + step } else { attractor[d] - step };
    }
    discretize(position)
}

/// Bit `d` is set iff coordinate `d` is at least the mean coordinate. The
/// mean carries rounding error, so ties are decided with a relative slack.
pub fn discretize(position: &[f64]) -> Vec<bool> {
    if position.is_empty() {
        return Vec::new();
    }
    let mean = position.iter().sum::<f64>() / position.len() as f64;
    let slack = 1e-12 * mean.abs().max(1.0);
    position.iter().map(|&v| v >= mean - slack).collect()
}

pub fn hamming(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(p, q)| p != q).count()
}

/// Single-point crossover taking the prefix from `x_n` and the suffix from
/// `l_n` when the two are at least `threshold` apart.
pub fn crossover_repair<R: Rng + ?Sized>(x_n: &[bool], l_n: &[bool], threshold: f64, rng: &mut R) -> Vec<bool> {
    assert_eq!(x_n.len(), l_n.len(), "crossover inputs differ in length");
    let dim = x_n.len();
    if dim < 2 || (hamming(x_n, l_n) as f64) < threshold {
        return x_n.to_vec();
    }
    let cut = rng.random_range(1..dim);
    x_n[..cut].iter().chain(&l_n[cut..]).copied().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Swarm<T> {
    pub continuous: Vec<Vec<f64>>,
    pub binary: Vec<Vec<bool>>,
    pub personal: Vec<Vec<bool>>,
    pub personal_fitness: Vec<T>,
    pub global: Vec<bool>,
    pub global_fitness: T,
    pub iteration: usize,
}

impl<T: Real> Swarm<T> {
    pub fn dim(&self) -> usize {
        self.global.len()
    }

    fn mean_best(&self) -> Vec<f64> {
        let n = self.personal.len() as f64;
        (0..self.dim())
            .map(|d| self.personal.iter().filter(|p| p[d]).count() as f64 / n)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BqpsoOutcome<T> {
    pub x: CachingDecision,
    pub y: AllocationDecision,
    pub fitness: T,
    /// Global best fitness after initialization and after each iteration.
    pub trace: Vec<T>,
    pub evaluations: usize,
}

fn particle_rngs(seed: u64, particles: usize) -> Vec<ChaCha8Rng> {
    (0..particles)
        .map(|n| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(n as u64);
            r
        })
        .collect()
}

fn to_decision(bits: &[bool], ni: usize, nk: usize) -> CachingDecision {
    BitMatrix::from_flat(ni, nk, bits.to_vec())
}

/// Runs the swarm and returns the global best `x`, its allocation and fitness.
///
/// Caching bits of the best particle that serve no request are cleared before
/// returning; this only removes caching energy, so the returned fitness is at
/// most the last trace entry.
pub fn run<T: Real>(inst: &SlotInstance<T>, cfg: &BqpsoConfig) -> Result<BqpsoOutcome<T>> {
    cfg.validate()?;
    let (ni, _, nk) = inst.dims();
    let dim = ni * nk;
    let threshold = cfg.crossover_threshold(dim);
    let mut rngs = particle_rngs(cfg.rng_seed, cfg.particles);
    let mut evaluations = 0usize;
    let evaluator = FitnessEvaluator::new(inst, &cfg.penalty);
    let mut eval = |bits: &[bool]| {
        evaluations += 1;
        evaluator.eval(bits)
    };

    let binary: Vec<Vec<bool>> = rngs.iter_mut().map(|r| (0..dim).map(|_| r.random_bool(0.5)).collect()).collect();
    let continuous: Vec<Vec<f64>> = binary.iter().map(|b| b.iter().map(|&v| f64::from(u8::from(v))).collect()).collect();
    let personal_fitness: Vec<T> = binary.iter().map(|b| eval(b)).collect();
    let best = argmin(&personal_fitness);
    let mut swarm = Swarm {
        global: binary[best].clone(),
        global_fitness: personal_fitness[best],
        personal: binary.clone(),
        continuous,
        binary,
        personal_fitness,
        iteration: 0,
    };
    let mut trace = Vec::new();
    if cfg.record_trace {
        trace.push(swarm.global_fitness);
    }

    for t in 0..cfg.max_iterations {
        let eta = contraction_factor(t, cfg.max_iterations, cfg.omega1, cfg.omega2)?;
        let mean_best = swarm.mean_best();
        for (n, rng) in rngs.iter_mut().enumerate() {
            let att = local_attractor(&swarm.personal[n], &swarm.global, rng);
            let moved = position_update(&mut swarm.continuous[n], &att.continuous, &mean_best, eta, rng);
            let bits = crossover_repair(&moved, &att.binary, threshold, rng);
            let f = eval(&bits);
            if f < swarm.personal_fitness[n] {
                swarm.personal_fitness[n] = f;
                swarm.personal[n] = bits.clone();
            }
            swarm.binary[n] = bits;
        }
        let best = argmin(&swarm.personal_fitness);
        if swarm.personal_fitness[best] < swarm.global_fitness {
            swarm.global_fitness = swarm.personal_fitness[best];
            swarm.global = swarm.personal[best].clone();
        }
        swarm.iteration = t + 1;
        if cfg.record_trace {
            trace.push(swarm.global_fitness);
        }
    }

    let mut x = to_decision(&swarm.global, ni, nk);
    let y = allocate_y(&x, inst);
    inst.prune_unused(&mut x, &y);
    let fitness = evaluator.eval(x.as_slice());
    Ok(BqpsoOutcome { x, y, fitness, trace, evaluations })
}

fn argmin<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (n, f) in v.iter().enumerate() {
        if *f < v[best] {
            best = n;
        }
    }
    best
}

/// Per-slot adapter. Each slot reseeds from `rng_seed` and the slot index.
#[derive(Debug, Clone, Default)]
pub struct BqpsoSolver {
    pub config: BqpsoConfig,
}

impl BqpsoSolver {
    pub fn new(config: BqpsoConfig) -> Self {
        Self { config }
    }
}

impl<T: Real> SlotSolver<T> for BqpsoSolver {
    fn name(&self) -> &str {
        "bqpso-da"
    }

    fn solve(&mut self, inst: &SlotInstance<T>) -> Result<SlotDecision> {
        let cfg = BqpsoConfig {
            rng_seed: self.config.rng_seed ^ inst.slot.wrapping_mul(0x9E37_79B9_7F4A_7C15),
            record_trace: false,
            ..self.config.clone()
        };
        let out = run(inst, &cfg)?;
        Ok(SlotDecision { x: out.x, y: out.y, optimal: false })
    }
}
