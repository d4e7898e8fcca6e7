//! The single-slot problem handed to every per-slot solver.
//!
//! The drift-plus-penalty objective `Q·E − 𝒱·V` is linear in the decisions:
//!
//! ```text
//! Q·E − 𝒱·V = const + Σ_ik a_ik x_ik + Σ_ijk b_ijk y_ijk
//! a_ik  = Q·w·τ·s_k
//! b_ijk = Q·s_k·(P_i/r_ij − P_0/r_0j) − 𝒱·A_ik F_k H_jk
//! const = Q·Σ_jk P_0 s_k d_jk / r_0j
//! ```
//!
//! [`SlotInstance`] stores these coefficients together with everything needed
//! to check feasibility quickly.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::constraints::{validate, ConstraintReport, SlotContext};
use crate::model::rate::{rate_matrix, rate_samples};
use crate::model::types::{
    AllocationDecision, BitMatrix, CachingDecision, CountMatrix, EnergyParams, RealMatrix, RequestHistory,
    SensingDatum, SlotObservation, Topology, ValueWeights,
};
use crate::model::value::{freshness, popularity};
use crate::real::Real;

/// Default stability margin: loads must stay at or below `μ − 1e-3`.
pub const DEFAULT_STABILITY_MARGIN: f64 = 1e-3;

/// Raw ingredients of a slot instance.
#[derive(Debug, Clone)]
pub struct InstanceParts<T> {
    pub slot: u64,
    pub backlog: T,
    pub v_weight: T,
    pub topology: Arc<Topology<T>>,
    pub sizes: Vec<u64>,
    pub demand: CountMatrix,
    /// `c_ijk = A_ik F_k H_jk`, flat `[i][j][k]`.
    pub value_coef: Vec<T>,
    /// Expected RSU rates `r_ij`.
    pub rates: RealMatrix<T>,
    /// Per-draw RSU rates `[i][j][s]`, used for the expected delay.
    pub rate_samples: Vec<Vec<Vec<T>>>,
    pub bs_rates: Vec<T>,
    pub energy: EnergyParams<T>,
    pub stability_margin: T,
}

/// Inputs for building an instance from scenario data.
#[derive(Debug, Clone, Copy)]
pub struct ObservationInputs<'a, T> {
    pub topology: &'a Arc<Topology<T>>,
    pub catalog: &'a [SensingDatum<T>],
    pub observation: &'a SlotObservation<T>,
    /// Demand the decision is made for (realized or predicted).
    pub demand: &'a CountMatrix,
    /// Request history up to the previous slot.
    pub history: &'a RequestHistory,
    pub weights: &'a ValueWeights<T>,
    pub energy: &'a EnergyParams<T>,
    pub noise_power_w: T,
    pub rate_floor_bps: T,
    pub backlog: T,
    pub v_weight: T,
    pub stability_margin: T,
}

#[derive(Debug, Clone)]
pub struct SlotInstance<T> {
    pub slot: u64,
    pub backlog: T,
    pub v_weight: T,
    pub topology: Arc<Topology<T>>,
    pub sizes: Vec<u64>,
    pub demand: CountMatrix,
    pub value_coef: Vec<T>,
    pub rates: RealMatrix<T>,
    pub rate_samples: Vec<Vec<Vec<T>>>,
    pub bs_rates: Vec<T>,
    pub energy: EnergyParams<T>,
    pub stability_margin: T,
    unit_coef: Vec<T>,
    cache_coef: Vec<T>,
    constant: T,
    /// `1/r_ij^(s)`, flat `[i][j]`, empty off coverage.
    inv_samples: Vec<Vec<T>>,
    draws: usize,
}

/// Load totals of an allocation, the inputs of every delay term.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub rsu_load: Vec<u64>,
    /// Bits sent on each link, flat `[i][j]`.
    pub link_bits: Vec<u64>,
    /// Requests left to the base station per region.
    pub residual: Vec<u64>,
    pub residual_bits: Vec<u64>,
    pub bs_load: u64,
    /// Whether any `(j,k)` is served beyond its demand.
    pub oversubscribed: bool,
}

/// Fast evaluation of a decision pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assessment<T> {
    pub objective: T,
    pub energy: T,
    pub value: T,
    pub feasible: bool,
    pub violations: usize,
    /// Regions whose expected delay exceeds their tolerance.
    pub delay_violations: usize,
    /// Sum of violation slacks divided by their bounds.
    pub penalty_relative: T,
    /// Sum of raw violation slacks (bits, requests, seconds).
    pub penalty_absolute: T,
    /// `max_j E[D_j]`; infinite when a serving queue is unstable.
    pub max_delay: T,
}

/// Relative C2 slack charged when the delay is unbounded.
pub const UNBOUNDED_DELAY_PENALTY: f64 = 10.0;

impl<T: Real> SlotInstance<T> {
    pub fn new(parts: InstanceParts<T>) -> Result<Self> {
        let topo = &parts.topology;
        let (ni, nj, nk) = (topo.num_rsus(), topo.num_regions(), parts.sizes.len());
        if (parts.demand.rows(), parts.demand.cols()) != (nj, nk)
            || parts.value_coef.len() != ni * nj * nk
            || (parts.rates.rows(), parts.rates.cols()) != (ni, nj)
            || parts.bs_rates.len() != nj
            || parts.rate_samples.len() != ni
            || parts.rate_samples.iter().any(|r| r.len() != nj)
        {
            return Err(Error::DimensionMismatch("slot instance".into()));
        }
        let mut draws = usize::MAX;
        let mut inv_samples = vec![Vec::new(); ni * nj];
        for i in 0..ni {
            for &j in topo.regions_of(i) {
                let s = &parts.rate_samples[i][j];
                if s.is_empty() {
                    return Err(Error::NoChannelObservation { rsu: i, region: j });
                }
                if parts.rates.get(i, j) <= T::zero() || s.iter().any(|&r| r <= T::zero()) {
                    return Err(Error::DegenerateChannel { rsu: i, region: j, rate: parts.rates.get(i, j).as_f64() });
                }
                draws = draws.min(s.len());
                inv_samples[i * nj + j] = s.iter().map(|&r| T::one() / r).collect();
            }
        }
        if parts.bs_rates.iter().any(|&r| r <= T::zero()) {
            return Err(Error::InvalidConfig("base-station rates must be positive".into()));
        }
        if draws == usize::MAX {
            draws = 0;
        }

        let q = parts.backlog;
        let p0 = topo.base_station.tx_power_w;
        let size = |k: usize| T::from_count(parts.sizes[k]);
        let cache_coef: Vec<T> = (0..ni * nk)
            .map(|ik| q * parts.energy.caching_power_w_per_bit * parts.energy.slot_s * size(ik % nk))
            .collect();
        let mut unit_coef = vec![T::zero(); ni * nj * nk];
        for (i, rsu) in topo.rsus.iter().enumerate() {
            for &j in topo.regions_of(i) {
                let per_bit = rsu.tx_power_w / parts.rates.get(i, j) - p0 / parts.bs_rates[j];
                for k in 0..nk {
                    let at = (i * nj + j) * nk + k;
                    unit_coef[at] = q * size(k) * per_bit - parts.v_weight * parts.value_coef[at];
                }
            }
        }
        let mut constant = T::zero();
        for j in 0..nj {
            for k in 0..nk {
                let d = parts.demand.get(j, k);
                if d > 0 {
                    constant = constant + q * p0 * size(k) * T::from_count(u64::from(d)) / parts.bs_rates[j];
                }
            }
        }

        Ok(Self {
            slot: parts.slot,
            backlog: parts.backlog,
            v_weight: parts.v_weight,
            topology: parts.topology,
            sizes: parts.sizes,
            demand: parts.demand,
            value_coef: parts.value_coef,
            rates: parts.rates,
            rate_samples: parts.rate_samples,
            bs_rates: parts.bs_rates,
            energy: parts.energy,
            stability_margin: parts.stability_margin,
            unit_coef,
            cache_coef,
            constant,
            inv_samples,
            draws,
        })
    }

    /// Builds the instance from a slot observation: value coefficients from
    /// scope, freshness and popularity, rates from the channel draws.
    pub fn from_observation(inp: ObservationInputs<'_, T>) -> Result<Self> {
        let topo = inp.topology;
        let (ni, nj, nk) = (topo.num_rsus(), topo.num_regions(), inp.catalog.len());
        let obs = inp.observation;
        if (obs.scope.rows(), obs.scope.cols()) != (ni, nk) || (inp.demand.rows(), inp.demand.cols()) != (nj, nk) {
            return Err(Error::DimensionMismatch("observation vs catalog".into()));
        }
        let fresh = inp.catalog.iter().map(|sd| freshness(sd, obs.slot)).collect::<Result<Vec<T>>>()?;
        let pop = RealMatrix::from_fn(nj, nk, |j, k| popularity(inp.history, j, k, obs.slot, inp.weights));
        let mut value_coef = vec![T::zero(); ni * nj * nk];
        for i in 0..ni {
            for &j in topo.regions_of(i) {
                for k in 0..nk {
                    if obs.scope.get(i, k) {
                        value_coef[(i * nj + j) * nk + k] = fresh[k] * pop.get(j, k);
                    }
                }
            }
        }
        let rates = rate_matrix(topo, obs, inp.noise_power_w, inp.rate_floor_bps)?;
        let samples = rate_samples(topo, obs, inp.noise_power_w);
        Self::new(InstanceParts {
            slot: obs.slot,
            backlog: inp.backlog,
            v_weight: inp.v_weight,
            topology: Arc::clone(topo),
            sizes: inp.catalog.iter().map(|sd| sd.size_bits).collect(),
            demand: inp.demand.clone(),
            value_coef,
            rates,
            rate_samples: samples,
            bs_rates: obs.bs_rates.clone(),
            energy: *inp.energy,
            stability_margin: inp.stability_margin,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.topology.num_rsus(), self.topology.num_regions(), self.sizes.len())
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        let (_, nj, nk) = self.dims();
        (i * nj + j) * nk + k
    }

    /// `a_ik`, the objective coefficient of `x_ik`.
    #[inline]
    pub fn cache_coef(&self, i: usize, k: usize) -> T {
        self.cache_coef[i * self.sizes.len() + k]
    }

    /// `b_ijk`, the objective coefficient of one unit of `y_ijk` (zero off coverage).
    #[inline]
    pub fn unit_coef(&self, i: usize, j: usize, k: usize) -> T {
        self.unit_coef[self.idx(i, j, k)]
    }

    /// Energy change from moving one request for `k` in region `j` from the
    /// base station to RSU `i`.
    pub fn unit_energy(&self, i: usize, j: usize, k: usize) -> T {
        let p0 = self.topology.base_station.tx_power_w;
        T::from_count(self.sizes[k]) * (self.topology.rsus[i].tx_power_w / self.rates.get(i, j) - p0 / self.bs_rates[j])
    }

    /// Objective value of the all-zero decision.
    pub fn constant(&self) -> T {
        self.constant
    }

    /// Largest load RSU `i` may carry under the stability margin.
    pub fn rsu_capacity(&self, i: usize) -> u64 {
        load_cap(self.topology.rsus[i].service_rate, self.stability_margin)
    }

    pub fn bs_capacity(&self) -> u64 {
        load_cap(self.topology.base_station.service_rate, self.stability_margin)
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    /// `1/r_ij^(s)` for each draw.
    pub fn inverse_rate_samples(&self, i: usize, j: usize) -> &[T] {
        &self.inv_samples[i * self.topology.num_regions() + j]
    }

    pub fn empty_caching(&self) -> CachingDecision {
        let (ni, _, nk) = self.dims();
        BitMatrix::zeros(ni, nk)
    }

    pub fn empty_allocation(&self) -> AllocationDecision {
        let (ni, nj, nk) = self.dims();
        AllocationDecision::zeros(ni, nj, nk)
    }

    /// `Q·E − 𝒱·V` through the linear coefficients.
    pub fn objective(&self, x: &CachingDecision, y: &AllocationDecision) -> T {
        let (ni, nj, nk) = self.dims();
        let mut obj = self.constant;
        for i in 0..ni {
            for k in 0..nk {
                if x.get(i, k) {
                    obj = obj + self.cache_coef(i, k);
                }
            }
            for &j in self.topology.regions_of(i) {
                for k in 0..nk {
                    let v = y.get(i, j, k);
                    if v > 0 {
                        obj = obj + self.unit_coef[(i * nj + j) * nk + k] * T::from_count(u64::from(v));
                    }
                }
            }
        }
        obj
    }

    /// Total energy `E(t)`; residual demand is clamped at zero.
    pub fn energy(&self, x: &CachingDecision, y: &AllocationDecision) -> T {
        let (ni, nj, nk) = self.dims();
        let size = |k: usize| T::from_count(self.sizes[k]);
        let mut e = T::zero();
        for i in 0..ni {
            let bits: u64 = (0..nk).filter(|&k| x.get(i, k)).map(|k| self.sizes[k]).sum();
            e = e + self.energy.caching_power_w_per_bit * self.energy.slot_s * T::from_count(bits);
            let p = self.topology.rsus[i].tx_power_w;
            for &j in self.topology.regions_of(i) {
                let bits: u64 = (0..nk).map(|k| self.sizes[k] * u64::from(y.get(i, j, k))).sum();
                if bits > 0 {
                    e = e + p * T::from_count(bits) / self.rates.get(i, j);
                }
            }
        }
        let p0 = self.topology.base_station.tx_power_w;
        for j in 0..nj {
            let mut bits = T::zero();
            for k in 0..nk {
                let left = u64::from(self.demand.get(j, k)).saturating_sub(y.served(j, k));
                if left > 0 {
                    bits = bits + size(k) * T::from_count(left);
                }
            }
            if bits > T::zero() {
                e = e + p0 * bits / self.bs_rates[j];
            }
        }
        e
    }

    /// Caching value `V(t)`.
    pub fn value(&self, y: &AllocationDecision) -> T {
        let (ni, nj, nk) = self.dims();
        let mut v = T::zero();
        for i in 0..ni {
            for &j in self.topology.regions_of(i) {
                for k in 0..nk {
                    let n = y.get(i, j, k);
                    if n > 0 {
                        v = v + self.value_coef[(i * nj + j) * nk + k] * T::from_count(u64::from(n));
                    }
                }
            }
        }
        v
    }

    pub fn load_profile(&self, y: &AllocationDecision) -> LoadProfile {
        let (ni, nj, nk) = self.dims();
        let mut rsu_load = vec![0u64; ni];
        let mut link_bits = vec![0u64; ni * nj];
        for i in 0..ni {
            for j in 0..nj {
                let mut bits = 0;
                for k in 0..nk {
                    let v = u64::from(y.get(i, j, k));
                    rsu_load[i] += v;
                    bits += v * self.sizes[k];
                }
                link_bits[i * nj + j] = bits;
            }
        }
        let mut residual = vec![0u64; nj];
        let mut residual_bits = vec![0u64; nj];
        let mut oversubscribed = false;
        for j in 0..nj {
            for k in 0..nk {
                let d = u64::from(self.demand.get(j, k));
                let served = y.served(j, k);
                if served > d {
                    oversubscribed = true;
                }
                let left = d.saturating_sub(served);
                residual[j] += left;
                residual_bits[j] += left * self.sizes[k];
            }
        }
        let bs_load = residual.iter().sum();
        LoadProfile { rsu_load, link_bits, residual, residual_bits, bs_load, oversubscribed }
    }

    /// Monte-Carlo `E[D_j]` from a load profile; `None` if a serving queue is unstable.
    pub fn expected_delay(&self, profile: &LoadProfile, j: usize) -> Option<T> {
        self.delay_terms(profile, j, true)
    }

    /// `E[D_j]` counting only the RSU terms, i.e. as if the base station had no queue.
    pub fn rsu_side_delay(&self, profile: &LoadProfile, j: usize) -> Option<T> {
        self.delay_terms(profile, j, false)
    }

    fn delay_terms(&self, profile: &LoadProfile, j: usize, with_bs: bool) -> Option<T> {
        if self.demand.row_total(j) == 0 {
            return Some(T::zero());
        }
        let nj = self.topology.num_regions();
        let bs_term = if with_bs && profile.residual[j] > 0 {
            let mu0 = self.topology.base_station.service_rate;
            let load = T::from_count(profile.bs_load);
            if load >= mu0 {
                return None;
            }
            Some(T::one() / (mu0 - load) + T::from_count(profile.residual_bits[j]) / self.bs_rates[j])
        } else {
            None
        };
        let mut active: Vec<(T, T, &[T])> = Vec::new();
        for &i in self.topology.rsus_of(j) {
            let bits = profile.link_bits[i * nj + j];
            if bits == 0 {
                continue;
            }
            let mu = self.topology.rsus[i].service_rate;
            let load = T::from_count(profile.rsu_load[i]);
            if load >= mu {
                return None;
            }
            active.push((T::one() / (mu - load), T::from_count(bits), self.inverse_rate_samples(i, j)));
        }
        let floor = bs_term.unwrap_or(T::zero());
        if active.is_empty() {
            return Some(floor);
        }
        let mut sum = T::zero();
        for s in 0..self.draws {
            let mut worst = floor;
            for &(l, bits, inv) in &active {
                worst = worst.max(l + bits * inv[s]);
            }
            sum = sum + worst;
        }
        Some(sum / T::from_count(self.draws as u64))
    }

    /// Objective, energy, value and all constraint checks in one pass.
    pub fn assess(&self, x: &CachingDecision, y: &AllocationDecision) -> Assessment<T> {
        let (ni, nj, nk) = self.dims();
        let topo = &*self.topology;
        let mut violations = 0usize;
        let mut rel = T::zero();
        let mut abs = T::zero();
        let mut charge = |slack: T, bound: T| {
            violations += 1;
            abs = abs + slack;
            rel = rel + if bound > T::zero() { slack / bound } else { slack };
        };

        let mut coverage_ok = true;
        for i in 0..ni {
            for j in 0..nj {
                if !topo.covers(i, j) {
                    let t = y.link_total(i, j);
                    if t > 0 {
                        coverage_ok = false;
                        charge(T::from_count(t), T::zero());
                    }
                }
            }
        }
        for (i, rsu) in topo.rsus.iter().enumerate() {
            let used: u64 = (0..nk).filter(|&k| x.get(i, k)).map(|k| self.sizes[k]).sum();
            if used > rsu.storage_bits {
                charge(T::from_count(used - rsu.storage_bits), T::from_count(rsu.storage_bits));
            }
            for j in 0..nj {
                for k in 0..nk {
                    let v = y.get(i, j, k);
                    if v > 0 && !x.get(i, k) {
                        charge(T::from_count(u64::from(v)), T::zero());
                    }
                }
            }
        }
        for j in 0..nj {
            for k in 0..nk {
                let d = u64::from(self.demand.get(j, k));
                let s = y.served(j, k);
                if s > d {
                    charge(T::from_count(s - d), T::from_count(d));
                }
            }
        }
        let profile = self.load_profile(y);
        let margin = self.stability_margin;
        for (i, rsu) in topo.rsus.iter().enumerate() {
            let cap = rsu.service_rate - margin;
            let load = T::from_count(profile.rsu_load[i]);
            if load > cap {
                charge(load - cap, rsu.service_rate);
            }
        }
        let cap0 = topo.base_station.service_rate - margin;
        let load0 = T::from_count(profile.bs_load);
        if load0 > cap0 {
            charge(load0 - cap0, topo.base_station.service_rate);
        }

        let mut max_delay = T::zero();
        let mut delay_violations = 0;
        if coverage_ok && !profile.oversubscribed {
            for (j, region) in topo.regions.iter().enumerate() {
                let delta = region.delay_tolerance_s;
                match self.expected_delay(&profile, j) {
                    Some(d) => {
                        max_delay = max_delay.max(d);
                        if d > delta {
                            delay_violations += 1;
                            charge(d - delta, delta);
                        }
                    }
                    None => {
                        max_delay = T::infinity();
                        delay_violations += 1;
                        let cap = T::lit(UNBOUNDED_DELAY_PENALTY);
                        charge(cap * delta, delta);
                    }
                }
            }
        }

        Assessment {
            objective: self.objective(x, y),
            energy: self.energy(x, y),
            value: self.value(y),
            feasible: violations == 0,
            violations,
            delay_violations,
            penalty_relative: rel,
            penalty_absolute: abs,
            max_delay,
        }
    }

    /// Reference constraint report through the model evaluators.
    pub fn report(&self, x: &CachingDecision, y: &AllocationDecision) -> ConstraintReport {
        let ctx = SlotContext {
            topology: &self.topology,
            sizes: &self.sizes,
            demand: &self.demand,
            rate_samples: &self.rate_samples,
            bs_rates: &self.bs_rates,
            stability_margin: self.stability_margin,
        };
        validate(x, y, &ctx)
    }

    /// Drops cached copies that serve nothing; never raises the objective.
    pub fn prune_unused(&self, x: &mut CachingDecision, y: &AllocationDecision) {
        let (ni, nj, nk) = self.dims();
        for i in 0..ni {
            for k in 0..nk {
                if x.get(i, k) && (0..nj).all(|j| y.get(i, j, k) == 0) {
                    x.set(i, k, false);
                }
            }
        }
    }
}

fn load_cap<T: Real>(mu: T, margin: T) -> u64 {
    let cap = (mu - margin).floor();
    if cap <= T::zero() {
        0
    } else {
        cap.to_u64().unwrap_or(u64::MAX)
    }
}

/// How constraint slacks are turned into a penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyScale {
    /// Each slack divided by its bound, so units do not mix.
    #[default]
    Relative,
    /// Raw slacks in bits, requests and seconds.
    Absolute,
}

/// Penalty weight `γ` and scale for the penalized fitness.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct PenaltyConfig {
    /// `None` picks `γ` per instance with [`SlotInstance::auto_gamma`].
    pub gamma: Option<f64>,
    pub scale: PenaltyScale,
}

impl<T: Real> SlotInstance<T> {
    /// Largest possible objective decrease below the all-zero decision,
    /// `Σ_jk d_jk · max_i (−b_ijk)⁺`.
    pub fn max_gain(&self) -> T {
        let (_, _, nk) = self.dims();
        let mut g = T::zero();
        for j in 0..self.topology.num_regions() {
            for k in 0..nk {
                let d = self.demand.get(j, k);
                if d == 0 {
                    continue;
                }
                let best = self
                    .topology
                    .rsus_of(j)
                    .iter()
                    .map(|&i| -self.unit_coef(i, j, k))
                    .fold(T::zero(), T::max);
                g = g + best * T::from_count(u64::from(d));
            }
        }
        g
    }

    /// `γ` such that a 1% relative violation outweighs [`Self::max_gain`].
    pub fn auto_gamma(&self) -> T {
        let g = self.max_gain();
        if g > T::zero() {
            T::lit(100.0) * g
        } else {
            T::one()
        }
    }

    pub fn gamma(&self, cfg: &PenaltyConfig) -> T {
        cfg.gamma.map_or_else(|| self.auto_gamma(), T::lit)
    }

    /// Penalized fitness `Obj + γ·Pen` of an assessed decision.
    pub fn fitness_of(&self, a: &Assessment<T>, cfg: &PenaltyConfig) -> T {
        if a.feasible {
            return a.objective;
        }
        let pen = match cfg.scale {
            PenaltyScale::Relative => a.penalty_relative,
            PenaltyScale::Absolute => a.penalty_absolute,
        };
        a.objective + self.gamma(cfg) * pen
    }
}
