//! Greedy and random caching baselines. Both ignore the energy budget.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::instance::SlotInstance;
use crate::lyapunov::{SlotDecision, SlotSolver};
use crate::model::types::{AllocationDecision, CachingDecision};
use crate::real::Real;
use crate::solver::bqpso::allocate_y;

/// Removes allocated units from RSUs whose load exceeds `floor(mu - eps)`,
/// lowest unit value first, ties by lowest `(j, k)`. Removed requests fall to
/// the base station.
pub fn stability_trim<T: Real>(inst: &SlotInstance<T>, y: &mut AllocationDecision) {
    let (ni, nj, nk) = inst.dims();
    for i in 0..ni {
        let cap = inst.rsu_capacity(i);
        let mut excess = y.rsu_load(i).saturating_sub(cap);
        if excess == 0 {
            continue;
        }
        let mut units: Vec<(T, usize, usize)> = (0..nj)
            .flat_map(|j| (0..nk).map(move |k| (j, k)))
            .filter(|&(j, k)| y.get(i, j, k) > 0)
            .map(|(j, k)| (inst.value_coef[inst.idx(i, j, k)], j, k))
            .collect();
        units.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then((a.1, a.2).cmp(&(b.1, b.2))));
        for (_, j, k) in units {
            if excess == 0 {
                break;
            }
            let have = y.get(i, j, k);
            let drop = u64::from(have).min(excess) as u32;
            y.set(i, j, k, have - drop);
            excess -= u64::from(drop);
        }
    }
}

/// Per RSU, caches data in decreasing order of value density
/// `Σ_j c_ijk d_jk / s_k` until storage is full, skipping items that no longer
/// fit. Ties (in particular among data without value) go to the higher demand
/// density `Σ_j d_jk / s_k`, then to the lower index; unrequested data are
/// never cached.
pub fn greedy_caching<T: Real>(inst: &SlotInstance<T>) -> (CachingDecision, AllocationDecision) {
    let (ni, _, nk) = inst.dims();
    let mut x = inst.empty_caching();
    for i in 0..ni {
        let regions = inst.topology.regions_of(i);
        let mut ranked: Vec<(T, T, usize)> = (0..nk)
            .filter_map(|k| {
                let requests: u64 = regions.iter().map(|&j| u64::from(inst.demand.get(j, k))).sum();
                if requests == 0 {
                    return None;
                }
                let value: T = regions
                    .iter()
                    .map(|&j| inst.value_coef[inst.idx(i, j, k)] * T::from_count(u64::from(inst.demand.get(j, k))))
                    .sum();
                let size = T::from_count(inst.sizes[k]);
                Some((value / size, T::from_count(requests) / size, k))
            })
            .collect();
        let desc = |a: T, b: T| b.partial_cmp(&a).unwrap_or(std::cmp::Ordering::Equal);
        ranked.sort_by(|a, b| desc(a.0, b.0).then(desc(a.1, b.1)).then(a.2.cmp(&b.2)));
        let mut free = inst.topology.rsus[i].storage_bits;
        for (_, _, k) in ranked {
            if inst.sizes[k] <= free {
                free -= inst.sizes[k];
                x.set(i, k, true);
            }
        }
    }
    let mut y = allocate_y(&x, inst);
    stability_trim(inst, &mut y);
    (x, y)
}

/// Cached data per RSU in insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FifoCacheState {
    pub queues: Vec<VecDeque<usize>>,
    pub occupied_bits: Vec<u64>,
}

impl FifoCacheState {
    pub fn new(rsus: usize) -> Self {
        Self { queues: vec![VecDeque::new(); rsus], occupied_bits: vec![0; rsus] }
    }

    pub fn contains(&self, i: usize, k: usize) -> bool {
        self.queues[i].contains(&k)
    }

    fn evict_to_fit<T: Real>(&mut self, inst: &SlotInstance<T>, i: usize, extra: u64) {
        let cap = inst.topology.rsus[i].storage_bits;
        while self.occupied_bits[i] + extra > cap {
            match self.queues[i].pop_front() {
                Some(old) => self.occupied_bits[i] -= inst.sizes[old],
                None => break,
            }
        }
    }

    /// Re-reads sizes (data may have been regenerated) and evicts the oldest
    /// entries of any RSU that no longer fits.
    pub fn refresh<T: Real>(&mut self, inst: &SlotInstance<T>) {
        let (ni, _, nk) = inst.dims();
        if self.queues.len() != ni {
            *self = Self::new(ni);
        }
        for i in 0..ni {
            self.queues[i].retain(|&k| k < nk);
            self.occupied_bits[i] = self.queues[i].iter().map(|&k| inst.sizes[k]).sum();
            self.evict_to_fit(inst, i, 0);
        }
    }

    pub fn caching(&self, rsus: usize, data: usize) -> CachingDecision {
        let mut x = CachingDecision::zeros(rsus, data);
        for (i, q) in self.queues.iter().enumerate() {
            for &k in q {
                x.set(i, k, true);
            }
        }
        x
    }
}

/// Every requested datum not already held by a covering RSU is inserted at a
/// uniformly chosen covering RSU large enough to hold it, evicting the oldest
/// entries first. Requests are visited by region, then datum.
pub fn random_caching<T: Real, R: Rng + ?Sized>(
    inst: &SlotInstance<T>,
    mut state: FifoCacheState,
    rng: &mut R,
) -> (CachingDecision, AllocationDecision, FifoCacheState) {
    let (ni, nj, nk) = inst.dims();
    state.refresh(inst);
    for j in 0..nj {
        let covering = inst.topology.rsus_of(j);
        for k in 0..nk {
            if inst.demand.get(j, k) == 0 || covering.iter().any(|&i| state.contains(i, k)) {
                continue;
            }
            let fits: Vec<usize> =
                covering.iter().copied().filter(|&i| inst.topology.rsus[i].storage_bits >= inst.sizes[k]).collect();
            if fits.is_empty() {
                continue;
            }
            let i = fits[rng.random_range(0..fits.len())];
            state.evict_to_fit(inst, i, inst.sizes[k]);
            state.queues[i].push_back(k);
            state.occupied_bits[i] += inst.sizes[k];
        }
    }
    let x = state.caching(ni, nk);
    let mut y = allocate_y(&x, inst);
    stability_trim(inst, &mut y);
    (x, y, state)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GreedySolver;

impl<T: Real> SlotSolver<T> for GreedySolver {
    fn name(&self) -> &str {
        "greedy"
    }

    fn solve(&mut self, inst: &SlotInstance<T>) -> Result<SlotDecision> {
        let (x, y) = greedy_caching(inst);
        Ok(SlotDecision { x, y, optimal: false })
    }
}

#[derive(Debug, Clone)]
pub struct RandomSolver {
    state: FifoCacheState,
    rng: ChaCha8Rng,
}

impl RandomSolver {
    pub fn new(seed: u64) -> Self {
        Self { state: FifoCacheState::default(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn state(&self) -> &FifoCacheState {
        &self.state
    }
}

impl<T: Real> SlotSolver<T> for RandomSolver {
    fn name(&self) -> &str {
        "random"
    }

    fn solve(&mut self, inst: &SlotInstance<T>) -> Result<SlotDecision> {
        let (x, y, state) = random_caching(inst, std::mem::take(&mut self.state), &mut self.rng);
        self.state = state;
        Ok(SlotDecision { x, y, optimal: false })
    }
}
