//! Depth-first branch-and-bound over the caching bits and allocation levels.
//!
//! Caching bits `x_ik` are branched first (largest datum first), then the
//! allocation levels of each triple, most negative unit coefficient first and
//! highest level first. A node is pruned when storage or a load cap is
//! exceeded, when the RSU delay terms already fixed push some region past its
//! tolerance (those terms only grow deeper in the tree), or when its bound
//! cannot beat the incumbent. The bound relaxes each RSU separately to the
//! smaller of a load-capped and a storage-capped fractional knapsack.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::SlotInstance;
use crate::lyapunov::{SlotDecision, SlotSolver};
use crate::model::types::{AllocationDecision, CachingDecision};
use crate::real::Real;
use crate::solver::exact::program::LinearizedProgram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BbConfig {
    /// Node budget; the search stops with the incumbent when it runs out.
    pub node_limit: u64,
    /// Optional wall-clock limit. Results then depend on machine speed.
    pub time_limit_s: Option<f64>,
    /// Seed the search with the constructive heuristic.
    pub warm_start: bool,
}

impl Default for BbConfig {
    /// On full-size slots, budgets up to 200k nodes returned the same incumbent as 2k.
    fn default() -> Self {
        Self { node_limit: 2_000, time_limit_s: None, warm_start: true }
    }
}

impl BbConfig {
    /// No limits: the search runs until the tree is exhausted.
    pub fn exhaustive() -> Self {
        Self { node_limit: u64::MAX, time_limit_s: None, warm_start: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution<T> {
    pub x: CachingDecision,
    pub y: AllocationDecision,
    pub objective: T,
    /// The tree was exhausted, so `objective` is the optimum.
    pub optimal: bool,
    pub nodes: u64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy)]
struct Triple {
    i: usize,
    j: usize,
    k: usize,
}

struct Search<'a, T> {
    inst: &'a SlotInstance<T>,
    cfg: BbConfig,
    start: Instant,
    x_order: Vec<(usize, usize)>,
    triples: Vec<Triple>,
    x: CachingDecision,
    /// 0 undecided, 1 fixed off, 2 fixed on.
    x_state: Vec<u8>,
    y: AllocationDecision,
    y_decided: Vec<bool>,
    storage_used: Vec<u64>,
    load: Vec<u64>,
    link_bits: Vec<u64>,
    served: Vec<u32>,
    committed: T,
    best: Option<(CachingDecision, AllocationDecision, T)>,
    nodes: u64,
    exhausted: bool,
}

impl<'a, T: Real> Search<'a, T> {
    fn new(inst: &'a SlotInstance<T>, cfg: BbConfig) -> Self {
        let (ni, nj, nk) = inst.dims();
        let topo = &inst.topology;
        let mut x_order: Vec<(usize, usize)> = Vec::new();
        for i in 0..ni {
            for k in 0..nk {
                if topo.regions_of(i).iter().any(|&j| inst.demand.get(j, k) > 0) {
                    x_order.push((i, k));
                }
            }
        }
        x_order.sort_by(|a, b| inst.sizes[b.1].cmp(&inst.sizes[a.1]).then(a.cmp(b)));
        let mut triples = Vec::new();
        for i in 0..ni {
            for &j in topo.regions_of(i) {
                for k in 0..nk {
                    if inst.demand.get(j, k) > 0 {
                        triples.push(Triple { i, j, k });
                    }
                }
            }
        }
        triples.sort_by(|a, b| {
            inst.unit_coef(a.i, a.j, a.k)
                .partial_cmp(&inst.unit_coef(b.i, b.j, b.k))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then((a.i, a.j, a.k).cmp(&(b.i, b.j, b.k)))
        });
        let mut x_state = vec![1u8; ni * nk];
        for &(i, k) in &x_order {
            x_state[i * nk + k] = 0;
        }
        Self {
            inst,
            cfg,
            start: Instant::now(),
            x_order,
            triples,
            x: inst.empty_caching(),
            x_state,
            y: inst.empty_allocation(),
            y_decided: Vec::new(),
            storage_used: vec![0; ni],
            load: vec![0; ni],
            link_bits: vec![0; ni * nj],
            served: vec![0; nj * nk],
            committed: inst.constant(),
            best: None,
            nodes: 0,
            exhausted: true,
        }
    }

    fn out_of_budget(&mut self) -> bool {
        let over = self.nodes >= self.cfg.node_limit
            || self.cfg.time_limit_s.is_some_and(|lim| self.start.elapsed().as_secs_f64() > lim);
        if over {
            self.exhausted = false;
        }
        over
    }

    fn incumbent(&self) -> Option<T> {
        self.best.as_ref().map(|b| b.2)
    }

    fn improves(&self, bound: T) -> bool {
        match self.incumbent() {
            None => true,
            Some(best) => bound < best - T::lit(1e-12) * (T::one() + best.abs()),
        }
    }

    /// Optimistic objective of the subtree.
    fn bound(&self) -> T {
        let inst = self.inst;
        let (ni, _, nk) = inst.dims();
        let mut gain_total = T::zero();
        for i in 0..ni {
            let room = inst.rsu_capacity(i).saturating_sub(self.load[i]);
            let mut units: Vec<(T, u64)> = Vec::new();
            let mut fixed_gain = T::zero();
            let mut items: Vec<(T, u64)> = Vec::new();
            for k in 0..nk {
                let state = self.x_state[i * nk + k];
                if state == 1 {
                    continue;
                }
                let mut item_gain = T::zero();
                for &j in inst.topology.regions_of(i) {
                    let d = inst.demand.get(j, k);
                    if d == 0 || self.y_decided_at(i, j, k) {
                        continue;
                    }
                    let g = -inst.unit_coef(i, j, k);
                    if g <= T::zero() {
                        continue;
                    }
                    let rem = u64::from(d - self.served[j * nk + k]);
                    if rem == 0 {
                        continue;
                    }
                    units.push((g, rem));
                    item_gain = item_gain + g * T::from_count(rem);
                }
                if state == 2 {
                    fixed_gain = fixed_gain + item_gain;
                } else {
                    let net = item_gain - inst.cache_coef(i, k);
                    if net > T::zero() {
                        items.push((net, inst.sizes[k]));
                    }
                }
            }
            units.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
            let mut left = room;
            let mut by_load = T::zero();
            for (g, n) in units {
                if left == 0 {
                    break;
                }
                let take = n.min(left);
                by_load = by_load + g * T::from_count(take);
                left -= take;
            }
            items.sort_by(|a, b| {
                let da = a.0 / T::from_count(a.1);
                let db = b.0 / T::from_count(b.1);
                db.partial_cmp(&da).unwrap_or(std::cmp::Ordering::Equal)
            });
            let mut space = T::from_count(inst.topology.rsus[i].storage_bits.saturating_sub(self.storage_used[i]));
            let mut by_storage = fixed_gain;
            for (net, s) in items {
                let sf = T::from_count(s);
                if space <= T::zero() {
                    break;
                }
                if sf <= space {
                    by_storage = by_storage + net;
                    space = space - sf;
                } else {
                    by_storage = by_storage + net * space / sf;
                    space = T::zero();
                }
            }
            gain_total = gain_total + by_load.min(by_storage);
        }
        self.committed - gain_total
    }

    fn y_decided_at(&self, i: usize, j: usize, k: usize) -> bool {
        self.y_decided.get(self.inst.idx(i, j, k)).copied().unwrap_or(false)
    }

    /// Lower bound on `E[D_j]` from the fixed RSU terms only.
    fn region_hopeless(&self, j: usize) -> bool {
        let inst = self.inst;
        let nj = inst.topology.num_regions();
        if inst.demand.row_total(j) == 0 {
            return false;
        }
        let mut active = Vec::new();
        for &i in inst.topology.rsus_of(j) {
            let bits = self.link_bits[i * nj + j];
            if bits == 0 {
                continue;
            }
            let mu = inst.topology.rsus[i].service_rate;
            let load = T::from_count(self.load[i]);
            if load >= mu {
                return true;
            }
            active.push((T::one() / (mu - load), T::from_count(bits), inst.inverse_rate_samples(i, j)));
        }
        if active.is_empty() {
            return false;
        }
        let mut sum = T::zero();
        for s in 0..inst.draws() {
            let mut worst = T::zero();
            for &(l, bits, inv) in &active {
                worst = worst.max(l + bits * inv[s]);
            }
            sum = sum + worst;
        }
        sum / T::from_count(inst.draws() as u64) > inst.topology.regions[j].delay_tolerance_s
    }

    fn branch_x(&mut self, depth: usize) {
        if self.out_of_budget() {
            return;
        }
        self.nodes += 1;
        if depth == self.x_order.len() {
            self.y_decided = vec![false; self.inst.value_coef.len()];
            self.branch_y(0);
            return;
        }
        if !self.improves(self.bound()) {
            return;
        }
        let (i, k) = self.x_order[depth];
        let nk = self.inst.sizes.len();
        let size = self.inst.sizes[k];
        if self.storage_used[i] + size <= self.inst.topology.rsus[i].storage_bits {
            self.x_state[i * nk + k] = 2;
            self.x.set(i, k, true);
            self.storage_used[i] += size;
            let a = self.inst.cache_coef(i, k);
            self.committed = self.committed + a;
            self.branch_x(depth + 1);
            self.committed = self.committed - a;
            self.storage_used[i] -= size;
            self.x.set(i, k, false);
        }
        self.x_state[i * nk + k] = 1;
        self.branch_x(depth + 1);
        self.x_state[i * nk + k] = 0;
    }

    fn branch_y(&mut self, depth: usize) {
        if self.out_of_budget() {
            return;
        }
        self.nodes += 1;
        let inst = self.inst;
        let (_, nj, nk) = inst.dims();
        // Skip triples whose datum is not cached.
        let mut depth = depth;
        while depth < self.triples.len() {
            let t = self.triples[depth];
            if self.x.get(t.i, t.k) {
                break;
            }
            depth += 1;
        }
        if depth == self.triples.len() {
            self.leaf();
            return;
        }
        if !self.improves(self.bound()) {
            return;
        }
        let Triple { i, j, k } = self.triples[depth];
        let at = inst.idx(i, j, k);
        let rem = inst.demand.get(j, k) - self.served[j * nk + k];
        let room = inst.rsu_capacity(i).saturating_sub(self.load[i]);
        let top = u64::from(rem).min(room) as u32;
        let c = inst.unit_coef(i, j, k);
        let levels: Vec<u32> = if c < T::zero() { (0..=top).rev().collect() } else { (0..=top).collect() };
        self.y_decided[at] = true;
        for theta in levels {
            if theta > 0 {
                let bits = u64::from(theta) * inst.sizes[k];
                self.y.set(i, j, k, theta);
                self.load[i] += u64::from(theta);
                self.link_bits[i * nj + j] += bits;
                self.served[j * nk + k] += theta;
                let delta = c * T::from_count(u64::from(theta));
                self.committed = self.committed + delta;
                let hopeless = inst.topology.regions_of(i).iter().any(|&r| self.region_hopeless(r));
                if !hopeless {
                    self.branch_y(depth + 1);
                }
                self.committed = self.committed - delta;
                self.served[j * nk + k] -= theta;
                self.link_bits[i * nj + j] -= bits;
                self.load[i] -= u64::from(theta);
                self.y.set(i, j, k, 0);
            } else {
                self.branch_y(depth + 1);
            }
            if !self.exhausted {
                break;
            }
        }
        self.y_decided[at] = false;
    }

    fn leaf(&mut self) {
        let inst = self.inst;
        let (ni, nj, nk) = inst.dims();
        // A cached copy serving nothing is dominated by the sibling without it.
        for i in 0..ni {
            for k in 0..nk {
                if self.x.get(i, k) && (0..nj).all(|j| self.y.get(i, j, k) == 0) {
                    return;
                }
            }
        }
        if !self.improves(self.committed) {
            return;
        }
        if inst.assess(&self.x, &self.y).feasible {
            self.best = Some((self.x.clone(), self.y.clone(), self.committed));
        }
    }
}

/// Constructive warm start. Units are added most profitable first while
/// storage and load caps allow and the RSU side of every region the RSU
/// serves stays within tolerance; a full delay may stay above tolerance only
/// if the unit does not make it worse (moving load off an overloaded base
/// station). If the result is infeasible, costly units are added the same way
/// until it is not. Objective ties go to the unit that saves more energy.
/// Cached copies serving nothing are dropped at the end.
pub fn constructive<T: Real>(inst: &SlotInstance<T>) -> (CachingDecision, AllocationDecision) {
    let nk = inst.sizes.len();
    let topo = &inst.topology;
    let mut triples: Vec<(T, usize, usize, usize)> = Vec::new();
    for i in 0..topo.num_rsus() {
        for &j in topo.regions_of(i) {
            for k in 0..nk {
                if inst.demand.get(j, k) > 0 {
                    triples.push((inst.unit_coef(i, j, k), i, j, k));
                }
            }
        }
    }
    let by_index = |a: &(T, usize, usize, usize), b: &(T, usize, usize, usize)| (a.1, a.2, a.3).cmp(&(b.1, b.2, b.3));
    // Objective first, then energy, so ties go to the cheaper unit.
    let energy = |t: &(T, usize, usize, usize)| inst.unit_energy(t.1, t.2, t.3);
    triples.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(energy(a).partial_cmp(&energy(b)).unwrap_or(std::cmp::Ordering::Equal))
            .then(by_index(a, b))
    });
    let first = fill(inst, &triples);
    let first_ok = inst.assess(&first.0, &first.1);
    if first_ok.feasible {
        return first;
    }
    // Second attempt: take units in order of how much link time they remove
    // from the base station path, so overloaded regions are relieved first.
    let relief = |&(_, i, j, k): &(T, usize, usize, usize)| {
        T::from_count(inst.sizes[k]) * (T::one() / inst.bs_rates[j] - T::one() / inst.rates.get(i, j))
    };
    let mut relieved = triples.clone();
    relieved.sort_by(|a, b| relief(b).partial_cmp(&relief(a)).unwrap_or(std::cmp::Ordering::Equal).then(by_index(a, b)));
    let second = fill(inst, &relieved);
    if inst.assess(&second.0, &second.1).feasible {
        second
    } else {
        first
    }
}

fn fill<T: Real>(inst: &SlotInstance<T>, triples: &[(T, usize, usize, usize)]) -> (CachingDecision, AllocationDecision) {
    let topo = &inst.topology;
    let mut x = inst.empty_caching();
    let mut y = inst.empty_allocation();
    let mut storage: Vec<u64> = vec![0; topo.num_rsus()];
    let inf = T::infinity();
    let mut profile = inst.load_profile(&y);

    let feasible = |x: &CachingDecision, y: &AllocationDecision| inst.assess(x, y).feasible;
    'passes: for pass in 0..2 {
        if pass == 1 && feasible(&x, &y) {
            break;
        }
        for &(c, i, j, k) in triples {
            // Units that leave the objective unchanged but save energy count as gains.
            let gain = c < T::zero() || (c == T::zero() && inst.unit_energy(i, j, k) < T::zero());
            if (pass == 0) != gain {
                continue;
            }
            loop {
                if y.served(j, k) >= u64::from(inst.demand.get(j, k)) || y.rsu_load(i) >= inst.rsu_capacity(i) {
                    break;
                }
                let newly_cached = !x.get(i, k);
                if newly_cached {
                    let fits = storage[i] + inst.sizes[k] <= topo.rsus[i].storage_bits;
                    let room = (u64::from(inst.demand.get(j, k)) - y.served(j, k)).min(inst.rsu_capacity(i) - y.rsu_load(i));
                    let total = c * T::from_count(room) + inst.cache_coef(i, k);
                    let worth = pass == 1 || total < T::zero() || (total == T::zero() && gain);
                    if !fits || !worth {
                        break;
                    }
                }
                y.set(i, j, k, y.get(i, j, k) + 1);
                let after = inst.load_profile(&y);
                let ok = topo.regions_of(i).iter().all(|&r| {
                    let tol = topo.regions[r].delay_tolerance_s;
                    if !inst.rsu_side_delay(&after, r).is_some_and(|d| d <= tol) {
                        return false;
                    }
                    let full = inst.expected_delay(&after, r).unwrap_or(inf);
                    full <= tol || full <= inst.expected_delay(&profile, r).unwrap_or(inf)
                });
                if !ok {
                    y.set(i, j, k, y.get(i, j, k) - 1);
                    break;
                }
                profile = after;
                if newly_cached {
                    x.set(i, k, true);
                    storage[i] += inst.sizes[k];
                }
                if pass == 1 && feasible(&x, &y) {
                    break 'passes;
                }
            }
        }
    }
    inst.prune_unused(&mut x, &y);
    (x, y)
}

/// Exact solve of the slot problem; `Err(Infeasible)` when no feasible decision exists
/// (or none was found within the budget).
pub fn solve_bb<T: Real>(inst: &SlotInstance<T>, cfg: &BbConfig) -> Result<ExactSolution<T>> {
    let mut search = Search::new(inst, *cfg);
    if cfg.warm_start {
        let (x, y) = constructive(inst);
        let a = inst.assess(&x, &y);
        if a.feasible {
            search.best = Some((x, y, a.objective));
        }
    }
    search.branch_x(0);
    let wall_time_s = search.start.elapsed().as_secs_f64();
    let exhausted = search.exhausted;
    match search.best {
        Some((x, y, objective)) => Ok(ExactSolution { x, y, objective, optimal: exhausted, nodes: search.nodes, wall_time_s }),
        None => Err(Error::Infeasible),
    }
}

/// Solves a linearized program by searching its binary structure.
pub fn solve_program<T: Real>(prog: &LinearizedProgram<T>, cfg: &BbConfig) -> Result<ExactSolution<T>> {
    solve_bb(&prog.instance, cfg)
}

/// Per-slot solver for the online loop.
#[derive(Debug, Clone, Default)]
pub struct ExactSolver {
    pub config: BbConfig,
}

impl ExactSolver {
    pub fn new(config: BbConfig) -> Self {
        Self { config }
    }
}

impl<T: Real> SlotSolver<T> for ExactSolver {
    fn name(&self) -> &str {
        "ocda-exact"
    }

    fn solve(&mut self, inst: &SlotInstance<T>) -> Result<SlotDecision> {
        let s = solve_bb(inst, &self.config)?;
        Ok(SlotDecision { x: s.x, y: s.y, optimal: s.optimal })
    }
}
