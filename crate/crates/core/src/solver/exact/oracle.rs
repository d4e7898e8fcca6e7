//! Exhaustive enumeration, used only to check the branch-and-bound on tiny slots.
//!
//! Feasibility comes from the model validator and the objective from the
//! model energy function, so nothing here shares code with the fast
//! evaluators the search relies on.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::instance::SlotInstance;
use crate::model::constraints::{validate, SlotContext};
use crate::model::energy::total_energy;
use crate::model::types::{AllocationDecision, BitMatrix};
use crate::real::Real;
use crate::solver::exact::bb::ExactSolution;

const MAX_X_BITS: usize = 20;
const MAX_Y_PER_X: u64 = 1_000_000;

fn objective<T: Real>(inst: &SlotInstance<T>, x: &BitMatrix, y: &AllocationDecision) -> Result<T> {
    let e = total_energy(&inst.topology, x, y, &inst.demand, &inst.sizes, &inst.rates, &inst.bs_rates, &inst.energy)?;
    let (ni, nj, nk) = inst.dims();
    let mut v = T::zero();
    for i in 0..ni {
        for j in 0..nj {
            for k in 0..nk {
                v = v + inst.value_coef[inst.idx(i, j, k)] * T::from_count(u64::from(y.get(i, j, k)));
            }
        }
    }
    Ok(inst.backlog * e.total() - inst.v_weight * v)
}

/// Global optimum of the slot problem by brute force over every `x` and every
/// `y` within the C4/C5 bounds. `Err(Infeasible)` if nothing is feasible.
pub fn enumerate_oracle<T: Real>(inst: &SlotInstance<T>) -> Result<ExactSolution<T>> {
    let start = Instant::now();
    let (ni, nj, nk) = inst.dims();
    if ni * nk > MAX_X_BITS {
        return Err(Error::InstanceTooLarge(format!("{} caching bits", ni * nk)));
    }
    let topo = &inst.topology;
    let ctx = SlotContext {
        topology: topo,
        sizes: &inst.sizes,
        demand: &inst.demand,
        rate_samples: &inst.rate_samples,
        bs_rates: &inst.bs_rates,
        stability_margin: inst.stability_margin,
    };
    let mut best: Option<ExactSolution<T>> = None;
    let mut evaluated = 0u64;

    for mask in 0u64..(1u64 << (ni * nk)) {
        let mut x = BitMatrix::zeros(ni, nk);
        for i in 0..ni {
            for k in 0..nk {
                x.set(i, k, mask >> (i * nk + k) & 1 == 1);
            }
        }
        let storage_ok = topo.rsus.iter().enumerate().all(|(i, r)| {
            (0..nk).filter(|&k| x.get(i, k)).map(|k| inst.sizes[k]).sum::<u64>() <= r.storage_bits
        });
        if !storage_ok {
            continue;
        }

        // Free cells: (j, k, servers) where servers cache k and cover j.
        let cells: Vec<(usize, usize, Vec<usize>)> = (0..nj)
            .flat_map(|j| (0..nk).map(move |k| (j, k)))
            .filter(|&(j, k)| inst.demand.get(j, k) > 0)
            .map(|(j, k)| (j, k, topo.rsus_of(j).iter().copied().filter(|&i| x.get(i, k)).collect::<Vec<_>>()))
            .filter(|c| !c.2.is_empty())
            .collect();
        let space: f64 = cells.iter().map(|(j, k, s)| (f64::from(inst.demand.get(*j, *k)) + 1.0).powi(s.len() as i32)).product();
        if space > MAX_Y_PER_X as f64 {
            return Err(Error::InstanceTooLarge(format!("{space} allocations for one caching decision")));
        }

        let mut y = AllocationDecision::zeros(ni, nj, nk);
        let mut visit = |y: &AllocationDecision| -> Result<()> {
            evaluated += 1;
            if !validate(&x, y, &ctx).is_feasible() {
                return Ok(());
            }
            let obj = objective(inst, &x, y)?;
            if best.as_ref().is_none_or(|b| obj < b.objective) {
                best = Some(ExactSolution { x: x.clone(), y: y.clone(), objective: obj, optimal: true, nodes: 0, wall_time_s: 0.0 });
            }
            Ok(())
        };
        enumerate_cells(inst, &cells, 0, 0, &mut y, &mut visit)?;
    }

    let mut sol = best.ok_or(Error::Infeasible)?;
    sol.nodes = evaluated;
    sol.wall_time_s = start.elapsed().as_secs_f64();
    Ok(sol)
}

fn enumerate_cells<T: Real>(
    inst: &SlotInstance<T>,
    cells: &[(usize, usize, Vec<usize>)],
    cell: usize,
    server: usize,
    y: &mut AllocationDecision,
    visit: &mut dyn FnMut(&AllocationDecision) -> Result<()>,
) -> Result<()> {
    if cell == cells.len() {
        return visit(y);
    }
    let (j, k, ref servers) = cells[cell];
    if server == servers.len() {
        return enumerate_cells(inst, cells, cell + 1, 0, y, visit);
    }
    let i = servers[server];
    let left = u64::from(inst.demand.get(j, k)) - y.served(j, k);
    for v in 0..=left as u32 {
        y.set(i, j, k, v);
        enumerate_cells(inst, cells, cell, server + 1, y, visit)?;
    }
    y.set(i, j, k, 0);
    Ok(())
}
