use std::fmt;

use crate::model::delay::expected_response_latency;
use crate::model::types::{AllocationDecision, CachingDecision, CountMatrix, Topology};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintId {
    /// Expected response latency within the region's tolerance.
    C2,
    /// RSU storage capacity.
    C3,
    /// Serving requires caching.
    C4,
    /// Allocation bounded by demand.
    C5,
    /// Arrival load below the service rate minus the stability margin.
    Stability,
    /// Allocation only along covered links.
    Coverage,
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConstraintId::C2 => "C2",
            ConstraintId::C3 => "C3",
            ConstraintId::C4 => "C4",
            ConstraintId::C5 => "C5",
            ConstraintId::Stability => "stability",
            ConstraintId::Coverage => "coverage",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: ConstraintId,
    /// `[i]` for C3/stability (`[]` for the BS), `[j]` for C2, `[i, j, k]` for C4,
    /// `[j, k]` for C5, `[i, j]` for coverage.
    pub indices: Vec<usize>,
    /// Amount by which the left-hand side exceeds the bound (may be infinite for C2).
    pub slack: f64,
    /// The bound itself, for relative penalties.
    pub bound: f64,
}

impl Violation {
    pub fn relative(&self) -> f64 {
        if self.bound > 0.0 {
            self.slack / self.bound
        } else {
            self.slack
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintReport {
    pub violations: Vec<Violation>,
}

impl ConstraintReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, id: ConstraintId) -> usize {
        self.violations.iter().filter(|v| v.constraint == id).count()
    }

    pub fn has(&self, id: ConstraintId) -> bool {
        self.count(id) > 0
    }
}

/// Inputs needed to check a decision pair against one slot.
#[derive(Debug, Clone, Copy)]
pub struct SlotContext<'a, T> {
    pub topology: &'a Topology<T>,
    pub sizes: &'a [u64],
    pub demand: &'a CountMatrix,
    /// Per-draw RSU rates `[i][j][s]`.
    pub rate_samples: &'a [Vec<Vec<T>>],
    pub bs_rates: &'a [T],
    /// Loads must stay at or below `μ − margin`.
    pub stability_margin: T,
}

/// Lists every violated instance of C2–C5, queue stability and coverage.
pub fn validate<T: Real>(x: &CachingDecision, y: &AllocationDecision, ctx: &SlotContext<'_, T>) -> ConstraintReport {
    let topo = ctx.topology;
    let (ni, nj, nk) = y.dims();
    let mut out = Vec::new();
    let mut push = |constraint, indices, slack: f64, bound: f64| {
        out.push(Violation { constraint, indices, slack, bound });
    };

    let mut coverage_ok = true;
    for i in 0..ni {
        for j in 0..nj {
            let total = y.link_total(i, j);
            if total > 0 && !topo.covers(i, j) {
                coverage_ok = false;
                push(ConstraintId::Coverage, vec![i, j], total as f64, 0.0);
            }
        }
    }

    for (i, rsu) in topo.rsus.iter().enumerate() {
        let used: u64 = (0..nk).filter(|&k| x.get(i, k)).map(|k| ctx.sizes[k]).sum();
        if used > rsu.storage_bits {
            push(ConstraintId::C3, vec![i], (used - rsu.storage_bits) as f64, rsu.storage_bits as f64);
        }
    }

    for i in 0..ni {
        for j in 0..nj {
            for k in 0..nk {
                let v = y.get(i, j, k);
                if v > 0 && !x.get(i, k) {
                    push(ConstraintId::C4, vec![i, j, k], f64::from(v), 0.0);
                }
            }
        }
    }

    let mut demand_ok = true;
    let mut bs_load = 0u64;
    for j in 0..nj {
        for k in 0..nk {
            let served = y.served(j, k);
            let d = u64::from(ctx.demand.get(j, k));
            if served > d {
                demand_ok = false;
                push(ConstraintId::C5, vec![j, k], (served - d) as f64, d as f64);
            } else {
                bs_load += d - served;
            }
        }
    }

    let margin = ctx.stability_margin;
    for (i, rsu) in topo.rsus.iter().enumerate() {
        let load = T::from_count(y.rsu_load(i));
        let cap = rsu.service_rate - margin;
        if load > cap {
            push(ConstraintId::Stability, vec![i], (load - cap).as_f64(), rsu.service_rate.as_f64());
        }
    }
    let bs_cap = topo.base_station.service_rate - margin;
    let bs_stable = T::from_count(bs_load) <= bs_cap;
    if !bs_stable {
        push(
            ConstraintId::Stability,
            vec![],
            (T::from_count(bs_load) - bs_cap).as_f64(),
            topo.base_station.service_rate.as_f64(),
        );
    }

    if coverage_ok && demand_ok {
        for (j, region) in topo.regions.iter().enumerate() {
            let delta = region.delay_tolerance_s.as_f64();
            match expected_response_latency(topo, j, y, ctx.demand, ctx.sizes, ctx.rate_samples, ctx.bs_rates[j]) {
                Ok(d) if d > region.delay_tolerance_s => push(ConstraintId::C2, vec![j], (d - region.delay_tolerance_s).as_f64(), delta),
                Ok(_) => {}
                // An unstable queue has unbounded sojourn time.
                Err(_) => push(ConstraintId::C2, vec![j], f64::INFINITY, delta),
            }
        }
    }

    ConstraintReport { violations: out }
}
