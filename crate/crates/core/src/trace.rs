//! Per-slot metrics of an online run.

use serde::{Deserialize, Serialize};

/// One slot of a run. Everything except `wall_time_s` is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub value: f64,
    pub energy: f64,
    /// `Q(t)`, the backlog the decision was made with.
    pub backlog: f64,
    /// `Q(t+1)`.
    pub backlog_next: f64,
    /// `max_j E[D_j(t)]`; infinite if a serving queue was unstable.
    pub max_delay: f64,
    /// Requests served at RSUs over all requests; `None` without demand.
    pub hit_ratio: Option<f64>,
    /// Penalized fitness `Obj + γ·Pen` of the decision.
    pub fitness: f64,
    pub requests: u64,
    pub served: u64,
    /// Regions whose expected delay exceeded their tolerance.
    pub delay_violations: u32,
    /// The solver failed and the empty decision was used.
    pub infeasible: bool,
    /// The solver proved optimality for the slot problem.
    pub optimal: bool,
    pub wall_time_s: f64,
}

/// Run-level aggregates, each the mean of the per-slot column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub slots: usize,
    pub mean_energy: f64,
    pub mean_value: f64,
    pub total_value: f64,
    pub mean_backlog: f64,
    pub final_backlog: f64,
    pub mean_delay: f64,
    pub max_delay: f64,
    /// Mean over slots with demand.
    pub mean_hit_ratio: f64,
    pub mean_fitness: f64,
    pub delay_violation_slots: usize,
    pub infeasible_slots: usize,
    pub mean_wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsTrace {
    pub records: Vec<SlotRecord>,
}

impl MetricsTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `Q(T)` after the last slot, zero for an empty trace.
    pub fn final_backlog(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.backlog_next)
    }

    pub fn summary(&self) -> RunSummary {
        let n = self.records.len();
        let mean = |f: &dyn Fn(&SlotRecord) -> f64| {
            if n == 0 {
                0.0
            } else {
                self.records.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let hits: Vec<f64> = self.records.iter().filter_map(|r| r.hit_ratio).collect();
        RunSummary {
            slots: n,
            mean_energy: mean(&|r| r.energy),
            mean_value: mean(&|r| r.value),
            total_value: self.records.iter().map(|r| r.value).sum(),
            mean_backlog: mean(&|r| r.backlog),
            final_backlog: self.final_backlog(),
            mean_delay: mean(&|r| r.max_delay),
            max_delay: self.records.iter().map(|r| r.max_delay).fold(0.0, f64::max),
            mean_hit_ratio: if hits.is_empty() { 0.0 } else { hits.iter().sum::<f64>() / hits.len() as f64 },
            mean_fitness: mean(&|r| r.fitness),
            delay_violation_slots: self.records.iter().filter(|r| r.delay_violations > 0).count(),
            infeasible_slots: self.records.iter().filter(|r| r.infeasible).count(),
            mean_wall_time_s: mean(&|r| r.wall_time_s),
        }
    }
}
