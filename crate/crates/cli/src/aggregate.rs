use serde::{Deserialize, Serialize};
use vcache::trace::RunSummary;
use vcache::{Error, Result};

use crate::experiment::RunResult;

/// Mean and sample standard deviation across seeds of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub solver: String,
    pub v_weight: f64,
    pub budget_j: f64,
    pub congestion: String,
    pub seeds: usize,
    pub slots: usize,
    pub energy_mean: f64,
    pub energy_std: f64,
    pub value_mean: f64,
    pub value_std: f64,
    pub backlog_mean: f64,
    pub backlog_std: f64,
    pub final_backlog_mean: f64,
    pub final_backlog_std: f64,
    pub delay_mean: f64,
    pub delay_std: f64,
    pub max_delay_mean: f64,
    pub max_delay_std: f64,
    pub hit_ratio_mean: f64,
    pub hit_ratio_std: f64,
    pub fitness_mean: f64,
    pub fitness_std: f64,
    pub violation_slots_mean: f64,
    pub violation_slots_std: f64,
    pub infeasible_slots_mean: f64,
    pub infeasible_slots_std: f64,
    /// Rank of the solver among solvers sharing 𝒱, budget and congestion,
    /// e.g. `energy=1;delay=2;hit=1;value=3`. Rank 1 is best.
    pub ranking: String,
}

/// Mean and sample standard deviation; one sample has zero spread.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Solver wall time per configuration. Kept apart from [`SummaryRow`] so the
/// deterministic summary stays byte-identical across repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub solver: String,
    pub v_weight: f64,
    pub budget_j: f64,
    pub congestion: String,
    pub seeds: usize,
    pub wall_time_mean: f64,
    pub wall_time_std: f64,
    /// Slowest single slot over all seeds.
    pub wall_time_max: f64,
}

/// Groups runs by configuration in first-seen order, rejecting mixed horizons.
fn group(runs: &[RunResult]) -> Result<(usize, Vec<(&RunResult, Vec<&RunResult>)>)> {
    let first = runs.first().ok_or(Error::EmptyTrace)?;
    let horizon = first.trace.len();
    if let Some(r) = runs.iter().find(|r| r.trace.len() != horizon) {
        return Err(Error::MixedHorizon(horizon, r.trace.len()));
    }
    let mut groups: Vec<(&RunResult, Vec<&RunResult>)> = Vec::new();
    for run in runs {
        let k = &run.key;
        let same = |g: &RunResult| {
            g.key.solver == k.solver
                && g.key.v_weight == k.v_weight
                && g.key.budget_j == k.budget_j
                && g.key.congestion == k.congestion
        };
        match groups.iter_mut().find(|(g, _)| same(g)) {
            Some((_, members)) => members.push(run),
            None => groups.push((run, vec![run])),
        }
    }
    Ok((horizon, groups))
}

pub fn aggregate_timing(runs: &[RunResult]) -> Result<Vec<TimingRow>> {
    let (_, groups) = group(runs)?;
    Ok(groups
        .iter()
        .map(|(g, members)| {
            let per_run: Vec<f64> = members.iter().map(|r| r.trace.summary().mean_wall_time_s).collect();
            let (wall_time_mean, wall_time_std) = mean_std(&per_run);
            let wall_time_max = members
                .iter()
                .flat_map(|r| r.trace.records.iter().map(|s| s.wall_time_s))
                .fold(0.0, f64::max);
            TimingRow {
                solver: g.key.solver.name().into(),
                v_weight: g.key.v_weight,
                budget_j: g.key.budget_j,
                congestion: g.key.congestion.name().into(),
                seeds: members.len(),
                wall_time_mean,
                wall_time_std,
                wall_time_max,
            }
        })
        .collect())
}

/// Summarizes each configuration across its seeds, in first-seen order.
pub fn aggregate(runs: &[RunResult]) -> Result<Vec<SummaryRow>> {
    let (horizon, members) = group(runs)?;
    let groups: Vec<(&RunResult, Vec<RunSummary>)> =
        members.into_iter().map(|(g, m)| (g, m.iter().map(|r| r.trace.summary()).collect())).collect();

    let mut rows: Vec<SummaryRow> = groups
        .iter()
        .map(|(g, s)| {
            let col = |f: fn(&RunSummary) -> f64| mean_std(&s.iter().map(f).collect::<Vec<_>>());
            let (energy_mean, energy_std) = col(|r| r.mean_energy);
            let (value_mean, value_std) = col(|r| r.mean_value);
            let (backlog_mean, backlog_std) = col(|r| r.mean_backlog);
            let (final_backlog_mean, final_backlog_std) = col(|r| r.final_backlog);
            let (delay_mean, delay_std) = col(|r| r.mean_delay);
            let (max_delay_mean, max_delay_std) = col(|r| r.max_delay);
            let (hit_ratio_mean, hit_ratio_std) = col(|r| r.mean_hit_ratio);
            let (fitness_mean, fitness_std) = col(|r| r.mean_fitness);
            let (violation_slots_mean, violation_slots_std) = col(|r| r.delay_violation_slots as f64);
            let (infeasible_slots_mean, infeasible_slots_std) = col(|r| r.infeasible_slots as f64);
            SummaryRow {
                solver: g.key.solver.name().into(),
                v_weight: g.key.v_weight,
                budget_j: g.key.budget_j,
                congestion: g.key.congestion.name().into(),
                seeds: s.len(),
                slots: horizon,
                energy_mean,
                energy_std,
                value_mean,
                value_std,
                backlog_mean,
                backlog_std,
                final_backlog_mean,
                final_backlog_std,
                delay_mean,
                delay_std,
                max_delay_mean,
                max_delay_std,
                hit_ratio_mean,
                hit_ratio_std,
                fitness_mean,
                fitness_std,
                violation_slots_mean,
                violation_slots_std,
                infeasible_slots_mean,
                infeasible_slots_std,
                ranking: String::new(),
            }
        })
        .collect();
    rank(&mut rows);
    Ok(rows)
}

/// Competition ranking: ties share the better rank.
fn rank(rows: &mut [SummaryRow]) {
    type Metric = (&'static str, fn(&SummaryRow) -> f64, bool);
    const METRICS: [Metric; 4] = [
        ("energy", |r| r.energy_mean, false),
        ("delay", |r| r.max_delay_mean, false),
        ("hit", |r| r.hit_ratio_mean, true),
        ("value", |r| r.value_mean, true),
    ];
    let labels: Vec<String> = (0..rows.len())
        .map(|a| {
            let peers: Vec<&SummaryRow> = rows
                .iter()
                .filter(|b| {
                    b.v_weight == rows[a].v_weight && b.budget_j == rows[a].budget_j && b.congestion == rows[a].congestion
                })
                .collect();
            METRICS
                .iter()
                .map(|(name, f, higher_better)| {
                    let me = f(&rows[a]);
                    let better = peers.iter().filter(|p| if *higher_better { f(p) > me } else { f(p) < me }).count();
                    format!("{name}={}", better + 1)
                })
                .collect::<Vec<_>>()
                .join(";")
        })
        .collect();
    for (r, l) in rows.iter_mut().zip(labels) {
        r.ranking = l;
    }
}
