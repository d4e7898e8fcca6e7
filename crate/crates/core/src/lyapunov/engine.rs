//! The online loop: observe, build the slot problem, solve, evaluate, update `Q`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::instance::{ObservationInputs, PenaltyConfig, SlotInstance};
use crate::lyapunov::queue::{LyapunovConfig, VirtualQueueState};
use crate::model::types::{AllocationDecision, CachingDecision, CountMatrix, RequestHistory};
use crate::real::Real;
use crate::trace::{MetricsTrace, SlotRecord};

/// A decision for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecision {
    pub x: CachingDecision,
    pub y: AllocationDecision,
    /// The solver proved the decision optimal for the slot problem.
    pub optimal: bool,
}

/// Anything that maps a slot instance to a decision.
pub trait SlotSolver<T: Real> {
    fn name(&self) -> &str;
    /// `Err(Error::Infeasible)` when no feasible decision was found.
    fn solve(&mut self, inst: &SlotInstance<T>) -> Result<SlotDecision>;
}

impl<T: Real, S: SlotSolver<T> + ?Sized> SlotSolver<T> for Box<S> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn solve(&mut self, inst: &SlotInstance<T>) -> Result<SlotDecision> {
        (**self).solve(inst)
    }
}

/// Where the demand used for the decision comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Predictor {
    /// The realized demand of the slot.
    #[default]
    Oracle,
    /// The previous slot's realized demand.
    LastValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunOptions {
    pub predictor: Predictor,
    /// Penalty used for the fitness column.
    pub penalty: PenaltyConfig,
}

#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    pub trace: MetricsTrace,
    pub queue: VirtualQueueState<T>,
}

/// Reduces `y` until no `(j,k)` exceeds `demand`, taking from the highest RSU index first.
pub fn clip_to_demand(y: &mut AllocationDecision, demand: &CountMatrix) {
    let (ni, nj, nk) = y.dims();
    for j in 0..nj {
        for k in 0..nk {
            let mut excess = y.served(j, k).saturating_sub(u64::from(demand.get(j, k)));
            for i in (0..ni).rev() {
                if excess == 0 {
                    break;
                }
                let v = u64::from(y.get(i, j, k));
                let cut = v.min(excess);
                y.set(i, j, k, (v - cut) as u32);
                excess -= cut;
            }
        }
    }
}

fn build<T: Real, E: Environment<T> + ?Sized>(
    env: &E,
    frame: &crate::environment::Frame<T>,
    demand: &CountMatrix,
    history: &RequestHistory,
    backlog: T,
    v_weight: T,
) -> Result<SlotInstance<T>> {
    let s = env.settings();
    SlotInstance::from_observation(ObservationInputs {
        topology: env.topology(),
        catalog: &frame.catalog,
        observation: &frame.observation,
        demand,
        history,
        weights: &s.weights,
        energy: &s.energy,
        noise_power_w: s.noise_power_w,
        rate_floor_bps: s.rate_floor_bps,
        backlog,
        v_weight,
        stability_margin: s.stability_margin,
    })
}

/// Runs the online caching decision loop over the whole horizon.
///
/// A solver error on a slot falls back to the empty decision and flags the slot.
pub fn ocda_run<T, E, S>(env: &mut E, solver: &mut S, cfg: &LyapunovConfig<T>, opts: &RunOptions) -> Result<RunOutput<T>>
where
    T: Real,
    E: Environment<T> + ?Sized,
    S: SlotSolver<T> + ?Sized,
{
    let topo = env.topology().clone();
    let horizon = env.horizon();
    let mut queue = VirtualQueueState::new();
    let mut records = Vec::with_capacity(horizon);
    let mut history: Option<RequestHistory> = None;
    let mut previous: Option<CountMatrix> = None;

    for _ in 0..horizon {
        let Some(frame) = env.next_frame() else { break };
        let frame = frame?;
        let realized = &frame.observation.demand;
        let hist = history.get_or_insert_with(|| RequestHistory::new(topo.num_regions(), frame.catalog.len()));
        let predicted = match opts.predictor {
            Predictor::Oracle => realized.clone(),
            Predictor::LastValue => previous.clone().unwrap_or_else(|| CountMatrix::zeros(realized.rows(), realized.cols())),
        };

        let inst = build(&*env, &frame, &predicted, hist, queue.backlog, cfg.v_weight)?;
        let start = Instant::now();
        let outcome = solver.solve(&inst);
        let wall_time_s = start.elapsed().as_secs_f64();
        let (x, mut y, optimal, infeasible) = match outcome {
            Ok(d) => (d.x, d.y, d.optimal, false),
            Err(_) => (inst.empty_caching(), inst.empty_allocation(), false, true),
        };

        let eval = if predicted == *realized {
            inst
        } else {
            clip_to_demand(&mut y, realized);
            build(&*env, &frame, realized, hist, queue.backlog, cfg.v_weight)?
        };
        let a = eval.assess(&x, &y);
        let fitness = eval.fitness_of(&a, &opts.penalty);
        let backlog = queue.backlog;
        queue.update(a.energy, a.value, cfg.energy_budget_j)?;

        let requests = realized.total();
        let served = y.total();
        records.push(SlotRecord {
            slot: frame.observation.slot,
            value: a.value.as_f64(),
            energy: a.energy.as_f64(),
            backlog: backlog.as_f64(),
            backlog_next: queue.backlog.as_f64(),
            max_delay: a.max_delay.as_f64(),
            hit_ratio: (requests > 0).then(|| served as f64 / requests as f64),
            fitness: fitness.as_f64(),
            requests,
            served,
            delay_violations: a.delay_violations as u32,
            infeasible,
            optimal,
            wall_time_s,
        });
        hist.record(frame.observation.slot, realized);
        previous = Some(realized.clone());
    }
    if records.is_empty() && horizon > 0 {
        return Err(Error::EmptyTrace);
    }
    Ok(RunOutput { trace: MetricsTrace { records }, queue })
}
