//! Virtual energy queue and the realized-path drift check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::SlotInstance;
use crate::model::types::{AllocationDecision, CachingDecision};
use crate::real::Real;

/// Trade-off weight `𝒱` and per-slot energy budget `Ē`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig<T> {
    pub v_weight: T,
    pub energy_budget_j: T,
}

impl<T: Real> Default for LyapunovConfig<T> {
    fn default() -> Self {
        Self { v_weight: T::lit(4e-3), energy_budget_j: T::lit(35.0) }
    }
}

impl<T: Real> LyapunovConfig<T> {
    pub fn new(v_weight: T, energy_budget_j: T) -> Result<Self> {
        if !(v_weight > T::zero() && energy_budget_j > T::zero()) {
            return Err(Error::InvalidConfig("v_weight and energy budget must be positive".into()));
        }
        Ok(Self { v_weight, energy_budget_j })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueRecord<T> {
    /// `Q(t)` before the update.
    pub backlog: T,
    pub energy: T,
    pub value: T,
}

/// `Q(t)` with the per-slot history of `(Q, E, V)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualQueueState<T> {
    pub backlog: T,
    pub history: Vec<QueueRecord<T>>,
}

impl<T: Real> Default for VirtualQueueState<T> {
    fn default() -> Self {
        Self { backlog: T::zero(), history: Vec::new() }
    }
}

/// `Q(t+1) = max{Q(t) + E(t) − Ē, 0}`.
pub fn next_backlog<T: Real>(backlog: T, energy: T, budget: T) -> T {
    (backlog + energy - budget).max(T::zero())
}

impl<T: Real> VirtualQueueState<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies one slot of the queue recurrence and appends to the history.
    pub fn update(&mut self, energy: T, value: T, budget: T) -> Result<()> {
        if energy < T::zero() || energy.is_nan() {
            return Err(Error::NegativeEnergy(energy.as_f64()));
        }
        self.history.push(QueueRecord { backlog: self.backlog, energy, value });
        self.backlog = next_backlog(self.backlog, energy, budget);
        Ok(())
    }
}

/// Functional form of [`VirtualQueueState::update`].
pub fn update_queue<T: Real>(state: &VirtualQueueState<T>, energy: T, budget: T) -> Result<VirtualQueueState<T>> {
    let mut next = state.clone();
    next.update(energy, T::zero(), budget)?;
    Ok(next)
}

/// `Q(t)·E(t) − 𝒱·V(t)`, from the energy and value evaluators.
pub fn dpp_objective<T: Real>(inst: &SlotInstance<T>, x: &CachingDecision, y: &AllocationDecision) -> T {
    inst.backlog * inst.energy(x, y) - inst.v_weight * inst.value(y)
}

/// `ℬ = (E_max² + Ē²)/2` with `E_max` taken over the realized trace.
pub fn drift_bound_constant<T: Real>(history: &[QueueRecord<T>], budget: T) -> Result<T> {
    let e_max = history.iter().map(|r| r.energy).reduce(T::max).ok_or(Error::EmptyTrace)?;
    Ok((e_max * e_max + budget * budget) * T::lit(0.5))
}

/// Checks the queue recurrence, then `½[Q(t+1)² − Q(t)²] ≤ ℬ + Q(t)(E(t) − Ē)`
/// on every slot. `final_backlog` is `Q(T)` after the last record.
pub fn check_drift_bound<T: Real>(history: &[QueueRecord<T>], final_backlog: T, budget: T) -> Result<Vec<bool>> {
    let b = drift_bound_constant(history, budget)?;
    let tol = T::lit(1e-9);
    let next_of = |t: usize| history.get(t + 1).map_or(final_backlog, |r| r.backlog);
    for (t, r) in history.iter().enumerate() {
        let expect = next_backlog(r.backlog, r.energy, budget);
        if (next_of(t) - expect).abs() > tol * (T::one() + expect.abs()) || r.backlog < T::zero() {
            return Err(Error::InconsistentTrace { slot: t });
        }
    }
    let half = T::lit(0.5);
    Ok(history
        .iter()
        .enumerate()
        .map(|(t, r)| {
            let q1 = next_of(t);
            let lhs = half * (q1 * q1 - r.backlog * r.backlog);
            let rhs = b + r.backlog * (r.energy - budget);
            lhs <= rhs + tol * (T::one() + rhs.abs())
        })
        .collect())
}
