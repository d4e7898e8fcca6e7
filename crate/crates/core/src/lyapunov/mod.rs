//! Virtual-queue bookkeeping and the online decision loop.

pub mod engine;
pub mod queue;

pub use engine::{clip_to_demand, ocda_run, Predictor, RunOptions, RunOutput, SlotDecision, SlotSolver};
pub use queue::{
    check_drift_bound, dpp_objective, drift_bound_constant, next_backlog, update_queue, LyapunovConfig,
    QueueRecord, VirtualQueueState,
};
