pub mod baselines;
pub mod bqpso;
pub mod exact;

pub use baselines::{greedy_caching, random_caching, FifoCacheState, GreedySolver, RandomSolver};
pub use bqpso::{allocate_y, BqpsoConfig, BqpsoSolver};
pub use exact::ExactSolver;
