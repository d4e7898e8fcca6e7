//! Exact per-slot solver over the linearized program, with an enumeration oracle.

pub mod bb;
pub mod oracle;
pub mod program;

pub use bb::{constructive, solve_bb, solve_program, BbConfig, ExactSolution, ExactSolver};
pub use oracle::enumerate_oracle;
pub use program::{linearize, linearize_with_cap, LinearizedProgram, Row, Sense, VarCounts, VarKey};
