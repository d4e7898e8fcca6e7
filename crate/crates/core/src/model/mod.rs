//! Network, value, cost and delay models evaluated for one slot.

pub mod constraints;
pub mod delay;
pub mod energy;
pub mod rate;
pub mod types;
pub mod value;

pub use constraints::{validate, ConstraintId, ConstraintReport, SlotContext, Violation};
pub use delay::{
    expected_response_latency, response_latency, sojourn_latency, sojourn_latency_bs, sojourn_latency_rsu,
    transmission_delay_bs, transmission_delay_rsu,
};
pub use energy::{total_energy, EnergyBreakdown};
pub use rate::{expected_rate, expected_rate_with_floor, link_rate, rate_matrix, rate_samples, DEFAULT_RATE_FLOOR_BPS};
pub use types::*;
pub use value::{affected_scope, caching_value, freshness, popularity};
