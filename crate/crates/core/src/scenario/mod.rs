//! Seeded generation of the simulated road network, data catalog, demand and channels.

pub mod config;
pub mod world;

pub use config::{dbm_to_w, Congestion, PathLoss, ScenarioConfig};
pub use world::{
    build_topology, evolve_sd_catalog, expected_link_rate, generate_demand, region_bounds, region_center, sample_channel,
    streets, zipf_weights, Placement, Scenario, Snapshot, Street, SNAPSHOT_VERSION,
};
