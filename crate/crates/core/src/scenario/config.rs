use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log-distance path loss with log-normal shadowing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLoss {
    pub d0_m: f64,
    pub pl0_db: f64,
    pub gamma: f64,
    pub shadow_sigma_db: f64,
}

impl Default for PathLoss {
    fn default() -> Self {
        Self { d0_m: 1000.0, pl0_db: 28.0, gamma: 2.0, shadow_sigma_db: 8.0 }
    }
}

impl PathLoss {
    /// Mean path loss in dB at `distance_m`, without shadowing.
    pub fn mean_db(&self, distance_m: f64) -> f64 {
        self.pl0_db + 10.0 * self.gamma * (distance_m / self.d0_m).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Congestion {
    None,
    Light,
    #[default]
    Moderate,
    Heavy,
}

impl Congestion {
    pub const ALL: [Congestion; 4] = [Congestion::None, Congestion::Light, Congestion::Moderate, Congestion::Heavy];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Congestion::None => "none",
            Congestion::Light => "light",
            Congestion::Moderate => "moderate",
            Congestion::Heavy => "heavy",
        }
    }
}

impl std::str::FromStr for Congestion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Congestion::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown congestion level {s:?}")))
    }
}

/// World parameters. Calibration choices without a published value are marked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub area_width_m: f64,
    pub area_height_m: f64,
    pub grid_cols: usize,
    pub grid_rows: usize,
    pub rsus: usize,
    pub min_rsu_coverage: usize,
    pub max_rsu_coverage: usize,
    /// Placement attempts before giving up on the coverage counts.
    pub placement_retries: usize,
    pub sd_per_region: usize,
    pub sd_size_min_bits: u64,
    pub sd_size_max_bits: u64,
    pub sd_lifespan_min_slots: u64,
    pub sd_lifespan_max_slots: u64,
    pub validity_radius_m: f64,
    pub rsu_capacity_min_bits: u64,
    pub rsu_capacity_max_bits: u64,
    pub delay_tolerance_s: f64,
    pub caching_power_w_per_bit: f64,
    pub pathloss: PathLoss,
    pub tx_power_dbm: f64,
    /// Base-station transmit power. Calibration choice; see README.
    pub bs_tx_power_dbm: f64,
    pub bandwidth_hz: f64,
    pub noise_dbm_per_hz: f64,
    /// Vehicles per region for none, light, moderate and heavy congestion.
    pub vehicles_per_region: [u32; 4],
    pub congestion: Congestion,
    pub horizon_slots: usize,
    pub slot_s: f64,
    /// Requests per vehicle per slot. Calibration choice.
    pub base_rate: f64,
    /// Zipf exponent of the popularity of a region's data. Calibration choice.
    pub zipf_exponent: f64,
    /// `μ_i`, requests per slot. Calibration choice.
    pub rsu_service_rate: f64,
    /// `μ_0`, requests per slot. Calibration choice.
    pub bs_service_rate: f64,
    /// `r_0j` as a fraction of the slowest covering RSU's mean rate.
    pub bs_rate_factor: f64,
    /// Channel draws per link per slot, used for the delay expectation.
    pub channel_draws: usize,
    /// One-way windows alternate with two-way windows of this length; 0 disables.
    pub one_way_window_slots: u64,
    /// Street made one-way: 0 horizontal, 1 and 2 vertical.
    pub one_way_street: usize,
    pub popularity_alpha: f64,
    pub popularity_beta: f64,
    pub stability_margin: f64,
    pub rate_floor_bps: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            area_width_m: 800.0,
            area_height_m: 500.0,
            grid_cols: 4,
            grid_rows: 4,
            rsus: 6,
            min_rsu_coverage: 5,
            max_rsu_coverage: 8,
            placement_retries: 1000,
            sd_per_region: 5,
            sd_size_min_bits: 1_000_000,
            sd_size_max_bits: 10_000_000,
            sd_lifespan_min_slots: 1,
            sd_lifespan_max_slots: 100,
            validity_radius_m: 100.0,
            rsu_capacity_min_bits: 100_000_000,
            rsu_capacity_max_bits: 500_000_000,
            delay_tolerance_s: 0.5,
            caching_power_w_per_bit: 2.5e-9,
            pathloss: PathLoss::default(),
            tx_power_dbm: 30.0,
            bs_tx_power_dbm: 46.0,
            bandwidth_hz: 20e6,
            noise_dbm_per_hz: -174.0,
            vehicles_per_region: [6, 8, 10, 12],
            congestion: Congestion::Moderate,
            horizon_slots: 1800,
            slot_s: 1.0,
            base_rate: 0.7,
            zipf_exponent: 0.8,
            rsu_service_rate: 20.0,
            bs_service_rate: 60.0,
            bs_rate_factor: 0.5,
            channel_draws: 100,
            one_way_window_slots: 300,
            one_way_street: 1,
            popularity_alpha: 1.0,
            popularity_beta: 1.0,
            stability_margin: 1e-3,
            rate_floor_bps: 1e3,
        }
    }
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn regions(&self) -> usize {
        self.grid_cols * self.grid_rows
    }

    pub fn data(&self) -> usize {
        self.regions() * self.sd_per_region
    }

    pub fn vehicles(&self) -> u32 {
        self.vehicles_per_region[self.congestion.index()]
    }

    pub fn noise_power_w(&self) -> f64 {
        dbm_to_w(self.noise_dbm_per_hz) * self.bandwidth_hz
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.area_width_m > 0.0 && self.area_height_m > 0.0) || self.grid_cols == 0 || self.grid_rows == 0 {
            return bad("area and grid must be non-empty");
        }
        if self.rsus == 0 || self.min_rsu_coverage == 0 || self.min_rsu_coverage > self.max_rsu_coverage {
            return bad("need at least one RSU and 0 < min coverage <= max coverage");
        }
        if self.max_rsu_coverage > self.regions() {
            return bad("an RSU cannot cover more regions than exist");
        }
        if self.sd_per_region == 0 || self.sd_size_min_bits == 0 || self.sd_size_min_bits > self.sd_size_max_bits {
            return bad("datum sizes must be positive and ordered");
        }
        if self.sd_lifespan_min_slots == 0 || self.sd_lifespan_min_slots > self.sd_lifespan_max_slots {
            return bad("lifespans must be positive and ordered");
        }
        if self.rsu_capacity_min_bits > self.rsu_capacity_max_bits {
            return bad("RSU capacities must be ordered");
        }
        if !(self.delay_tolerance_s > 0.0 && self.slot_s > 0.0 && self.bandwidth_hz > 0.0) {
            return bad("delay tolerance, slot length and bandwidth must be positive");
        }
        if !(self.base_rate >= 0.0 && self.zipf_exponent >= 0.0 && self.caching_power_w_per_bit >= 0.0) {
            return bad("base rate, Zipf exponent and caching power must be non-negative");
        }
        if !(self.rsu_service_rate > self.stability_margin && self.bs_service_rate > self.stability_margin) {
            return bad("service rates must exceed the stability margin");
        }
        if !(self.bs_rate_factor > 0.0 && self.bs_rate_factor < 1.0) {
            return bad("bs_rate_factor must lie in (0, 1) so the base station is the slower link");
        }
        if self.channel_draws == 0 || self.pathloss.d0_m <= 0.0 || self.pathloss.shadow_sigma_db < 0.0 {
            return bad("need channel draws, a positive reference distance and non-negative shadowing");
        }
        if self.one_way_street > 2 {
            return bad("one_way_street must be 0, 1 or 2");
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.popularity_alpha) || !unit(self.popularity_beta) {
            return bad("popularity weights must lie in [0, 1]");
        }
        Ok(())
    }
}
