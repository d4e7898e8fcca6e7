use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, Frame, ModelSettings, Replay};
use crate::error::{Error, Result};
use crate::model::rate::link_rate;
use crate::model::types::{
    BaseStation, BitMatrix, CountMatrix, EnergyParams, Point, Region, Rsu, SensingDatum, SlotObservation, Topology,
    TrafficRules, ValueWeights,
};
use crate::model::value::affected_scope;
use crate::real::Real;
use crate::scenario::config::{dbm_to_w, ScenarioConfig};

/// Shortest distance used for path loss, so co-located points stay finite.
const MIN_DISTANCE_M: f64 = 1.0;

/// Axis-aligned street segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Street {
    pub from: (f64, f64),
    pub to: (f64, f64),
}

impl Street {
    pub fn length(&self) -> f64 {
        (self.to.0 - self.from.0).hypot(self.to.1 - self.from.1)
    }

    pub fn at(&self, t: f64) -> (f64, f64) {
        (self.from.0 + t * (self.to.0 - self.from.0), self.from.1 + t * (self.to.1 - self.from.1))
    }

    pub fn nearest(&self, p: (f64, f64)) -> (f64, f64) {
        let (dx, dy) = (self.to.0 - self.from.0, self.to.1 - self.from.1);
        let len2 = dx * dx + dy * dy;
        let t = (((p.0 - self.from.0) * dx + (p.1 - self.from.1) * dy) / len2).clamp(0.0, 1.0);
        self.at(t)
    }
}

/// One horizontal street through the middle and two vertical streets at a
/// quarter and three quarters of the width.
pub fn streets(cfg: &ScenarioConfig) -> [Street; 3] {
    let (w, h) = (cfg.area_width_m, cfg.area_height_m);
    [
        Street { from: (0.0, h / 2.0), to: (w, h / 2.0) },
        Street { from: (w / 4.0, 0.0), to: (w / 4.0, h) },
        Street { from: (3.0 * w / 4.0, 0.0), to: (3.0 * w / 4.0, h) },
    ]
}

/// Region `j = row * cols + col` as `(x0, y0, x1, y1)`.
pub fn region_bounds(cfg: &ScenarioConfig, j: usize) -> (f64, f64, f64, f64) {
    let (rw, rh) = (cfg.area_width_m / cfg.grid_cols as f64, cfg.area_height_m / cfg.grid_rows as f64);
    let (row, col) = (j / cfg.grid_cols, j % cfg.grid_cols);
    (col as f64 * rw, row as f64 * rh, (col + 1) as f64 * rw, (row + 1) as f64 * rh)
}

pub fn region_center(cfg: &ScenarioConfig, j: usize) -> (f64, f64) {
    let (x0, y0, x1, y1) = region_bounds(cfg, j);
    ((x0 + x1) / 2.0, (y0 + y1) / 2.0)
}

fn pt<T: Real>(p: (f64, f64)) -> Point<T> {
    Point::new(T::lit(p.0), T::lit(p.1))
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Placed RSUs together with the street each one sits on.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement<T> {
    pub topology: Topology<T>,
    pub street_of: Vec<usize>,
}

/// Places RSUs uniformly along the streets and picks each radius halfway
/// between the `c`-th and `(c+1)`-th nearest region centers for a drawn
/// `c` in the allowed coverage range. Placements that leave a region
/// uncovered are redrawn.
pub fn build_topology<T: Real, R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Placement<T>> {
    cfg.validate()?;
    let nj = cfg.regions();
    let centers: Vec<(f64, f64)> = (0..nj).map(|j| region_center(cfg, j)).collect();
    let streets = streets(cfg);
    let total: f64 = streets.iter().map(Street::length).sum();
    let counts: Vec<usize> = (cfg.min_rsu_coverage..=cfg.max_rsu_coverage).collect();

    'attempt: for _ in 0..cfg.placement_retries.max(1) {
        let mut sites = Vec::with_capacity(cfg.rsus);
        for _ in 0..cfg.rsus {
            let mut u = rng.random_range(0.0..total);
            let mut s = 0;
            while u > streets[s].length() && s + 1 < streets.len() {
                u -= streets[s].length();
                s += 1;
            }
            sites.push((s, streets[s].at(u / streets[s].length())));
        }
        let mut radii = Vec::with_capacity(cfg.rsus);
        for &(_, p) in &sites {
            let mut d: Vec<f64> = centers.iter().map(|&c| dist(p, c)).collect();
            d.sort_by(f64::total_cmp);
            let mut order = counts.clone();
            order.shuffle(rng);
            let pick = order.into_iter().find(|&c| c == nj || d[c] - d[c - 1] > 1e-6);
            match pick {
                Some(c) if c == nj => radii.push(d[nj - 1] + 1.0),
                Some(c) => radii.push((d[c - 1] + d[c]) / 2.0),
                None => continue 'attempt,
            }
        }
        let covering: Vec<Vec<usize>> = (0..nj)
            .map(|j| (0..cfg.rsus).filter(|&i| dist(sites[i].1, centers[j]) <= radii[i]).collect())
            .collect();
        if covering.iter().any(Vec::is_empty) {
            continue;
        }

        let rsus = sites
            .iter()
            .zip(&radii)
            .enumerate()
            .map(|(i, (&(_, p), &r))| Rsu {
                id: i,
                location: pt(p),
                storage_bits: rng.random_range(cfg.rsu_capacity_min_bits..=cfg.rsu_capacity_max_bits),
                bandwidth_hz: T::lit(cfg.bandwidth_hz),
                tx_power_w: T::lit(dbm_to_w(cfg.tx_power_dbm)),
                service_rate: T::lit(cfg.rsu_service_rate),
                coverage_radius_m: T::lit(r),
            })
            .collect();
        let regions = covering
            .into_iter()
            .enumerate()
            .map(|(j, c)| Region {
                id: j,
                center: pt(centers[j]),
                delay_tolerance_s: T::lit(cfg.delay_tolerance_s),
                covering_rsus: c,
            })
            .collect();
        let bs = BaseStation {
            tx_power_w: T::lit(dbm_to_w(cfg.bs_tx_power_dbm)),
            service_rate: T::lit(cfg.bs_service_rate),
        };
        let topology = Topology::new(rsus, bs, regions)?;
        return Ok(Placement { topology, street_of: sites.iter().map(|s| s.0).collect() });
    }
    Err(Error::CoverageUnsatisfiable)
}

/// Linear channel gain `10^(-PL/10)` with `PL` in dB drawn around the
/// log-distance mean.
pub fn sample_channel<R: Rng + ?Sized>(cfg: &ScenarioConfig, distance_m: f64, rng: &mut R) -> f64 {
    let pl = &cfg.pathloss;
    let shadow = if pl.shadow_sigma_db > 0.0 {
        Normal::new(0.0, pl.shadow_sigma_db).expect("finite sigma").sample(rng)
    } else {
        0.0
    };
    10f64.powf(-(pl.mean_db(distance_m.max(MIN_DISTANCE_M)) + shadow) / 10.0)
}

/// `E[B log2(1 + P g / N)]` over the shadowing distribution, by composite
/// Simpson integration over ±10 standard deviations.
pub fn expected_link_rate(cfg: &ScenarioConfig, distance_m: f64, tx_power_w: f64) -> f64 {
    let pl = &cfg.pathloss;
    let noise = cfg.noise_power_w();
    let mean_db = pl.mean_db(distance_m.max(MIN_DISTANCE_M));
    let rate = |x: f64| cfg.bandwidth_hz * (1.0 + tx_power_w * 10f64.powf(-(mean_db + x) / 10.0) / noise).log2();
    let sigma = pl.shadow_sigma_db;
    if sigma == 0.0 {
        return rate(0.0);
    }
    let n = 4000;
    let (a, b) = (-10.0 * sigma, 10.0 * sigma);
    let h = (b - a) / n as f64;
    let density = |x: f64| (-(x * x) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let f = |x: f64| rate(x) * density(x);
    let mut acc = f(a) + f(b);
    for m in 1..n {
        let x = a + m as f64 * h;
        acc += if m % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    acc * h / 3.0
}

/// Normalized Zipf weights `r^-s / Σ` for ranks `1..=n`.
pub fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-exponent)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Poisson demand for every region's own data; other entries stay zero.
pub fn generate_demand<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    datum_region: &[usize],
    popularity: &[f64],
    rng: &mut R,
) -> CountMatrix {
    let mut d = CountMatrix::zeros(cfg.regions(), datum_region.len());
    let scale = f64::from(cfg.vehicles()) * cfg.base_rate;
    for (k, (&j, &p)) in datum_region.iter().zip(popularity).enumerate() {
        let lambda = scale * p;
        if lambda > 0.0 {
            let draw: f64 = Poisson::new(lambda).expect("positive finite rate").sample(rng);
            d.set(j, k, draw as u32);
        }
    }
    d
}

fn datum_origin<R: Rng + ?Sized>(cfg: &ScenarioConfig, region: usize, rng: &mut R) -> (f64, f64) {
    let (x0, y0, x1, y1) = region_bounds(cfg, region);
    let p = (rng.random_range(x0..x1), rng.random_range(y0..y1));
    streets(cfg)
        .iter()
        .map(|s| s.nearest(p))
        .min_by(|a, b| dist(*a, p).total_cmp(&dist(*b, p)))
        .expect("three streets")
}

fn fresh_datum<T: Real, R: Rng + ?Sized>(cfg: &ScenarioConfig, id: usize, region: usize, slot: u64, rng: &mut R) -> SensingDatum<T> {
    let size = rng.random_range(cfg.sd_size_min_bits..=cfg.sd_size_max_bits);
    let life = rng.random_range(cfg.sd_lifespan_min_slots..=cfg.sd_lifespan_max_slots);
    let origin = datum_origin(cfg, region, rng);
    SensingDatum::new(id, size, slot, slot + life, pt(origin), T::lit(cfg.validity_radius_m), region)
        .expect("generated datum is valid")
}

/// Regenerates every datum whose expiry slot has been reached. Returns the
/// ids that were replaced.
pub fn evolve_sd_catalog<T: Real, R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    catalog: &mut [SensingDatum<T>],
    slot: u64,
    rng: &mut R,
) -> Vec<usize> {
    let mut replaced = Vec::new();
    for sd in catalog.iter_mut() {
        if slot >= sd.expiry_slot {
            *sd = fresh_datum(cfg, sd.id, sd.region, slot, rng);
            replaced.push(sd.id);
        }
    }
    replaced
}

/// A seeded world that produces frames one slot at a time.
#[derive(Debug, Clone)]
pub struct Scenario<T> {
    pub config: ScenarioConfig,
    topology: Arc<Topology<T>>,
    settings: ModelSettings<T>,
    street_of: Vec<usize>,
    catalog: Vec<SensingDatum<T>>,
    popularity: Vec<f64>,
    slot: u64,
}

impl<T: Real> Scenario<T> {
    /// Topology, capacities and the initial catalog come from stream 0 of the
    /// seed; slot `t` draws from stream `t + 1`.
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let placement = build_topology::<T, _>(&config, &mut rng)?;
        let nj = config.regions();
        let catalog: Vec<SensingDatum<T>> =
            (0..config.data()).map(|k| fresh_datum(&config, k, k / config.sd_per_region, 0, &mut rng)).collect();
        let weights = zipf_weights(config.sd_per_region, config.zipf_exponent);
        let popularity = (0..config.data()).map(|k| weights[k % config.sd_per_region]).collect();
        debug_assert_eq!(catalog.len(), nj * config.sd_per_region);
        let settings = ModelSettings {
            noise_power_w: T::lit(config.noise_power_w()),
            rate_floor_bps: T::lit(config.rate_floor_bps),
            weights: ValueWeights::new(T::lit(config.popularity_alpha), T::lit(config.popularity_beta))?,
            energy: EnergyParams {
                caching_power_w_per_bit: T::lit(config.caching_power_w_per_bit),
                slot_s: T::lit(config.slot_s),
            },
            stability_margin: T::lit(config.stability_margin),
        };
        Ok(Self {
            topology: Arc::new(placement.topology),
            street_of: placement.street_of,
            settings,
            catalog,
            popularity,
            slot: 0,
            config,
        })
    }

    pub fn catalog(&self) -> &[SensingDatum<T>] {
        &self.catalog
    }

    pub fn street_of(&self) -> &[usize] {
        &self.street_of
    }

    /// Rules in force during `slot`. While a one-way window is active, RSUs on
    /// the one-way street lose every datum that did not originate on that street.
    pub fn traffic_rules(&self, slot: u64, catalog: &[SensingDatum<T>]) -> TrafficRules {
        let w = self.config.one_way_window_slots;
        let mut rules = TrafficRules::default();
        if w == 0 || (slot / w) % 2 == 0 {
            return rules;
        }
        let street = streets(&self.config)[self.config.one_way_street];
        rules.one_way_rsus = (0..self.street_of.len()).filter(|&i| self.street_of[i] == self.config.one_way_street).collect();
        for sd in catalog {
            let o = (sd.origin.x.as_f64(), sd.origin.y.as_f64());
            if dist(street.nearest(o), o) > 1e-6 {
                rules.excluded.extend(rules.one_way_rsus.iter().map(|&i| (i, sd.id)));
            }
        }
        rules
    }

    fn frame(&mut self) -> Frame<T> {
        let cfg = &self.config;
        let slot = self.slot;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(slot + 1);

        evolve_sd_catalog(cfg, &mut self.catalog, slot, &mut rng);
        let regions: Vec<usize> = self.catalog.iter().map(|sd| sd.region).collect();
        let demand = generate_demand(cfg, &regions, &self.popularity, &mut rng);

        let topo = &*self.topology;
        let (ni, nj, nk) = (topo.num_rsus(), topo.num_regions(), self.catalog.len());
        let rules = self.traffic_rules(slot, &self.catalog);
        let mut scope = BitMatrix::zeros(ni, nk);
        for (i, rsu) in topo.rsus.iter().enumerate() {
            for (k, sd) in self.catalog.iter().enumerate() {
                scope.set(i, k, affected_scope(sd, rsu, &rules, slot));
            }
        }

        let noise = cfg.noise_power_w();
        let mut gains = vec![vec![Vec::new(); nj]; ni];
        let mut slowest = vec![f64::INFINITY; nj];
        for (i, rsu) in topo.rsus.iter().enumerate() {
            let p = (rsu.location.x.as_f64(), rsu.location.y.as_f64());
            let power = rsu.tx_power_w.as_f64();
            for &j in topo.regions_of(i) {
                let c = &topo.regions[j].center;
                let d = dist(p, (c.x.as_f64(), c.y.as_f64()));
                let draws: Vec<f64> = (0..cfg.channel_draws).map(|_| sample_channel(cfg, d, &mut rng)).collect();
                let mean_rate = draws.iter().map(|&g| link_rate(cfg.bandwidth_hz, power, g, noise)).sum::<f64>()
                    / draws.len() as f64;
                slowest[j] = slowest[j].min(mean_rate);
                gains[i][j] = draws.into_iter().map(T::lit).collect();
            }
        }
        let bs_rates = slowest.iter().map(|&r| T::lit(cfg.bs_rate_factor * r)).collect();

        self.slot += 1;
        Frame {
            observation: SlotObservation {
                slot,
                demand,
                scope,
                channel_gain_samples: gains,
                bs_rates,
                traffic_rules: rules,
            },
            catalog: self.catalog.clone(),
        }
    }

    /// Generates the remaining frames up to the horizon.
    pub fn materialize(mut self) -> Replay<T> {
        let mut frames = Vec::with_capacity(self.config.horizon_slots);
        while (self.slot as usize) < self.config.horizon_slots {
            frames.push(self.frame());
        }
        Replay::new(self.topology, self.settings, frames)
    }
}

impl<T: Real> Environment<T> for Scenario<T> {
    fn topology(&self) -> &Arc<Topology<T>> {
        &self.topology
    }

    fn settings(&self) -> &ModelSettings<T> {
        &self.settings
    }

    fn horizon(&self) -> usize {
        self.config.horizon_slots
    }

    fn next_frame(&mut self) -> Option<Result<Frame<T>>> {
        if self.slot as usize >= self.config.horizon_slots {
            return None;
        }
        Some(Ok(self.frame()))
    }
}

pub const SNAPSHOT_VERSION: u32 = 1;

/// Versioned, fully materialized scenario for exact replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot<T> {
    pub version: u32,
    pub config: ScenarioConfig,
    pub replay: Replay<T>,
}

impl<T: Real + Serialize + for<'de> Deserialize<'de>> Snapshot<T> {
    pub fn capture(config: ScenarioConfig) -> Result<Self> {
        let replay = Scenario::<T>::new(config.clone())?.materialize();
        Ok(Self { version: SNAPSHOT_VERSION, config, replay })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let snap: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::Parse(format!("snapshot version {} is not {SNAPSHOT_VERSION}", snap.version)));
        }
        Ok(snap)
    }
}
