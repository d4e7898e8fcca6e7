//! Seeded synthetic slot instances for oracle cross-checks.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::instance::{InstanceParts, SlotInstance};
use crate::model::types::{
    BaseStation, CountMatrix, EnergyParams, Point, RealMatrix, Region, Rsu, Topology,
};
use crate::real::Real;

/// Size limits of a random tiny instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TinySpec {
    pub max_rsus: usize,
    pub max_regions: usize,
    pub max_data: usize,
    pub max_demand: u32,
    pub draws: usize,
}

impl Default for TinySpec {
    fn default() -> Self {
        Self { max_rsus: 2, max_regions: 2, max_data: 3, max_demand: 2, draws: 4 }
    }
}

fn rsu<T: Real>(id: usize, storage_bits: u64, tx_power_w: f64, service_rate: f64) -> Rsu<T> {
    Rsu {
        id,
        location: Point::new(T::lit(100.0 * id as f64), T::zero()),
        storage_bits,
        bandwidth_hz: T::lit(1e6),
        tx_power_w: T::lit(tx_power_w),
        service_rate: T::lit(service_rate),
        coverage_radius_m: T::lit(150.0),
    }
}

/// A random instance small enough for exhaustive enumeration. Capacities,
/// service rates and tolerances are drawn so that every constraint binds on
/// some seeds.
pub fn tiny_instance<T: Real>(seed: u64, spec: &TinySpec) -> SlotInstance<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ni = rng.random_range(1..=spec.max_rsus);
    let nj = rng.random_range(1..=spec.max_regions);
    let nk = rng.random_range(1..=spec.max_data);

    let sizes: Vec<u64> = (0..nk).map(|_| rng.random_range(1..=4u64) * 1_000_000).collect();
    let rsus: Vec<Rsu<T>> = (0..ni)
        .map(|i| {
            let storage = rng.random_range(1..=8u64) * 1_000_000;
            let power = rng.random_range(0.5..2.0);
            let mu = rng.random_range(2..=6) as f64;
            rsu(i, storage, power, mu)
        })
        .collect();

    let mut regions = Vec::with_capacity(nj);
    for j in 0..nj {
        let mut covering: Vec<usize> = (0..ni).filter(|_| rng.random_bool(0.6)).collect();
        if covering.is_empty() {
            covering.push(rng.random_range(0..ni));
        }
        regions.push(Region {
            id: j,
            center: Point::new(T::lit(50.0 * j as f64), T::lit(20.0)),
            delay_tolerance_s: T::lit(rng.random_range(0.3..1.5)),
            covering_rsus: covering,
        });
    }
    let bs = BaseStation { tx_power_w: T::lit(rng.random_range(1.0..6.0)), service_rate: T::lit(rng.random_range(2..=8) as f64) };
    let topology = Topology::new(rsus, bs, regions).expect("synthetic topology is valid");

    let demand = CountMatrix::from_rows(
        (0..nj).map(|_| (0..nk).map(|_| rng.random_range(0..=spec.max_demand)).collect()).collect(),
    );

    let mut rate_samples = vec![vec![Vec::new(); nj]; ni];
    let mut rates = RealMatrix::zeros(ni, nj);
    let mut bs_rates = vec![T::zero(); nj];
    for j in 0..nj {
        let mut slowest = f64::INFINITY;
        for &i in topology.rsus_of(j) {
            let draws: Vec<f64> = (0..spec.draws).map(|_| rng.random_range(5e6..4e7)).collect();
            let mean = draws.iter().sum::<f64>() / draws.len() as f64;
            slowest = slowest.min(mean);
            rates.set(i, j, T::lit(mean));
            rate_samples[i][j] = draws.into_iter().map(T::lit).collect();
        }
        bs_rates[j] = T::lit(slowest * rng.random_range(0.3..0.9));
    }

    let mut value_coef = vec![T::zero(); ni * nj * nk];
    for i in 0..ni {
        for &j in topology.regions_of(i) {
            for k in 0..nk {
                if rng.random_bool(0.7) {
                    value_coef[(i * nj + j) * nk + k] = T::lit(rng.random_range(0.0..1.0));
                }
            }
        }
    }

    SlotInstance::new(InstanceParts {
        slot: seed,
        backlog: T::lit(rng.random_range(0.0..3.0)),
        v_weight: T::lit(rng.random_range(0.0..2.0)),
        topology: Arc::new(topology),
        sizes,
        demand,
        value_coef,
        rates,
        rate_samples,
        bs_rates,
        energy: EnergyParams { caching_power_w_per_bit: T::lit(2.5e-7), slot_s: T::one() },
        stability_margin: T::lit(1e-3),
    })
    .expect("synthetic instance is consistent")
}

/// Single-RSU, single-region instance with effectively unlimited service
/// rates and delay tolerance, so only storage binds: a 0-1 knapsack.
pub fn knapsack_instance<T: Real>(seed: u64, items: usize) -> SlotInstance<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<u64> = (0..items).map(|_| rng.random_range(1..=40u64)).collect();
    let total: u64 = sizes.iter().sum();
    let storage = (total as f64 * rng.random_range(0.2..0.6)).round().max(1.0) as u64;
    let unlimited = 1e12;
    let rsu = Rsu {
        storage_bits: storage,
        ..rsu::<T>(0, storage, 1.0, unlimited)
    };
    let region = Region {
        id: 0,
        center: Point::new(T::zero(), T::zero()),
        delay_tolerance_s: T::lit(unlimited),
        covering_rsus: vec![0],
    };
    let bs = BaseStation { tx_power_w: T::lit(2.0), service_rate: T::lit(unlimited) };
    let topology = Topology::new(vec![rsu], bs, vec![region]).expect("knapsack topology is valid");
    let demand = CountMatrix::from_rows(vec![(0..items).map(|_| rng.random_range(0..=4)).collect()]);
    let rate = 100.0;
    let mut rates = RealMatrix::zeros(1, 1);
    rates.set(0, 0, T::lit(rate));
    let value_coef = (0..items).map(|_| T::lit(rng.random_range(0.0..1.0))).collect();
    SlotInstance::new(InstanceParts {
        slot: seed,
        backlog: T::lit(rng.random_range(0.0..1.0)),
        v_weight: T::lit(rng.random_range(0.5..2.0)),
        topology: Arc::new(topology),
        sizes,
        demand,
        value_coef,
        rates,
        rate_samples: vec![vec![vec![T::lit(rate); 2]]],
        bs_rates: vec![T::lit(rate * 0.5)],
        energy: EnergyParams { caching_power_w_per_bit: T::lit(0.05), slot_s: T::one() },
        stability_margin: T::lit(1e-3),
    })
    .expect("knapsack instance is consistent")
}
