use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point<T>) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A piece of sensing data with a lifetime and a spatial validity disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingDatum<T> {
    pub id: usize,
    pub size_bits: u64,
    pub update_slot: u64,
    pub expiry_slot: u64,
    pub origin: Point<T>,
    pub validity_radius_m: T,
    /// Region whose vehicles request this datum.
    pub region: usize,
}

impl<T: Real> SensingDatum<T> {
    pub fn new(
        id: usize,
        size_bits: u64,
        update_slot: u64,
        expiry_slot: u64,
        origin: Point<T>,
        validity_radius_m: T,
        region: usize,
    ) -> Result<Self> {
        if size_bits == 0 {
            return Err(Error::InvalidConfig(format!("datum {id} has zero size")));
        }
        if expiry_slot <= update_slot {
            return Err(Error::InvalidConfig(format!(
                "datum {id} expires at {expiry_slot} before its update slot {update_slot}"
            )));
        }
        if validity_radius_m < T::zero() {
            return Err(Error::InvalidConfig(format!("datum {id} has negative validity radius")));
        }
        Ok(Self { id, size_bits, update_slot, expiry_slot, origin, validity_radius_m, region })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rsu<T> {
    pub id: usize,
    pub location: Point<T>,
    pub storage_bits: u64,
    pub bandwidth_hz: T,
    pub tx_power_w: T,
    /// Requests served per slot (M/M/1 service rate).
    pub service_rate: T,
    pub coverage_radius_m: T,
}

impl<T: Real> Rsu<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = self.storage_bits > 0
            && self.bandwidth_hz > T::zero()
            && self.tx_power_w > T::zero()
            && self.service_rate > T::zero()
            && self.coverage_radius_m > T::zero();
        if positive {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("rsu {} has a non-positive parameter", self.id)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStation<T> {
    pub tx_power_w: T,
    pub service_rate: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region<T> {
    pub id: usize,
    pub center: Point<T>,
    pub delay_tolerance_s: T,
    /// RSUs covering this region, ascending.
    pub covering_rsus: Vec<usize>,
}

/// RSUs, the base station, regions, and the two coverage maps (`I_j` and `J_i`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology<T> {
    pub rsus: Vec<Rsu<T>>,
    pub base_station: BaseStation<T>,
    pub regions: Vec<Region<T>>,
    rsu_regions: Vec<Vec<usize>>,
}

impl<T: Real> Topology<T> {
    /// Builds the topology and derives `J_i` from the per-region covering sets.
    pub fn new(rsus: Vec<Rsu<T>>, base_station: BaseStation<T>, mut regions: Vec<Region<T>>) -> Result<Self> {
        let mut rsu_regions = vec![Vec::new(); rsus.len()];
        for rsu in &rsus {
            rsu.validate()?;
        }
        if base_station.tx_power_w <= T::zero() || base_station.service_rate <= T::zero() {
            return Err(Error::InvalidConfig("base station parameters must be positive".into()));
        }
        for (j, region) in regions.iter_mut().enumerate() {
            if region.covering_rsus.is_empty() {
                return Err(Error::InvalidConfig(format!("region {j} is not covered by any rsu")));
            }
            region.covering_rsus.sort_unstable();
            region.covering_rsus.dedup();
            for &i in &region.covering_rsus {
                if i >= rsus.len() {
                    return Err(Error::DimensionMismatch(format!("region {j} references rsu {i}")));
                }
                rsu_regions[i].push(j);
            }
        }
        Ok(Self { rsus, base_station, regions, rsu_regions })
    }

    pub fn num_rsus(&self) -> usize {
        self.rsus.len()
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    /// `J_i`: regions covered by RSU `i`.
    pub fn regions_of(&self, rsu: usize) -> &[usize] {
        &self.rsu_regions[rsu]
    }

    /// `I_j`: RSUs covering region `j`.
    pub fn rsus_of(&self, region: usize) -> &[usize] {
        &self.regions[region].covering_rsus
    }

    pub fn covers(&self, rsu: usize, region: usize) -> bool {
        self.regions[region].covering_rsus.binary_search(&rsu).is_ok()
    }

    /// `i ∈ I_j ⟺ j ∈ J_i` for every pair.
    pub fn coverage_is_symmetric(&self) -> bool {
        (0..self.num_rsus()).all(|i| {
            (0..self.num_regions()).all(|j| self.covers(i, j) == self.rsu_regions[i].contains(&j))
        })
    }
}

/// Traffic rules that can remove an RSU from the affected scope of a datum.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficRules {
    /// RSUs whose street is one-way in the current slot. A one-way RSU only
    /// keeps data originating inside its own coverage disk.
    pub one_way_rsus: BTreeSet<usize>,
    /// Explicit `(rsu, datum)` exclusions.
    pub excluded: BTreeSet<(usize, usize)>,
}

impl TrafficRules {
    pub fn excludes<T: Real>(&self, rsu: &Rsu<T>, datum: &SensingDatum<T>) -> bool {
        if self.excluded.contains(&(rsu.id, datum.id)) {
            return true;
        }
        self.one_way_rsus.contains(&rsu.id) && datum.origin.distance(&rsu.location) > rsu.coverage_radius_m
    }
}

/// Dense `rows × cols` matrix of non-negative request counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u32>,
}

impl CountMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<u32>>) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let n = rows.len();
        let data: Vec<u32> = rows.into_iter().flatten().collect();
        assert_eq!(data.len(), n * cols, "ragged rows");
        Self { rows: n, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn total(&self) -> u64 {
        self.data.iter().map(|&v| u64::from(v)).sum()
    }

    pub fn row_total(&self, r: usize) -> u64 {
        self.data[r * self.cols..(r + 1) * self.cols].iter().map(|&v| u64::from(v)).sum()
    }
}

/// Binary `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![false; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Everything observed at the start of a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotObservation<T> {
    pub slot: u64,
    /// `d_jk`, regions × data.
    pub demand: CountMatrix,
    /// `A_ik`, RSUs × data.
    pub scope: BitMatrix,
    /// Channel gain draws `h_ij`, indexed `[i][j]`; empty for uncovered pairs.
    pub channel_gain_samples: Vec<Vec<Vec<T>>>,
    /// `r_0j`, base-station downlink rate per region (b/s).
    pub bs_rates: Vec<T>,
    pub traffic_rules: TrafficRules,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestStats {
    /// `r_jk`: slots between the last two requests.
    pub last_interval: u64,
    pub last_request: Option<u64>,
    /// `I_jk`: requests accumulated so far.
    pub cumulative: u64,
}

/// Per `(region, datum)` request counters feeding the popularity model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestHistory {
    regions: usize,
    data: usize,
    stats: Vec<RequestStats>,
}

impl RequestHistory {
    pub fn new(regions: usize, data: usize) -> Self {
        Self { regions, data, stats: vec![RequestStats::default(); regions * data] }
    }

    pub fn stats(&self, region: usize, datum: usize) -> &RequestStats {
        &self.stats[region * self.data + datum]
    }

    pub fn stats_mut(&mut self, region: usize, datum: usize) -> &mut RequestStats {
        &mut self.stats[region * self.data + datum]
    }

    /// `z_jk(t)`: slots since the last request (0 if never requested).
    pub fn gap(&self, region: usize, datum: usize, slot: u64) -> u64 {
        self.stats(region, datum).last_request.map_or(0, |last| slot.saturating_sub(last))
    }

    /// Folds the realized demand of `slot` into the counters.
    pub fn record(&mut self, slot: u64, demand: &CountMatrix) {
        assert_eq!((demand.rows(), demand.cols()), (self.regions, self.data));
        for j in 0..self.regions {
            for k in 0..self.data {
                let d = demand.get(j, k);
                if d == 0 {
                    continue;
                }
                let s = self.stats_mut(j, k);
                if d >= 2 {
                    s.last_interval = 0;
                } else if let Some(prev) = s.last_request {
                    s.last_interval = slot.saturating_sub(prev);
                }
                s.last_request = Some(slot);
                s.cumulative += u64::from(d);
            }
        }
    }
}

/// Caching decision `x_ik`, RSUs × data.
pub type CachingDecision = BitMatrix;

/// Allocation decision `y_ijk`, RSUs × regions × data.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AllocationDecision {
    rsus: usize,
    regions: usize,
    data: usize,
    y: Vec<u32>,
}

impl AllocationDecision {
    pub fn zeros(rsus: usize, regions: usize, data: usize) -> Self {
        Self { rsus, regions, data, y: vec![0; rsus * regions * data] }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.rsus, self.regions, self.data)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> u32 {
        self.y[(i * self.regions + j) * self.data + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: u32) {
        self.y[(i * self.regions + j) * self.data + k] = v;
    }

    /// Requests of region `j` served by RSU `i` across all data.
    pub fn link_total(&self, i: usize, j: usize) -> u64 {
        let base = (i * self.regions + j) * self.data;
        self.y[base..base + self.data].iter().map(|&v| u64::from(v)).sum()
    }

    /// RSU `i`'s arrival load `Σ_j Σ_k y_ijk`.
    pub fn rsu_load(&self, i: usize) -> u64 {
        let base = i * self.regions * self.data;
        self.y[base..base + self.regions * self.data].iter().map(|&v| u64::from(v)).sum()
    }

    /// `Σ_i y_ijk`.
    pub fn served(&self, j: usize, k: usize) -> u64 {
        (0..self.rsus).map(|i| u64::from(self.get(i, j, k))).sum()
    }

    pub fn total(&self) -> u64 {
        self.y.iter().map(|&v| u64::from(v)).sum()
    }

    pub fn add(&self, other: &AllocationDecision) -> AllocationDecision {
        assert_eq!(self.dims(), other.dims());
        let y = self.y.iter().zip(&other.y).map(|(a, b)| a + b).collect();
        AllocationDecision { y, ..*self }
    }
}

/// Popularity weights `α`, `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueWeights<T> {
    pub alpha: T,
    pub beta: T,
}

impl<T: Real> Default for ValueWeights<T> {
    fn default() -> Self {
        Self { alpha: T::one(), beta: T::one() }
    }
}

impl<T: Real> ValueWeights<T> {
    pub fn new(alpha: T, beta: T) -> Result<Self> {
        let unit = |v: T| v >= T::zero() && v <= T::one();
        if unit(alpha) && unit(beta) {
            Ok(Self { alpha, beta })
        } else {
            Err(Error::InvalidConfig("alpha and beta must lie in [0, 1]".into()))
        }
    }
}

/// Slot length and caching power coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams<T> {
    /// `w`, watts per cached bit.
    pub caching_power_w_per_bit: T,
    /// `τ`, seconds.
    pub slot_s: T,
}

impl<T: Real> Default for EnergyParams<T> {
    fn default() -> Self {
        Self { caching_power_w_per_bit: T::lit(2.5e-9), slot_s: T::one() }
    }
}

/// Dense `rows × cols` matrix of reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> RealMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }
}
