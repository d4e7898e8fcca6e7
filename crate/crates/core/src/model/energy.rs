use crate::error::{Error, Result};
use crate::model::types::{AllocationDecision, CachingDecision, CountMatrix, EnergyParams, RealMatrix, Topology};
use crate::real::Real;

/// Slot energy split into caching, RSU transmission and BS transmission parts (joules).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown<T> {
    pub caching: T,
    pub rsu_transmission: T,
    pub bs_transmission: T,
}

impl<T: Real> EnergyBreakdown<T> {
    pub fn total(&self) -> T {
        self.caching + self.rsu_transmission + self.bs_transmission
    }
}

/// Rejects allocations outside coverage or above demand.
pub fn check_allocation<T: Real>(topology: &Topology<T>, y: &AllocationDecision, demand: &CountMatrix) -> Result<()> {
    let (ni, nj, nk) = y.dims();
    if ni != topology.num_rsus() || nj != topology.num_regions() || (demand.rows(), demand.cols()) != (nj, nk) {
        return Err(Error::DimensionMismatch("allocation vs topology/demand".into()));
    }
    for i in 0..ni {
        for j in 0..nj {
            if !topology.covers(i, j) && y.link_total(i, j) > 0 {
                return Err(Error::NotCovered { rsu: i, region: j });
            }
        }
    }
    for j in 0..nj {
        for k in 0..nk {
            if y.served(j, k) > u64::from(demand.get(j, k)) {
                return Err(Error::AllocationExceedsDemand { region: j, datum: k });
            }
        }
    }
    Ok(())
}

/// `E(t) = Σ_i [E_i^C + E_i^T] + E_0^T`.
#[allow(clippy::too_many_arguments)]
pub fn total_energy<T: Real>(
    topology: &Topology<T>,
    x: &CachingDecision,
    y: &AllocationDecision,
    demand: &CountMatrix,
    sizes: &[u64],
    rates: &RealMatrix<T>,
    bs_rates: &[T],
    params: &EnergyParams<T>,
) -> Result<EnergyBreakdown<T>> {
    check_allocation(topology, y, demand)?;
    let (ni, nj, nk) = y.dims();
    if (x.rows(), x.cols()) != (ni, nk) || sizes.len() != nk || bs_rates.len() != nj {
        return Err(Error::DimensionMismatch("energy operands".into()));
    }
    let size = |k: usize| T::from_count(sizes[k]);
    let mut caching = T::zero();
    let mut rsu_tx = T::zero();
    for (i, rsu) in topology.rsus.iter().enumerate() {
        let cached_bits: u64 = (0..nk).filter(|&k| x.get(i, k)).map(|k| sizes[k]).sum();
        caching = caching + params.caching_power_w_per_bit * T::from_count(cached_bits) * params.slot_s;
        for &j in topology.regions_of(i) {
            let bits: T = (0..nk).map(|k| size(k) * T::from_count(u64::from(y.get(i, j, k)))).sum();
            if bits > T::zero() {
                rsu_tx = rsu_tx + rsu.tx_power_w * bits / rates.get(i, j);
            }
        }
    }
    let mut bs_tx = T::zero();
    for j in 0..nj {
        let bits: T = (0..nk)
            .map(|k| size(k) * T::from_count(u64::from(demand.get(j, k)) - y.served(j, k)))
            .sum();
        if bits > T::zero() {
            bs_tx = bs_tx + topology.base_station.tx_power_w * bits / bs_rates[j];
        }
    }
    Ok(EnergyBreakdown { caching, rsu_transmission: rsu_tx, bs_transmission: bs_tx })
}
