//! Transmission, M/M/1 sojourn and response latencies.

use crate::error::{Error, Result};
use crate::model::types::{AllocationDecision, CountMatrix, Topology};
use crate::real::Real;

/// `T_ij = Σ_k s_k y_ijk / r_ij`.
pub fn transmission_delay_rsu<T: Real>(i: usize, j: usize, y: &AllocationDecision, sizes: &[u64], rate: T) -> T {
    let bits: u64 = sizes.iter().enumerate().map(|(k, &s)| s * u64::from(y.get(i, j, k))).sum();
    if bits == 0 {
        T::zero()
    } else {
        T::from_count(bits) / rate
    }
}

/// Residual demand `d_jk − Σ_{i∈I_j} y_ijk`, erroring on oversubscription.
pub fn residual<T: Real>(topology: &Topology<T>, j: usize, k: usize, y: &AllocationDecision, demand: &CountMatrix) -> Result<u64> {
    let served: u64 = topology.rsus_of(j).iter().map(|&i| u64::from(y.get(i, j, k))).sum();
    u64::from(demand.get(j, k))
        .checked_sub(served)
        .ok_or(Error::AllocationExceedsDemand { region: j, datum: k })
}

/// `T_0j = Σ_k s_k (d_jk − Σ_i y_ijk) / r_0j`.
pub fn transmission_delay_bs<T: Real>(
    topology: &Topology<T>,
    j: usize,
    y: &AllocationDecision,
    demand: &CountMatrix,
    sizes: &[u64],
    bs_rate: T,
) -> Result<T> {
    let mut bits = 0u64;
    for (k, &s) in sizes.iter().enumerate() {
        bits += s * residual(topology, j, k, y, demand)?;
    }
    Ok(if bits == 0 { T::zero() } else { T::from_count(bits) / bs_rate })
}

/// M/M/1 sojourn time `1/(μ − λ)`.
pub fn sojourn_latency<T: Real>(load: u64, service_rate: T) -> Result<T> {
    let lambda = T::from_count(load);
    if lambda >= service_rate {
        return Err(Error::QueueUnstable { load: lambda.as_f64(), service_rate: service_rate.as_f64() });
    }
    Ok(T::one() / (service_rate - lambda))
}

/// `L_i` for RSU `i`.
pub fn sojourn_latency_rsu<T: Real>(i: usize, y: &AllocationDecision, service_rate: T) -> Result<T> {
    sojourn_latency(y.rsu_load(i), service_rate)
}

/// Total BS load `Σ_j Σ_k (d_jk − Σ_i y_ijk)`.
pub fn bs_load<T: Real>(topology: &Topology<T>, y: &AllocationDecision, demand: &CountMatrix) -> Result<u64> {
    let mut load = 0;
    for j in 0..demand.rows() {
        for k in 0..demand.cols() {
            load += residual(topology, j, k, y, demand)?;
        }
    }
    Ok(load)
}

/// `L_0` for the base station.
pub fn sojourn_latency_bs<T: Real>(
    topology: &Topology<T>,
    y: &AllocationDecision,
    demand: &CountMatrix,
    service_rate: T,
) -> Result<T> {
    sojourn_latency(bs_load(topology, y, demand)?, service_rate)
}

/// Response latency `D_j` for one channel realization: max over the active
/// RSU paths `L_i + T_ij` and, if any demand falls back, `L_0 + T_0j`.
/// `rsu_rates[i]` is the rate between RSU `i` and region `j`. Zero without demand.
pub fn response_latency<T: Real>(
    topology: &Topology<T>,
    j: usize,
    y: &AllocationDecision,
    demand: &CountMatrix,
    sizes: &[u64],
    rsu_rates: &[T],
    bs_rate: T,
) -> Result<T> {
    if demand.row_total(j) == 0 {
        return Ok(T::zero());
    }
    let mut worst = T::zero();
    for &i in topology.rsus_of(j) {
        if y.link_total(i, j) == 0 {
            continue;
        }
        let l = sojourn_latency_rsu(i, y, topology.rsus[i].service_rate)?;
        worst = worst.max(l + transmission_delay_rsu(i, j, y, sizes, rsu_rates[i]));
    }
    let fallback: u64 = (0..demand.cols()).map(|k| residual(topology, j, k, y, demand)).sum::<Result<u64>>()?;
    if fallback > 0 {
        let l0 = sojourn_latency_bs(topology, y, demand, topology.base_station.service_rate)?;
        worst = worst.max(l0 + transmission_delay_bs(topology, j, y, demand, sizes, bs_rate)?);
    }
    Ok(worst)
}

/// Monte-Carlo estimate of `E[D_j]`: [`response_latency`] averaged over the
/// per-draw rates `rate_samples[i][j][s]`.
pub fn expected_response_latency<T: Real>(
    topology: &Topology<T>,
    j: usize,
    y: &AllocationDecision,
    demand: &CountMatrix,
    sizes: &[u64],
    rate_samples: &[Vec<Vec<T>>],
    bs_rate: T,
) -> Result<T> {
    if demand.row_total(j) == 0 {
        return Ok(T::zero());
    }
    let draws = topology.rsus_of(j).iter().map(|&i| rate_samples[i][j].len()).min().unwrap_or(0);
    if draws == 0 {
        return Err(Error::NoChannelObservation { rsu: topology.rsus_of(j)[0], region: j });
    }
    let mut rates = vec![T::zero(); topology.num_rsus()];
    let mut sum = T::zero();
    for s in 0..draws {
        for &i in topology.rsus_of(j) {
            rates[i] = rate_samples[i][j][s];
        }
        sum = sum + response_latency(topology, j, y, demand, sizes, &rates, bs_rate)?;
    }
    Ok(sum / T::from_count(draws as u64))
}
