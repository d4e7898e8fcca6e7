use crate::error::{Error, Result};
use crate::model::types::{RealMatrix, Rsu, SlotObservation, Topology};
use crate::real::Real;

/// Mean rates below this are rejected as a degenerate channel (b/s).
pub const DEFAULT_RATE_FLOOR_BPS: f64 = 1e3;

/// Shannon rate `B·log2(1 + h·P/N0)` for one gain draw.
#[inline]
pub fn link_rate<T: Real>(bandwidth_hz: T, tx_power_w: T, gain: T, noise_power_w: T) -> T {
    bandwidth_hz * (T::one() + gain * tx_power_w / noise_power_w).log2()
}

/// Expected RSU→region rate: sample mean of [`link_rate`] over the slot's gain draws.
pub fn expected_rate<T: Real>(
    rsu: &Rsu<T>,
    region: usize,
    obs: &SlotObservation<T>,
    noise_power_w: T,
) -> Result<T> {
    expected_rate_with_floor(rsu, region, obs, noise_power_w, T::lit(DEFAULT_RATE_FLOOR_BPS))
}

pub fn expected_rate_with_floor<T: Real>(
    rsu: &Rsu<T>,
    region: usize,
    obs: &SlotObservation<T>,
    noise_power_w: T,
    floor_bps: T,
) -> Result<T> {
    if !(noise_power_w > T::zero()) {
        return Err(Error::InvalidNoisePower(noise_power_w.as_f64()));
    }
    let samples = obs
        .channel_gain_samples
        .get(rsu.id)
        .and_then(|row| row.get(region))
        .filter(|s| !s.is_empty())
        .ok_or(Error::NoChannelObservation { rsu: rsu.id, region })?;
    let n = T::from_count(samples.len() as u64);
    let mean = samples
        .iter()
        .map(|&h| link_rate(rsu.bandwidth_hz, rsu.tx_power_w, h, noise_power_w))
        .sum::<T>()
        / n;
    if !(mean >= floor_bps) || mean <= T::zero() {
        return Err(Error::DegenerateChannel { rsu: rsu.id, region, rate: mean.as_f64() });
    }
    Ok(mean)
}

/// Expected rates `r_ij` for all covered pairs (zero elsewhere).
pub fn rate_matrix<T: Real>(
    topology: &Topology<T>,
    obs: &SlotObservation<T>,
    noise_power_w: T,
    floor_bps: T,
) -> Result<RealMatrix<T>> {
    let mut rates = RealMatrix::zeros(topology.num_rsus(), topology.num_regions());
    for (i, rsu) in topology.rsus.iter().enumerate() {
        for &j in topology.regions_of(i) {
            rates.set(i, j, expected_rate_with_floor(rsu, j, obs, noise_power_w, floor_bps)?);
        }
    }
    Ok(rates)
}

/// Per-draw rates for every covered pair, `[i][j][sample]`.
pub fn rate_samples<T: Real>(
    topology: &Topology<T>,
    obs: &SlotObservation<T>,
    noise_power_w: T,
) -> Vec<Vec<Vec<T>>> {
    topology
        .rsus
        .iter()
        .enumerate()
        .map(|(i, rsu)| {
            (0..topology.num_regions())
                .map(|j| {
                    if !topology.covers(i, j) {
                        return Vec::new();
                    }
                    obs.channel_gain_samples[i][j]
                        .iter()
                        .map(|&h| link_rate(rsu.bandwidth_hz, rsu.tx_power_w, h, noise_power_w))
                        .collect()
                })
                .collect()
        })
        .collect()
}
