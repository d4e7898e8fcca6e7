use crate::error::{Error, Result};
use crate::model::types::{
    AllocationDecision, BitMatrix, RealMatrix, RequestHistory, Rsu, SensingDatum, Topology,
    TrafficRules, ValueWeights,
};
use crate::real::Real;

/// Freshness `F_k(t) = max{(t^E − t)/(t^E − t^U), 0}`.
pub fn freshness<T: Real>(sd: &SensingDatum<T>, slot: u64) -> Result<T> {
    if slot < sd.update_slot {
        return Err(Error::DatumNotYetGenerated { datum: sd.id, slot });
    }
    if slot >= sd.expiry_slot {
        return Ok(T::zero());
    }
    let remaining = T::from_count(sd.expiry_slot - slot);
    let lifespan = T::from_count(sd.expiry_slot - sd.update_slot);
    Ok(remaining / lifespan)
}

/// `A_ik(t)`: the RSU lies inside the datum's validity disk and no traffic rule excludes it.
pub fn affected_scope<T: Real>(sd: &SensingDatum<T>, rsu: &Rsu<T>, rules: &TrafficRules, _slot: u64) -> bool {
    sd.origin.distance(&rsu.location) <= sd.validity_radius_m && !rules.excludes(rsu, sd)
}

/// Popularity `H_jk(t) = ½[α·e^{−r/I} + β·e^{−z/I}]`; zero for never-requested data.
pub fn popularity<T: Real>(
    history: &RequestHistory,
    region: usize,
    datum: usize,
    slot: u64,
    weights: &ValueWeights<T>,
) -> T {
    let stats = history.stats(region, datum);
    if stats.cumulative == 0 {
        return T::zero();
    }
    let total = T::from_count(stats.cumulative);
    let interval = T::from_count(stats.last_interval);
    let gap = T::from_count(history.gap(region, datum, slot));
    let half = T::lit(0.5);
    half * (weights.alpha * (-interval / total).exp() + weights.beta * (-gap / total).exp())
}

/// Caching value `V = Σ_i Σ_{j∈J_i} Σ_k A_ik F_k H_jk y_ijk`.
pub fn caching_value<T: Real>(
    topology: &Topology<T>,
    y: &AllocationDecision,
    scope: &BitMatrix,
    fresh: &[T],
    pop: &RealMatrix<T>,
) -> Result<T> {
    let (ni, nj, nk) = y.dims();
    if ni != topology.num_rsus()
        || nj != topology.num_regions()
        || (scope.rows(), scope.cols()) != (ni, nk)
        || fresh.len() != nk
        || (pop.rows(), pop.cols()) != (nj, nk)
    {
        return Err(Error::DimensionMismatch("caching value operands".into()));
    }
    let mut total = T::zero();
    for i in 0..ni {
        for &j in topology.regions_of(i) {
            for k in 0..nk {
                let served = y.get(i, j, k);
                if served > 0 && scope.get(i, k) {
                    total = total + fresh[k] * pop.get(j, k) * T::from_count(u64::from(served));
                }
            }
        }
    }
    Ok(total)
}
