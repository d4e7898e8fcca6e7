//! The slot problem as an integer linear program.
//!
//! `y_ijk` is expanded into one-hot level bits `χ_ijkθ`, `θ = 0..d_jk`, the
//! sojourn latency `L_i` becomes a variable tied to the load by
//! `μ_i L_i − Σ θ ξ_ijkθ = 1` with `ξ = χ·L` enforced by the big-M quartet
//!
//! ```text
//! ξ ≤ L      ξ ≤ M·χ      ξ ≥ M·(χ − 1) + L      ξ ≥ 0
//! ```
//!
//! and the base station gets the same treatment with level bits on the
//! residual demand. The expected delay is a per-draw epigraph `D_js` averaged
//! against `δ_j`; activity binaries switch the max-terms of idle links off.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::instance::SlotInstance;
use crate::model::types::{AllocationDecision, CachingDecision};
use crate::real::Real;

/// Largest demand per `(j,k)` the expansion accepts by default.
pub const DEFAULT_MAX_DEMAND: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKey {
    X { i: usize, k: usize },
    Chi { i: usize, j: usize, k: usize, theta: u32 },
    Xi { i: usize, j: usize, k: usize, theta: u32 },
    L { i: usize },
    L0,
    ResidualChi { j: usize, k: usize, theta: u32 },
    ResidualXi { j: usize, k: usize, theta: u32 },
    Active { i: usize, j: usize },
    ActiveBs { j: usize },
    Delay { j: usize, s: usize },
}

impl VarKey {
    pub fn is_binary(&self) -> bool {
        matches!(
            self,
            VarKey::X { .. } | VarKey::Chi { .. } | VarKey::ResidualChi { .. } | VarKey::Active { .. } | VarKey::ActiveBs { .. }
        )
    }

    pub fn name(&self) -> String {
        match *self {
            VarKey::X { i, k } => format!("x_{i}_{k}"),
            VarKey::Chi { i, j, k, theta } => format!("chi_{i}_{j}_{k}_{theta}"),
            VarKey::Xi { i, j, k, theta } => format!("xi_{i}_{j}_{k}_{theta}"),
            VarKey::L { i } => format!("L_{i}"),
            VarKey::L0 => "L_0".to_string(),
            VarKey::ResidualChi { j, k, theta } => format!("chi0_{j}_{k}_{theta}"),
            VarKey::ResidualXi { j, k, theta } => format!("xi0_{j}_{k}_{theta}"),
            VarKey::Active { i, j } => format!("u_{i}_{j}"),
            VarKey::ActiveBs { j } => format!("u0_{j}"),
            VarKey::Delay { j, s } => format!("D_{j}_{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn tag(self) -> &'static str {
        match self {
            Sense::Le => "LE",
            Sense::Ge => "GE",
            Sense::Eq => "EQ",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row<T> {
    pub name: String,
    pub coefs: Vec<(usize, T)>,
    pub sense: Sense,
    pub rhs: T,
    /// Big-M constant used in this row, if any.
    pub big_m: Option<T>,
}

#[derive(Debug, Clone)]
pub struct LinearizedProgram<T> {
    pub vars: Vec<VarKey>,
    pub rows: Vec<Row<T>>,
    pub objective: Vec<(usize, T)>,
    pub objective_constant: T,
    index: BTreeMap<VarKey, usize>,
    pub instance: SlotInstance<T>,
}

/// Counts of each variable family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VarCounts {
    pub x: usize,
    pub chi: usize,
    pub xi: usize,
    pub l: usize,
    pub l0: usize,
    pub residual_chi: usize,
    pub residual_xi: usize,
    pub active: usize,
    pub delay: usize,
}

struct Builder<T> {
    vars: Vec<VarKey>,
    index: BTreeMap<VarKey, usize>,
    rows: Vec<Row<T>>,
}

impl<T: Real> Builder<T> {
    fn var(&mut self, key: VarKey) -> usize {
        let n = self.vars.len();
        *self.index.entry(key).or_insert_with(|| {
            self.vars.push(key);
            n
        })
    }

    fn row(&mut self, name: String, coefs: Vec<(usize, T)>, sense: Sense, rhs: T, big_m: Option<T>) {
        self.rows.push(Row { name, coefs, sense, rhs, big_m });
    }
}

/// Builds the program with the default demand cap.
pub fn linearize<T: Real>(inst: &SlotInstance<T>) -> Result<LinearizedProgram<T>> {
    linearize_with_cap(inst, DEFAULT_MAX_DEMAND)
}

pub fn linearize_with_cap<T: Real>(inst: &SlotInstance<T>, max_demand: u32) -> Result<LinearizedProgram<T>> {
    let topo = &*inst.topology;
    let (ni, nj, nk) = inst.dims();
    for j in 0..nj {
        for k in 0..nk {
            let d = inst.demand.get(j, k);
            if d > max_demand {
                return Err(Error::InstanceTooLarge(format!("demand {d} at region {j}, datum {k} exceeds {max_demand}")));
            }
        }
    }
    let eps = inst.stability_margin;
    let big_m = T::one() / eps;
    let mut b = Builder { vars: Vec::new(), index: BTreeMap::new(), rows: Vec::new() };
    let d = |j: usize, k: usize| inst.demand.get(j, k);
    let size = |k: usize| T::from_count(inst.sizes[k]);
    let thetas = |dj: u32| (0..=dj).map(|t| (t, T::from_count(u64::from(t))));

    for i in 0..ni {
        for k in 0..nk {
            b.var(VarKey::X { i, k });
        }
    }
    for i in 0..ni {
        b.var(VarKey::L { i });
    }
    b.var(VarKey::L0);

    // Level bits, C4, one-hot and ξ quartets per served triple.
    for i in 0..ni {
        for &j in topo.regions_of(i) {
            for k in 0..nk {
                let dj = d(j, k);
                if dj == 0 {
                    continue;
                }
                let x = b.var(VarKey::X { i, k });
                let l = b.var(VarKey::L { i });
                let mut onehot = Vec::new();
                let mut level = Vec::new();
                for (theta, tv) in thetas(dj) {
                    let chi = b.var(VarKey::Chi { i, j, k, theta });
                    let xi = b.var(VarKey::Xi { i, j, k, theta });
                    onehot.push((chi, T::one()));
                    if theta > 0 {
                        level.push((chi, tv));
                    }
                    let tag = format!("{i}_{j}_{k}_{theta}");
                    b.row(format!("xi_le_L_{tag}"), vec![(xi, T::one()), (l, -T::one())], Sense::Le, T::zero(), None);
                    b.row(format!("xi_le_Mchi_{tag}"), vec![(xi, T::one()), (chi, -big_m)], Sense::Le, T::zero(), Some(big_m));
                    b.row(
                        format!("xi_ge_L_{tag}"),
                        vec![(xi, T::one()), (chi, -big_m), (l, -T::one())],
                        Sense::Ge,
                        -big_m,
                        Some(big_m),
                    );
                    b.row(format!("xi_ge_0_{tag}"), vec![(xi, T::one())], Sense::Ge, T::zero(), None);
                }
                b.row(format!("onehot_{i}_{j}_{k}"), onehot, Sense::Eq, T::one(), None);
                let dm = T::from_count(u64::from(dj));
                let mut c4 = level;
                c4.push((x, -dm));
                b.row(format!("c4_{i}_{j}_{k}"), c4, Sense::Le, T::zero(), Some(dm));
            }
        }
    }

    // C5 and the residual expansion for the base station.
    let l0 = b.var(VarKey::L0);
    for j in 0..nj {
        for k in 0..nk {
            let dj = d(j, k);
            if dj == 0 {
                continue;
            }
            let dm = T::from_count(u64::from(dj));
            let mut served = Vec::new();
            for &i in topo.rsus_of(j) {
                for (theta, tv) in thetas(dj).skip(1) {
                    served.push((b.index[&VarKey::Chi { i, j, k, theta }], tv));
                }
            }
            b.row(format!("c5_{j}_{k}"), served.clone(), Sense::Le, dm, None);
            let mut onehot = Vec::new();
            let mut link = served;
            for (theta, tv) in thetas(dj) {
                let chi = b.var(VarKey::ResidualChi { j, k, theta });
                let xi = b.var(VarKey::ResidualXi { j, k, theta });
                onehot.push((chi, T::one()));
                if theta > 0 {
                    link.push((chi, tv));
                }
                let tag = format!("{j}_{k}_{theta}");
                b.row(format!("xi0_le_L_{tag}"), vec![(xi, T::one()), (l0, -T::one())], Sense::Le, T::zero(), None);
                b.row(format!("xi0_le_Mchi_{tag}"), vec![(xi, T::one()), (chi, -big_m)], Sense::Le, T::zero(), Some(big_m));
                b.row(
                    format!("xi0_ge_L_{tag}"),
                    vec![(xi, T::one()), (chi, -big_m), (l0, -T::one())],
                    Sense::Ge,
                    -big_m,
                    Some(big_m),
                );
                b.row(format!("xi0_ge_0_{tag}"), vec![(xi, T::one())], Sense::Ge, T::zero(), None);
            }
            b.row(format!("onehot0_{j}_{k}"), onehot, Sense::Eq, T::one(), None);
            b.row(format!("residual_{j}_{k}"), link, Sense::Eq, dm, None);
        }
    }

    // C3.
    for (i, rsu) in topo.rsus.iter().enumerate() {
        let coefs = (0..nk).map(|k| (b.index[&VarKey::X { i, k }], size(k))).collect();
        b.row(format!("c3_{i}"), coefs, Sense::Le, T::from_count(rsu.storage_bits), None);
    }

    // Stability and the L rows.
    for (i, rsu) in topo.rsus.iter().enumerate() {
        let mut load = Vec::new();
        let mut lrow = vec![(b.index[&VarKey::L { i }], rsu.service_rate)];
        for &j in topo.regions_of(i) {
            for k in 0..nk {
                for (theta, tv) in thetas(d(j, k)).skip(1) {
                    load.push((b.index[&VarKey::Chi { i, j, k, theta }], tv));
                    lrow.push((b.index[&VarKey::Xi { i, j, k, theta }], -tv));
                }
            }
        }
        b.row(format!("stab_{i}"), load, Sense::Le, rsu.service_rate - eps, None);
        b.row(format!("lrow_{i}"), lrow, Sense::Eq, T::one(), None);
    }
    let mu0 = topo.base_station.service_rate;
    let mut load0 = Vec::new();
    let mut lrow0 = vec![(l0, mu0)];
    for j in 0..nj {
        for k in 0..nk {
            for (theta, tv) in thetas(d(j, k)).skip(1) {
                load0.push((b.index[&VarKey::ResidualChi { j, k, theta }], tv));
                lrow0.push((b.index[&VarKey::ResidualXi { j, k, theta }], -tv));
            }
        }
    }
    b.row("stab_0".to_string(), load0, Sense::Le, mu0 - eps, None);
    b.row("lrow_0".to_string(), lrow0, Sense::Eq, T::one(), None);

    // C2: per-draw epigraph of the max, averaged against δ_j.
    let draws = inst.draws();
    for (j, region) in topo.regions.iter().enumerate() {
        let total: u32 = (0..nk).map(|k| d(j, k)).sum();
        if total == 0 {
            continue;
        }
        let tot = T::from_count(u64::from(total));
        let delays: Vec<usize> = (0..draws).map(|s| b.var(VarKey::Delay { j, s })).collect();
        for (s, &dv) in delays.iter().enumerate() {
            b.row(format!("d_ge_0_{j}_{s}"), vec![(dv, T::one())], Sense::Ge, T::zero(), None);
        }
        for &i in topo.rsus_of(j) {
            let u = b.var(VarKey::Active { i, j });
            let mut link = Vec::new();
            for k in 0..nk {
                for (theta, tv) in thetas(d(j, k)).skip(1) {
                    link.push((b.index[&VarKey::Chi { i, j, k, theta }], tv, size(k)));
                }
            }
            let mut act: Vec<(usize, T)> = link.iter().map(|&(c, tv, _)| (c, tv)).collect();
            act.push((u, -tot));
            b.row(format!("active_{i}_{j}"), act, Sense::Le, T::zero(), Some(tot));
            let inv = inst.inverse_rate_samples(i, j);
            let max_bits: T = (0..nk).map(|k| size(k) * T::from_count(u64::from(d(j, k)))).sum();
            let max_inv = inv.iter().copied().fold(T::zero(), T::max);
            let m_delay = big_m + max_bits * max_inv;
            let li = b.index[&VarKey::L { i }];
            for (s, &dv) in delays.iter().enumerate() {
                let mut coefs = vec![(dv, T::one()), (li, -T::one()), (u, -m_delay)];
                coefs.extend(link.iter().map(|&(c, tv, sz)| (c, -tv * sz * inv[s])));
                b.row(format!("d_rsu_{i}_{j}_{s}"), coefs, Sense::Ge, -m_delay, Some(m_delay));
            }
        }
        let u0 = b.var(VarKey::ActiveBs { j });
        let mut res = Vec::new();
        for k in 0..nk {
            for (theta, tv) in thetas(d(j, k)).skip(1) {
                res.push((b.index[&VarKey::ResidualChi { j, k, theta }], tv, size(k)));
            }
        }
        let mut act: Vec<(usize, T)> = res.iter().map(|&(c, tv, _)| (c, tv)).collect();
        act.push((u0, -tot));
        b.row(format!("active0_{j}"), act, Sense::Le, T::zero(), Some(tot));
        let max_bits: T = (0..nk).map(|k| size(k) * T::from_count(u64::from(d(j, k)))).sum();
        let r0 = inst.bs_rates[j];
        let m_delay = big_m + max_bits / r0;
        for (s, &dv) in delays.iter().enumerate() {
            let mut coefs = vec![(dv, T::one()), (l0, -T::one()), (u0, -m_delay)];
            coefs.extend(res.iter().map(|&(c, tv, sz)| (c, -tv * sz / r0)));
            b.row(format!("d_bs_{j}_{s}"), coefs, Sense::Ge, -m_delay, Some(m_delay));
        }
        let w = T::one() / T::from_count(draws as u64);
        let coefs = delays.iter().map(|&dv| (dv, w)).collect();
        b.row(format!("c2_{j}"), coefs, Sense::Le, region.delay_tolerance_s, None);
    }

    // Objective: const + Σ a x + Σ b θ χ.
    let mut objective = Vec::new();
    for i in 0..ni {
        for k in 0..nk {
            let a = inst.cache_coef(i, k);
            if a != T::zero() {
                objective.push((b.index[&VarKey::X { i, k }], a));
            }
        }
    }
    for i in 0..ni {
        for &j in topo.regions_of(i) {
            for k in 0..nk {
                let c = inst.unit_coef(i, j, k);
                for (theta, tv) in thetas(d(j, k)).skip(1) {
                    if c != T::zero() {
                        objective.push((b.index[&VarKey::Chi { i, j, k, theta }], c * tv));
                    }
                }
            }
        }
    }

    Ok(LinearizedProgram {
        vars: b.vars,
        rows: b.rows,
        objective,
        objective_constant: inst.constant(),
        index: b.index,
        instance: inst.clone(),
    })
}

impl<T: Real> LinearizedProgram<T> {
    pub fn var_index(&self, key: &VarKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn counts(&self) -> VarCounts {
        let mut c = VarCounts::default();
        for v in &self.vars {
            match v {
                VarKey::X { .. } => c.x += 1,
                VarKey::Chi { .. } => c.chi += 1,
                VarKey::Xi { .. } => c.xi += 1,
                VarKey::L { .. } => c.l += 1,
                VarKey::L0 => c.l0 += 1,
                VarKey::ResidualChi { .. } => c.residual_chi += 1,
                VarKey::ResidualXi { .. } => c.residual_xi += 1,
                VarKey::Active { .. } | VarKey::ActiveBs { .. } => c.active += 1,
                VarKey::Delay { .. } => c.delay += 1,
            }
        }
        c
    }

    pub fn evaluate_objective(&self, values: &[T]) -> T {
        self.objective.iter().fold(self.objective_constant, |acc, &(v, c)| acc + c * values[v])
    }

    /// Rows violated by a full assignment, beyond a relative tolerance.
    pub fn violated_rows(&self, values: &[T], tol: T) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(r, row)| {
                let lhs = row.coefs.iter().fold(T::zero(), |acc, &(v, c)| acc + c * values[v]);
                let scale = T::one() + row.rhs.abs().max(lhs.abs());
                let ok = match row.sense {
                    Sense::Le => lhs <= row.rhs + tol * scale,
                    Sense::Ge => lhs >= row.rhs - tol * scale,
                    Sense::Eq => (lhs - row.rhs).abs() <= tol * scale,
                };
                (!ok).then_some(r)
            })
            .collect()
    }

    /// Completes `(x, y)` to a full assignment: level bits from `y`, `L` from
    /// the loads, `ξ = χ·L`, activity from the links in use and `D_js` as the
    /// per-draw max. `None` when `(x, y)` has no encoding (allocation off
    /// coverage or beyond demand, or a load at or above `μ`).
    pub fn complete(&self, x: &CachingDecision, y: &AllocationDecision) -> Option<Vec<T>> {
        let inst = &self.instance;
        let topo = &*inst.topology;
        let (ni, nj, nk) = inst.dims();
        for i in 0..ni {
            for j in 0..nj {
                for k in 0..nk {
                    let v = y.get(i, j, k);
                    if v > 0 && (!topo.covers(i, j) || v > inst.demand.get(j, k)) {
                        return None;
                    }
                }
            }
        }
        let profile = inst.load_profile(y);
        if profile.oversubscribed {
            return None;
        }
        let l_of = |load: u64, mu: T| {
            let lf = T::from_count(load);
            (lf < mu).then(|| T::one() / (mu - lf))
        };
        let mut l = Vec::with_capacity(ni);
        for i in 0..ni {
            l.push(l_of(profile.rsu_load[i], topo.rsus[i].service_rate)?);
        }
        let l0 = l_of(profile.bs_load, topo.base_station.service_rate)?;

        let mut vals = vec![T::zero(); self.vars.len()];
        for (idx, key) in self.vars.iter().enumerate() {
            let one = |b: bool| if b { T::one() } else { T::zero() };
            vals[idx] = match *key {
                VarKey::X { i, k } => one(x.get(i, k)),
                VarKey::Chi { i, j, k, theta } => one(y.get(i, j, k) == theta),
                VarKey::Xi { i, j, k, theta } => one(y.get(i, j, k) == theta) * l[i],
                VarKey::L { i } => l[i],
                VarKey::L0 => l0,
                VarKey::ResidualChi { j, k, theta } => one(residual(inst, y, j, k) == theta),
                VarKey::ResidualXi { j, k, theta } => one(residual(inst, y, j, k) == theta) * l0,
                VarKey::Active { i, j } => one(profile.link_bits[i * nj + j] > 0),
                VarKey::ActiveBs { j } => one(profile.residual[j] > 0),
                VarKey::Delay { j, s } => {
                    let mut worst = T::zero();
                    for &i in topo.rsus_of(j) {
                        let bits = profile.link_bits[i * nj + j];
                        if bits > 0 {
                            worst = worst.max(l[i] + T::from_count(bits) * inst.inverse_rate_samples(i, j)[s]);
                        }
                    }
                    if profile.residual[j] > 0 {
                        worst = worst.max(l0 + T::from_count(profile.residual_bits[j]) / inst.bs_rates[j]);
                    }
                    worst
                }
            };
        }
        Some(vals)
    }

    /// Whether the linear rows accept `(x, y)` under its canonical completion.
    pub fn accepts(&self, x: &CachingDecision, y: &AllocationDecision, tol: T) -> bool {
        self.complete(x, y).is_some_and(|v| self.violated_rows(&v, tol).is_empty())
    }

    /// Plain-text dump: a `VARIABLES` block (`index name B|C`), the objective
    /// as `index:coef` pairs after its constant, then one line per row:
    /// `name sense rhs [M=big_m] index:coef ...`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "VARIABLES {}", self.vars.len());
        for (i, v) in self.vars.iter().enumerate() {
            let _ = writeln!(out, "{i} {} {}", v.name(), if v.is_binary() { "B" } else { "C" });
        }
        let _ = write!(out, "OBJECTIVE {:e}", self.objective_constant.as_f64());
        for &(v, c) in &self.objective {
            let _ = write!(out, " {v}:{:e}", c.as_f64());
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "ROWS {}", self.rows.len());
        for row in &self.rows {
            let _ = write!(out, "{} {} {:e}", row.name, row.sense.tag(), row.rhs.as_f64());
            if let Some(m) = row.big_m {
                let _ = write!(out, " M={:e}", m.as_f64());
            }
            for &(v, c) in &row.coefs {
                let _ = write!(out, " {v}:{:e}", c.as_f64());
            }
            let _ = writeln!(out);
        }
        out
    }
}

fn residual<T: Real>(inst: &SlotInstance<T>, y: &AllocationDecision, j: usize, k: usize) -> u32 {
    inst.demand.get(j, k).saturating_sub(y.served(j, k) as u32)
}
