//! Invariant suite behind the `verify` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vcache::lyapunov::{check_drift_bound, next_backlog, ocda_run, LyapunovConfig, RunOptions};
use vcache::model::rate::link_rate;
use vcache::model::{BitMatrix, ConstraintId};
use vcache::scenario::{dbm_to_w, expected_link_rate, sample_channel, ScenarioConfig};
use vcache::solver::allocate_y;
use vcache::solver::exact::{enumerate_oracle, solve_bb, BbConfig};
use vcache::synth::{tiny_instance, TinySpec};
use vcache::{Error, Result, Scenario};

use crate::experiment::SolverKind;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name, passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub v_weight: f64,
    pub budget_j: f64,
    /// Random tiny instances for the allocation and oracle checks.
    pub tiny_instances: u64,
    /// Shadowing draws per distance for the channel-mean check.
    pub channel_draws: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { v_weight: 4e-3, budget_j: 35.0, tiny_instances: 100, channel_draws: 200_000 }
    }
}

/// Runs every check; a check that cannot run counts as failed.
pub fn run_suite(base: &ScenarioConfig, seeds: &[u64], opts: &VerifyOptions) -> Result<Vec<Check>> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one seed is required".into()));
    }
    let mut checks = queue_checks(base, seeds, opts)?;
    checks.push(coverage_check(base, seeds)?);
    checks.push(allocation_check(opts.tiny_instances));
    checks.push(channel_check(base, opts.channel_draws));
    checks.push(oracle_check(opts.tiny_instances));
    Ok(checks)
}

/// Queue recurrence on the written columns and the realized drift bound,
/// for the exact solver and a baseline on every seed.
fn queue_checks(base: &ScenarioConfig, seeds: &[u64], opts: &VerifyOptions) -> Result<Vec<Check>> {
    let lyap = LyapunovConfig::new(opts.v_weight, opts.budget_j)?;
    let (mut runs, mut recurrence_bad, mut drift_bad, mut slots) = (0, 0usize, 0usize, 0usize);
    for &seed in seeds {
        for kind in [SolverKind::OcdaExact, SolverKind::Greedy] {
            let mut env = Scenario::new(ScenarioConfig { seed, ..base.clone() })?;
            let mut solver = kind.build(seed);
            let out = ocda_run(&mut env, &mut solver, &lyap, &RunOptions::default())?;
            runs += 1;
            slots += out.trace.len();
            let mut q = 0.0;
            for r in &out.trace.records {
                let next = next_backlog(r.backlog, r.energy, opts.budget_j);
                if r.backlog != q || (r.backlog_next - next).abs() > 1e-9 * (1.0 + next.abs()) {
                    recurrence_bad += 1;
                }
                q = r.backlog_next;
            }
            drift_bad += match check_drift_bound(&out.queue.history, out.queue.backlog, opts.budget_j) {
                Ok(ok) => ok.iter().filter(|&&b| !b).count(),
                Err(Error::EmptyTrace) => 0,
                Err(_) => out.trace.len().max(1),
            };
        }
    }
    Ok(vec![
        Check::new("queue-recurrence", recurrence_bad == 0, format!("{recurrence_bad} bad slots over {runs} runs")),
        Check::new("drift-bound", drift_bad == 0, format!("{drift_bad} violations over {slots} slots")),
    ])
}

fn coverage_check(base: &ScenarioConfig, seeds: &[u64]) -> Result<Check> {
    let mut bad = Vec::new();
    for &seed in seeds {
        let env = Scenario::new(ScenarioConfig { seed, ..base.clone() })?;
        let topo = vcache::environment::Environment::topology(&env);
        let counts_ok = (0..topo.num_rsus())
            .all(|i| (base.min_rsu_coverage..=base.max_rsu_coverage).contains(&topo.regions_of(i).len()));
        if !topo.coverage_is_symmetric() || !counts_ok {
            bad.push(seed);
        }
    }
    Ok(Check::new("coverage-symmetry", bad.is_empty(), format!("failing seeds {bad:?}")))
}

/// `allocate_y` never serves uncached data, never exceeds demand and only
/// uses covering links, for arbitrary caching decisions.
fn allocation_check(instances: u64) -> Check {
    let mut bad = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(0xa11c);
    for seed in 0..instances {
        let inst = tiny_instance::<f64>(seed, &TinySpec { max_demand: 5, ..TinySpec::default() });
        let (ni, _, nk) = inst.dims();
        for _ in 0..10 {
            let x = BitMatrix::from_flat(ni, nk, (0..ni * nk).map(|_| rng.random_bool(0.5)).collect());
            let report = inst.report(&x, &allocate_y(&x, &inst));
            if report.has(ConstraintId::C4) || report.has(ConstraintId::C5) || report.has(ConstraintId::Coverage) {
                bad += 1;
            }
        }
    }
    Check::new("allocation-by-construction", bad == 0, format!("{bad} of {} decisions violate C4/C5", instances * 10))
}

/// The sample mean of per-draw link rates converges to the integrated expectation.
fn channel_check(cfg: &ScenarioConfig, draws: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc4a);
    let power = dbm_to_w(cfg.tx_power_dbm);
    let noise = cfg.noise_power_w();
    let mut worst: f64 = 0.0;
    for d in [50.0, 200.0, 400.0] {
        let mean = (0..draws)
            .map(|_| link_rate(cfg.bandwidth_hz, power, sample_channel(cfg, d, &mut rng), noise))
            .sum::<f64>()
            / draws as f64;
        let expect = expected_link_rate(cfg, d, power);
        worst = worst.max((mean - expect).abs() / expect);
    }
    Check::new("channel-mean", worst < 0.01, format!("worst relative error {worst:.2e}"))
}

/// Branch and bound agrees with exhaustive enumeration on tiny instances.
fn oracle_check(instances: u64) -> Check {
    let mut bad = Vec::new();
    for seed in 0..instances {
        let inst = tiny_instance::<f64>(seed, &TinySpec::default());
        let ok = match (solve_bb(&inst, &BbConfig::exhaustive()), enumerate_oracle(&inst)) {
            (Ok(b), Ok(o)) => (b.objective - o.objective).abs() <= 1e-9 * (1.0 + o.objective.abs()),
            (Err(Error::Infeasible), Err(Error::Infeasible)) => true,
            _ => false,
        };
        if !ok {
            bad.push(seed);
        }
    }
    Check::new("exact-vs-enumeration", bad.is_empty(), format!("mismatching seeds {bad:?}"))
}
