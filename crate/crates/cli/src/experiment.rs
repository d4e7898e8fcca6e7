use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use vcache::lyapunov::{ocda_run, LyapunovConfig, RunOptions, SlotSolver};
use vcache::scenario::{Congestion, ScenarioConfig};
use vcache::solver::exact::BbConfig;
use vcache::solver::{BqpsoConfig, BqpsoSolver, ExactSolver, GreedySolver, RandomSolver};
use vcache::trace::MetricsTrace;
use vcache::{Error, Result, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    OcdaExact,
    BqpsoDa,
    Greedy,
    Random,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [SolverKind::OcdaExact, SolverKind::BqpsoDa, SolverKind::Greedy, SolverKind::Random];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::OcdaExact => "ocda-exact",
            SolverKind::BqpsoDa => "bqpso-da",
            SolverKind::Greedy => "greedy",
            SolverKind::Random => "random",
        }
    }

    /// A fresh solver; stochastic ones are seeded from the run seed.
    pub fn build(self, seed: u64) -> Box<dyn SlotSolver<f64> + Send> {
        match self {
            SolverKind::OcdaExact => Box::new(ExactSolver::new(BbConfig::default())),
            SolverKind::BqpsoDa => {
                Box::new(BqpsoSolver::new(BqpsoConfig { rng_seed: seed, record_trace: false, ..Default::default() }))
            }
            SolverKind::Greedy => Box::new(GreedySolver),
            SolverKind::Random => Box::new(RandomSolver::new(seed)),
        }
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown solver {s:?} (expected ocda-exact, bqpso-da, greedy or random)")))
    }
}

/// Identifies one run of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunKey {
    pub solver: SolverKind,
    pub seed: u64,
    pub v_weight: f64,
    pub budget_j: f64,
    pub congestion: Congestion,
}

impl RunKey {
    /// File stem shared by the trace and its sidecars.
    pub fn stem(&self) -> String {
        format!(
            "{}_{}_v{:e}_b{}_s{}",
            self.solver.name(),
            self.congestion.name(),
            self.v_weight,
            self.budget_j,
            self.seed
        )
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    /// Base world; its seed and congestion are overridden per run.
    pub scenario: ScenarioConfig,
    pub solvers: Vec<SolverKind>,
    pub v_weights: Vec<f64>,
    pub budget_j: f64,
    pub seeds: Vec<u64>,
    pub congestion: Vec<Congestion>,
    pub out_dir: Option<PathBuf>,
    /// Worker threads; `0` uses the available parallelism.
    pub workers: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.solvers.is_empty() || self.v_weights.is_empty() || self.congestion.is_empty() {
            return bad("solver, v-weight and congestion lists must be non-empty");
        }
        if self.v_weights.iter().any(|&v| !(v > 0.0)) || !(self.budget_j > 0.0) {
            return bad("v-weights and the energy budget must be positive");
        }
        self.scenario.validate()
    }

    /// Every (solver, 𝒱, congestion, seed) combination in a fixed order.
    pub fn keys(&self) -> Vec<RunKey> {
        let mut keys = Vec::new();
        for &solver in &self.solvers {
            for &v_weight in &self.v_weights {
                for &congestion in &self.congestion {
                    for &seed in &self.seeds {
                        keys.push(RunKey { solver, seed, v_weight, budget_j: self.budget_j, congestion });
                    }
                }
            }
        }
        keys
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub key: RunKey,
    pub trace: MetricsTrace,
}

/// One run under the online loop. Deterministic in `key` and `scenario`.
pub fn run_one(scenario: &ScenarioConfig, key: &RunKey) -> Result<MetricsTrace> {
    let cfg = ScenarioConfig { seed: key.seed, congestion: key.congestion, ..scenario.clone() };
    let mut env = Scenario::new(cfg)?;
    let mut solver = key.solver.build(key.seed);
    let lyap = LyapunovConfig::new(key.v_weight, key.budget_j)?;
    Ok(ocda_run(&mut env, &mut solver, &lyap, &RunOptions::default())?.trace)
}

/// Runs every combination on a worker pool and writes one trace per run,
/// plus a summary and its timing sidecar, when an output directory is set.
///
/// The output directory is checked before any run starts.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunResult>> {
    spec.validate()?;
    if let Some(dir) = &spec.out_dir {
        crate::output::prepare_dir(dir)?;
    }
    let keys = spec.keys();
    let workers = match spec.workers {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(keys.len());

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<MetricsTrace>>>> = Mutex::new(vec![None; keys.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let n = next.fetch_add(1, Ordering::Relaxed);
                let Some(key) = keys.get(n) else { break };
                let out = run_one(&spec.scenario, key);
                if let (Ok(trace), Some(dir)) = (&out, &spec.out_dir) {
                    if let Err(e) = crate::output::write_run(dir, key, trace) {
                        slots.lock().unwrap()[n] = Some(Err(e));
                        continue;
                    }
                }
                slots.lock().unwrap()[n] = Some(out);
            });
        }
    });

    let results = keys
        .into_iter()
        .zip(slots.into_inner().unwrap())
        .map(|(key, r)| Ok(RunResult { key, trace: r.expect("every run is executed")? }))
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = &spec.out_dir {
        crate::output::write_summary(&dir.join("summary.csv"), &crate::aggregate(&results)?)?;
        crate::output::write_timing_summary(&dir.join("summary.timing.csv"), &crate::aggregate::aggregate_timing(&results)?)?;
    }
    Ok(results)
}
