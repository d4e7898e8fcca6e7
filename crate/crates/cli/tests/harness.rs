use std::path::PathBuf;

use proptest::prelude::*;
use vcache::lyapunov::next_backlog;
use vcache::scenario::{Congestion, ScenarioConfig};
use vcache::trace::{MetricsTrace, SlotRecord};
use vcache::Error;
use vcache_harness::output::{read_trace, write_trace};
use vcache_harness::{aggregate, aggregate_timing, read_metadata, run_experiment, ExperimentSpec, RunKey, RunResult, SolverKind};

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vcache-harness-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn spec(solvers: Vec<SolverKind>, seeds: Vec<u64>, horizon: usize, out: Option<PathBuf>) -> ExperimentSpec {
    ExperimentSpec {
        scenario: ScenarioConfig { horizon_slots: horizon, channel_draws: 16, ..ScenarioConfig::default() },
        solvers,
        v_weights: vec![4e-3],
        budget_j: 35.0,
        seeds,
        congestion: vec![Congestion::Moderate],
        out_dir: out,
        workers: 2,
    }
}

fn record(slot: u64, value: f64, energy: f64, backlog: f64) -> SlotRecord {
    SlotRecord {
        slot,
        value,
        energy,
        backlog,
        backlog_next: next_backlog(backlog, energy, 35.0),
        max_delay: 0.1,
        hit_ratio: Some(0.5),
        fitness: -value,
        requests: 10,
        served: 5,
        delay_violations: 0,
        infeasible: false,
        optimal: false,
        wall_time_s: 0.0,
    }
}

fn key(seed: u64) -> RunKey {
    RunKey { solver: SolverKind::Greedy, seed, v_weight: 4e-3, budget_j: 35.0, congestion: Congestion::Moderate }
}

#[test]
fn solver_names_round_trip() {
    for k in SolverKind::ALL {
        assert_eq!(k.name().parse::<SolverKind>().unwrap(), k);
    }
    assert!("simplex".parse::<SolverKind>().is_err());
}

#[test]
fn one_greedy_seed_gives_a_ten_row_trace_and_one_summary_row() {
    let dir = tmp("single");
    let results = run_experiment(&spec(vec![SolverKind::Greedy], vec![3], 10, Some(dir.clone()))).unwrap();
    assert_eq!(results.len(), 1);
    let stem = results[0].key.stem();
    let trace = read_trace(&dir.join(format!("{stem}.csv"))).unwrap();
    assert_eq!(trace, results[0].trace);
    assert_eq!(trace.len(), 10);
    let meta = read_metadata(&dir.join(format!("{stem}.meta.json"))).unwrap();
    assert_eq!((meta.solver.as_str(), meta.seed, meta.slots), ("greedy", 3, 10));
    let summary = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
}

#[test]
fn repeated_runs_write_identical_csvs() {
    let (a, b) = (tmp("det-a"), tmp("det-b"));
    let kinds = vec![SolverKind::OcdaExact, SolverKind::BqpsoDa, SolverKind::Random];
    let mut s = spec(kinds, vec![1], 4, Some(a.clone()));
    s.scenario.channel_draws = 8;
    let ra = run_experiment(&s).unwrap();
    s.out_dir = Some(b.clone());
    s.workers = 1;
    run_experiment(&s).unwrap();
    let mut names: Vec<String> = ra.iter().map(|r| format!("{}.csv", r.key.stem())).collect();
    names.push("summary.csv".into());
    for name in &names {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert!(b.join("summary.timing.csv").exists());
}

#[test]
fn unwritable_output_fails_before_running() {
    let file = tmp("blocker");
    std::fs::write(&file, b"not a directory").unwrap();
    let s = spec(vec![SolverKind::OcdaExact], vec![0], 1800, Some(file.join("out")));
    let start = std::time::Instant::now();
    assert!(matches!(run_experiment(&s), Err(Error::Io(_))));
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn empty_seed_list_is_rejected() {
    assert!(matches!(run_experiment(&spec(vec![SolverKind::Greedy], vec![], 5, None)), Err(Error::InvalidConfig(_))));
}

#[test]
fn written_backlog_column_follows_the_queue_recurrence() {
    let results = run_experiment(&spec(vec![SolverKind::Random], vec![0, 1], 30, None)).unwrap();
    for r in &results {
        let mut q = 0.0;
        for s in &r.trace.records {
            assert_eq!(s.backlog, q);
            assert!((s.backlog_next - next_backlog(s.backlog, s.energy, 35.0)).abs() <= 1e-9);
            assert_eq!(s.hit_ratio, (s.requests > 0).then(|| s.served as f64 / s.requests as f64));
            q = s.backlog_next;
        }
    }
}

mod summary {
    use super::*;

    #[test]
    fn single_trace_has_its_own_means_and_no_spread() {
        let trace = MetricsTrace { records: vec![record(0, 2.0, 30.0, 0.0), record(1, 4.0, 40.0, 0.0)] };
        let rows = aggregate(&[RunResult { key: key(0), trace: trace.clone() }]).unwrap();
        let s = trace.summary();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].value_mean, rows[0].energy_mean), (s.mean_value, s.mean_energy));
        assert_eq!((rows[0].value_std, rows[0].energy_std), (0.0, 0.0));
    }

    #[test]
    fn identical_traces_have_no_spread() {
        let t = MetricsTrace { records: vec![record(0, 2.0, 30.0, 0.0), record(1, 3.0, 50.0, 0.0)] };
        let runs = [RunResult { key: key(0), trace: t.clone() }, RunResult { key: key(1), trace: t }];
        let r = &aggregate(&runs).unwrap()[0];
        assert_eq!(r.seeds, 2);
        assert_eq!((r.value_std, r.energy_std, r.backlog_std), (0.0, 0.0, 0.0));
    }

    #[test]
    fn two_traces_match_hand_arithmetic() {
        // Trace a: values 1, 3 → mean 2; energies 30, 50 → mean 40.
        // Trace b: values 5, 7 → mean 6; energies 20, 20 → mean 20.
        // Across seeds: value mean 4, std sqrt(8); energy mean 30, std sqrt(200).
        let a = MetricsTrace { records: vec![record(0, 1.0, 30.0, 0.0), record(1, 3.0, 50.0, 0.0)] };
        let b = MetricsTrace { records: vec![record(0, 5.0, 20.0, 0.0), record(1, 7.0, 20.0, 0.0)] };
        let rows = aggregate(&[RunResult { key: key(0), trace: a }, RunResult { key: key(1), trace: b }]).unwrap();
        let r = &rows[0];
        assert!((r.value_mean - 4.0).abs() < 1e-12);
        assert!((r.value_std - 8f64.sqrt()).abs() < 1e-12);
        assert!((r.energy_mean - 30.0).abs() < 1e-12);
        assert!((r.energy_std - 200f64.sqrt()).abs() < 1e-12);
        // Q(T) is 15 for a (0 + 50 − 35) and 0 for b.
        assert!((r.final_backlog_mean - 7.5).abs() < 1e-12);
    }

    #[test]
    fn mixed_horizons_are_rejected() {
        let a = MetricsTrace { records: vec![record(0, 1.0, 30.0, 0.0)] };
        let b = MetricsTrace { records: vec![record(0, 1.0, 30.0, 0.0), record(1, 1.0, 30.0, 0.0)] };
        let err = aggregate(&[RunResult { key: key(0), trace: a }, RunResult { key: key(1), trace: b }]);
        assert_eq!(err, Err(Error::MixedHorizon(1, 2)));
    }

    #[test]
    fn timing_summary_reports_mean_and_slowest_slot() {
        let mut a = MetricsTrace { records: vec![record(0, 1.0, 30.0, 0.0), record(1, 1.0, 30.0, 0.0)] };
        a.records[0].wall_time_s = 0.2;
        a.records[1].wall_time_s = 0.4;
        let t = &aggregate_timing(&[RunResult { key: key(0), trace: a }]).unwrap()[0];
        assert!((t.wall_time_mean - 0.3).abs() < 1e-12);
        assert_eq!((t.wall_time_std, t.wall_time_max), (0.0, 0.4));
    }

    #[test]
    fn empty_set_is_rejected() {
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn ranking_orders_solvers_within_a_configuration() {
        let low = MetricsTrace { records: vec![record(0, 1.0, 10.0, 0.0)] };
        let high = MetricsTrace { records: vec![record(0, 9.0, 50.0, 0.0)] };
        let rows = aggregate(&[
            RunResult { key: key(0), trace: low },
            RunResult { key: RunKey { solver: SolverKind::Random, ..key(0) }, trace: high },
        ])
        .unwrap();
        assert_eq!(rows[0].ranking, "energy=1;delay=1;hit=1;value=2");
        assert_eq!(rows[1].ranking, "energy=2;delay=1;hit=1;value=1");
    }
}

fn arb_record() -> impl Strategy<Value = SlotRecord> {
    let reals = (-1e6..1e6f64, 0.0..1e3f64, 0.0..1e3f64, 0.0..1e3f64, prop_oneof![Just(f64::INFINITY), 0.0..10.0f64]);
    let extra = (proptest::option::of(0.0..=1.0f64), any::<f64>().prop_filter("finite", |f| f.is_finite()));
    let counts = (0..1000u64, 0..1000u64, 0..16u32, any::<bool>(), any::<bool>(), 0.0..1.0f64);
    (0..2000u64, reals, extra, counts).prop_map(|(slot, (value, energy, backlog, next, delay), (hit, fit), c)| SlotRecord {
        slot,
        value,
        energy,
        backlog,
        backlog_next: next,
        max_delay: delay,
        hit_ratio: hit,
        fitness: fit,
        requests: c.0,
        served: c.1,
        delay_violations: c.2,
        infeasible: c.3,
        optimal: c.4,
        wall_time_s: c.5,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_exact(records in proptest::collection::vec(arb_record(), 0..20), n in any::<u32>()) {
        let dir = tmp(&format!("rt-{n}"));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        let trace = MetricsTrace { records };
        write_trace(&path, &trace).unwrap();
        vcache_harness::output::write_timing(&path.with_extension("timing.csv"), &trace).unwrap();
        prop_assert_eq!(read_trace(&path).unwrap(), trace);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
