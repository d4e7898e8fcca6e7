use std::collections::VecDeque;
use std::sync::Arc;

use proptest::prelude::*;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vcache::model::{BaseStation, BitMatrix, ConstraintId, CountMatrix, EnergyParams, Point, RealMatrix, Region, Rsu, Topology};
use vcache::solver::bqpso::{
    allocate_y, contraction_factor, crossover_repair, discretize, fitness, local_attractor, position_update, run,
    BqpsoConfig, CrossoverThreshold, FitnessEvaluator,
};
use vcache::solver::exact::{solve_bb, BbConfig};
use vcache::synth::{tiny_instance, TinySpec};
use vcache::{Error, InstanceParts, PenaltyConfig, PenaltyScale, SlotInstance};

/// Replays fixed uniforms through the 53-bit float conversion.
struct Scripted(VecDeque<f64>);

impl Scripted {
    fn new(v: &[f64]) -> Self {
        Self(v.iter().copied().collect())
    }
}

impl RngCore for Scripted {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }
    fn next_u64(&mut self) -> u64 {
        let u = self.0.pop_front().expect("script exhausted");
        ((u * (1u64 << 53) as f64) as u64) << 11
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let b = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&b[..chunk.len()]);
        }
    }
}

/// `n` RSUs all covering one region, one datum with demand `d`.
fn shared_region(n: usize, d: u32, storage: u64) -> SlotInstance<f64> {
    let rsus = (0..n)
        .map(|i| Rsu {
            id: i,
            location: Point::new(10.0 * i as f64, 0.0),
            storage_bits: storage,
            bandwidth_hz: 1e6,
            tx_power_w: 1.0,
            service_rate: 50.0,
            coverage_radius_m: 100.0,
        })
        .collect();
    let region = Region { id: 0, center: Point::new(0.0, 0.0), delay_tolerance_s: 10.0, covering_rsus: (0..n).collect() };
    let topo = Topology::new(rsus, BaseStation { tx_power_w: 4.0, service_rate: 50.0 }, vec![region]).unwrap();
    SlotInstance::new(InstanceParts {
        slot: 0,
        backlog: 1.0,
        v_weight: 1.0,
        topology: Arc::new(topo),
        sizes: vec![1_000_000],
        demand: CountMatrix::from_rows(vec![vec![d]]),
        value_coef: vec![0.3; n],
        rates: RealMatrix::from_fn(n, 1, |_, _| 2e7),
        rate_samples: vec![vec![vec![2e7; 3]]; n],
        bs_rates: vec![1e7],
        energy: EnergyParams::default(),
        stability_margin: 1e-3,
    })
    .unwrap()
}

fn all_cached(n: usize) -> BitMatrix {
    BitMatrix::from_flat(n, 1, vec![true; n])
}

#[test]
fn contraction_factor_interpolates_linearly() {
    assert_eq!(contraction_factor(0, 100, 0.5, 1.0).unwrap(), 1.0);
    assert_eq!(contraction_factor(100, 100, 0.5, 1.0).unwrap(), 0.5);
    assert_eq!(contraction_factor(50, 100, 0.5, 1.0).unwrap(), 0.75);
    assert!(matches!(contraction_factor(101, 100, 0.5, 1.0), Err(Error::IterationOutOfRange { iter: 101, max: 100 })));
}

#[test]
fn equal_split_with_ascending_remainder() {
    let inst = shared_region(3, 6, 1_000_000);
    let y = allocate_y(&all_cached(3), &inst);
    assert_eq!((0..3).map(|i| y.get(i, 0, 0)).collect::<Vec<_>>(), vec![2, 2, 2]);

    let inst = shared_region(2, 5, 1_000_000);
    let y = allocate_y(&all_cached(2), &inst);
    assert_eq!((y.get(0, 0, 0), y.get(1, 0, 0)), (3, 2));

    let y = allocate_y(&BitMatrix::zeros(2, 1), &inst);
    assert_eq!(y.total(), 0);
}

#[test]
fn attractor_probabilities() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 40_000;
    let ones = |p: bool, rng: &mut ChaCha8Rng| {
        (0..n)
            .filter(|_| {
                let a = local_attractor(&[p], &[p], rng);
                assert_eq!(a.continuous[0], f64::from(u8::from(p)));
                a.binary[0]
            })
            .count() as f64
            / n as f64
    };
    let sigma1 = 1.0 / (1.0 + (-1.0f64).exp());
    assert!((ones(true, &mut rng) - sigma1).abs() < 0.01);
    assert!((ones(false, &mut rng) - 0.5).abs() < 0.01);

    // psi = 0 is below any sigmoid value.
    let mut forced = Scripted::new(&[0.3, 0.0, 0.9, 0.0]);
    let a = local_attractor(&[false, true], &[false, false], &mut forced);
    assert_eq!(a.binary, vec![true, true]);
}

#[test]
fn tied_coordinates_discretize_to_ones() {
    assert_eq!(discretize(&[0.4, 0.4, 0.4]), vec![true, true, true]);
}

#[test]
fn zero_contraction_keeps_the_attractor() {
    let mut pos = vec![1.0, 0.0, 1.0];
    let att = pos.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bits = position_update(&mut pos, &att, &[0.5, 0.5, 0.5], 0.0, &mut rng);
    assert_eq!(pos, att);
    assert_eq!(bits, vec![true, false, true]);
}

#[test]
fn hand_step_through_one_particle() {
    // Two dimensions. Personal best (1, 0), global best (0, 0).
    // phi = 0.25, psi = 0.5 on d0; phi = 0.75, psi = 0.75 on d1.
    // sign draw 0.25 (+), G = 0.5 on d0; sign draw 0.75 (-), G = 0.25 on d1.
    let mut rng = Scripted::new(&[0.25, 0.5, 0.75, 0.75, 0.25, 0.5, 0.75, 0.25]);
    let att = local_attractor(&[true, false], &[false, false], &mut rng);
    assert_eq!(att.continuous, vec![0.25, 0.0]);
    // sigma(0.25) = 0.5622 > 0.5; sigma(0) = 0.5 < 0.75.
    assert_eq!(att.binary, vec![true, false]);

    let mut pos = vec![1.0, 0.0];
    let mean_best = [0.5, 0.5];
    let eta = 0.75;
    let bits = position_update(&mut pos, &att.continuous, &mean_best, eta, &mut rng);
    let x0 = 0.25 + 0.75 * 0.5 * 2f64.ln();
    let x1 = 0.0 - 0.75 * 0.5 * 4f64.ln();
    assert!((pos[0] - x0).abs() < 1e-15 && (pos[1] - x1).abs() < 1e-15);
    assert_eq!(bits, vec![true, false]);
}

#[test]
fn zero_uniform_for_g_is_redrawn() {
    let mut rng = Scripted::new(&[0.25, 0.0, 0.5]);
    let mut pos = vec![0.0];
    position_update(&mut pos, &[1.0], &[1.0], 1.0, &mut rng);
    assert!((pos[0] - (1.0 + 2f64.ln())).abs() < 1e-15);
}

#[test]
fn crossover_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = vec![true, false, true, true, false, false];
    assert_eq!(crossover_repair(&x, &x, 0.0, &mut rng), x);

    let l: Vec<bool> = x.iter().map(|b| !b).collect();
    for _ in 0..50 {
        let out = crossover_repair(&x, &l, 3.0, &mut rng);
        let cut = (0..x.len()).find(|&d| out[d] != x[d]).expect("a suffix comes from l");
        assert!((1..x.len()).contains(&cut));
        assert_eq!(&out[..cut], &x[..cut]);
        assert_eq!(&out[cut..], &l[cut..]);
    }
    // Distance 6 < 50 = 100 / 2.
    assert_eq!(crossover_repair(&x, &l, 50.0, &mut rng), x);
}

#[test]
fn fitness_penalizes_storage_overflow_in_bits() {
    let inst = shared_region(1, 0, 1_000_000);
    let big = SlotInstance::new(InstanceParts { sizes: vec![2_000_000], ..parts_of(&inst) }).unwrap();
    let x = all_cached(1);
    let obj = big.objective(&x, &allocate_y(&x, &big));
    let cfg = PenaltyConfig { gamma: Some(1e-6), scale: PenaltyScale::Absolute };
    assert!((fitness(&x, &big, &cfg) - (obj + 1.0)).abs() < 1e-12);
    let free = PenaltyConfig { gamma: Some(0.0), scale: PenaltyScale::Absolute };
    assert_eq!(fitness(&x, &big, &free), obj);
}

fn parts_of(inst: &SlotInstance<f64>) -> InstanceParts<f64> {
    InstanceParts {
        slot: inst.slot,
        backlog: inst.backlog,
        v_weight: inst.v_weight,
        topology: inst.topology.clone(),
        sizes: inst.sizes.clone(),
        demand: inst.demand.clone(),
        value_coef: inst.value_coef.clone(),
        rates: inst.rates.clone(),
        rate_samples: inst.rate_samples.clone(),
        bs_rates: inst.bs_rates.clone(),
        energy: inst.energy,
        stability_margin: inst.stability_margin,
    }
}

fn quick() -> BqpsoConfig {
    BqpsoConfig { particles: 20, max_iterations: 20, ..BqpsoConfig::default() }
}

#[test]
fn zero_demand_caches_nothing() {
    for seed in 0..10 {
        let inst = tiny_instance::<f64>(seed, &TinySpec::default());
        let (_, nj, nk) = inst.dims();
        let idle = SlotInstance::new(InstanceParts { demand: CountMatrix::zeros(nj, nk), ..parts_of(&inst) }).unwrap();
        let out = run(&idle, &quick()).unwrap();
        assert_eq!(out.x.count_ones(), 0);
        assert_eq!(out.fitness, 0.0);
    }
}

#[test]
fn full_size_swarm_tracks_the_oracle_on_a_tiny_instance() {
    let spec = TinySpec::default();
    let inst = (0..)
        .map(|s| tiny_instance::<f64>(s, &spec))
        .find(|i| i.dims() == (2, 2, 3) && solve_bb(i, &BbConfig::exhaustive()).is_ok())
        .unwrap();
    let best = solve_bb(&inst, &BbConfig::exhaustive()).unwrap().objective;
    let close = (0..10)
        .filter(|&seed| {
            let f = run(&inst, &BqpsoConfig { rng_seed: seed, ..BqpsoConfig::default() }).unwrap().fitness;
            f <= best + 0.05 * best.abs() + 1e-9
        })
        .count();
    assert!(close >= 9, "{close}/10");
}

#[test]
fn invalid_configs_are_rejected() {
    let inst = shared_region(1, 1, 1_000_000);
    for cfg in [
        BqpsoConfig { particles: 0, ..quick() },
        BqpsoConfig { omega1: 0.0, ..quick() },
        BqpsoConfig { omega1: 1.0, omega2: 0.5, ..quick() },
        BqpsoConfig { penalty: PenaltyConfig { gamma: Some(-1.0), ..Default::default() }, ..quick() },
    ] {
        assert!(matches!(run(&inst, &cfg), Err(Error::InvalidConfig(_))));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn runs_are_deterministic_and_monotone(inst_seed in 0u64..500, seed in any::<u64>(), half_dim in any::<bool>()) {
        let inst = tiny_instance::<f64>(inst_seed, &TinySpec::default());
        let cfg = BqpsoConfig {
            rng_seed: seed,
            crossover: if half_dim { CrossoverThreshold::HalfDimension } else { CrossoverThreshold::HalfParticles },
            ..quick()
        };
        let a = run(&inst, &cfg).unwrap();
        let b = run(&inst, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.trace.len(), cfg.max_iterations + 1);
        prop_assert!(a.trace.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(a.fitness <= *a.trace.last().unwrap());
        prop_assert!(a.evaluations <= cfg.particles * (cfg.max_iterations + 1));
    }

    #[test]
    fn equal_split_never_breaks_allocation_bounds(inst_seed in 0u64..2000, mask in any::<u32>()) {
        let inst = tiny_instance::<f64>(inst_seed, &TinySpec::default());
        let (ni, _, nk) = inst.dims();
        let x = BitMatrix::from_flat(ni, nk, (0..ni * nk).map(|b| mask >> b & 1 == 1).collect());
        let y = allocate_y(&x, &inst);
        let report = inst.report(&x, &y);
        prop_assert!(!report.has(ConstraintId::C4) && !report.has(ConstraintId::C5) && !report.has(ConstraintId::Coverage));
        for j in 0..inst.demand.rows() {
            for k in 0..nk {
                let any = inst.topology.rsus_of(j).iter().any(|&i| x.get(i, k));
                let want = if any { u64::from(inst.demand.get(j, k)) } else { 0 };
                prop_assert_eq!(y.served(j, k), want);
            }
        }

        let cfg = PenaltyConfig::default();
        let f = fitness(&x, &inst, &cfg);
        let obj = inst.objective(&x, &y);
        if report.is_feasible() {
            prop_assert_eq!(f, obj);
        } else {
            prop_assert!(f > obj);
        }
    }

    #[test]
    fn sparse_evaluator_matches_the_reference_fitness(
        inst_seed in 0u64..5000,
        bits in proptest::collection::vec(any::<bool>(), 64),
        absolute in any::<bool>(),
        gamma in proptest::option::of(0.0f64..1e3),
    ) {
        let spec = TinySpec { max_rsus: 4, max_regions: 5, max_data: 8, max_demand: 6, draws: 4 };
        let inst = tiny_instance::<f64>(inst_seed, &spec);
        let (ni, _, nk) = inst.dims();
        let bits = &bits[..ni * nk];
        let cfg = PenaltyConfig { scale: if absolute { PenaltyScale::Absolute } else { PenaltyScale::Relative }, gamma };
        let x = BitMatrix::from_flat(ni, nk, bits.to_vec());
        let want = fitness(&x, &inst, &cfg);
        let got = FitnessEvaluator::new(&inst, &cfg).eval(bits);
        prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()), "{got} vs {want}");
    }
}
