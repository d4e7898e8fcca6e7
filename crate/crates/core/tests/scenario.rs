use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vcache::environment::{Environment, Frame};
use vcache::model::rate::link_rate;
use vcache::scenario::{
    build_topology, dbm_to_w, expected_link_rate, region_bounds, region_center, sample_channel, streets, zipf_weights,
    Congestion, PathLoss, Scenario, ScenarioConfig, Snapshot,
};
use vcache::Error;

fn short(seed: u64, horizon: usize) -> ScenarioConfig {
    ScenarioConfig { seed, horizon_slots: horizon, channel_draws: 8, ..ScenarioConfig::default() }
}

fn frames(cfg: ScenarioConfig) -> Vec<Frame<f64>> {
    let mut sc = Scenario::<f64>::new(cfg).unwrap();
    std::iter::from_fn(|| sc.next_frame()).map(Result::unwrap).collect()
}

#[test]
fn grid_cells_are_200_by_125() {
    let cfg = ScenarioConfig::default();
    for j in 0..16 {
        let (x0, y0, x1, y1) = region_bounds(&cfg, j);
        assert_eq!((x1 - x0, y1 - y0), (200.0, 125.0));
    }
    assert_eq!(region_center(&cfg, 0), (100.0, 62.5));
    assert_eq!(region_center(&cfg, 15), (700.0, 437.5));
}

#[test]
fn path_loss_examples() {
    let pl = PathLoss::default();
    assert!((pl.mean_db(1000.0) - 28.0).abs() < 1e-12);
    assert!((pl.mean_db(100.0) - 8.0).abs() < 1e-12);
    let cfg = ScenarioConfig { pathloss: PathLoss { shadow_sigma_db: 0.0, ..pl }, ..ScenarioConfig::default() };
    let g = sample_channel(&cfg, 1000.0, &mut ChaCha8Rng::seed_from_u64(0));
    assert!((g - 1.584_893e-3).abs() < 1e-8, "{g}");
}

#[test]
fn thirty_dbm_is_one_watt() {
    assert!((dbm_to_w(30.0) - 1.0).abs() < 1e-15);
    assert!((dbm_to_w(46.0) - 39.810_717).abs() < 1e-5);
}

#[test]
fn shadowing_is_centered_on_the_mean_loss() {
    let cfg = ScenarioConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 100_000;
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        let db = -10.0 * sample_channel(&cfg, 250.0, &mut rng).log10();
        sum += db;
        sq += db * db;
    }
    let mean = sum / n as f64;
    let sd = (sq / n as f64 - mean * mean).sqrt();
    assert!((mean - cfg.pathloss.mean_db(250.0)).abs() < 0.1, "{mean}");
    assert!((sd - 8.0).abs() < 0.1, "{sd}");
}

#[test]
fn sampled_rates_converge_to_the_integrated_mean() {
    let cfg = ScenarioConfig::default();
    let p = dbm_to_w(cfg.tx_power_dbm);
    let noise = cfg.noise_power_w();
    for d in [50.0, 200.0, 400.0] {
        let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
        let n = 100_000;
        let mean = (0..n).map(|_| link_rate(cfg.bandwidth_hz, p, sample_channel(&cfg, d, &mut rng), noise)).sum::<f64>()
            / n as f64;
        let want = expected_link_rate(&cfg, d, p);
        assert!((mean / want - 1.0).abs() < 0.01, "{d} m: {mean} vs {want}");
    }
}

#[test]
fn zipf_weights_are_normalized_power_laws() {
    let w = zipf_weights(5, 0.8);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((w[0] / w[1] - 2f64.powf(0.8)).abs() < 1e-12);
    assert!(w.windows(2).all(|p| p[0] > p[1]));
    assert_eq!(zipf_weights(4, 0.0), vec![0.25; 4]);
}

#[test]
fn congestion_names_round_trip() {
    for c in Congestion::ALL {
        assert_eq!(c.name().parse::<Congestion>().unwrap(), c);
    }
    assert!("gridlock".parse::<Congestion>().is_err());
    let cfg = ScenarioConfig::default();
    let counts: Vec<u32> = Congestion::ALL.iter().map(|&c| ScenarioConfig { congestion: c, ..cfg.clone() }.vehicles()).collect();
    assert_eq!(counts, [6, 8, 10, 12]);
}

#[test]
fn config_toml_round_trips_and_rejects_unknown_keys() {
    let cfg = ScenarioConfig { seed: 9, congestion: Congestion::Heavy, ..ScenarioConfig::default() };
    assert_eq!(ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    assert_eq!(ScenarioConfig::from_toml_str("seed = 3\n").unwrap().seed, 3);
    assert!(matches!(ScenarioConfig::from_toml_str("sead = 3\n"), Err(Error::Parse(_))));
    assert!(matches!(ScenarioConfig::from_toml_str("bs_rate_factor = 1.5\n"), Err(Error::InvalidConfig(_))));
    assert!(matches!(ScenarioConfig::from_toml_str("max_rsu_coverage = 17\n"), Err(Error::InvalidConfig(_))));
}

#[test]
fn impossible_coverage_is_reported() {
    let cfg = ScenarioConfig { rsus: 1, min_rsu_coverage: 1, max_rsu_coverage: 1, placement_retries: 20, ..ScenarioConfig::default() };
    let r = build_topology::<f64, _>(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
    assert!(matches!(r, Err(Error::CoverageUnsatisfiable)));
}

#[test]
fn catalog_has_five_data_per_region_with_bounded_lifespans() {
    let cfg = short(3, 150);
    for f in frames(cfg.clone()) {
        assert_eq!(f.catalog.len(), 80);
        for (k, sd) in f.catalog.iter().enumerate() {
            assert_eq!((sd.id, sd.region), (k, k / 5));
            assert!((1_000_000..=10_000_000).contains(&sd.size_bits));
            assert!((1..=100).contains(&(sd.expiry_slot - sd.update_slot)));
            assert!(sd.update_slot <= f.observation.slot && f.observation.slot < sd.expiry_slot);
            assert_eq!(sd.validity_radius_m, 100.0);
        }
    }
}

#[test]
fn data_originate_on_a_street_inside_their_region() {
    let cfg = ScenarioConfig::default();
    let sc = Scenario::<f64>::new(cfg.clone()).unwrap();
    let st = streets(&cfg);
    for sd in sc.catalog() {
        let p = (sd.origin.x, sd.origin.y);
        assert!(st.iter().any(|s| {
            let q = s.nearest(p);
            (q.0 - p.0).hypot(q.1 - p.1) < 1e-9
        }));
    }
}

#[test]
fn demand_only_targets_the_regions_own_data() {
    for f in frames(short(4, 40)) {
        let d = &f.observation.demand;
        for j in 0..16 {
            for k in 0..80 {
                if d.get(j, k) > 0 {
                    assert_eq!(f.catalog[k].region, j);
                }
            }
        }
    }
}

#[test]
fn zero_base_rate_means_no_requests() {
    let cfg = ScenarioConfig { base_rate: 0.0, ..short(5, 30) };
    assert!(frames(cfg).iter().all(|f| f.observation.demand.total() == 0));
}

#[test]
fn heavy_congestion_doubles_the_requests_of_none() {
    let total = |c| -> u64 {
        frames(ScenarioConfig { congestion: c, ..short(6, 400) }).iter().map(|f| f.observation.demand.total()).sum()
    };
    let ratio = total(Congestion::Heavy) as f64 / total(Congestion::None) as f64;
    assert!((ratio - 2.0).abs() < 0.05, "{ratio}");
}

#[test]
fn mean_demand_matches_the_rate() {
    let cfg = short(8, 400);
    let n: u64 = frames(cfg.clone()).iter().map(|f| f.observation.demand.total()).sum();
    let want = 400.0 * 16.0 * f64::from(cfg.vehicles()) * cfg.base_rate;
    // Poisson total: standard deviation is sqrt(want).
    assert!((n as f64 - want).abs() < 5.0 * want.sqrt(), "{n} vs {want}");
}

#[test]
fn base_station_is_slower_than_every_covering_rsu() {
    let cfg = ScenarioConfig { horizon_slots: 20, ..ScenarioConfig::default() };
    let mut sc = Scenario::<f64>::new(cfg.clone()).unwrap();
    let topo = sc.topology().clone();
    let noise = cfg.noise_power_w();
    while let Some(f) = sc.next_frame() {
        let f = f.unwrap();
        for j in 0..16 {
            for &i in topo.rsus_of(j) {
                let g = &f.observation.channel_gain_samples[i][j];
                let p = topo.rsus[i].tx_power_w;
                let mean = g.iter().map(|&h| link_rate(cfg.bandwidth_hz, p, h, noise)).sum::<f64>() / g.len() as f64;
                assert!(f.observation.bs_rates[j] <= 0.5 * mean * (1.0 + 1e-12));
                assert!(f.observation.bs_rates[j] < mean);
            }
        }
    }
}

#[test]
fn one_way_windows_alternate() {
    let sc = Scenario::<f64>::new(ScenarioConfig::default()).unwrap();
    let cat = sc.catalog();
    let on_street: Vec<usize> = (0..6).filter(|&i| sc.street_of()[i] == 1).collect();
    assert!(sc.traffic_rules(0, cat).one_way_rsus.is_empty());
    assert!(sc.traffic_rules(299, cat).excluded.is_empty());
    assert_eq!(sc.traffic_rules(300, cat).one_way_rsus.iter().copied().collect::<Vec<_>>(), on_street);
    assert!(sc.traffic_rules(600, cat).one_way_rsus.is_empty());
    let off = Scenario::<f64>::new(ScenarioConfig { one_way_window_slots: 0, ..ScenarioConfig::default() }).unwrap();
    assert_eq!(off.traffic_rules(300, cat), Default::default());
}

#[test]
fn one_way_rsus_only_keep_data_from_their_street() {
    let cfg = ScenarioConfig { one_way_window_slots: 1, ..short(2, 6) };
    let sc = Scenario::<f64>::new(cfg.clone()).unwrap();
    let street = streets(&cfg)[cfg.one_way_street];
    let blocked: Vec<usize> = (0..6).filter(|&i| sc.street_of()[i] == cfg.one_way_street).collect();
    let mut excluded = 0;
    for f in frames(cfg) {
        for &i in &blocked {
            for (k, sd) in f.catalog.iter().enumerate() {
                let o = (sd.origin.x, sd.origin.y);
                let q = street.nearest(o);
                let on = (q.0 - o.0).hypot(q.1 - o.1) < 1e-6;
                let loc = sc.topology().rsus[i].location;
                let near = (loc.x - o.0).hypot(loc.y - o.1) <= 100.0;
                let odd = f.observation.slot % 2 == 1;
                assert_eq!(f.observation.scope.get(i, k), near && (on || !odd));
                excluded += usize::from(near && !on && odd);
            }
        }
    }
    assert!(blocked.is_empty() || excluded > 0);
}

#[test]
fn same_seed_same_world() {
    assert_eq!(frames(short(11, 25)), frames(short(11, 25)));
    assert_ne!(frames(short(11, 5)), frames(short(12, 5)));
}

#[test]
fn frames_do_not_depend_on_the_horizon() {
    let long = frames(short(13, 30));
    assert_eq!(frames(short(13, 10))[..], long[..10]);
}

#[test]
fn snapshot_round_trips() {
    let snap = Snapshot::<f64>::capture(short(14, 6)).unwrap();
    let back = Snapshot::<f64>::from_json(&snap.to_json()).unwrap();
    assert_eq!(back, snap);
    assert_eq!(back.replay.frames, frames(short(14, 6)));
    let stale = snap.to_json().replacen("\"version\":1", "\"version\":0", 1);
    assert!(matches!(Snapshot::<f64>::from_json(&stale), Err(Error::Parse(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn placements_cover_every_region_symmetrically(seed in any::<u64>()) {
        let cfg = ScenarioConfig::default();
        let p = build_topology::<f64, _>(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let topo = &p.topology;
        let st = streets(&cfg);
        for i in 0..cfg.rsus {
            let n = topo.regions_of(i).len();
            prop_assert!((cfg.min_rsu_coverage..=cfg.max_rsu_coverage).contains(&n), "RSU {} covers {}", i, n);
            let loc = (topo.rsus[i].location.x, topo.rsus[i].location.y);
            let on = st[p.street_of[i]].nearest(loc);
            prop_assert!((on.0 - loc.0).hypot(on.1 - loc.1) < 1e-9);
            let storage = topo.rsus[i].storage_bits;
            prop_assert!((cfg.rsu_capacity_min_bits..=cfg.rsu_capacity_max_bits).contains(&storage));
        }
        for j in 0..cfg.regions() {
            prop_assert!(!topo.rsus_of(j).is_empty());
            for i in 0..cfg.rsus {
                let c = &topo.regions[j].center;
                let within = (topo.rsus[i].location.x - c.x).hypot(topo.rsus[i].location.y - c.y)
                    <= topo.rsus[i].coverage_radius_m;
                prop_assert_eq!(topo.rsus_of(j).contains(&i), within);
                prop_assert_eq!(topo.regions_of(i).contains(&j), within);
            }
        }
    }
}
