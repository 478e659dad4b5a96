use delaycorr_core::corr_model::{probe_corr_reports, synth_delay};
use delaycorr_core::dataset::{ingest_rtt, join_distances};
use delaycorr_core::netsim::{
    build_topology, keyed_rng, route_path, sample_independent, sample_path_factors,
    simulate_campaign, simulate_pair, FactorDistribution,
};
use delaycorr_core::{Coordinate, TopologyConfig};

const TWO_REGIONS: &str = r#"
    [path_model]
    host_scatter_km = 2.0

    [[regions]]
    id = "home"
    [[regions]]
    id = "hub"

    [[cities]]
    id = "home"
    lat = 30.0
    lon = 110.0
    region = "home"
    is_center = true
    [[cities]]
    id = "suburb"
    lat = 31.0
    lon = 111.0
    region = "home"
    [[cities]]
    id = "hub"
    lat = 30.0
    lon = 120.4
    region = "hub"
    is_center = true

    [[isps]]
    id = "x"
    ixps = ["hub"]
    [[isps]]
    id = "y"
    ixps = ["hub"]

    [[hosts]]
    role = "probe"
    city = "home"
    isp = "x"
    [[hosts]]
    role = "landmark"
    city = "home"
    isp = "x"
    [[hosts]]
    role = "landmark"
    city = "home"
    isp = "y"
    [[hosts]]
    role = "landmark"
    city = "hub"
    isp = "x"
    [[hosts]]
    role = "landmark"
    city = "suburb"
    isp = "y"
    count = 3
"#;

fn haversine(a: Coordinate, b: Coordinate) -> f64 {
    let (p1, p2) = (a.lat().to_radians(), b.lat().to_radians());
    let dl = (b.lon() - a.lon()).to_radians();
    let h = ((p2 - p1) / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * 6371.0088 * h.sqrt().asin()
}

fn two_regions() -> TopologyConfig {
    TopologyConfig::parse(TWO_REGIONS).unwrap()
}

#[test]
fn same_city_same_isp_is_direct() {
    let topo = build_topology(&two_regions()).unwrap();
    let r = route_path(&topo, "pr-home-x-1", "lm-home-x-1").unwrap();
    assert_eq!(r.waypoints.len(), 2);
    assert_eq!(r.tortuosity, 1.0);
    assert!(!r.inter_isp);
}

#[test]
fn hub_to_hub_is_direct() {
    let topo = build_topology(&two_regions()).unwrap();
    let home = topo.city("home").unwrap().coordinate;
    let hub = topo.city("hub").unwrap().coordinate;
    let r = route_path(&topo, "pr-home-x-1", "lm-hub-x-1").unwrap();
    // both hosts sit in their center cities: no intermediate hop
    assert_eq!(r.waypoints.len(), 2);
    assert!((r.tortuosity - 1.0).abs() < 1e-12);
    assert!((haversine(home, hub) - 1000.0).abs() < 10.0);
}

#[test]
fn same_city_across_isps_detours_through_ixp() {
    let topo = build_topology(&two_regions()).unwrap();
    let src = topo.hosts().get("pr-home-x-1").unwrap().coordinate;
    let dst = topo.hosts().get("lm-home-y-1").unwrap().coordinate;
    let hub = topo.city("hub").unwrap().coordinate;
    let r = route_path(&topo, "pr-home-x-1", "lm-home-y-1").unwrap();
    assert!(r.inter_isp);
    let expected = (haversine(src, hub) + haversine(hub, dst)) / haversine(src, dst);
    assert!(
        (r.tortuosity - expected).abs() / expected < 0.01,
        "{} vs {expected}",
        r.tortuosity
    );
    assert!(r.tortuosity > 100.0);
}

#[test]
fn tortuosity_at_least_one_and_inter_not_shorter() {
    let mut config = TopologyConfig::cn_like();
    // co-locate hosts with their city so both routes share endpoints
    config.path_model.host_scatter_km = 0.0;
    let topo = build_topology(&config).unwrap();
    let hosts = topo.hosts();
    for p in hosts.probes() {
        for l in hosts.landmarks() {
            let r = route_path(&topo, &p.id, &l.id).unwrap();
            assert!(
                r.tortuosity >= 1.0,
                "{} -> {}: {}",
                p.id,
                l.id,
                r.tortuosity
            );
            if l.isp != p.isp {
                let same = hosts
                    .landmarks()
                    .find(|m| m.city == l.city && m.isp == p.isp)
                    .unwrap();
                let intra = route_path(&topo, &p.id, &same.id).unwrap();
                assert!(r.tortuosity >= intra.tortuosity - 1e-12);
            }
        }
    }
}

#[test]
fn campaign_is_deterministic_and_pairs_are_isolated() {
    let config = two_regions();
    let topo = build_topology(&config).unwrap();
    let a = simulate_campaign(&topo, &config.path_model, 7).unwrap();
    let b = simulate_campaign(&topo, &config.path_model, 7).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, simulate_campaign(&topo, &config.path_model, 8).unwrap());

    // extra hosts leave existing pairs' draws untouched
    let bigger = TopologyConfig::parse(&format!(
        "{TWO_REGIONS}\n[[hosts]]\nrole = \"landmark\"\ncity = \"hub\"\nisp = \"y\"\n"
    ))
    .unwrap();
    let topo2 = build_topology(&bigger).unwrap();
    let c = simulate_campaign(&topo2, &bigger.path_model, 7).unwrap();
    let kept: Vec<_> = c
        .into_iter()
        .filter(|o| topo.hosts().get(&o.landmark_id).is_some())
        .collect();
    assert_eq!(kept, a);
}

#[test]
fn zero_jitter_single_sample_is_exact() {
    let mut config = two_regions();
    config.path_model.jitter = 0.0;
    config.path_model.samples_per_pair = 1;
    let topo = build_topology(&config).unwrap();
    let (src, dst) = ("pr-home-x-1", "lm-suburb-y-2");
    let obs = simulate_pair(&topo, &config.path_model, 42, src, dst).unwrap();
    let mut rng = keyed_rng(42, &["pair", src, dst]);
    let f = sample_path_factors(&topo, &config.path_model, src, dst, &mut rng).unwrap();
    assert_eq!(obs.len(), 1);
    assert_eq!(obs[0].rtt_ms(), synth_delay(&f, config.path_model.speed()));
}

#[test]
fn minimum_sits_between_base_and_observations() {
    let config = two_regions();
    let topo = build_topology(&config).unwrap();
    let (src, dst) = ("pr-home-x-1", "lm-hub-x-1");
    let obs = simulate_pair(&topo, &config.path_model, 42, src, dst).unwrap();
    assert_eq!(obs.len(), 5);
    let mut rng = keyed_rng(42, &["pair", src, dst]);
    let f = sample_path_factors(&topo, &config.path_model, src, dst, &mut rng).unwrap();
    let base = synth_delay(&f, config.path_model.speed());
    let min = obs.iter().map(|o| o.rtt_ms()).fold(f64::INFINITY, f64::min);
    assert!(min >= base);
    assert!(obs.iter().all(|o| min <= o.rtt_ms()));
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

#[test]
fn inter_isp_overhead_varies_more() {
    let config = TopologyConfig::cn_like();
    let topo = build_topology(&config).unwrap();
    let mut rng = keyed_rng(42, &["overhead"]);
    let mut draw = |dst: &str| -> Vec<f64> {
        (0..10_000)
            .map(|_| {
                sample_path_factors(
                    &topo,
                    &config.path_model,
                    "pr-wuhan-telecom-1",
                    dst,
                    &mut rng,
                )
                .unwrap()
                .r()
            })
            .collect()
    };
    let intra = draw("lm-chengdu-telecom-1");
    let inter = draw("lm-chengdu-unicom-1");
    assert!(variance(&inter) > variance(&intra));
}

#[test]
fn center_probes_correlate_better() {
    let config = TopologyConfig::cn_like();
    let topo = build_topology(&config).unwrap();
    let obs = simulate_campaign(&topo, &config.path_model, 42).unwrap();
    let samples = join_distances(&ingest_rtt(&obs, topo.hosts()).unwrap(), topo.hosts()).unwrap();
    let reports = probe_corr_reports(&samples);
    let median = |center: bool| {
        let mut v: Vec<f64> = reports
            .iter()
            .filter(|r| topo.hosts().get(&r.probe_id).unwrap().is_regional_center == center)
            .filter_map(|r| r.intra.corr.value())
            .collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (c, nc) = (median(true), median(false));
    assert!(c > nc, "center {c} vs non-center {nc}");
}

#[test]
fn independent_draws_are_uncorrelated() {
    let mut rng = keyed_rng(42, &["independence"]);
    let f = sample_independent(
        "lognormal:1:-0.5:0.6".parse().unwrap(),
        "uniform:1:1.6".parse().unwrap(),
        "uniform:10:2500".parse().unwrap(),
        100_000,
        &mut rng,
    )
    .unwrap();
    let rt: Vec<f64> = f.iter().map(|x| x.rt()).collect();
    let d: Vec<f64> = f.iter().map(|x| x.d().value()).collect();
    let n = f.len() as f64;
    let (mr, md) = (rt.iter().sum::<f64>() / n, d.iter().sum::<f64>() / n);
    let cov = rt
        .iter()
        .zip(&d)
        .map(|(a, b)| (a - mr) * (b - md))
        .sum::<f64>()
        / n;
    assert!(cov.abs() <= 0.02 * variance(&rt).sqrt() * variance(&d).sqrt());
    assert!(f
        .iter()
        .all(|x| x.r() > 1.0 && x.t() >= 1.0 && x.d().value() > 0.0));
}

#[test]
fn point_masses_and_seeds() {
    let pm = |v| FactorDistribution::PointMass(v);
    let mut rng = keyed_rng(1, &["pm"]);
    let f = sample_independent(pm(1.5), pm(1.2), pm(800.0), 50, &mut rng).unwrap();
    assert!(f.windows(2).all(|w| w[0] == w[1]));

    let dist: FactorDistribution = "uniform:1.1:2".parse().unwrap();
    let a = sample_independent(dist, pm(1.0), pm(10.0), 20, &mut keyed_rng(3, &["s"])).unwrap();
    let b = sample_independent(dist, pm(1.0), pm(10.0), 20, &mut keyed_rng(3, &["s"])).unwrap();
    assert_eq!(a, b);

    assert!(sample_independent(pm(1.0), pm(1.0), pm(10.0), 5, &mut rng).is_err());
    assert!(sample_independent(pm(1.5), pm(0.9), pm(10.0), 5, &mut rng).is_err());
    assert!(sample_independent(pm(1.5), pm(1.0), pm(10.0), 1, &mut rng).is_err());
}
