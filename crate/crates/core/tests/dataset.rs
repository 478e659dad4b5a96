use delaycorr_core::dataset::{
    ingest_rtt, join_distances, parse_timestamp, validate_registry, HostRecord, Registry, Role,
    RttObservation,
};
use delaycorr_core::Coordinate;
use proptest::prelude::*;

fn registry() -> Registry {
    let host = |id: &str, role, lat, lon| HostRecord {
        id: id.into(),
        role,
        city: format!("c-{id}"),
        isp: "x".into(),
        coordinate: Coordinate::new(lat, lon).unwrap(),
        is_regional_center: false,
    };
    validate_registry(vec![
        host("p0", Role::Probe, 30.0, 110.0),
        host("p1", Role::Probe, 35.0, 115.0),
        host("l0", Role::Landmark, 25.0, 105.0),
        host("l1", Role::Landmark, 40.0, 120.0),
        host("l2", Role::Landmark, 31.0, 121.0),
    ])
    .unwrap()
}

fn observations() -> impl Strategy<Value = Vec<RttObservation>> {
    prop::collection::vec((0..2usize, 0..3usize, 0..60u64, 0.1f64..200.0), 1..60).prop_map(|v| {
        let epoch = parse_timestamp("2016-01-04T00:00:00Z").unwrap();
        v.into_iter()
            .map(|(p, l, min, rtt)| {
                RttObservation::new(format!("p{p}"), format!("l{l}"), epoch + minutes(min), rtt)
                    .unwrap()
            })
            .collect()
    })
}

fn minutes(m: u64) -> std::time::Duration {
    std::time::Duration::from_secs(60 * m)
}

proptest! {
    #[test]
    fn ingest_ignores_order(
        (obs, shuffled) in observations().prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()))
    ) {
        let reg = registry();
        let a = ingest_rtt(&obs, &reg).unwrap();
        prop_assert_eq!(&a, &ingest_rtt(&shuffled, &reg).unwrap());
        // idempotent: re-ingesting the minima changes nothing
        let epoch = parse_timestamp("2016-01-04T00:00:00Z").unwrap();
        let again: Vec<RttObservation> = a
            .iter()
            .map(|(p, l, v)| RttObservation::new(p, l, epoch, v).unwrap())
            .collect();
        prop_assert_eq!(&a, &ingest_rtt(&again, &reg).unwrap());
    }

    #[test]
    fn minimum_bounds_every_observation(obs in observations()) {
        let mins = ingest_rtt(&obs, &registry()).unwrap();
        for o in &obs {
            let m = mins.get(&o.probe_id, &o.landmark_id).unwrap();
            prop_assert!(m <= o.rtt_ms());
        }
    }

    #[test]
    fn join_keeps_delays_bit_exact(obs in observations()) {
        let reg = registry();
        let mins = ingest_rtt(&obs, &reg).unwrap();
        let samples = join_distances(&mins, &reg).unwrap();
        prop_assert_eq!(samples.len(), mins.len());
        for s in &samples {
            let m = mins.get(&s.probe_id, &s.landmark_id).unwrap();
            prop_assert_eq!(s.delay_ms.to_bits(), m.to_bits());
        }
    }
}
