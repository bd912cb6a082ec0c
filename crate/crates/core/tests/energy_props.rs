use platoon_core::controllers::Kinematics;
use platoon_core::energy::{emission_rate, equilibrium_curves, footprint, nfr, vsp, FootprintAccumulator, Pollutant};
use platoon_core::sim::TrajectoryLog;
use proptest::prelude::*;

fn samples() -> impl Strategy<Value = Vec<Kinematics>> {
    prop::collection::vec(
        (0.0f64..33.3, -5.0f64..1.0).prop_map(|(v, a)| Kinematics::new(0.0, v, a)),
        1..400,
    )
}

proptest! {
    #[test]
    fn chunked_accumulation_matches_single_pass(s in samples(), cut in 1usize..50) {
        let mut whole = FootprintAccumulator::default();
        whole.extend(&s);
        let mut merged = FootprintAccumulator::default();
        for chunk in s.chunks(cut) {
            let mut part = FootprintAccumulator::default();
            part.extend(chunk);
            merged.merge(&part);
        }
        prop_assert_eq!(whole.samples, merged.samples);
        let (a, b) = (whole.finish().unwrap(), merged.finish().unwrap());
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300);
        prop_assert!(close(a.mean_speed, b.mean_speed));
        prop_assert!(close(a.mean_nfr, b.mean_nfr));
        match (a.nff, b.nff) {
            (Some(x), Some(y)) => prop_assert!(close(x, y)),
            (None, None) => {}
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn rates_are_non_negative(v in 0.0f64..40.0, a in -8.0f64..3.0) {
        prop_assert!(nfr(vsp(v, a)) >= 0.0);
        for p in Pollutant::ALL {
            prop_assert!(emission_rate(v, a, p) >= 0.0);
        }
    }

    #[test]
    fn sample_order_does_not_matter(mut s in samples()) {
        let mut log = TrajectoryLog::new(1, 1000.0, 5.0, 0.1);
        for (k, x) in s.iter().enumerate() {
            log.push(k as f64, std::slice::from_ref(x));
        }
        let a = footprint(&log).unwrap();
        s.reverse();
        let mut acc = FootprintAccumulator::default();
        acc.extend(&s);
        let b = acc.finish().unwrap();
        prop_assert!((a.mean_nfr - b.mean_nfr).abs() <= 1e-12 * a.mean_nfr.max(1.0));
    }
}

#[test]
fn per_km_factor_uses_mean_speed() {
    // Two vehicles, one stopped and one at 20 m/s: the fleet covers 10 m
    // per vehicle-second on average.
    let mut acc = FootprintAccumulator::default();
    acc.add(&Kinematics::new(0.0, 0.0, 0.0));
    acc.add(&Kinematics::new(0.0, 20.0, 0.0));
    let f = acc.finish().unwrap();
    assert_eq!(f.mean_speed, 10.0);
    let mean_nfr = nfr(vsp(20.0, 0.0)) / 2.0;
    assert!((f.nff.unwrap() - 1000.0 * mean_nfr / 10.0).abs() < 1e-12);
}

#[test]
fn stationary_fleet_has_no_per_km_factor() {
    let mut acc = FootprintAccumulator::default();
    acc.add(&Kinematics::new(0.0, 0.0, 0.0));
    let f = acc.finish().unwrap();
    assert!(f.nff.is_none());
    assert!(f.pollutants.iter().all(Option::is_none));
    assert!(FootprintAccumulator::default().finish().is_err());
}

#[test]
fn equilibrium_curves_decrease_over_the_cruise_range() {
    let speeds: Vec<f64> = (1..=62).map(|i| i as f64 * 0.5).collect();
    let rows = equilibrium_curves(&speeds).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].nff < w[0].nff, "nff rises at {}", w[1].v);
        for p in [Pollutant::Co2, Pollutant::Voc] {
            assert!(
                w[1].pollutants[p as usize] < w[0].pollutants[p as usize],
                "{p} rises at {}",
                w[1].v
            );
        }
    }
    assert!(equilibrium_curves(&[0.0]).is_err());
}
