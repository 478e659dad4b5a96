use delaycorr_core::corr_model::{
    classify_corr, pearson_points, probe_corr_report, rtd_model_corr, rtd_model_corr_with,
    CorrStrength, CorrValue, DelayDistanceSample, FactorMoments, ModelForm, PathFactors,
};
use delaycorr_core::geoloc::cbg_select_probes;
use delaycorr_core::{BestlineScope, Kilometers};
use proptest::prelude::*;

fn value(c: CorrValue) -> f64 {
    c.value().expect("defined")
}

fn cloud() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((1.0f64..3000.0, 0.0f64..50.0), 3..40).prop_map(|v| {
        v.into_iter()
            .map(|(x, noise)| (x, 0.01 * x + noise))
            .collect()
    })
}

proptest! {
    #[test]
    fn pearson_positive_affine_invariance(
        pts in cloud(),
        a in 0.01f64..100.0,
        b in -1e3f64..1e3,
        c in 0.01f64..100.0,
        d in -1e3f64..1e3,
    ) {
        let r0 = pearson_points(&pts).unwrap();
        let moved: Vec<_> = pts.iter().map(|&(x, y)| (a * x + b, c * y + d)).collect();
        let r1 = pearson_points(&moved).unwrap();
        match (r0, r1) {
            (CorrValue::Value(u), CorrValue::Value(v)) => prop_assert!((u - v).abs() < 1e-9),
            (u, v) => prop_assert_eq!(u, v),
        }
    }

    #[test]
    fn pearson_bounded(pts in cloud()) {
        if let CorrValue::Value(r) = pearson_points(&pts).unwrap() {
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn negated_correlation_is_weak(x in 0.0f64..=1.0) {
        prop_assert_eq!(classify_corr(CorrValue::Value(-x), 0.7), CorrStrength::Weak);
    }

    #[test]
    fn model_forms_agree(
        f in prop::collection::vec((1.001f64..4.0, 1.0f64..3.0, 0.5f64..4000.0), 2..30)
    ) {
        let factors: Vec<PathFactors> = f
            .iter()
            .map(|&(r, t, d)| PathFactors::new(r, t, Kilometers::new(d).unwrap()).unwrap())
            .collect();
        // the raw-moment form cancels catastrophically when D barely varies
        let m = FactorMoments::from_factors(&factors).unwrap();
        prop_assume!(m.var_d >= 1e-3 * m.mean_d * m.mean_d);
        let a = rtd_model_corr_with(&factors, ModelForm::Variance).unwrap();
        let b = rtd_model_corr_with(&factors, ModelForm::RawMoment).unwrap();
        match (a, b) {
            (CorrValue::Value(u), CorrValue::Value(v)) => {
                prop_assert!((u - v).abs() <= 1e-12 * u.abs().max(1e-300), "{} vs {}", u, v)
            }
            (u, v) => prop_assert_eq!(u, v),
        }
    }
}

#[test]
fn model_constant_d_is_zero_and_all_constant_undefined() {
    let f = |r: f64, d: f64| PathFactors::new(r, 1.0, Kilometers::new(d).unwrap()).unwrap();
    let const_d = [f(1.5, 300.0), f(2.5, 300.0), f(3.0, 300.0)];
    assert_eq!(rtd_model_corr(&const_d).unwrap(), CorrValue::Value(0.0));
    let all_const = [f(1.5, 300.0), f(1.5, 300.0)];
    assert_eq!(rtd_model_corr(&all_const).unwrap(), CorrValue::Undefined);
    assert!(rtd_model_corr(&[f(1.5, 300.0)]).is_err());
}

/// Delays whose Pearson correlation with `distances` is exactly `r`:
/// `r·z(x) + sqrt(1 − r²)·w`, with `w` a unit vector orthogonal to the
/// centered distances and to the constant vector, shifted positive.
fn delays_with_corr(distances: &[f64], r: f64) -> Vec<f64> {
    let n = distances.len() as f64;
    let center = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / n;
        v.iter().map(|x| x - m).collect::<Vec<f64>>()
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let x = center(distances);
    let x: Vec<f64> = x.iter().map(|v| v / norm(&x)).collect();
    // any vector not in span{1, x}: squares of the index
    let raw: Vec<f64> = (0..distances.len()).map(|i| (i * i) as f64).collect();
    let raw = center(&raw);
    let dot: f64 = raw.iter().zip(&x).map(|(a, b)| a * b).sum();
    let w: Vec<f64> = raw.iter().zip(&x).map(|(a, b)| a - dot * b).collect();
    let w: Vec<f64> = w.iter().map(|v| v / norm(&w)).collect();
    let y: Vec<f64> = x
        .iter()
        .zip(&w)
        .map(|(a, b)| r * a + (1.0 - r * r).sqrt() * b)
        .collect();
    let low = y.iter().copied().fold(f64::INFINITY, f64::min);
    y.iter().map(|v| 10.0 * (v - low) + 5.0).collect()
}

fn sample(landmark: &str, isp: &str, km: f64, ms: f64) -> DelayDistanceSample {
    DelayDistanceSample {
        probe_id: "pr-1".into(),
        landmark_id: landmark.into(),
        delay_ms: ms,
        distance: Kilometers::new(km).unwrap(),
        probe_isp: "cernet".into(),
        landmark_isp: isp.into(),
        probe_city: "wuhan".into(),
        landmark_city: "x".into(),
    }
}

#[test]
fn probe_report_echoes_constructed_fixture() {
    let dist: Vec<f64> = (1..=12).map(|i| 80.0 * i as f64).collect();
    let intra = delays_with_corr(&dist, 0.9056);
    let inter = delays_with_corr(&dist, -0.0386);
    let mut samples = Vec::new();
    for (i, &d) in dist.iter().enumerate() {
        samples.push(sample(&format!("a{i}"), "cernet", d, intra[i]));
        samples.push(sample(&format!("b{i}"), "telecom", d, inter[i]));
    }
    let report = probe_corr_report(&samples, "pr-1").unwrap();
    assert!((value(report.intra.corr) - 0.9056).abs() < 1e-4);
    assert!((value(report.toward("telecom").corr) + 0.0386).abs() < 1e-4);

    // a cernet target picks this probe with its intra bestline
    let picks = cbg_select_probes(std::slice::from_ref(&report), "cernet", 0.7);
    assert_eq!(picks.len(), 1);
    assert_eq!(picks[0].scope, BestlineScope::Intra);
    // a telecom target gets nothing from it
    assert!(cbg_select_probes(&[report], "telecom", 0.7).is_empty());
}

#[test]
fn other_isp_probe_selected_with_inter_bestline() {
    let dist: Vec<f64> = (1..=10).map(|i| 100.0 * i as f64).collect();
    let toward = delays_with_corr(&dist, 0.75);
    let own = delays_with_corr(&dist, 0.2);
    let mut samples = Vec::new();
    for (i, &d) in dist.iter().enumerate() {
        samples.push(sample(&format!("a{i}"), "cernet", d, own[i]));
        samples.push(sample(&format!("b{i}"), "unicom", d, toward[i]));
    }
    let report = probe_corr_report(&samples, "pr-1").unwrap();
    let picks = cbg_select_probes(&[report], "unicom", 0.7);
    assert_eq!(picks.len(), 1);
    assert_eq!(picks[0].probe_id, "pr-1");
    assert_eq!(picks[0].scope, BestlineScope::Inter("unicom".into()));
}
