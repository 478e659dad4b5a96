use criterion::{criterion_group, criterion_main, Criterion};
use delaycorr_core::corr_model::pearson_points;
use delaycorr_core::geoloc::{cbg_locate, fit_bestline};
use delaycorr_core::{geodesic_distance, BestlineScope, Coordinate, Kilometers};
use std::hint::black_box;

fn c(lat: f64, lon: f64) -> Coordinate {
    Coordinate::new(lat, lon).unwrap()
}

// deterministic, roughly linear cloud without pulling in an RNG
fn cloud(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let d = 10.0 + (i * 37 % 2500) as f64;
            let noise = ((i * 7919) % 100) as f64 / 5.0;
            (d, 0.012 * d + 2.0 + noise)
        })
        .collect()
}

fn kernels(cr: &mut Criterion) {
    let (bj, sh) = (c(39.9042, 116.4074), c(31.2304, 121.4737));
    cr.bench_function("vincenty", |b| {
        b.iter(|| geodesic_distance(black_box(bj), black_box(sh)))
    });

    let pts = cloud(500);
    cr.bench_function("pearson_500", |b| {
        b.iter(|| pearson_points(black_box(&pts)))
    });
    cr.bench_function("fit_bestline_500", |b| {
        b.iter(|| fit_bestline(black_box(&pts), BestlineScope::Intra))
    });

    let truth = c(30.6, 114.3);
    let circles: Vec<(Coordinate, Kilometers)> =
        [(31.2, 121.5), (39.9, 116.4), (23.1, 113.3), (30.7, 104.1)]
            .iter()
            .map(|&(lat, lon)| {
                let p = c(lat, lon);
                (
                    p,
                    Kilometers::new(geodesic_distance(p, truth).value() * 1.1).unwrap(),
                )
            })
            .collect();
    cr.bench_function("cbg_locate_4_circles", |b| {
        b.iter(|| cbg_locate(black_box(&circles), 10.0))
    });
}

criterion_group!(benches, kernels);
criterion_main!(benches);
