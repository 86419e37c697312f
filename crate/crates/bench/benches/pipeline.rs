use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use normform_bench::{expr, low_rank, pitchfork};
use normform_core::moduli::{
    explore_zero_set, kuranishi_chart, stratify, ExploreSettings, StratifySettings,
};
use normform_core::{factorize_regular, normal_form_at, NormalFormSettings, Vector};

fn factorize(c: &mut Criterion) {
    let mut group = c.benchmark_group("factorize_regular");
    for n in [10usize, 25, 50] {
        let t = low_rank(n, n, n / 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &t, |b, t| {
            b.iter(|| factorize_regular(t, 1e-10).unwrap())
        });
    }
    group.finish();
}

fn normal_form(c: &mut Criterion) {
    let f = expr(&["x + y^2", "sin(x + y^2)"], &["x", "y"]);
    let m = Vector::zeros(2);
    let settings = NormalFormSettings::default();
    c.bench_function("normal_form_at/constant_rank", |b| {
        b.iter(|| normal_form_at(Arc::clone(&f), &m, &settings).unwrap())
    });
}

fn zero_set(c: &mut Criterion) {
    let (f, action) = pitchfork();
    let chart = kuranishi_chart(f, &Vector::zeros(2), &action, &Default::default()).unwrap();
    let mut group = c.benchmark_group("pitchfork");
    group.sample_size(20);
    group.bench_function("explore_zero_set/101", |b| {
        b.iter(|| {
            explore_zero_set(chart.obstruction.as_ref(), chart.radius, 101, &ExploreSettings::default())
                .unwrap()
        })
    });
    let zs = explore_zero_set(chart.obstruction.as_ref(), chart.radius, 101, &ExploreSettings::default())
        .unwrap();
    group.bench_function("stratify/101", |b| {
        b.iter(|| stratify(&chart, &zs, &StratifySettings::default()))
    });
    group.finish();
}

criterion_group!(benches, factorize, normal_form, zero_set);
criterion_main!(benches);
