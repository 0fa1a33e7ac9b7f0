use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use g2verify::catalog;
use g2verify::multivec::{self, lambda2_spectrum, NumForm};
use g2verify::report::{run_verify, DEFAULT_TOL};
use std::hint::black_box;

fn algebra(c: &mut Criterion) {
    let a = NumForm::from_real(
        2,
        &(0..21).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>(),
    );
    c.bench_function("wedge 2x3", |b| b.iter(|| black_box(&a).w(multivec::phi())));
    c.bench_function("hodge 3", |b| b.iter(|| black_box(multivec::phi()).hodge()));
    c.bench_function("lambda2 spectrum", |b| b.iter(lambda2_spectrum));
}

fn models(c: &mut Criterion) {
    let gj = catalog::build("lauret_GJ").unwrap();
    c.bench_function("d^2 lauret_GJ 100 pts", |b| {
        b.iter(|| gj.field.model.d_squared_residual(100, 42).unwrap())
    });
    let bry = catalog::build("bryant_erp").unwrap();
    c.bench_function("torsion bryant_erp", |b| {
        b.iter(|| bry.field.torsion().unwrap())
    });
    let t = bry.field.torsion().unwrap();
    let pts = bry.field.model.sample_points(100, 42).unwrap();
    c.bench_function("point data bryant_erp 100 pts", |b| {
        b.iter(|| bry.field.at_all(&t, &pts).unwrap())
    });
}

fn suite(c: &mut Criterion) {
    let mut g = c.benchmark_group("verify");
    g.sample_size(10);
    for id in ["flat", "lauret_GJ", "soliton_twistor", "weierstrass_typeA"] {
        g.bench_function(id, |b| {
            b.iter_batched(
                || [id],
                |ids| run_verify(&ids, 100, 42, DEFAULT_TOL, false).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

criterion_group!(benches, algebra, models, suite);
criterion_main!(benches);
