use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use joycekit::examples::HESSIAN_SOLUTION;
use joycekit::heavenly::heavenly_residual;
use joycekit::hyperkahler::build_hk;
use joycekit::spectral::{self, SpectralData};
use joycekit::stokes::{self, StokesOptions, StokesProblem};
use joycekit::twistor::{self, EpsilonPath, TwistorOptions};
use joycekit::wallcrossing::pentagon_defect;
use joycekit::{eval_jet, CMat, Complex64, DarbouxFrame, PlebanskiFunction, XPoint};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn pointwise(cr: &mut Criterion) {
    let frame = DarbouxFrame::standard(2);
    let w = PlebanskiFunction::parse(HESSIAN_SOLUTION, 4).unwrap();
    let x = XPoint::from_real(&[0.4, 0.3, 0.1, -0.2], &[0.3, -0.2, 0.1, 0.25]).unwrap();
    let mut g = cr.benchmark_group("pointwise");
    for order in [2, 4] {
        g.bench_with_input(BenchmarkId::new("jet", order), &order, |b, &k| b.iter(|| eval_jet(&w, black_box(&x), k).unwrap()));
    }
    g.bench_function("heavenly_residual", |b| b.iter(|| heavenly_residual(&w, &frame, black_box(&x)).unwrap()));
    g.bench_function("build_hk", |b| b.iter(|| build_hk(&w, &frame, black_box(&x)).unwrap()));
    g.finish();
}

fn flows(cr: &mut Criterion) {
    let frame = DarbouxFrame::standard(1);
    let w = PlebanskiFunction::parse("0.7*t1^3", 2).unwrap();
    let x = XPoint::new(vec![c(0.7, 0.2), c(-0.4, 0.5)], vec![c(0.3, 0.0), c(-0.1, 0.2)]).unwrap();
    let path = EpsilonPath::new(vec![c(1.0, 0.0), c(0.5, 0.5), c(0.25, 0.0)]).unwrap();
    let opts = TwistorOptions::with_tol(1e-9);
    cr.bench_function("twistor_flow", |b| b.iter(|| twistor::twistor_flow(&w, &frame, black_box(&x), &path, &opts).unwrap()));

    let u = [c(1.0, 0.0), c(-1.0, 0.0)];
    let v = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.0, 0.0)]);
    let p = StokesProblem::diagonal(&u, v).unwrap();
    let ray = stokes::stokes_rays(&p).remove(0);
    let mut g = cr.benchmark_group("stokes_factor");
    g.sample_size(20);
    g.bench_function("double", |b| b.iter(|| stokes::stokes_factor(&p, &ray, &StokesOptions::default()).unwrap()));
    g.bench_function("extended", |b| b.iter(|| stokes::stokes_factor(&p, &ray, &StokesOptions::extended()).unwrap()));
    g.finish();
}

fn exact(cr: &mut Criterion) {
    let mut g = cr.benchmark_group("pentagon");
    g.sample_size(10);
    for n in [6u32, 9, 12] {
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| b.iter(|| pentagon_defect(black_box(n)).unwrap()));
    }
    g.finish();
}

fn periods(cr: &mut Criterion) {
    let data = SpectralData::classify(&[c(0.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
    let cycles = spectral::consecutive_cycles(&data).unwrap();
    cr.bench_function("periods_cubic", |b| b.iter(|| spectral::periods(&data, black_box(&cycles), 1e-10).unwrap()));
    cr.bench_function("intersection_matrix", |b| b.iter(|| spectral::intersection_matrix(&data, black_box(&cycles)).unwrap()));
}

criterion_group!(benches, pointwise, flows, exact, periods);
criterion_main!(benches);
