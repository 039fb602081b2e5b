//! Data-parallel paths against an explicit sequential loop over the same work.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use memsyn::calibration::{fit, FitConfig, TargetFeatures};
use memsyn::protocols::{self, StdpSettings};
use memsyn::{par, DeviceParams, DeviceState, SimConfig};

fn stdp_points(c: &mut Criterion) {
    let params = DeviceParams::default();
    let cfg = SimConfig::pulse();
    let settings = StdpSettings::default();
    let delays: Vec<f64> = (-8..=8).map(|k| f64::from(k) * 5e-6).collect();
    let point = |&dt: &f64| {
        let target = if dt >= 0.0 { settings.g_before_ltp } else { settings.g_before_ltd };
        let s = protocols::precondition(&DeviceState::fresh(&params), target, &settings, &cfg, &params).unwrap();
        protocols::stdp_point(&s, dt, &settings, &cfg, &params).unwrap()
    };
    let mut g = c.benchmark_group("stdp_17_points");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("par_map", par::is_parallel()), |b| b.iter(|| par::map(&delays, point)));
    g.bench_function("sequential", |b| b.iter(|| delays.iter().map(point).collect::<Vec<_>>()));
    g.finish();
}

fn dc_cycles(c: &mut Criterion) {
    let params = DeviceParams::default();
    let cfg = SimConfig::dc();
    let seeds: Vec<u64> = (0..8).collect();
    let cycle = |&seed: &u64| {
        protocols::run_iv_cycles(1, &protocols::Sweep::default(), 1e-3, &cfg.with_seed(seed), &params).unwrap()
    };
    let mut g = c.benchmark_group("dc_cycles_8_seeds");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("par_map", par::is_parallel()), |b| b.iter(|| par::map(&seeds, cycle)));
    g.bench_function("sequential", |b| b.iter(|| seeds.iter().map(cycle).collect::<Vec<_>>()));
    g.finish();
}

fn fit_restarts(c: &mut Criterion) {
    let base = DeviceParams { a1: 3e-4, n1: 1.3, ..DeviceParams::default() };
    let targets = TargetFeatures::default();
    let mut g = c.benchmark_group("fit_4_restarts");
    g.sample_size(10);
    let cfg = FitConfig { restarts: 4, max_evals: 40, ..FitConfig::default() };
    g.bench_function(BenchmarkId::new("restarts_in_parallel", par::is_parallel()), |b| {
        b.iter(|| fit(&targets, &base, &cfg).unwrap())
    });
    let single = FitConfig { restarts: 1, ..cfg.clone() };
    g.bench_function("one_restart_x4_sequential", |b| {
        b.iter(|| (0..4).map(|k| fit(&targets, &base, &FitConfig { seed: k, ..single.clone() }).unwrap()).collect::<Vec<_>>())
    });
    g.finish();
}

criterion_group!(benches, stdp_points, dc_cycles, fit_restarts);
criterion_main!(benches);
