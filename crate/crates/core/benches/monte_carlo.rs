//! Sequential versus data-parallel trial execution.
//!
//! Both schedules produce identical results; only wall time differs. Build
//! with `--no-default-features` to see the parallel path fall back.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use vblast_core::exec::Execution;
use vblast_core::montecarlo::{estimate_error_rates, estimate_step_outage, ExperimentConfig};
use vblast_core::SystemDims;

fn schedules() -> [(&'static str, Execution); 2] {
    [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ]
}

fn outage(c: &mut Criterion) {
    let mut group = c.benchmark_group("step_outage_4x4");
    let mut cfg = ExperimentConfig::new(SystemDims::new(4, 4).unwrap());
    cfg.channel_trials = 32_768;
    group.throughput(Throughput::Elements(cfg.channel_trials));
    for (name, exec) in schedules() {
        cfg.execution = exec;
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| estimate_step_outage(cfg).unwrap())
        });
    }
    group.finish();
}

fn error_rates(c: &mut Criterion) {
    let mut group = c.benchmark_group("error_rates_3x3");
    group.sample_size(10);
    let mut cfg = ExperimentConfig::new(SystemDims::new(3, 3).unwrap());
    cfg.channel_trials = 4096;
    cfg.noise_trials_per_channel = 10;
    group.throughput(Throughput::Elements(
        cfg.channel_trials * cfg.noise_trials_per_channel,
    ));
    for (name, exec) in schedules() {
        cfg.execution = exec;
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| estimate_error_rates(cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, outage, error_rates);
criterion_main!(benches);
