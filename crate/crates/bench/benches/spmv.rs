use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nystrom_hdc::schedule::{build_schedule, spmv_reference, spmv_scheduled, spmv_scheduled_parallel};
use nystrom_hdc::{synth, ScheduleTable, SplitMix64};

fn spmv(c: &mut Criterion) {
    let mut rng = SplitMix64::new(9);
    let m = synth::power_law_matrix(&mut rng, 8192, 2048, 1.1, 1024);
    let x: Vec<f64> = (0..2048).map(|_| rng.next_gaussian()).collect();
    let mut g = c.benchmark_group("spmv_power_law");
    g.bench_function("reference", |b| b.iter(|| spmv_reference(&m, &x).unwrap()));
    for lanes in [2usize, 4, 8] {
        let lb = build_schedule(&m, lanes).unwrap();
        let contiguous = ScheduleTable::contiguous(8192, lanes).unwrap();
        g.bench_with_input(BenchmarkId::new("scheduled", lanes), &lb, |b, s| {
            b.iter(|| spmv_scheduled(&m, &x, s).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("parallel_balanced", lanes), &lb, |b, s| {
            b.iter(|| spmv_scheduled_parallel(&m, &x, s).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("parallel_contiguous", lanes), &contiguous, |b, s| {
            b.iter(|| spmv_scheduled_parallel(&m, &x, s).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, spmv);
criterion_main!(benches);
