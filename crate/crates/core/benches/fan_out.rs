use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use trialwise::engine::{preset, run};
use trialwise::harness::oracle_mc_return;
use trialwise::mdp::{builtin, AccessHandle};
use trialwise::parallel::{fan_out, fan_out_sequential};

fn mc_returns(c: &mut Criterion) {
    let mdp = builtin("grid5").unwrap();
    let m = mdp.n_actions();
    let policy = vec![vec![1.0 / m as f64; m]; mdp.n_states()];
    let s0 = mdp.initial()[0].0;
    let seeds: Vec<u64> = (0..16).collect();

    let mut group = c.benchmark_group("mc_returns");
    let job = |seed: u64| oracle_mc_return(&mdp, &policy, s0, 500, seed).unwrap().mean;
    group.bench_function(BenchmarkId::new("sequential", seeds.len()), |b| {
        b.iter(|| black_box(fan_out_sequential(seeds.clone(), job)))
    });
    group.bench_function(BenchmarkId::new("fan_out", seeds.len()), |b| {
        b.iter(|| black_box(fan_out(seeds.clone(), job)))
    });
    group.finish();
}

fn seed_runs(c: &mut Criterion) {
    let mdp = builtin("grid5").unwrap();
    let config = preset("q_learning").unwrap();
    let seeds: Vec<u64> = (0..16).collect();

    let mut group = c.benchmark_group("q_learning_seeds");
    group.sample_size(20);
    let job = |seed: u64| {
        let handle = AccessHandle::new(&mdp, config.access_required, seed);
        run(config.clone(), handle, 2000, seed).unwrap().query_count
    };
    group.bench_function(BenchmarkId::new("sequential", seeds.len()), |b| {
        b.iter(|| black_box(fan_out_sequential(seeds.clone(), job)))
    });
    group.bench_function(BenchmarkId::new("fan_out", seeds.len()), |b| {
        b.iter(|| black_box(fan_out(seeds.clone(), job)))
    });
    group.finish();
}

criterion_group!(benches, mc_returns, seed_runs);
criterion_main!(benches);
