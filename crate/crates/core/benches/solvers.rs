//! Solver timings at N = 10, M = 3. Each benchmark runs on the default pool
//! and on a single worker; build with `--no-default-features` for the
//! sequential code path.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use uav_mtfl::alloc::{bandwidth_allocate, bcd_solve, links_for, optimal_power, BcdOptions, Medium};
use uav_mtfl::association::{evaluate, exhaustive_assign, two_stage_assign, utility_table, RoundInputs};
use uav_mtfl::attention::task_shapley;
use uav_mtfl::par;
use uav_mtfl::validate::{instance_medium, random_alloc_instance, random_model, random_rate_demands};

fn modes() -> Vec<(String, Option<usize>)> {
    let label = if par::PARALLEL { "parallel" } else { "sequential" };
    let mut m = vec![(label.to_string(), None)];
    if par::PARALLEL {
        m.push(("one-thread".to_string(), Some(1)));
    }
    m
}

fn run<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(n) => par::with_threads(n, f),
        None => f(),
    }
}

fn closed_forms(c: &mut Criterion) {
    let medium = instance_medium();
    let demands = random_rate_demands(3, 10);
    c.bench_function("bandwidth_allocate/n10", |b| {
        b.iter(|| bandwidth_allocate(black_box(&demands), medium.bandwidth, medium.noise_psd).unwrap())
    });
    let (links, _) = random_alloc_instance(4, 10);
    c.bench_function("optimal_power", |b| b.iter(|| optimal_power(black_box(&links[0]), 0.1, &medium)));
}

fn allocation(c: &mut Criterion) {
    let medium = instance_medium();
    let (links, queues) = random_alloc_instance(5, 10);
    let opts = BcdOptions::default();
    c.bench_function("bcd_solve/n10", |b| b.iter(|| bcd_solve(black_box(&links), &queues, &medium, &opts).unwrap()));
}

fn association(c: &mut Criterion) {
    let model = random_model(11, 10, 3);
    let gains = model.gain_matrix().unwrap();
    let queues: Vec<f64> = (0..10).map(|n| 0.5 + 0.3 * n as f64).collect();
    let alpha = [0.5, 0.3, 0.2];
    let min = [2, 2, 2];
    let inputs = RoundInputs {
        model: &model,
        gains: &gains,
        queues: &queues,
        alpha: &alpha,
        data: &model.compute.data_sizes,
        v: 0.01,
        min_per_task: &min,
    };
    let opts = BcdOptions::default();
    let medium = Medium::from_model(&model);

    let small = random_model(12, 6, 3);
    let small_gains = small.gain_matrix().unwrap();
    let small_inputs = RoundInputs {
        model: &small,
        gains: &small_gains,
        queues: &queues[..6],
        min_per_task: &[1, 1, 1],
        data: &small.compute.data_sizes,
        ..inputs
    };

    let mut group = c.benchmark_group("association");
    for (label, threads) in modes() {
        group.bench_with_input(BenchmarkId::new("two_stage/n10m3", &label), &threads, |b, &t| {
            b.iter(|| {
                run(t, || {
                    let a = two_stage_assign(&utility_table(&inputs), &queues, &alpha, &min).unwrap();
                    let links = links_for(&model, &gains, &a.assignment);
                    bcd_solve(&links, &queues, &medium, &opts).unwrap()
                })
            })
        });
        group.bench_with_input(BenchmarkId::new("exhaustive/n6m3", &label), &threads, |b, &t| {
            b.iter(|| run(t, || exhaustive_assign(&small_inputs, &opts).unwrap()))
        });
    }
    group.finish();

    let a = two_stage_assign(&utility_table(&inputs), &queues, &alpha, &min).unwrap();
    c.bench_function("evaluate/n10m3", |b| b.iter(|| evaluate(&inputs, black_box(&a.assignment), &opts).unwrap()));
}

fn shapley(c: &mut Criterion) {
    let games: Vec<Vec<f64>> = (0..4).map(|g| (0..16).map(|k| ((g * 16 + k) as f64 * 0.37).sin()).collect()).collect();
    c.bench_function("task_shapley/m4", |b| b.iter(|| task_shapley(black_box(&games)).unwrap()));
}

criterion_group!(benches, closed_forms, allocation, association, shapley);
criterion_main!(benches);
