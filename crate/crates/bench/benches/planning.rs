use std::hint::black_box;

use capm_bench::Fixture;
use capm_core::planner::FeasibilityMap;
use capm_core::reach::{scan_rm, scan_ro};
use capm_core::sim::{run_experiment, ExperimentConfig};
use criterion::{criterion_group, criterion_main, Criterion};

fn regions(c: &mut Criterion) {
    let f = Fixture::trial(0, 2.75).unwrap();
    let robot = f.cfg.robot;
    c.bench_function("scan_ro", |b| {
        b.iter(|| scan_ro(black_box(&f.scene.troi), &robot, &f.cfg.task, &f.cfg.search).unwrap())
    });
    c.bench_function("scan_rm", |b| {
        b.iter(|| {
            scan_rm(
                black_box(f.scene.troi.center),
                &robot,
                &f.cfg.task,
                &f.cfg.search,
            )
            .unwrap()
        })
    });
}

fn planners(c: &mut Criterion) {
    let f = Fixture::trial(3, 2.75).unwrap();
    let s = &f.scene;
    c.bench_function("feasibility_map", |b| {
        b.iter(|| FeasibilityMap::new(&f.planner, &f.regions, f.feas.samples().clone()))
    });
    c.bench_function("plan_deterministic", |b| {
        b.iter(|| {
            f.planner
                .plan_deterministic(&s.start, &s.end, black_box(&s.troi))
                .unwrap()
        })
    });
    c.bench_function("plan_two_stage", |b| {
        b.iter(|| {
            f.planner
                .plan_two_stage(&s.start, &s.end, black_box(&f.regions), &f.feas)
                .unwrap()
        })
    });
}

fn experiment(c: &mut Criterion) {
    let cfg = ExperimentConfig {
        n_trials: 20,
        ..ExperimentConfig::default()
    };
    let mut g = c.benchmark_group("experiment");
    g.sample_size(10);
    g.bench_function("20_trials", |b| {
        b.iter(|| run_experiment(black_box(&cfg)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, regions, planners, experiment);
criterion_main!(benches);
