use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pppnav::field::{AnalyticScene, DensityGrid, Primitive};
use pppnav::ppp::{sample_realization_with, PppConfig, SamplingMode};
use pppnav::purr::purr_pipeline;
use pppnav::{Aabb, Exec};

fn scene_grid(n: usize) -> DensityGrid {
    let prims = vec![
        Primitive::Sphere {
            center: [0.5, 0.5, 0.5],
            radius: 0.2,
            density: 500.0,
            color: None,
        },
        Primitive::Box {
            min: [0.1, 0.1, 0.0],
            max: [0.3, 0.9, 0.6],
            density: 800.0,
            color: None,
        },
        Primitive::Gaussian {
            center: [0.75, 0.3, 0.5],
            sigma: 0.08,
            peak: 300.0,
            color: None,
        },
    ];
    AnalyticScene::new(0.5, prims).unwrap().sample([n; 3], Aabb::unit()).unwrap()
}

fn bench(c: &mut Criterion) {
    let cfg = PppConfig::default();
    let execs = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

    let mut g = c.benchmark_group("purr_pipeline");
    g.sample_size(10);
    for n in [48, 96] {
        let grid = scene_grid(n);
        for (name, exec) in execs {
            g.bench_with_input(BenchmarkId::new(name, n), &grid, |b, grid| {
                b.iter(|| purr_pipeline(grid, 0.02, &cfg, exec).unwrap())
            });
        }
    }
    g.finish();

    let mut g = c.benchmark_group("sample_realization");
    g.sample_size(10);
    let grid = scene_grid(64);
    for (name, exec) in execs {
        g.bench_function(name, |b| {
            b.iter(|| sample_realization_with(&grid, &cfg, 1e-6, 7, SamplingMode::Thinned, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
