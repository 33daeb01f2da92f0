use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kinechain_bench::{points, rng, transforms};
use kinechain_core::fitting::{fit_stage1, FitConfig};
use kinechain_core::fixtures::{elbow_fixture, elbow_frames, random_anchors, random_chain};
use kinechain_core::metrics::chamfer_distance;
use kinechain_core::model::ModelBundle;
use kinechain_core::se3::RigidTransform;
use kinechain_core::skinning::deform_mesh;
use kinechain_core::{recover_chain, Mesh};

fn skinning(c: &mut Criterion) {
    let mut group = c.benchmark_group("deform_mesh");
    for &(vertices, anchors) in &[(600, 6), (10_000, 25), (10_000, 36)] {
        let mut r = rng(1);
        let chain = random_chain(&mut r, 12);
        let set = random_anchors(&mut r, &chain, anchors);
        let mesh = Mesh::from_points(points(&mut r, vertices, 2.0));
        let ts = transforms(&mut r, anchors);
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{vertices}v_{anchors}a")),
            &(mesh, set, ts),
            |b, (mesh, set, ts)| {
                b.iter(|| deform_mesh(black_box(mesh), set, ts, &RigidTransform::identity()))
            },
        );
    }
    group.finish();
}

fn recovery(c: &mut Criterion) {
    let mut group = c.benchmark_group("recover_chain");
    for &n in &[3, 20, 200] {
        let mut r = rng(2);
        let chain = random_chain(&mut r, n);
        let free = points(&mut r, n, 3.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &(chain, free), |b, (chain, free)| {
            b.iter(|| recover_chain(black_box(chain), black_box(free)))
        });
    }
    group.finish();
}

fn chamfer(c: &mut Criterion) {
    let mut group = c.benchmark_group("chamfer_distance");
    for &n in &[500, 5_000, 50_000] {
        let mut r = rng(3);
        let a = points(&mut r, n, 1.0);
        let b = points(&mut r, n, 1.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &(a, b), |bench, (a, b)| {
            bench.iter(|| chamfer_distance(black_box(a), black_box(b)))
        });
    }
    group.finish();
}

fn elbow_stage1(c: &mut Criterion) {
    let fx = elbow_fixture();
    let bundle = ModelBundle::new(fx.mesh.clone(), fx.chain.clone(), fx.anchors.clone()).unwrap();
    let frames = elbow_frames(&bundle, &[45.0]);
    let config = FitConfig {
        stage1_iterations: 50,
        ..FitConfig::default()
    };
    let mut group = c.benchmark_group("fit_stage1");
    group.sample_size(10);
    group.bench_function("elbow_50_iterations", |b| {
        b.iter(|| fit_stage1(&fx.mesh, &fx.anchors, black_box(&frames), &config))
    });
    group.finish();
}

criterion_group!(benches, skinning, recovery, chamfer, elbow_stage1);
criterion_main!(benches);
