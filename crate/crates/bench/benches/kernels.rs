use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use layerpot::bie::assemble_neumann_system;
use layerpot::degree::{brouwer_degree, FiniteMap, PhiFn};
use layerpot::funcspace::{mollify, negative_norm, GridFunction};
use layerpot::potentials::{newton_potential, solid_angle};
use layerpot::{Point3, VolumeGrid};
use layerpot_bench::sphere;

fn potentials(c: &mut Criterion) {
    let mesh = sphere(3);
    c.bench_function("solid_angle_level3", |b| b.iter(|| solid_angle(&mesh, black_box(Point3::new(0.1, 0.2, 0.3))).unwrap()));
    c.bench_function("neumann_assembly_level2", |b| {
        let coarse = sphere(2);
        b.iter(|| assemble_neumann_system(black_box(&coarse)).unwrap())
    });
    let grid = VolumeGrid::from_mesh(&mesh, 16).unwrap();
    let ones = vec![1.0; grid.len()];
    c.bench_function("newton_potential_grid16", |b| b.iter(|| newton_potential(&grid, &ones, black_box(Point3::ZERO)).unwrap()));
}

fn funcspace(c: &mut Criterion) {
    let lo = Point3::new(-1.0, -1.0, -1.0);
    let f = GridFunction::from_fn(lo, -lo, [16, 16, 16], |p| (1.3 * p.x).sin() * (0.7 * p.y).cos() + p.z * p.z).unwrap();
    c.bench_function("mollify_16", |b| b.iter(|| mollify(&f, black_box(0.01)).unwrap()));
    c.bench_function("negative_norm_16", |b| b.iter(|| negative_norm(&f, black_box(2))));
}

fn degree(c: &mut Criterion) {
    let phi: PhiFn = Arc::new(|d: &[f64]| Ok(vec![0.4 * d[1].sin(), -0.3 * d[0] + 0.2 * d[1] * d[1]]));
    let map = FiniteMap::on_box(2, 1.0, phi).unwrap();
    let mut g = c.benchmark_group("degree");
    g.sample_size(10);
    g.bench_function("brouwer_2d", |b| b.iter(|| brouwer_degree(&map, black_box(&[0.05, -0.02])).unwrap()));
    g.finish();
}

criterion_group!(benches, potentials, funcspace, degree);
criterion_main!(benches);
