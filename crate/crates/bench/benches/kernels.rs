use criterion::{black_box, criterion_group, criterion_main, Criterion};

use capbound_core::capacity::{cap, CapacityConfig, CompactSet};
use capbound_core::carving::{joint_min, CarvingConfig};
use capbound_core::grid::{CubeWindow, DomainMask, Lattice, ScalarField, VectorField};
use capbound_core::harness;
use capbound_core::linalg::EdgeLaplacian;
use capbound_core::spectrum::{bottom, EigenConfig, MagneticOperator};

fn square(cells: usize) -> Lattice {
    Lattice::new(&[cells + 1, cells + 1], 1.0 / cells as f64, &[-0.5, -0.5]).unwrap()
}

fn capacity_disk(c: &mut Criterion) {
    let cube = CubeWindow::whole(&square(64)).unwrap();
    let disk = CompactSet::from_fn(&cube, |x| x[0].hypot(x[1]) <= 0.125);
    let cfg = CapacityConfig::default();
    c.bench_function("capacity disk 64²", |b| b.iter(|| cap(black_box(&disk), &cfg).unwrap()));
}

fn ground_state(c: &mut Criterion) {
    let lat = square(64);
    let om = DomainMask::interior_of(&lat, |x| x[0].abs() < 0.5 && x[1].abs() < 0.5);
    let a = VectorField::from_edge_fn(&lat, |x, ax| if ax == 0 { -5.0 * x[1] } else { 5.0 * x[0] });
    let op = MagneticOperator::new(&om, &a, &ScalarField::zeros(&lat)).unwrap();
    let cfg = EigenConfig::default();
    c.bench_function("bottom landau 64²", |b| b.iter(|| bottom(black_box(&op), &cfg).unwrap()));
}

fn carving(c: &mut Criterion) {
    let inst = harness::build("landau-1", None).unwrap();
    let lat = inst.problem.lattice();
    let n = lat.extent(0) - 1;
    let cube = CubeWindow::new(lat, [(n - 16) / 2, (n - 16) / 2, 0], 16).unwrap();
    let prob = inst.problem.cube(&cube).unwrap();
    let cfg = CarvingConfig::default();
    let mut g = c.benchmark_group("carving");
    g.sample_size(10);
    g.bench_function("joint_min landau 16²", |b| b.iter(|| joint_min(black_box(&prob), &cfg).unwrap()));
    g.finish();
}

fn stencil(c: &mut Criterion) {
    let lat = square(256);
    let free: Vec<bool> = (0..lat.len()).map(|i| !lat.on_boundary(i)).collect();
    let op = EdgeLaplacian::unit(&lat, free);
    let x: Vec<f64> = (0..lat.len()).map(|i| (i as f64).sin()).collect();
    let mut y = vec![0.0; lat.len()];
    c.bench_function("laplacian apply 256²", |b| b.iter(|| op.apply(black_box(&x), &mut y)));
}

criterion_group!(kernels, capacity_disk, ground_state, carving, stencil);
criterion_main!(kernels);
