use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qpt::grid::bump;
use qpt::operators::{momentum_op, preimages, unitary_forward_with};
use qpt::{BumpSpec, DiffeoMap, Expr, Grid};

fn sinh_map() -> DiffeoMap {
    DiffeoMap::parse(1, &["sinh(x1)"], Some(&["asinh(x1)"]), 1e-8).unwrap()
}

fn shear_map() -> DiffeoMap {
    DiffeoMap::parse(2, &["sinh(x1)", "x2 + x1"], None, 1e-8).unwrap()
}

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("momentum_assembly");
    let m = sinh_map();
    for n in [481usize, 1921, 7681] {
        let g = Arc::new(Grid::cube(1, -6.0, 6.0, n).unwrap());
        group.bench_with_input(BenchmarkId::new("sinh_1d", n), &g, |b, g| {
            b.iter(|| momentum_op(&m, g, 0).unwrap())
        });
    }
    let m = shear_map();
    for n in [65usize, 129] {
        let g = Arc::new(Grid::cube(2, -5.0, 5.0, n).unwrap());
        group.bench_with_input(BenchmarkId::new("shear_2d", n), &g, |b, g| {
            b.iter(|| momentum_op(&m, g, 0).unwrap())
        });
    }
    group.finish();
}

fn apply(c: &mut Criterion) {
    let m = shear_map();
    let g = Arc::new(Grid::cube(2, -5.0, 5.0, 257).unwrap());
    let p = momentum_op(&m, &g, 0).unwrap();
    let u = bump(&g, &BumpSpec::new(vec![0.0, 0.0], vec![2.0, 2.0])).unwrap();
    c.bench_function("momentum_apply_shear_257x257", |b| {
        b.iter(|| p.apply(black_box(&u)).unwrap())
    });
}

fn unitary(c: &mut Criterion) {
    let m = sinh_map();
    let gx = Arc::new(Grid::cube(1, -6.0, 6.0, 961).unwrap());
    let gi = Arc::new(Grid::cube(1, -200.0, 200.0, 4001).unwrap());
    let u = bump(&gx, &BumpSpec::new(vec![0.0], vec![3.0])).unwrap();
    c.bench_function("preimages_sinh_4001", |b| {
        b.iter(|| preimages(&m, &gi).unwrap())
    });
    let xs = preimages(&m, &gi).unwrap();
    c.bench_function("unitary_forward_sinh_4001", |b| {
        b.iter(|| unitary_forward_with(&m, &gx, &gi, black_box(&u), &xs).unwrap())
    });
}

fn expressions(c: &mut Criterion) {
    let e = qpt::expr::parse("sqrt(x1^2 + x2^2) * exp(-x1*x2) + atan(x2/x1)", 2).unwrap();
    c.bench_function("expr_derive_simplify", |b| {
        b.iter(|| black_box(&e).derive(0).simplify())
    });
    let d: Expr = e.derive(0).simplify();
    c.bench_function("expr_eval_derivative", |b| {
        b.iter(|| d.eval(black_box(&[0.7, -1.3])).unwrap())
    });
}

criterion_group!(benches, assembly, apply, unitary, expressions);
criterion_main!(benches);
