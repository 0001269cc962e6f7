use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gibbslab::fock::{gibbs_state, hamiltonian, FockBasis};
use gibbslab::gaussian::sample_gaussian;
use gibbslab::interaction::{build_pair_tensor, BatchEvaluator, CutoffLadder};
use gibbslab::spectral::{GridSpec, OneBodyOperator, Trap};
use gibbslab::{PairKind, PairPotential};
use std::hint::black_box;

fn grid_2d() -> GridSpec {
    GridSpec::new(2, 5.0, 32).unwrap()
}

fn bump(grid: GridSpec) -> PairPotential {
    PairPotential::new(PairKind::GaussianBump { amplitude: 1.0, width: 0.5 }, grid).unwrap()
}

fn one_body(c: &mut Criterion) {
    let mut g = c.benchmark_group("one_body");
    g.sample_size(10);
    g.bench_function("1d_M512", |b| {
        let grid = GridSpec::new(1, 8.0, 512).unwrap();
        b.iter(|| OneBodyOperator::build(grid, Trap::power(4.0).unwrap(), 64).unwrap())
    });
    g.bench_function("2d_M32", |b| {
        b.iter(|| OneBodyOperator::build(grid_2d(), Trap::power(2.0).unwrap(), 64).unwrap())
    });
    g.finish();
}

fn fock(c: &mut Criterion) {
    let op = OneBodyOperator::build(GridSpec::new(1, 8.0, 256).unwrap(), Trap::power(4.0).unwrap(), 4).unwrap();
    let w = bump(*op.grid());
    let tensor = build_pair_tensor(&op, &w, 4).unwrap();
    let mut g = c.benchmark_group("gibbs_state");
    g.sample_size(10);
    for n_max in [8, 14] {
        let basis = FockBasis::new(4, n_max).unwrap();
        let h = hamiltonian(&basis, &op.eigenvalues()[..4], Some(&tensor), 0.25).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n_max), &h, |b, h| {
            b.iter(|| gibbs_state(black_box(h), 4.0, 0.0, 0.0, 1.0).unwrap())
        });
    }
    g.finish();
}

fn interaction(c: &mut Criterion) {
    let op = OneBodyOperator::build(grid_2d(), Trap::power(2.0).unwrap(), 64).unwrap();
    let w = bump(grid_2d());
    let samples = sample_gaussian(&op, 64, 64, 7).unwrap().samples;
    let mut g = c.benchmark_group("interaction_2d");
    g.sample_size(10);
    let single = BatchEvaluator::new(&op, &w, 64).unwrap();
    g.bench_function("renormalized_K64", |b| b.iter(|| single.renormalized(black_box(&samples)).unwrap()));
    let ladder = CutoffLadder::new(&op, &w, &[8, 16, 32, 64]).unwrap();
    g.bench_function("ladder_8_to_64", |b| b.iter(|| ladder.evaluate_batch(black_box(&samples)).unwrap()));
    g.finish();
}

criterion_group!(benches, one_body, fock, interaction);
criterion_main!(benches);
