use criterion::{black_box, criterion_group, criterion_main, Criterion};
use fragqite::hamiltonians::{diagonalize, gen_ensemble, rescale_to_unit};
use fragqite::master::{expected_queries_fragmented, monte_carlo_fragmented, McMode};
use fragqite::schedules::{ansatz_schedule, optimize_schedule, scan_point};
use fragqite::{HamiltonianClass, InputState, Mode, Primitive, Spectrum};

fn instance(n: usize) -> Spectrum {
    let h = rescale_to_unit(&gen_ensemble(HamiltonianClass::WeightedMaxcut, n, 0).unwrap()).unwrap();
    diagonalize(&h, &InputState::MaximallyMixed).unwrap()
}

fn costs(c: &mut Criterion) {
    let s = instance(8);
    let sch = ansatz_schedule(4, 2.0, 500.0).unwrap();
    c.bench_function("fragmented cost r=4 N=8", |b| b.iter(|| expected_queries_fragmented(black_box(&sch), &s, 1e-3, Primitive::P1)));
    let mut group = c.benchmark_group("monte carlo");
    group.sample_size(10);
    group.bench_function("10k runs r=4", |b| b.iter(|| monte_carlo_fragmented(&s, &sch, 1e-3, Primitive::P1, 7, 10_000, McMode::Analytic)));
    group.finish();
}

fn optimization(c: &mut Criterion) {
    let mut group = c.benchmark_group("optimize");
    group.sample_size(10);
    for n in [8usize, 12] {
        let s = instance(n);
        group.bench_function(format!("schedule N={n} beta=1000"), |b| {
            b.iter(|| optimize_schedule(&s, black_box(1000.0), 1e-3, Primitive::P1, 12, Mode::Gibbs))
        });
        group.bench_function(format!("scan point N={n} beta=1000"), |b| {
            b.iter(|| scan_point(&s, black_box(1000.0), 1e-3, Primitive::P1, 12, Mode::Gibbs))
        });
    }
    group.finish();
}

criterion_group!(benches, costs, optimization);
criterion_main!(benches);
