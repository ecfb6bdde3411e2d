use criterion::{black_box, criterion_group, criterion_main, Criterion};
use mvparametrix::estimators::{bismut_gradient, var_distance, w2_distance, TestFunction, VarMethod};
use mvparametrix::kernels::QuadratureGrid;
use mvparametrix::model::{builtin_model, MeasureFlow, ModelParams, ParticleCloud};
use mvparametrix::solver::{solve_mckean_vlasov, SolverConfig};

fn particles(c: &mut Criterion) {
    let mut g = c.benchmark_group("mckean_vlasov");
    g.sample_size(10);
    let init = ParticleCloud::dirac(&[0.0]).unwrap();
    for name in ["meanfield_ou", "bounded_interaction"] {
        let m = builtin_model(name, &ModelParams::default()).unwrap();
        let cfg = SolverConfig { n_particles: 1000, dt: 0.01, ..SolverConfig::default() };
        g.bench_function(format!("{name}_n1000_100steps"), |b| b.iter(|| solve_mckean_vlasov(&m, &init, 0.0, 1.0, &cfg).unwrap()));
    }
    g.finish();
}

fn bismut(c: &mut Criterion) {
    let m = builtin_model("ou", &ModelParams::default()).unwrap();
    let flow = MeasureFlow::constant(ParticleCloud::dirac(&[0.0]).unwrap(), 0.0, 1.0, 1).unwrap();
    let cfg = SolverConfig { n_mc: 1000, dt: 0.01, ..SolverConfig::default() };
    let mut g = c.benchmark_group("bismut");
    g.sample_size(10);
    g.bench_function("ou_1000_paths_100steps", |b| {
        b.iter(|| bismut_gradient(&m, &flow, black_box(&[0.0]), &[1.0], &TestFunction::Step, 0.0, 1.0, &cfg).unwrap())
    });
    g.finish();
}

fn distances(c: &mut Criterion) {
    let a = ParticleCloud::uniform(1, (0..10_000).map(|i| (i as f64 * 0.618).fract()).collect()).unwrap();
    let b = ParticleCloud::uniform(1, (0..10_000).map(|i| (i as f64 * 0.414).fract() + 0.1).collect()).unwrap();
    c.bench_function("w2_quantile_1e4", |bch| bch.iter(|| w2_distance(black_box(&a), black_box(&b)).unwrap()));

    let m = builtin_model("brownian", &ModelParams::default()).unwrap();
    let fa = MeasureFlow::constant(a, 0.0, 0.5, 1).unwrap();
    let fb = MeasureFlow::constant(b, 0.0, 0.5, 1).unwrap();
    let grid = QuadratureGrid::new(vec![-1.0], vec![2.0], 401, 8, 2).unwrap();
    let mut g = c.benchmark_group("var_distance");
    g.sample_size(10);
    g.bench_function("kde_1e4_n401", |bch| bch.iter(|| var_distance(&m, &fa, &fb, &grid, 0.0, 0.5, VarMethod::Kde).unwrap()));
    g.finish();
}

criterion_group!(benches, particles, bismut, distances);
criterion_main!(benches);
