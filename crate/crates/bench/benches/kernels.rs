use criterion::{black_box, criterion_group, criterion_main, Criterion};
use mvparametrix::kernels::{beta_product_identity, frozen_density, frozen_params, ParametrixEngine, QuadratureGrid};
use mvparametrix::model::{builtin_model, MeasureFlow, ModelParams, ParticleCloud};

fn parametrix_profile(c: &mut Criterion) {
    let ou = builtin_model("ou", &ModelParams::default()).unwrap();
    let flow = MeasureFlow::constant(ParticleCloud::dirac(&[0.0]).unwrap(), 0.0, 0.5, 1).unwrap();
    let mut g = c.benchmark_group("parametrix_profile_ou");
    g.sample_size(10);
    for order in [1usize, 2, 3] {
        g.bench_function(format!("order{order}_n201"), |b| {
            b.iter(|| {
                let grid = QuadratureGrid::auto(&[0.0], &[0.0], 0.5, ou.bound(0.5), 201, 8, order).unwrap();
                let e = ParametrixEngine::new(&ou, &flow, grid, 0.0, 0.5).unwrap();
                black_box(e.profile(&[0.0]).unwrap().density[100])
            })
        });
    }
    g.finish();
}

fn frozen(c: &mut Criterion) {
    let m = builtin_model("meanfield_ou", &ModelParams { dim: 2, ..ModelParams::default() }).unwrap();
    let cloud = ParticleCloud::uniform(2, (0..200).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let flow = MeasureFlow::constant(cloud, 0.0, 1.0, 20).unwrap();
    c.bench_function("frozen_params_2d", |b| b.iter(|| frozen_params(&flow, &m, 0.0, 0.1, 0.9, black_box(&[0.3, -0.2])).unwrap()));
    let fp = frozen_params(&flow, &m, 0.0, 0.1, 0.9, &[0.3, -0.2]).unwrap();
    c.bench_function("frozen_density_2d", |b| b.iter(|| frozen_density(&fp, black_box(&[0.0, 0.1]), black_box(&[0.5, 0.4]))));
    c.bench_function("beta_product_m50", |b| b.iter(|| beta_product_identity(black_box(50))));
}

criterion_group!(benches, parametrix_profile, frozen);
criterion_main!(benches);
