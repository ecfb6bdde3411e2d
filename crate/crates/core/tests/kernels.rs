use mvparametrix::kernels::{
    frozen_density, frozen_params, reference_kernel, FrozenParams, ParametrixEngine, QuadratureGrid, ReferenceKernel,
};
use mvparametrix::model::{builtin_model, MeasureFlow, ModelParams, ParticleCloud};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

fn trapezoid(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let w = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
            w * h * f(lo + i as f64 * h)
        })
        .sum()
}

#[test]
fn reference_kernel_normalises_and_convolves() {
    let rk = ReferenceKernel::new(1.0, 1.3).unwrap();
    let sd = rk.variance(0.7).sqrt();
    let mass = trapezoid(-8.0 * sd, 8.0 * sd, 2001, |y| reference_kernel(&rk, 0.7, &[y]).unwrap());
    assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    for y in [0.0, 0.8, -2.5] {
        let conv = trapezoid(-25.0, 25.0, 4001, |z| {
            reference_kernel(&rk, 0.3, &[y - z]).unwrap() * reference_kernel(&rk, 0.45, &[z]).unwrap()
        });
        let direct = reference_kernel(&rk, 0.75, &[y]).unwrap();
        assert!((conv - direct).abs() < 1e-6, "{conv} vs {direct}");
    }
}

#[test]
fn frozen_kernels_compose() {
    let mk = |m: f64, a: f64| {
        FrozenParams::new(0.0, 0.0, 1.0, vec![0.0], DVector::from_element(1, m), DMatrix::from_element(1, 1, a)).unwrap()
    };
    let (p1, p2, p12) = (mk(0.2, 0.3), mk(-0.5, 0.45), mk(-0.3, 0.75));
    let mass = trapezoid(-10.0, 10.0, 2001, |y| frozen_density(&p1, &[0.4], &[y]));
    assert!((mass - 1.0).abs() < 1e-6);
    for z in [-1.0, 0.1, 1.7] {
        let conv = trapezoid(-12.0, 12.0, 4001, |y| frozen_density(&p1, &[0.4], &[y]) * frozen_density(&p2, &[y], &[z]));
        assert!((conv - frozen_density(&p12, &[0.4], &[z])).abs() < 1e-6);
    }
}

/// Independent importance-sampling estimate of the second iterated kernel
/// for the OU drift `b(x) = -x` with unit noise.
fn h2_monte_carlo(r: f64, t: f64, y: f64, z: f64, n: usize, seed: u64) -> (f64, f64) {
    let h = |r: f64, u: f64, y: f64, z: f64| {
        let tau = u - r;
        let delta = z - y + z * tau;
        let p = (-delta * delta / (2.0 * tau)).exp() / (2.0 * std::f64::consts::PI * tau).sqrt();
        (y - z) * p * delta / tau
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..n {
        // Arcsine law in u absorbs both endpoint singularities.
        let v: f64 = rng.gen();
        let u = r + (t - r) * (0.5 * std::f64::consts::PI * v).sin().powi(2);
        let fu = 1.0 / (std::f64::consts::PI * ((u - r) * (t - u)).sqrt());
        let (s1, s2) = ((1.5 * (u - r)).sqrt(), (1.5 * (t - u)).sqrt());
        let zp = if rng.gen::<bool>() {
            Normal::new(y, s1).unwrap().sample(&mut rng)
        } else {
            Normal::new(z, s2).unwrap().sample(&mut rng)
        };
        let g = |m: f64, s: f64| (-(zp - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        let q = 0.5 * g(y, s1) + 0.5 * g(z, s2);
        let val = h(u, t, zp, z) * h(r, u, y, zp) / (fu * q);
        sum += val;
        sum2 += val * val;
    }
    let mean = sum / n as f64;
    (mean, ((sum2 / n as f64 - mean * mean) / n as f64).sqrt())
}

#[test]
fn second_iterated_kernel_matches_monte_carlo() {
    let ou = builtin_model("ou", &ModelParams::default()).unwrap();
    let t = 0.5;
    let flow = MeasureFlow::constant(ParticleCloud::dirac(&[0.0]).unwrap(), 0.0, t, 10).unwrap();
    let grid = QuadratureGrid::new(vec![-6.0], vec![6.0], 601, 32, 2).unwrap();
    let e = ParametrixEngine::new(&ou, &flow, grid, 0.0, t).unwrap();
    let (r, y, z) = (0.1, 1.2, 0.2);
    let quad = e.h_m(2, r, &[y], &[z]).unwrap();
    let (mc, se) = h2_monte_carlo(r, t, y, z, 1_000_000, 11);
    assert!(se < 5e-3 * mc.abs(), "mc {mc} se {se}");
    assert!((quad - mc).abs() < 2e-2 * mc.abs(), "quadrature {quad} vs mc {mc} +- {se}");
}

#[test]
fn ou_frozen_params_are_exact_under_any_flow() {
    let ou = builtin_model("ou", &ModelParams::default()).unwrap();
    let cloud = ParticleCloud::uniform(1, vec![-3.0, 2.0]).unwrap();
    let flow = MeasureFlow::constant(cloud, 0.0, 1.0, 3).unwrap();
    let fp = frozen_params(&flow, &ou, 0.0, 0.1, 0.9, &[0.5]).unwrap();
    assert!((fp.mean_shift[0] + 0.4).abs() < 1e-14);
}
