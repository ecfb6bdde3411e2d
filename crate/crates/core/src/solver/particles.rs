use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{MeasureFlow, ModelSpec, ParticleCloud, Partners, PerturbationMap};
use crate::solver::config::{time_grid, SolverConfig};
use crate::solver::noise::{stream_rng, Substream};

/// Brings `init` to exactly `n` particles: kept as is when it already has `n`
/// points, replicated when it is a single atom, otherwise resampled by weight.
pub fn initial_particles(init: &ParticleCloud, n: usize, seed: u64) -> Result<ParticleCloud> {
    if init.len() == n {
        return Ok(init.clone());
    }
    let d = init.dim();
    if init.len() == 1 {
        return ParticleCloud::uniform(d, init.points().repeat(n));
    }
    let mut cum = Vec::with_capacity(init.len());
    let mut acc = 0.0;
    for &w in init.weights() {
        acc += w;
        cum.push(acc);
    }
    let mut rng = stream_rng(seed, Substream::InitSampling, 1);
    let mut pts = Vec::with_capacity(n * d);
    for _ in 0..n {
        let u: f64 = rng.gen::<f64>() * acc;
        let j = cum.partition_point(|&c| c <= u).min(init.len() - 1);
        pts.extend_from_slice(init.point(j));
    }
    ParticleCloud::uniform(d, pts)
}

fn draw(rng: &mut ChaCha8Rng, sqrt_h: f64, out: &mut [f64]) {
    for o in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *o = sqrt_h * z;
    }
}

/// Interacting particle system for the McKean-Vlasov SDE.
///
/// Synchronous Euler-Maruyama: every particle advances using the previous
/// step's cloud as the measure argument. Particle `i` draws its increments
/// from its own stream, so the result does not depend on evaluation order.
pub fn solve_mckean_vlasov(model: &ModelSpec, init: &ParticleCloud, s: f64, t: f64, cfg: &SolverConfig) -> Result<MeasureFlow> {
    cfg.validate()?;
    if init.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: init.dim() });
    }
    let times = time_grid(s, t, cfg.dt)?;
    let start = initial_particles(init, cfg.n_particles, cfg.seed)?;
    let clouds = run_system(model, start, &times, cfg.seed, |_, _, _, _| Ok(()))?;
    Ok(MeasureFlow::new(times, clouds)?.with_seed(cfg.seed))
}

/// Steps the particle system along `times`, calling `hook(k, cloud_k, next, noise_k)`
/// after each step is drawn.
fn run_system<F>(model: &ModelSpec, start: ParticleCloud, times: &[f64], seed: u64, mut hook: F) -> Result<Vec<ParticleCloud>>
where
    F: FnMut(usize, &ParticleCloud, &[f64], &[f64]) -> Result<()>,
{
    let (n, d, m) = (start.len(), model.dim(), model.noise_dim());
    let mut rngs: Vec<ChaCha8Rng> = (0..n as u64).map(|i| stream_rng(seed, Substream::Solver, i)).collect();
    let weights = start.weights().to_vec();
    let mut clouds = Vec::with_capacity(times.len());
    clouds.push(start);
    let mut noise = vec![0.0; n * m];
    for k in 0..times.len() - 1 {
        let (tk, h) = (times[k], times[k + 1] - times[k]);
        let sqrt_h = h.sqrt();
        let cur = &clouds[k];
        let mut next = vec![0.0; n * d];
        for i in 0..n {
            let dw = &mut noise[i * m..(i + 1) * m];
            draw(&mut rngs[i], sqrt_h, dw);
            let xi = cur.point(i);
            let b = model.drift(tk, xi, cur);
            let sig = model.diffusion(tk, xi, cur);
            let dwv = DVector::from_column_slice(dw);
            let inc = sig * dwv;
            for a in 0..d {
                let v = xi[a] + b[a] * h + inc[a];
                if !v.is_finite() {
                    return Err(Error::Divergence { step: k + 1, time: times[k + 1] });
                }
                next[i * d + a] = v;
            }
        }
        hook(k, cur, &next, &noise)?;
        clouds.push(ParticleCloud::new(d, next, weights.clone())?);
    }
    Ok(clouds)
}

/// Per-particle solution of the linearised mean-field system.
#[derive(Debug, Clone)]
pub struct MeanFieldVariation {
    pub dim: usize,
    pub weights: Vec<f64>,
    /// `N x d`, row-major.
    pub directions: Vec<f64>,
}

impl MeanFieldVariation {
    pub fn direction(&self, i: usize) -> &[f64] {
        &self.directions[i * self.dim..(i + 1) * self.dim]
    }

    /// Weighted second moment `sum_i w_i |v_i|^2`.
    pub fn mean_square(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * self.direction(i).iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

fn partners_for(step: usize, mu: &ParticleCloud, cfg: &SolverConfig) -> Partners {
    match cfg.partners {
        Some(mp) if mp < mu.len() => {
            let mut cum = Vec::with_capacity(mu.len());
            let mut acc = 0.0;
            for &w in mu.weights() {
                acc += w;
                cum.push(acc);
            }
            let mut rng = stream_rng(cfg.seed, Substream::Subsample, step as u64);
            let indices = (0..mp)
                .map(|_| {
                    let u = rng.gen::<f64>() * acc;
                    cum.partition_point(|&c| c <= u).min(mu.len() - 1)
                })
                .collect();
            Partners::Subset { indices, weights: vec![1.0 / mp as f64; mp] }
        }
        _ => Partners::All,
    }
}

/// Derivative of the particle system along the initial perturbation
/// `X_i(s) -> X_i(s) + eps phi(X_i(s))`.
///
/// Replays the noise of `flow`, which must come from [`solve_mckean_vlasov`]
/// with `cfg.seed`; the replayed terminal cloud is compared bitwise with the
/// stored one. The pairing sums over partners `j` use the model's Lions
/// derivatives at the previous-step cloud.
pub fn variation_meanfield(
    model: &ModelSpec,
    flow: &MeasureFlow,
    phi: &PerturbationMap,
    s: f64,
    t: f64,
    cfg: &SolverConfig,
) -> Result<MeanFieldVariation> {
    cfg.validate()?;
    if flow.seed() != Some(cfg.seed) {
        return Err(Error::PairingMismatch(format!(
            "flow was produced with seed {:?}, variation requested with seed {}",
            flow.seed(),
            cfg.seed
        )));
    }
    let slack = |u: f64| 1e-12 * u.abs().max(1.0);
    if (flow.start() - s).abs() > slack(s) || (flow.end() - t).abs() > slack(t) {
        return Err(Error::InvalidTimes(format!(
            "variation on [{s}, {t}] but the flow spans [{}, {}]",
            flow.start(),
            flow.end()
        )));
    }
    let (d, m) = (model.dim(), model.noise_dim());
    let start = flow.initial().clone();
    let n = start.len();
    let mut v: Vec<f64> = Vec::with_capacity(n * d);
    for (p, _) in start.iter() {
        let val = phi.apply(p);
        if val.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: val.len() });
        }
        v.extend(val.iter());
    }
    let coeffs = model.coefficients();
    let measure_free = model.traits().measure_free;
    let times = flow.times().to_vec();
    let mut lions_b = vec![0.0; n * d];
    let clouds = run_system(model, start, &times, cfg.seed, |k, cur, _, noise| {
        let tk = times[k];
        let h = times[k + 1] - tk;
        let lions_s: Vec<DMatrix<f64>> = if measure_free {
            lions_b.iter_mut().for_each(|x| *x = 0.0);
            Vec::new()
        } else {
            let partners = partners_for(k, cur, cfg);
            coeffs.drift_lions_action(tk, cur, &partners, &v, &mut lions_b);
            coeffs.diffusion_lions_action(tk, cur, &partners, &v, m)
        };
        let mut next = vec![0.0; n * d];
        for i in 0..n {
            let xi = cur.point(i);
            let vi = DVector::from_column_slice(&v[i * d..(i + 1) * d]);
            let dw = DVector::from_column_slice(&noise[i * m..(i + 1) * m]);
            let mut gs = model.diffusion_grad(tk, xi, cur, vi.as_slice());
            if let Some(ls) = lions_s.get(i) {
                gs += ls;
            }
            let drift = model.drift_grad(tk, xi, cur) * &vi;
            let mart = gs * dw;
            for a in 0..d {
                let val = vi[a] + (drift[a] + lions_b[i * d + a]) * h + mart[a];
                if !val.is_finite() {
                    return Err(Error::Divergence { step: k + 1, time: times[k + 1] });
                }
                next[i * d + a] = val;
            }
        }
        v = next;
        Ok(())
    })?;
    let replay = clouds.last().unwrap();
    if replay.points() != flow.terminal().points() {
        return Err(Error::PairingMismatch(
            "replayed particle system does not reproduce the stored terminal cloud".into(),
        ));
    }
    Ok(MeanFieldVariation { dim: d, weights: replay.weights().to_vec(), directions: v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, ModelParams};

    fn cfg(n: usize, dt: f64) -> SolverConfig {
        SolverConfig { n_particles: n, dt, ..SolverConfig::default() }
    }

    #[test]
    fn brownian_moments() {
        let bm = builtin_model("brownian", &ModelParams::default()).unwrap();
        let flow = solve_mckean_vlasov(&bm, &ParticleCloud::dirac(&[0.0]).unwrap(), 0.0, 1.0, &cfg(10_000, 0.01)).unwrap();
        let c = flow.terminal();
        assert!(c.mean()[0].abs() < 0.03);
        assert!((c.covariance()[(0, 0)] - 1.0).abs() < 0.05);
        assert_eq!(flow.len(), 101);
    }

    #[test]
    fn runs_are_deterministic() {
        let m = builtin_model("meanfield_ou", &ModelParams::default()).unwrap();
        let init = ParticleCloud::uniform(1, vec![-1.0, 0.0, 2.0]).unwrap();
        let a = solve_mckean_vlasov(&m, &init, 0.0, 0.3, &cfg(300, 0.01)).unwrap();
        let b = solve_mckean_vlasov(&m, &init, 0.0, 0.3, &cfg(300, 0.01)).unwrap();
        assert_eq!(a.terminal().points(), b.terminal().points());
    }

    #[test]
    fn constant_phi_is_a_fixed_point_for_meanfield_ou() {
        let m = builtin_model("meanfield_ou", &ModelParams::default()).unwrap();
        let c = cfg(500, 0.01);
        let init = ParticleCloud::dirac(&[0.0]).unwrap();
        let flow = solve_mckean_vlasov(&m, &init, 0.0, 1.0, &c).unwrap();
        let var = variation_meanfield(&m, &flow, &PerturbationMap::constant(vec![0.7]), 0.0, 1.0, &c).unwrap();
        for i in 0..500 {
            assert!((var.direction(i)[0] - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn subsampled_partners_keep_the_fixed_point() {
        let m = builtin_model("meanfield_ou", &ModelParams::default()).unwrap();
        let c = SolverConfig { partners: Some(50), ..cfg(400, 0.02) };
        let flow = solve_mckean_vlasov(&m, &ParticleCloud::dirac(&[0.0]).unwrap(), 0.0, 0.5, &c).unwrap();
        let var = variation_meanfield(&m, &flow, &PerturbationMap::constant(vec![1.0]), 0.0, 0.5, &c).unwrap();
        assert!((var.mean_square() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measure_free_variation_is_deterministic_decay() {
        let ou = builtin_model("ou", &ModelParams::default()).unwrap();
        let c = cfg(50, 0.001);
        let flow = solve_mckean_vlasov(&ou, &ParticleCloud::dirac(&[0.5]).unwrap(), 0.0, 1.0, &c).unwrap();
        let var = variation_meanfield(&ou, &flow, &PerturbationMap::constant(vec![1.0]), 0.0, 1.0, &c).unwrap();
        assert!((var.direction(3)[0] - (-1.0f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn wrong_seed_is_a_pairing_error() {
        let m = builtin_model("meanfield_ou", &ModelParams::default()).unwrap();
        let c = cfg(20, 0.05);
        let flow = solve_mckean_vlasov(&m, &ParticleCloud::dirac(&[0.0]).unwrap(), 0.0, 0.5, &c).unwrap();
        let other = c.with_seed(7);
        let r = variation_meanfield(&m, &flow, &PerturbationMap::identity(), 0.0, 0.5, &other);
        assert!(matches!(r, Err(Error::PairingMismatch(_))));
    }
}
