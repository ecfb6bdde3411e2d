use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{MeasureFlow, ModelSpec};
use crate::solver::config::{SolverConfig, StepGrid};
use crate::solver::noise::{stream_rng, Substream};

/// Terminal points of independent decoupled paths started at `x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSamples {
    pub dim: usize,
    pub x0: Vec<f64>,
    pub s: f64,
    pub t: f64,
    pub seed: u64,
    pub dt: f64,
    /// `n_mc x d`, row-major.
    pub terminal: Vec<f64>,
}

impl PathSamples {
    pub fn len(&self) -> usize {
        self.terminal.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.terminal.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.terminal[i * self.dim..(i + 1) * self.dim]
    }
}

/// Directions `v_{s,t}` of the first variation, one per paired path.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationSamples {
    pub dim: usize,
    /// `n_mc x d`, row-major.
    pub directions: Vec<f64>,
}

impl VariationSamples {
    pub fn direction(&self, i: usize) -> &[f64] {
        &self.directions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mean_square(&self) -> f64 {
        let n = self.directions.len() / self.dim;
        self.directions.iter().map(|v| v * v).sum::<f64>() / n as f64
    }
}

/// Outcome of one path of the decoupled SDE.
#[derive(Debug, Clone)]
pub(crate) struct PathRun {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// `int <sigma^T (sigma sigma^T)^{-1} v, dW>`, left-point rule.
    pub weight: f64,
}

/// What to carry along a path besides the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Carry {
    State,
    Variation,
    Bismut,
}

pub(crate) fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    stream_rng(seed, Substream::Decoupled, index as u64)
}

fn bismut_direction(sigma: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let a = sigma * sigma.transpose();
    let chol = a.clone().cholesky();
    let ok = chol.as_ref().map(|c| {
        let diag = c.l_dirty().diagonal();
        let (lo, hi) = (diag.min(), diag.max());
        lo > 0.0 && lo * lo >= 1e-12 * hi * hi
    });
    match (chol, ok) {
        (Some(c), Some(true)) => Ok(sigma.transpose() * c.solve(v)),
        _ => {
            let eig = a.symmetric_eigen().eigenvalues;
            Err(Error::Conditioning { min_eig: eig.min(), max_eig: eig.max() })
        }
    }
}

/// Euler-Maruyama for one decoupled path, optionally with the variation
/// process and the Bismut weight driven by the same increments.
pub(crate) fn run_path(
    model: &ModelSpec,
    flow: &MeasureFlow,
    grid: &StepGrid,
    x0: &[f64],
    v0: &[f64],
    carry: Carry,
    rng: &mut ChaCha8Rng,
) -> Result<PathRun> {
    let (d, m) = (model.dim(), model.noise_dim());
    let clouds = flow.clouds();
    let mut x = x0.to_vec();
    let mut v = DVector::from_column_slice(v0);
    let mut weight = 0.0;
    let mut dw = DVector::zeros(m);
    for k in 0..grid.steps() {
        let (tk, h) = (grid.times[k], grid.times[k + 1] - grid.times[k]);
        let sqrt_h = h.sqrt();
        for w in dw.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *w = sqrt_h * z;
        }
        let mu = &clouds[grid.cloud[k]];
        let b = model.drift(tk, &x, mu);
        let sig = model.diffusion(tk, &x, mu);
        if carry != Carry::State {
            if carry == Carry::Bismut {
                weight += bismut_direction(&sig, &v)?.dot(&dw);
            }
            let gb = model.drift_grad(tk, &x, mu);
            let gs = model.diffusion_grad(tk, &x, mu, v.as_slice());
            v = &v + gb * &v * h + gs * &dw;
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::Divergence { step: k + 1, time: grid.times[k + 1] });
            }
        }
        let inc = sig * &dw;
        for a in 0..d {
            x[a] += b[a] * h + inc[a];
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::Divergence { step: k + 1, time: grid.times[k + 1] });
        }
    }
    Ok(PathRun { x, v: v.as_slice().to_vec(), weight })
}

fn check_start(model: &ModelSpec, x: &[f64]) -> Result<()> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: x.len() });
    }
    Ok(())
}

/// `n_mc` independent paths of the SDE with the measure argument frozen
/// along `flow` (read piecewise-constantly), started at `x`.
pub fn solve_decoupled(model: &ModelSpec, flow: &MeasureFlow, x: &[f64], s: f64, t: f64, cfg: &SolverConfig) -> Result<PathSamples> {
    cfg.validate()?;
    check_start(model, x)?;
    let grid = StepGrid::new(flow, s, t, cfg.dt)?;
    let d = model.dim();
    let mut terminal = Vec::with_capacity(cfg.n_mc * d);
    let zero = vec![0.0; d];
    for i in 0..cfg.n_mc {
        let run = run_path(model, flow, &grid, x, &zero, Carry::State, &mut path_rng(cfg.seed, i))?;
        terminal.extend_from_slice(&run.x);
    }
    Ok(PathSamples { dim: d, x0: x.to_vec(), s, t, seed: cfg.seed, dt: cfg.dt, terminal })
}

/// First variation `dv = grad_v b dt + grad_v sigma dW`, `v_{s,s} = v`, along
/// the paths of `base`.
///
/// The paths are replayed from `cfg.seed`; a seed, step or size different from
/// the base run, or a replay that does not reproduce its terminal points,
/// is a pairing error.
pub fn variation_frozen(
    model: &ModelSpec,
    flow: &MeasureFlow,
    base: &PathSamples,
    v: &[f64],
    cfg: &SolverConfig,
) -> Result<VariationSamples> {
    cfg.validate()?;
    if cfg.seed != base.seed || cfg.dt != base.dt || cfg.n_mc != base.len() {
        return Err(Error::PairingMismatch(format!(
            "base run used seed {}, dt {}, n_mc {}; variation asked for seed {}, dt {}, n_mc {}",
            base.seed,
            base.dt,
            base.len(),
            cfg.seed,
            cfg.dt,
            cfg.n_mc
        )));
    }
    check_start(model, v)?;
    let grid = StepGrid::new(flow, base.s, base.t, cfg.dt)?;
    let mut directions = Vec::with_capacity(base.terminal.len());
    for i in 0..cfg.n_mc {
        let run = run_path(model, flow, &grid, &base.x0, v, Carry::Variation, &mut path_rng(cfg.seed, i))?;
        if run.x.as_slice() != base.point(i) {
            return Err(Error::PairingMismatch(format!("path {i} does not reproduce the base run")));
        }
        directions.extend_from_slice(&run.v);
    }
    Ok(VariationSamples { dim: base.dim, directions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, ModelParams, ParticleCloud};

    fn flow(t: f64) -> MeasureFlow {
        MeasureFlow::constant(ParticleCloud::dirac(&[0.0]).unwrap(), 0.0, t, 10).unwrap()
    }

    fn cfg(n_mc: usize, dt: f64) -> SolverConfig {
        SolverConfig { n_mc, dt, ..SolverConfig::default() }
    }

    #[test]
    fn brownian_terminal_law_passes_ks() {
        let bm = builtin_model("brownian", &ModelParams::default()).unwrap();
        let ps = solve_decoupled(&bm, &flow(1.0), &[0.5], 0.0, 1.0, &cfg(10_000, 0.05)).unwrap();
        let mut xs: Vec<f64> = ps.terminal.clone();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let normal = statrs::distribution::Normal::new(0.5, 1.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        let dmax = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let f = normal.cdf(*x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        // Asymptotic Kolmogorov critical value at level 0.01.
        assert!(dmax * n.sqrt() < 1.628, "KS statistic {}", dmax * n.sqrt());
    }

    #[test]
    fn brownian_variation_is_constant() {
        let bm = builtin_model("brownian", &ModelParams::default()).unwrap();
        let c = cfg(100, 0.01);
        let f = flow(1.0);
        let base = solve_decoupled(&bm, &f, &[0.0], 0.0, 1.0, &c).unwrap();
        let var = variation_frozen(&bm, &f, &base, &[2.0], &c).unwrap();
        assert!(var.directions.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn ou_variation_decays_exponentially() {
        let ou = builtin_model("ou", &ModelParams::default()).unwrap();
        let c = cfg(10, 1e-3);
        let f = flow(1.0);
        let base = solve_decoupled(&ou, &f, &[0.3], 0.0, 1.0, &c).unwrap();
        let var = variation_frozen(&ou, &f, &base, &[1.5], &c).unwrap();
        for i in 0..10 {
            assert!((var.direction(i)[0] - 1.5 * (-1.0f64).exp()).abs() < 1e-3);
        }
    }

    #[test]
    fn pairing_is_enforced() {
        let ou = builtin_model("ou", &ModelParams::default()).unwrap();
        let c = cfg(10, 0.01);
        let f = flow(1.0);
        let base = solve_decoupled(&ou, &f, &[0.3], 0.0, 1.0, &c).unwrap();
        assert!(matches!(variation_frozen(&ou, &f, &base, &[1.0], &c.with_seed(1)), Err(Error::PairingMismatch(_))));
        let mut forged = base.clone();
        forged.terminal[4] += 1.0;
        assert!(matches!(variation_frozen(&ou, &f, &forged, &[1.0], &c), Err(Error::PairingMismatch(_))));
    }

    #[test]
    fn flow_must_cover_the_interval() {
        let bm = builtin_model("brownian", &ModelParams::default()).unwrap();
        let r = solve_decoupled(&bm, &flow(0.5), &[0.0], 0.0, 1.0, &cfg(10, 0.01));
        assert!(matches!(r, Err(Error::FlowRange { .. })));
    }
}
