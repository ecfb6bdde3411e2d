use crate::error::{Error, Result};
use crate::estimators::gradient::mixture_estimate;
use crate::estimators::stats::GradientEstimate;
use crate::estimators::TestFunction;
use crate::model::{push_forward, ModelSpec, ParticleCloud, PerturbationMap};
use crate::solver::{initial_particles, solve_mckean_vlasov, Carry, SolverConfig};

/// Step sizes used when the caller does not choose them.
pub const DEFAULT_EPS: [f64; 3] = [0.2, 0.1, 0.05];

/// Finite-difference estimate of `D^L_phi (P*_{s,t} mu)(f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LionsEstimate {
    /// Richardson extrapolation of the two smallest steps.
    pub estimate: GradientEstimate,
    /// Central differences, one per step in the order given.
    pub slopes: Vec<GradientEstimate>,
    /// `|estimate - slope at the smallest step|`.
    pub residual: f64,
    /// The slope sequence changes direction by more than its noise.
    pub unreliable: bool,
}

fn check_eps(eps: &[f64]) -> Result<()> {
    let ok = eps.len() >= 2
        && eps.iter().all(|e| *e > 0.0 && e.is_finite())
        && eps.windows(2).all(|w| w[1] < w[0]);
    if !ok {
        return Err(Error::InvalidParameter {
            name: "eps_list".into(),
            reason: "need at least two positive, strictly decreasing steps".into(),
        });
    }
    Ok(())
}

/// Per-particle terminal values of `f` after perturbing `base` by `eps phi`.
fn terminal_values(
    model: &ModelSpec,
    base: &ParticleCloud,
    phi: &PerturbationMap,
    eps: f64,
    f: &TestFunction,
    s: f64,
    t: f64,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let start = push_forward(base, phi, eps)?;
    let flow = solve_mckean_vlasov(model, &start, s, t, cfg)?;
    Ok(flow.terminal().iter().map(|(p, _)| f.eval(p)).collect())
}

/// Central differences of `eps -> P*_{s,t}(mu o (Id + eps phi)^{-1})(f)` at every
/// step of `eps_list`, extrapolated to zero from the two smallest.
///
/// All runs share the seed, so particle `i` sees the same noise at every
/// step size, and the per-particle differences give the standard errors.
pub fn lions_derivative_fd(
    model: &ModelSpec,
    init: &ParticleCloud,
    phi: &PerturbationMap,
    f: &TestFunction,
    s: f64,
    t: f64,
    eps_list: &[f64],
    cfg: &SolverConfig,
) -> Result<LionsEstimate> {
    cfg.validate()?;
    check_eps(eps_list)?;
    if init.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: init.dim() });
    }
    let base = initial_particles(init, cfg.n_particles, cfg.seed)?;
    let weights = base.weights().to_vec();
    let mut diffs: Vec<Vec<f64>> = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let up = terminal_values(model, &base, phi, eps, f, s, t, cfg)?;
        let dn = terminal_values(model, &base, phi, -eps, f, s, t, cfg)?;
        diffs.push(up.iter().zip(&dn).map(|(a, b)| (a - b) / (2.0 * eps)).collect());
    }
    let slopes: Vec<GradientEstimate> = diffs.iter().map(|d| GradientEstimate::weighted(d, &weights)).collect();

    let k = eps_list.len();
    let q2 = (eps_list[k - 2] / eps_list[k - 1]).powi(2);
    let extrapolated: Vec<f64> = diffs[k - 1].iter().zip(&diffs[k - 2]).map(|(fine, coarse)| (q2 * fine - coarse) / (q2 - 1.0)).collect();
    let estimate = GradientEstimate::weighted(&extrapolated, &weights);
    let residual = (estimate.value - slopes[k - 1].value).abs();

    // Increments between successive slopes, each with its own noise level.
    let increments: Vec<(f64, f64)> = diffs
        .windows(2)
        .map(|w| {
            let inc: Vec<f64> = w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect();
            let e = GradientEstimate::weighted(&inc, &weights);
            (e.value, 3.0 * e.std_error + 1e-12)
        })
        .collect();
    let unreliable = increments
        .windows(2)
        .any(|w| w[0].0.abs() > w[0].1 && w[1].0.abs() > w[1].1 && w[0].0.signum() != w[1].0.signum());

    Ok(LionsEstimate { estimate, slopes, residual, unreliable })
}

/// Split of the Lions derivative into the spatial transport term
/// `int <grad P^mu_{s,t} f(x), phi(x)> mu(dx)` and the remainder due to the
/// measure argument.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub total: GradientEstimate,
    pub spatial: GradientEstimate,
    /// `total - spatial`, with the joint standard error.
    pub measure: GradientEstimate,
    pub lions: LionsEstimate,
}

/// `total` from [`lions_derivative_fd`], `spatial` from Bismut estimates at the
/// atoms of `init` with directions `phi(x)`, decoupled along the unperturbed
/// flow; `measure` by subtraction.
pub fn derivative_decomposition(
    model: &ModelSpec,
    init: &ParticleCloud,
    phi: &PerturbationMap,
    f: &TestFunction,
    s: f64,
    t: f64,
    eps_list: &[f64],
    cfg: &SolverConfig,
) -> Result<Decomposition> {
    let lions = lions_derivative_fd(model, init, phi, f, s, t, eps_list, cfg)?;
    let flow = solve_mckean_vlasov(model, init, s, t, cfg)?;
    let tau = t - s;
    let spatial = mixture_estimate(
        model,
        &flow,
        init,
        s,
        t,
        cfg,
        Carry::Bismut,
        |x| phi.apply(x).as_slice().to_vec(),
        |x, weight| f.eval(x) * weight / tau,
    )?;
    let total = lions.estimate;
    Ok(Decomposition { total, spatial, measure: total.minus(&spatial), lions })
}
