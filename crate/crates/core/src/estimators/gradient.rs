use crate::error::{Error, Result};
use crate::estimators::stats::{GradientEstimate, Moments};
use crate::estimators::TestFunction;
use crate::model::{MeasureFlow, ModelSpec, ParticleCloud};
use crate::solver::{path_rng, run_path, solve_mckean_vlasov, Carry, SolverConfig, StepGrid};

fn check_point(model: &ModelSpec, what: &str, x: &[f64]) -> Result<()> {
    if x.len() != model.dim() {
        return Err(Error::InvalidParameter {
            name: what.into(),
            reason: format!("expected {} coordinates, got {}", model.dim(), x.len()),
        });
    }
    Ok(())
}

/// Bismut estimate of `grad_v P_{s,t} f(x)` for the SDE decoupled along `flow`.
pub fn bismut_gradient(
    model: &ModelSpec,
    flow: &MeasureFlow,
    x: &[f64],
    v: &[f64],
    f: &TestFunction,
    s: f64,
    t: f64,
    cfg: &SolverConfig,
) -> Result<GradientEstimate> {
    Ok(bismut_gradient_multi(model, flow, x, v, std::slice::from_ref(f), s, t, cfg)?.remove(0))
}

/// Bismut estimates for several test functions on one set of paths.
///
/// Each path contributes `f(X_t) / (t - s) * sum_k <sigma^T (sigma sigma^T)^{-1} v_k, dW_k>`,
/// with `v` the first variation along the same path, evaluated at the left
/// end of every step.
pub fn bismut_gradient_multi(
    model: &ModelSpec,
    flow: &MeasureFlow,
    x: &[f64],
    v: &[f64],
    fs: &[TestFunction],
    s: f64,
    t: f64,
    cfg: &SolverConfig,
) -> Result<Vec<GradientEstimate>> {
    cfg.validate()?;
    check_point(model, "x", x)?;
    check_point(model, "v", v)?;
    let grid = StepGrid::new(flow, s, t, cfg.dt)?;
    let tau = t - s;
    let mut acc = vec![Moments::default(); fs.len()];
    for i in 0..cfg.n_mc {
        let run = run_path(model, flow, &grid, x, v, Carry::Bismut, &mut path_rng(cfg.seed, i))?;
        let w = run.weight / tau;
        for (a, f) in acc.iter_mut().zip(fs) {
            a.push(f.eval(&run.x) * w);
        }
    }
    Ok(acc.iter().map(Moments::finish).collect())
}

/// Plain Monte Carlo estimate of `P_{s,t} f(x)` for the decoupled SDE.
pub fn decoupled_expectation(
    model: &ModelSpec,
    flow: &MeasureFlow,
    x: &[f64],
    f: &TestFunction,
    s: f64,
    t: f64,
    cfg: &SolverConfig,
) -> Result<GradientEstimate> {
    cfg.validate()?;
    check_point(model, "x", x)?;
    let grid = StepGrid::new(flow, s, t, cfg.dt)?;
    let zero = vec![0.0; x.len()];
    let mut acc = Moments::default();
    for i in 0..cfg.n_mc {
        let run = run_path(model, flow, &grid, x, &zero, Carry::State, &mut path_rng(cfg.seed, i))?;
        acc.push(f.eval(&run.x));
    }
    Ok(acc.finish())
}

/// Central difference `(P f(x + h v) - P f(x - h v)) / 2h` with common random
/// numbers: path `i` uses the same noise at both start points.
pub fn fd_gradient(
    model: &ModelSpec,
    flow: &MeasureFlow,
    x: &[f64],
    v: &[f64],
    f: &TestFunction,
    s: f64,
    t: f64,
    h: f64,
    cfg: &SolverConfig,
) -> Result<GradientEstimate> {
    cfg.validate()?;
    check_point(model, "x", x)?;
    check_point(model, "v", v)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter { name: "h".into(), reason: "h > 0".into() });
    }
    let grid = StepGrid::new(flow, s, t, cfg.dt)?;
    let plus: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
    let minus: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - h * b).collect();
    let zero = vec![0.0; x.len()];
    let mut acc = Moments::default();
    for i in 0..cfg.n_mc {
        let up = run_path(model, flow, &grid, &plus, &zero, Carry::State, &mut path_rng(cfg.seed, i))?;
        let dn = run_path(model, flow, &grid, &minus, &zero, Carry::State, &mut path_rng(cfg.seed, i))?;
        acc.push((f.eval(&up.x) - f.eval(&dn.x)) / (2.0 * h));
    }
    Ok(acc.finish())
}

/// Paths per atom when `n_mc` paths are spread over a weighted cloud.
fn allocation(atoms: &ParticleCloud, n_mc: usize) -> Vec<usize> {
    atoms.weights().iter().map(|w| ((n_mc as f64 * w - 1e-9).ceil() as usize).max(2)).collect()
}

/// `sum_i w_i E[sample(path from x_i)]` over the atoms of `init`, with paths
/// spread in proportion to the weights and per-path streams numbered
/// consecutively across atoms.
pub(crate) fn mixture_estimate<V, S>(
    model: &ModelSpec,
    flow: &MeasureFlow,
    init: &ParticleCloud,
    s: f64,
    t: f64,
    cfg: &SolverConfig,
    carry: Carry,
    direction: V,
    sample: S,
) -> Result<GradientEstimate>
where
    V: Fn(&[f64]) -> Vec<f64>,
    S: Fn(&[f64], f64) -> f64,
{
    cfg.validate()?;
    if init.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: init.dim() });
    }
    let grid = StepGrid::new(flow, s, t, cfg.dt)?;
    let atoms = init.merged();
    let counts = allocation(&atoms, cfg.n_mc);
    let (mut value, mut var, mut stream, mut total) = (0.0, 0.0, 0usize, 0usize);
    for ((x, w), &n) in atoms.iter().zip(&counts) {
        let v = direction(x);
        let mut acc = Moments::default();
        for _ in 0..n {
            let run = run_path(model, flow, &grid, x, &v, carry, &mut path_rng(cfg.seed, stream))?;
            acc.push(sample(&run.x, run.weight));
            stream += 1;
        }
        value += w * acc.mean();
        var += w * w * acc.var_of_mean();
        total += n;
    }
    Ok(GradientEstimate { value, std_error: var.sqrt(), n_mc: total })
}

/// Two estimates of `(P*_{s,t} mu)(f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemigroupEval {
    /// Average of `f` over the terminal particle cloud.
    pub direct: GradientEstimate,
    /// `mu`-average of decoupled Monte Carlo estimates of `P^mu_{s,t} f(x)`.
    pub decoupled: GradientEstimate,
}

impl SemigroupEval {
    pub fn joint_se(&self) -> f64 {
        self.direct.joint_se(&self.decoupled)
    }
}

/// Solves the particle system from `init` and evaluates both sides of the
/// Markov identity `P*_{s,t} mu (f) = mu(P^mu_{s,t} f)`.
pub fn semigroup_eval(
    model: &ModelSpec,
    init: &ParticleCloud,
    f: &TestFunction,
    s: f64,
    t: f64,
    cfg: &SolverConfig,
) -> Result<SemigroupEval> {
    let flow = solve_mckean_vlasov(model, init, s, t, cfg)?;
    semigroup_eval_on(model, &flow, f, cfg)
}

/// [`semigroup_eval`] on an already solved flow, over its whole range.
pub fn semigroup_eval_on(model: &ModelSpec, flow: &MeasureFlow, f: &TestFunction, cfg: &SolverConfig) -> Result<SemigroupEval> {
    let terminal = flow.terminal();
    let vals: Vec<f64> = terminal.iter().map(|(p, _)| f.eval(p)).collect();
    let direct = GradientEstimate::weighted(&vals, terminal.weights());
    let zero = vec![0.0; model.dim()];
    let decoupled = mixture_estimate(
        model,
        flow,
        flow.initial(),
        flow.start(),
        flow.end(),
        cfg,
        Carry::State,
        |_| zero.clone(),
        |x, _| f.eval(x),
    )?;
    Ok(SemigroupEval { direct, decoupled })
}
