//! Kernel identities: normalisation, Chapman-Kolmogorov, the beta-product
//! identity and the degeneracy of the series for constant coefficients.

use crate::error::Result;
use crate::harness::experiments::{along_e1, Ctx};
use crate::harness::report::{num, Table};
use crate::kernels::{
    beta_product_identity, frozen_density, frozen_params, reference_kernel, FrozenParams, ParametrixEngine, QuadratureGrid,
    ReferenceKernel,
};
use crate::model::{builtin_model, MeasureFlow, ModelSpec};
use crate::solver::{solve_mckean_vlasov, SolverConfig};

pub(crate) const KERNEL_TOL: f64 = 1e-6;
pub(crate) const BETA_TOL: f64 = 1e-12;
pub(crate) const BETA_MAX_M: usize = 50;
pub(crate) const DEGENERACY_TOL: f64 = 1e-14;
/// Largest particle count and number of steps of the flow that supplies the
/// frozen coefficients.
const FLOW_PARTICLES: usize = 500;
const FLOW_STEPS: f64 = 20.0;

/// Trapezoid integral of `f` over the box `center +- half` per axis.
fn integrate(center: &[f64], half: &[f64], f: impl Fn(&[f64]) -> f64) -> Result<f64> {
    let n = if center.len() == 1 { 401 } else { 201 };
    let lo = center.iter().zip(half).map(|(c, h)| c - h).collect();
    let hi = center.iter().zip(half).map(|(c, h)| c + h).collect();
    let g = QuadratureGrid::new(lo, hi, n, 1, 0)?;
    let d = center.len();
    Ok(g.points().chunks_exact(d).zip(g.weights()).map(|(p, w)| w * f(p)).sum())
}

fn frozen_sd(fp: &FrozenParams) -> Vec<f64> {
    (0..fp.dim()).map(|k| fp.covariance[(k, k)].sqrt()).collect()
}

struct Rows {
    table: Table,
}

impl Rows {
    fn push(&mut self, identity: &str, case: String, lhs: f64, rhs: f64) -> f64 {
        let err = (lhs - rhs).abs();
        self.table.push(vec![identity.into(), case, num(lhs), num(rhs), num(err)]);
        err
    }
}

fn coarse_flow(ctx: &Ctx) -> Result<MeasureFlow> {
    let (s, t) = (ctx.s(), ctx.t());
    let init = ctx.init_cloud(FLOW_PARTICLES)?;
    if ctx.model.traits().measure_free {
        return MeasureFlow::constant(init, s, t, FLOW_STEPS as usize);
    }
    let cfg = SolverConfig {
        n_particles: ctx.solver().n_particles.min(FLOW_PARTICLES),
        dt: ctx.solver().dt.max((t - s) / FLOW_STEPS),
        ..ctx.solver().clone()
    };
    solve_mckean_vlasov(&ctx.model, &init, s, t, &cfg)
}

pub(crate) fn run(ctx: &mut Ctx) -> Result<()> {
    let (s, t) = (ctx.s(), ctx.t());
    let span = t - s;
    let d = ctx.cfg.dim();
    let mut rows = Rows { table: Table::new("identities", &["identity", "case", "lhs", "rhs", "abs_error"]) };

    // Reference kernel.
    let rk = ReferenceKernel::new(span, ctx.model.bound(t))?;
    let origin = vec![0.0; d];
    let mut worst = 0.0f64;
    for frac in [0.1, 0.5, 1.0] {
        let u = frac * span;
        let sd = rk.variance(u).sqrt();
        let mass = integrate(&origin, &vec![10.0 * sd; d], |y| reference_kernel(&rk, u, y).unwrap())?;
        worst = worst.max(rows.push("reference_normalisation", format!("u={}", num(u)), mass, 1.0));
    }
    ctx.check("reference_normalisation", worst <= KERNEL_TOL, format!("max |mass - 1| = {}", num(worst)));

    let (u1, u2) = (0.3 * span, 0.45 * span);
    let (v1, v2) = (rk.variance(u1), rk.variance(u2));
    let sd12 = (v1 + v2).sqrt();
    let sd_prod = (v1 * v2 / (v1 + v2)).sqrt();
    let mut worst = 0.0f64;
    for k in [0.0, 1.0, 2.5] {
        let y = along_e1(&origin, k * sd12);
        let center: Vec<f64> = y.iter().map(|v| v * v2 / (v1 + v2)).collect();
        let conv = integrate(&center, &vec![10.0 * sd_prod; d], |w| {
            let diff: Vec<f64> = y.iter().zip(w).map(|(a, b)| a - b).collect();
            reference_kernel(&rk, u1, &diff).unwrap() * reference_kernel(&rk, u2, w).unwrap()
        })?;
        let direct = reference_kernel(&rk, u1 + u2, &y)?;
        worst = worst.max(rows.push("reference_chapman_kolmogorov", format!("y1={}", num(y[0])), conv, direct));
    }
    ctx.check("reference_chapman_kolmogorov", worst <= KERNEL_TOL, format!("max error = {}", num(worst)));

    // Frozen kernels along the model's flow, frozen at the initial mean.
    let flow = coarse_flow(ctx)?;
    let x: Vec<f64> = flow.initial().mean().iter().copied().collect();
    let z = x.clone();
    let u = flow.times()[flow.len() / 2];
    let mut worst = 0.0f64;
    for (a, b) in [(s, t), (s, u), (u, t)] {
        let fp = frozen_params(&flow, &ctx.model, s, a, b, &z)?;
        let center: Vec<f64> = x.iter().zip(fp.mean_shift.iter()).map(|(p, m)| p + m).collect();
        let half: Vec<f64> = frozen_sd(&fp).iter().map(|v| 10.0 * v).collect();
        let mass = integrate(&center, &half, |y| frozen_density(&fp, &x, y))?;
        worst = worst.max(rows.push("frozen_normalisation", format!("[{},{}]", num(a), num(b)), mass, 1.0));
    }
    ctx.check("frozen_normalisation", worst <= KERNEL_TOL, format!("max |mass - 1| = {}", num(worst)));

    let p1 = frozen_params(&flow, &ctx.model, s, s, u, &z)?;
    let p2 = frozen_params(&flow, &ctx.model, s, u, t, &z)?;
    let p12 = frozen_params(&flow, &ctx.model, s, s, t, &z)?;
    let center: Vec<f64> = x.iter().zip(p1.mean_shift.iter()).map(|(p, m)| p + m).collect();
    let half: Vec<f64> = frozen_sd(&p1).iter().map(|v| 10.0 * v).collect();
    let sd = frozen_sd(&p12)[0];
    let mut worst = 0.0f64;
    for k in [0.0, 1.0, -2.0] {
        let w = along_e1(&x, x[0] + p12.mean_shift[0] + k * sd);
        let conv = integrate(&center, &half, |y| frozen_density(&p1, &x, y) * frozen_density(&p2, y, &w))?;
        let direct = frozen_density(&p12, &x, &w);
        worst = worst.max(rows.push("frozen_chapman_kolmogorov", format!("w1={}", num(w[0])), conv, direct));
    }
    ctx.check(
        "frozen_chapman_kolmogorov",
        worst <= KERNEL_TOL,
        format!("max error = {} with the split at flow node {}", num(worst), num(u)),
    );

    // Beta-function product.
    let mut worst = 0.0f64;
    for m in 1..=BETA_MAX_M {
        let (lhs, rhs) = beta_product_identity(m);
        let rel = (lhs - rhs).abs() / rhs.abs();
        rows.push("beta_product", format!("m={m}"), lhs, rhs);
        worst = worst.max(rel);
    }
    ctx.check("beta_product", worst <= BETA_TOL, format!("max relative error = {} for m <= {BETA_MAX_M}", num(worst)));
    ctx.record("beta_product_max_rel_error", worst, 0.0);

    // Constant coefficients: every correction term vanishes.
    let cmodel: ModelSpec = builtin_model("constant", &ctx.cfg.model.params)?;
    let cflow = MeasureFlow::constant(flow.initial().clone(), s, t, 1)?;
    let g = &ctx.cfg.grid;
    let n_space = if d == 1 { g.n_space } else { g.n_space.min(41) };
    let grid = QuadratureGrid::auto(&x, &x, span, cmodel.bound(t), n_space, g.n_time, g.order.max(1))?;
    let engine = ParametrixEngine::new(&cmodel, &cflow, grid, s, t)?;
    let profile = engine.profile(&x)?;
    let fp = frozen_params(&cflow, &cmodel, s, s, t, &x)?;
    let mut worst = 0.0f64;
    for i in 0..profile.density.len() {
        let exact = frozen_density(&fp, &x, profile.point(i));
        worst = worst.max((profile.density[i] - exact).abs());
    }
    let correction = profile.level_sup[1..].iter().copied().fold(0.0, f64::max);
    rows.push("constant_degeneracy", "grid_max".into(), worst, 0.0);
    rows.push("constant_degeneracy", "correction_sup".into(), correction, 0.0);
    ctx.check(
        "constant_degeneracy",
        worst <= DEGENERACY_TOL && correction <= DEGENERACY_TOL,
        format!("max |series - frozen| = {}, correction sup = {}", num(worst), num(correction)),
    );

    ctx.tables.push(rows.table);
    Ok(())
}
