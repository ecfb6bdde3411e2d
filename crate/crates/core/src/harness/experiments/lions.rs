//! Lions derivatives: the scaling probe, the spatial/measure decomposition and
//! the second-moment bound of the variation process.

use crate::error::Result;
use crate::estimators::{derivative_decomposition, lions_derivative_fd, GradientEstimate, TestFunction};
use crate::harness::config::RunConfig;
use crate::harness::experiments::{e1, spread, Ctx};
use crate::harness::report::{num, Table};
use crate::model::PerturbationMap;
use crate::solver::{solve_mckean_vlasov, stream_rng, variation_meanfield, SolverConfig, Substream};

pub(crate) const Z_TOL: f64 = 3.0;
pub(crate) const SCALING_SPREAD: f64 = 2.0;
/// Stream offset of the fields used in the variation check.
const VARIATION_STREAM: u64 = 1 << 20;

fn random_phi(ctx: &Ctx, index: u64) -> PerturbationMap {
    PerturbationMap::random_smooth(ctx.cfg.dim(), &mut stream_rng(ctx.solver().seed, Substream::Batch, index))
}

pub(crate) fn run(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let lc = &cfg.lions;
    let (s, t) = (ctx.s(), ctx.t());
    let d = cfg.dim();
    let init = ctx.init_cloud(cfg.solver.n_particles)?;

    // Scaling probe over phi = e1 and random smooth fields; skipped without
    // test functions.
    let fs = RunConfig::test_functions(&lc.functions, "lions.functions")?;
    if !fs.is_empty() {
        let mut phis = vec![("e1".to_string(), PerturbationMap::constant(e1(d)))];
        phis.extend((0..lc.random_phi).map(|k| (format!("random{k}"), random_phi(ctx, k as u64))));
        let mut table = Table::new(
            "lions_scaling",
            &["horizon", "phi", "function", "estimate", "std_error", "phi_l2", "scaled", "residual", "unreliable"],
        );
        let mut sups = Vec::new();
        for &h in &lc.horizons {
            let mut sup = 0.0f64;
            for (name, phi) in &phis {
                let norm = phi.l2_norm(&init);
                for f in fs.iter().filter(|f| f.is_bounded()) {
                    let l = lions_derivative_fd(&ctx.model, &init, phi, f, s, s + h, &lc.eps, &cfg.solver)?;
                    let scaled = l.estimate.value.abs() * h.sqrt() / (f.sup_norm() * norm);
                    if scaled.is_finite() {
                        sup = sup.max(scaled);
                    }
                    ctx.record_estimate(format!("lions_h{}_{name}_{f}", num(h)), &l.estimate);
                    table.push(vec![
                        num(h),
                        name.clone(),
                        f.to_string(),
                        num(l.estimate.value),
                        num(l.estimate.std_error),
                        num(norm),
                        num(scaled),
                        num(l.residual),
                        l.unreliable.to_string(),
                    ]);
                }
            }
            sups.push(sup);
        }
        ctx.tables.push(table);
        let sp = spread(&sups);
        let fitted = sups.iter().copied().fold(0.0, f64::max);
        ctx.check(
            "lions_scaling",
            sp < SCALING_SPREAD,
            format!("fitted constant {} with max/min {} over {} horizons", num(fitted), num(sp), sups.len()),
        );
        ctx.record("lions_scaling_constant", fitted, 0.0);
    }

    // Decomposition for f = x_1 and phi = e1.
    let phi = PerturbationMap::constant(e1(d));
    let dec = derivative_decomposition(&ctx.model, &init, &phi, &TestFunction::Identity, s, t, &lc.eps, &cfg.solver)?;
    let analytic: Option<[f64; 3]> = if cfg.model.name == "meanfield_ou" {
        let decay = (-cfg.model.params.alpha * (t - s)).exp();
        Some([1.0, decay, 1.0 - decay])
    } else {
        None
    };
    let measure_free = ctx.model.traits().measure_free;
    let mut table = Table::new("lions_decomposition", &["component", "value", "std_error", "analytic"]);
    let parts: [(&str, &GradientEstimate); 3] = [("total", &dec.total), ("spatial", &dec.spatial), ("measure", &dec.measure)];
    for (i, (name, e)) in parts.iter().enumerate() {
        let target = match analytic {
            Some(a) => Some(a[i]),
            None if measure_free && *name == "measure" => Some(0.0),
            None => None,
        };
        table.push(vec![name.to_string(), num(e.value), num(e.std_error), target.map_or(String::new(), num)]);
        ctx.record_estimate(format!("decomposition_{name}"), e);
        if let Some(target) = target {
            ctx.check(
                format!("decomposition_{name}"),
                e.agrees_with(target, Z_TOL),
                format!("{} +- {} against {}", num(e.value), num(e.std_error), num(target)),
            );
        }
    }
    ctx.tables.push(table);

    // E|v|^2 <= mu(|phi|^2) exp(8 (t - s) K_t) for the particle variation.
    if lc.variation_phi > 0 {
        let vcfg = SolverConfig { n_particles: lc.variation_particles, ..cfg.solver.clone() };
        let vinit = ctx.init_cloud(lc.variation_particles)?;
        let flow = solve_mckean_vlasov(&ctx.model, &vinit, s, t, &vcfg)?;
        let growth = (8.0 * (t - s) * ctx.model.bound(t)).exp();
        let mut table = Table::new("lions_variation", &["phi", "mean_square", "phi_l2_sq", "bound", "ratio"]);
        let mut worst = 0.0f64;
        for k in 0..lc.variation_phi {
            let phi = random_phi(ctx, VARIATION_STREAM + k as u64);
            let ms = variation_meanfield(&ctx.model, &flow, &phi, s, t, &vcfg)?.mean_square();
            let norm_sq = phi.l2_norm(flow.initial()).powi(2);
            let bound = norm_sq * growth;
            worst = worst.max(ms / bound);
            table.push(vec![format!("random{k}"), num(ms), num(norm_sq), num(bound), num(ms / bound)]);
            ctx.record(format!("variation_mean_square_{k}"), ms, 0.0);
        }
        ctx.tables.push(table);
        ctx.check(
            "variation_bound",
            worst <= 1.0,
            format!("largest E|v|^2 / bound = {} over {} fields", num(worst), lc.variation_phi),
        );
    }
    Ok(())
}
