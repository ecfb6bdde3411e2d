//! Bismut gradients against an analytic or finite-difference oracle, and the
//! `sqrt(t - s)` scaling of their sup.

use crate::error::Result;
use crate::estimators::{bismut_gradient_multi, fd_gradient, GradientEstimate};
use crate::harness::config::RunConfig;
use crate::harness::experiments::{along_e1, e1, spread, Ctx};
use crate::harness::oracle::gaussian_transition;
use crate::harness::report::{num, Table};

/// Multiple of the joint standard error allowed between estimate and oracle.
pub(crate) const Z_TOL: f64 = 3.0;
/// Largest admissible `max / min` of the scaled sup across horizons.
pub(crate) const SCALING_SPREAD: f64 = 2.0;

pub(crate) fn run(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let gc = &cfg.gradient;
    let (s, t) = (ctx.s(), ctx.t());
    let d = cfg.dim();
    let main = t - s;
    let probes = gc.probes.clone().unwrap_or_else(|| vec![vec![0.0; d], along_e1(&vec![0.0; d], 0.5)]);
    let v = gc.direction.clone().unwrap_or_else(|| e1(d));
    let fs = RunConfig::test_functions(&gc.functions, "gradient.functions")?;

    let mut horizons = gc.horizons.clone();
    if !horizons.iter().any(|h| (h - main).abs() <= 1e-12 * main) {
        horizons.push(main);
    }
    horizons.sort_by(f64::total_cmp);
    let h_max = horizons[horizons.len() - 1];
    let init = ctx.init_cloud(cfg.solver.n_particles)?;
    let flow = ctx.flow(&init, s, s + h_max, &cfg.solver)?;

    let mut table = Table::new(
        "gradient",
        &["horizon", "probe", "x_1", "function", "bismut", "bismut_se", "oracle", "oracle_se", "oracle_kind", "z_score"],
    );
    let mut scaling = Table::new("gradient_scaling", &["horizon", "sup_scaled"]);
    let mut sups = Vec::new();
    for &h in &horizons {
        let is_main = (h - main).abs() <= 1e-12 * main;
        let in_list = gc.horizons.iter().any(|g| (g - h).abs() <= 1e-12 * h);
        let mut sup = 0.0f64;
        for (pi, x) in probes.iter().enumerate() {
            let ests = bismut_gradient_multi(&ctx.model, &flow, x, &v, &fs, s, s + h, &cfg.solver)?;
            let law = gaussian_transition(&cfg.model.name, &cfg.model.params, x, h);
            for (f, est) in fs.iter().zip(&ests) {
                if f.is_bounded() {
                    sup = sup.max(est.value.abs() * h.sqrt() / f.sup_norm());
                }
                let (oracle, kind) = match &law {
                    Some(law) => (Some(GradientEstimate::exact(law.gradient(f, &v))), "analytic"),
                    None if is_main => (Some(fd_gradient(&ctx.model, &flow, x, &v, f, s, s + h, gc.fd_h, &cfg.solver)?), "fd"),
                    None => (None, "none"),
                };
                let quantity = format!("grad_h{}_p{pi}_{f}", num(h));
                ctx.record_estimate(quantity.clone(), est);
                let mut row = vec![num(h), pi.to_string(), num(x[0]), f.to_string(), num(est.value), num(est.std_error)];
                match oracle {
                    Some(o) => {
                        let diff = est.minus(&o);
                        let z = diff.value / diff.std_error;
                        row.extend([num(o.value), num(o.std_error), kind.into(), num(z)]);
                        if kind == "fd" {
                            ctx.record_estimate(format!("{quantity}_fd"), &o);
                        }
                        if is_main {
                            ctx.check(
                                format!("bismut_vs_{kind}_p{pi}_{f}"),
                                diff.agrees_with(0.0, Z_TOL),
                                format!("bismut {} +- {}, oracle {} +- {}", num(est.value), num(est.std_error), num(o.value), num(o.std_error)),
                            );
                        }
                    }
                    None => row.extend(["".into(), "".into(), kind.into(), "".into()]),
                }
                table.push(row);
            }
        }
        if in_list {
            scaling.push(vec![num(h), num(sup)]);
            sups.push(sup);
        }
    }
    ctx.tables.push(table);
    ctx.tables.push(scaling);
    let sp = spread(&sups);
    let fitted = sups.iter().copied().fold(0.0, f64::max);
    ctx.check(
        "gradient_scaling",
        sp < SCALING_SPREAD,
        format!("fitted constant {} with max/min {} over {} horizons", num(fitted), num(sp), sups.len()),
    );
    ctx.record("gradient_scaling_constant", fitted, 0.0);
    ctx.record("gradient_scaling_spread", sp, 0.0);
    Ok(())
}
