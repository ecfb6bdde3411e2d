//! Particle simulation: moments against their ODEs and the flow property.

use crate::error::Result;
use crate::estimators::w2_distance;
use crate::harness::experiments::Ctx;
use crate::harness::oracle::linear_moments;
use crate::harness::report::{num, nums, Table};
use crate::model::{MeasureFlow, ParticleCloud};
use crate::solver::{solve_mckean_vlasov, SolverConfig};

pub(crate) const MEAN_Z_TOL: f64 = 3.0;
pub(crate) const VARIANCE_REL_TOL: f64 = 0.05;

/// First-coordinate marginal.
fn marginal(c: &ParticleCloud) -> Result<ParticleCloud> {
    let xs: Vec<f64> = c.iter().map(|(p, _)| p[0]).collect();
    ParticleCloud::new(1, xs, c.weights().to_vec())
}

/// Mean over axes of the per-axis variance.
fn axis_variance(c: &ParticleCloud) -> f64 {
    let cov = c.covariance();
    cov.diagonal().mean()
}

/// `W2` budget of the flow-property comparison for `n` particles.
pub(crate) fn flow_tolerance(sd: f64, n: usize, dt: f64) -> f64 {
    let n = n as f64;
    4.0 * sd * (n.ln() / n).sqrt() + dt
}

pub(crate) fn run(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let (s, t) = (ctx.s(), ctx.t());
    let span = t - s;
    let d = cfg.dim();
    let moments = linear_moments(&cfg.model.name, &cfg.model.params);
    let k = cfg.simulate.checkpoints;
    let checkpoints: Vec<f64> = (0..=k).map(|i| if i == k { t } else { s + span * i as f64 / k as f64 }).collect();
    let largest = *cfg.simulate.sizes.iter().max().expect("validated non-empty");

    let mut mtab = Table::new("moments", &["n", "time", "mean_1", "variance", "ode_mean", "ode_variance", "variance_rel_error"]);
    let mut ftab = Table::new("flow_property", &["n", "split_time", "w2", "tolerance"]);
    let mut kept: Option<MeasureFlow> = None;
    for &n in &cfg.simulate.sizes {
        let scfg = SolverConfig { n_particles: n, ..cfg.solver.clone() };
        let init = ctx.init_cloud(n)?;
        let flow = solve_mckean_vlasov(&ctx.model, &init, s, t, &scfg)?;
        let start = flow.initial();
        let (m0, v0) = (start.mean()[0], axis_variance(start));

        let mut worst = 0.0f64;
        for &u in &checkpoints {
            let c = flow.cloud_at(u).expect("checkpoint inside the flow");
            let (m, v) = (c.mean()[0], axis_variance(c));
            let (om, ov, rel) = match moments {
                Some(lm) => {
                    let (om, ov) = lm.integrate(m0, v0, s, u, scfg.dt / 10.0);
                    let rel = if ov > 0.0 { (v - ov).abs() / ov } else { (v - ov).abs() };
                    if u > s {
                        worst = worst.max(rel);
                    }
                    (om, ov, rel)
                }
                None => (f64::NAN, f64::NAN, f64::NAN),
            };
            mtab.push(vec![n.to_string(), num(u), num(m), num(v), num(om), num(ov), num(rel)]);
        }
        if let Some(lm) = moments {
            let (pred, _) = lm.integrate(m0, v0, s, t, scfg.dt / 10.0);
            let se = lm.mean_noise_var(span, n).sqrt();
            let mt = flow.terminal().mean()[0];
            let name = if lm.a == 0.0 && lm.c == 0.0 { "mean_conservation" } else { "mean_ode" };
            ctx.check(
                format!("{name}_n{n}"),
                (mt - pred).abs() <= MEAN_Z_TOL * se,
                format!("terminal mean {} vs {} with standard error {}", num(mt), num(pred), num(se)),
            );
            ctx.record(format!("terminal_mean_n{n}"), mt, se);
            if n == largest {
                ctx.check(
                    "variance_ode",
                    worst <= VARIANCE_REL_TOL,
                    format!("max relative variance error {} over {k} checkpoints at n = {n}", num(worst)),
                );
                ctx.record("variance_max_rel_error", worst, 0.0);
            }
        }

        // P*_{s,t} against P*_{r,t} P*_{s,r}, restarted with fresh noise.
        let r = flow.times()[flow.len() / 2];
        let mid = flow.cloud_at(r).expect("node of the flow").clone();
        let restarted = solve_mckean_vlasov(&ctx.model, &mid, r, t, &scfg.with_seed(scfg.seed.wrapping_add(1)))?;
        let a = marginal(flow.terminal())?;
        let b = marginal(restarted.terminal())?;
        let w2 = w2_distance(&a, &b)?;
        let tol = flow_tolerance(a.covariance()[(0, 0)].sqrt(), n, scfg.dt);
        ftab.push(vec![n.to_string(), num(r), num(w2), num(tol)]);
        ctx.check(
            format!("flow_property_n{n}"),
            w2 <= tol,
            format!("W2 of first marginals {} within {}", num(w2), num(tol)),
        );
        ctx.record(format!("flow_property_w2_n{n}"), w2, 0.0);
        if n == largest {
            kept = Some(flow);
        }
    }

    let flow = kept.expect("largest size was run");
    let mut header: Vec<String> = vec!["time".into()];
    header.extend((1..=d).map(|k| format!("x_{k}")));
    header.push("weight".into());
    let mut table = Table { name: "flow".into(), header, rows: Vec::new() };
    for &u in &checkpoints {
        let c = flow.cloud_at(u).expect("checkpoint inside the flow");
        for (p, w) in c.iter() {
            let mut row = vec![num(u)];
            row.extend(nums(p));
            row.push(num(w));
            table.push(row);
        }
    }
    ctx.tables.push(table);
    ctx.tables.push(mtab);
    ctx.tables.push(ftab);
    Ok(())
}
