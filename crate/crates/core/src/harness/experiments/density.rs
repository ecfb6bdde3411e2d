//! Parametrix density profile, with a closed-form comparison where one exists.

use crate::error::Result;
use crate::harness::experiments::{along_e1, Ctx};
use crate::harness::oracle::gaussian_transition;
use crate::harness::report::{num, nums, Table};
use crate::kernels::{ParametrixEngine, QuadratureGrid};

pub(crate) const DENSITY_REL_TOL: f64 = 1e-2;
/// Largest admissible ratio of successive level sups.
pub(crate) const DECAY_RATIO: f64 = 0.5;

pub(crate) fn run(ctx: &mut Ctx) -> Result<()> {
    let (s, t) = (ctx.s(), ctx.t());
    let cfg = ctx.cfg;
    let d = cfg.dim();
    let init = ctx.init_cloud(cfg.solver.n_particles)?;
    let x: Vec<f64> = match &cfg.density.x {
        Some(x) => x.clone(),
        None => init.mean().iter().copied().collect(),
    };
    let flow = ctx.flow(&init, s, t, &cfg.solver)?;
    let g = &cfg.grid;
    let grid = match (&g.lo, &g.hi) {
        (Some(lo), Some(hi)) => QuadratureGrid::new(lo.clone(), hi.clone(), g.n_space, g.n_time, g.order)?,
        _ => QuadratureGrid::auto(&x, &x, t - s, ctx.model.bound(t), g.n_space, g.n_time, g.order)?,
    };
    let model = ctx.model.clone();
    let engine = ParametrixEngine::new(&model, &flow, grid, s, t)?;
    let profile = engine.profile(&x)?;

    let mut header: Vec<String> = (1..=d).map(|k| format!("z_{k}")).collect();
    header.push("density".into());
    header.extend((0..profile.terms.len()).map(|m| format!("term_{m}")));
    header.push("last_term_magnitude".into());
    let mut table = Table { name: "density_profile".into(), header, rows: Vec::new() };
    for i in 0..profile.density.len() {
        let mut row = nums(profile.point(i));
        row.push(num(profile.density[i]));
        row.extend(profile.terms.iter().map(|v| num(v[i])));
        row.push(num(profile.last_term(i)));
        table.push(row);
    }
    ctx.tables.push(table);

    let mut levels = Table::new("density_levels", &["level", "sup", "ratio"]);
    let mut worst_ratio = 0.0f64;
    for (m, sup) in profile.level_sup.iter().enumerate() {
        let ratio = if m == 0 { f64::NAN } else { sup / profile.level_sup[m - 1] };
        if m > 0 {
            worst_ratio = worst_ratio.max(ratio);
        }
        levels.push(vec![m.to_string(), num(*sup), num(ratio)]);
    }
    ctx.tables.push(levels);
    if profile.level_sup.len() > 1 {
        ctx.check(
            "series_decay",
            worst_ratio <= DECAY_RATIO && !profile.nonconvergent,
            format!("largest ratio of successive level sups = {}", num(worst_ratio)),
        );
        ctx.record("largest_level_ratio", worst_ratio, 0.0);
    }

    let Some(law) = gaussian_transition(&cfg.model.name, &cfg.model.params, &x, t - s) else {
        return Ok(());
    };
    let mut header: Vec<String> = (1..=d).map(|k| format!("z_{k}")).collect();
    header.extend(["parametrix", "exact", "rel_error", "last_term_magnitude"].map(String::from));
    let mut table = Table { name: "density_oracle".into(), header, rows: Vec::new() };
    let n = cfg.density.probes;
    let half = cfg.density.probe_sd * law.sd;
    let mut worst = 0.0f64;
    for i in 0..n {
        let z = along_e1(&law.mean, law.mean[0] - half + 2.0 * half * i as f64 / (n - 1) as f64);
        let r = engine.density_at(&x, &z)?;
        let exact = law.pdf(&z);
        let rel = (r.density - exact).abs() / exact;
        worst = worst.max(rel);
        let mut row = nums(&z);
        row.extend([num(r.density), num(exact), num(rel), num(r.last_term)]);
        table.push(row);
    }
    ctx.tables.push(table);
    ctx.check(
        "closed_form_density",
        worst <= DENSITY_REL_TOL,
        format!("max relative error {} over {n} probes", num(worst)),
    );
    ctx.record("max_rel_error", worst, 0.0);
    Ok(())
}
