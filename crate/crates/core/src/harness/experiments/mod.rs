//! The experiment registry.

mod bounds;
mod density;
mod gradient;
mod identities;
mod lions;
mod simulate;

use std::time::Instant;

use crate::error::{Error, Result};
use crate::estimators::{GradientEstimate, ResultRecord};
use crate::harness::config::{Experiment, RunConfig};
use crate::harness::report::{Check, ExperimentReport, Table};
use crate::model::{MeasureFlow, ModelSpec, ParticleCloud};
use crate::solver::{solve_mckean_vlasov, SolverConfig};

/// Runs the experiment named in `cfg`.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentReport> {
    let exp = cfg.experiment.ok_or_else(|| Error::Config {
        line: None,
        field: "experiment".into(),
        message: "no experiment selected".into(),
    })?;
    run_named(cfg, exp)
}

/// Runs `exp` with `cfg`, ignoring the experiment field of the config.
pub fn run_named(cfg: &RunConfig, exp: Experiment) -> Result<ExperimentReport> {
    let started = Instant::now();
    let mut ctx = Ctx::new(cfg, exp)?;
    match exp {
        Experiment::Simulate => simulate::run(&mut ctx)?,
        Experiment::Density => density::run(&mut ctx)?,
        Experiment::Gradient => gradient::run(&mut ctx)?,
        Experiment::Lions => lions::run(&mut ctx)?,
        Experiment::Bounds => bounds::run(&mut ctx)?,
        Experiment::Identities => identities::run(&mut ctx)?,
    }
    Ok(ExperimentReport {
        experiment: exp,
        checks: ctx.checks,
        tables: ctx.tables,
        records: ctx.records,
        elapsed: started.elapsed(),
    })
}

/// Shared state of one run.
pub(crate) struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub model: ModelSpec,
    pub exp: Experiment,
    hash: String,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub records: Vec<ResultRecord>,
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a RunConfig, exp: Experiment) -> Result<Self> {
        Ok(Self {
            model: cfg.build_model()?,
            cfg,
            exp,
            hash: cfg.hash(),
            checks: Vec::new(),
            tables: Vec::new(),
            records: Vec::new(),
        })
    }

    pub fn s(&self) -> f64 {
        self.cfg.time.s
    }

    pub fn t(&self) -> f64 {
        self.cfg.time.t
    }

    pub fn solver(&self) -> &SolverConfig {
        &self.cfg.solver
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    pub fn record(&mut self, quantity: impl Into<String>, value: f64, std_error: f64) {
        self.records.push(ResultRecord {
            experiment: self.exp.to_string(),
            quantity: quantity.into(),
            value,
            std_error,
            seed: self.cfg.solver.seed,
            config_hash: self.hash.clone(),
        });
    }

    pub fn record_estimate(&mut self, quantity: impl Into<String>, e: &GradientEstimate) {
        self.record(quantity, e.value, e.std_error);
    }

    /// The initial law as a cloud: exact atoms when it has them, otherwise
    /// `n` samples.
    pub fn init_cloud(&self, n: usize) -> Result<ParticleCloud> {
        match self.cfg.init.atoms() {
            Some(c) => Ok(c),
            None => self.cfg.init.sample(n, self.cfg.solver.seed),
        }
    }

    /// Measure argument for decoupled runs on `[s, t]`: the initial cloud
    /// held fixed for measure-free models, the particle flow otherwise.
    pub fn flow(&self, init: &ParticleCloud, s: f64, t: f64, cfg: &SolverConfig) -> Result<MeasureFlow> {
        if self.model.traits().measure_free {
            MeasureFlow::constant(init.clone(), s, t, 1)
        } else {
            solve_mckean_vlasov(&self.model, init, s, t, cfg)
        }
    }
}

/// `max / min` of positive finite values, infinite otherwise.
pub(crate) fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if values.is_empty() || !(min > 0.0) || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `x` with the first coordinate replaced.
pub(crate) fn along_e1(base: &[f64], x0: f64) -> Vec<f64> {
    let mut p = base.to_vec();
    p[0] = x0;
    p
}

pub(crate) fn e1(dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = 1.0;
    v
}
