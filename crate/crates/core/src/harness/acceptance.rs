//! Named experiment runs that make up the acceptance suite.

use crate::harness::config::Experiment;

/// One acceptance criterion: the experiment, the override sets of its runs,
/// the check-name prefixes that decide it (all checks when empty) and its
/// runtime budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub criterion: u8,
    pub title: &'static str,
    pub experiment: Experiment,
    pub runs: &'static [&'static [&'static str]],
    pub checks: &'static [&'static str],
    /// Runtime budget in seconds.
    pub limit_secs: f64,
}

const MFOU_LIONS: &[&str] = &["model.name=meanfield_ou", "time.t=1.0"];

pub const ACCEPTANCE: [Preset; 7] = [
    Preset {
        criterion: 1,
        title: "kernel identities",
        experiment: Experiment::Identities,
        runs: &[&["model.name=ou"]],
        checks: &[],
        limit_secs: 60.0,
    },
    Preset {
        criterion: 2,
        title: "parametrix accuracy",
        experiment: Experiment::Density,
        runs: &[&["model.name=ou", "grid.order=3", "time.t=0.5"]],
        checks: &[],
        limit_secs: 600.0,
    },
    Preset {
        criterion: 3,
        title: "Bismut gradients",
        experiment: Experiment::Gradient,
        runs: &[&["model.name=brownian", "time.t=0.4"], &["model.name=ou", "time.t=0.4"]],
        checks: &[],
        limit_secs: 600.0,
    },
    Preset {
        criterion: 4,
        title: "mean-field solver",
        experiment: Experiment::Simulate,
        runs: &[&["model.name=meanfield_ou", "init.kind=gaussian", "init.mean=[0.5]", "init.sd=1.0", "simulate.sizes=[1000, 10000]"]],
        checks: &[],
        limit_secs: 300.0,
    },
    Preset {
        criterion: 5,
        title: "variation bound",
        experiment: Experiment::Lions,
        runs: &[&[
            "model.name=meanfield_ou",
            "time.t=1.0",
            "init.kind=gaussian",
            "init.mean=[0.0]",
            "init.sd=1.0",
            "lions.functions=[]",
        ]],
        checks: &["variation_bound"],
        limit_secs: 300.0,
    },
    Preset {
        criterion: 6,
        title: "derivative decomposition",
        experiment: Experiment::Lions,
        runs: &[MFOU_LIONS, &["model.name=ou", "time.t=1.0", "lions.functions=[]", "lions.variation_phi=0"]],
        checks: &["decomposition_"],
        limit_secs: 600.0,
    },
    Preset {
        criterion: 7,
        title: "bound scaling",
        experiment: Experiment::Bounds,
        runs: &[&["model.name=brownian"], &["model.name=meanfield_ou"]],
        checks: &[],
        limit_secs: 900.0,
    },
];

impl Preset {
    /// Whether check `name` counts towards this criterion.
    pub fn decides(&self, name: &str) -> bool {
        self.checks.is_empty() || self.checks.iter().any(|p| name.starts_with(p))
    }
}

/// The presets as `--help` text.
pub fn acceptance_help() -> String {
    let mut out = String::from("Acceptance runs (pass each line's overrides with --set):\n");
    for p in &ACCEPTANCE {
        for run in p.runs {
            let sets: Vec<String> = run.iter().map(|o| format!("--set {o}")).collect();
            out += &format!("  [{}] {} {}\n", p.criterion, p.experiment, sets.join(" "));
        }
    }
    out += "  [8] rerunning any of the above with the same seed reproduces every CSV byte for byte\n";
    out
}
