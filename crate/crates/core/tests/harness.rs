use std::path::{Path, PathBuf};

use mvparametrix::harness::{parse_config, parse_config_file, run_named, write_report, Experiment, RunConfig};
use mvparametrix::Error;

fn cfg(sets: &[&str]) -> RunConfig {
    parse_config("", &sets.iter().map(|s| s.to_string()).collect::<Vec<_>>()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("harness").join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    dir
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn example_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml");
    let c = parse_config_file(&path, &[]).unwrap();
    assert_eq!(c.experiment, Some(Experiment::Density));
    assert_eq!(c.model.name, "ou");
    let c = parse_config_file(&path, &["experiment=bounds".into()]).unwrap();
    assert_eq!(c.experiment, Some(Experiment::Bounds));
}

#[test]
fn missing_file_is_a_config_error() {
    let e = parse_config_file(Path::new("/nonexistent/run.toml"), &[]).unwrap_err();
    assert!(matches!(e, Error::Config { .. }));
}

#[test]
fn identities_pass_on_every_model() {
    for name in ["constant", "brownian", "ou", "meanfield_ou", "bounded_interaction"] {
        let c = cfg(&[&format!("model.name={name}")]);
        let r = run_named(&c, Experiment::Identities).unwrap();
        assert!(r.passed(), "{name}: {:?}", r.failures().collect::<Vec<_>>());
        assert_eq!(r.checks.len(), 6);
        assert!(r.elapsed.as_secs_f64() < 60.0);
    }
}

#[test]
fn identities_in_two_dimensions() {
    let c = cfg(&["model.name=bounded_interaction", "model.dim=2", "model.gamma=0.3"]);
    let r = run_named(&c, Experiment::Identities).unwrap();
    assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
}

#[test]
fn ou_density_report_is_complete_and_reproducible() {
    let c = cfg(&["model.name=ou", "grid.order=3", "time.t=0.5"]);
    let r = run_named(&c, Experiment::Density).unwrap();
    assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
    let oracle = r.table("density_oracle").unwrap();
    assert!(oracle.rows.len() >= 50);
    let max_rel = r.records.iter().find(|x| x.quantity == "max_rel_error").unwrap().value;
    assert!(max_rel <= 1e-2);

    let (a, b) = (scratch("density_a"), scratch("density_b"));
    write_report(&c, &r, &a).unwrap();
    let again = run_named(&c, Experiment::Density).unwrap();
    write_report(&c, &again, &b).unwrap();
    for file in ["density_profile.csv", "density_levels.csv", "density_oracle.csv", "checks.csv", "results.csv"] {
        assert_eq!(read(&a, file), read(&b, file), "{file}");
    }
    let manifest = read(&a, "manifest.txt");
    assert!(manifest.contains(&format!("config_hash = {}", c.hash())));
    assert!(manifest.contains("seed = 42"));
    assert!(manifest.contains("status = pass"));
    assert!(read(&a, "results.csv").starts_with("experiment,quantity,value,std_error,seed,config_hash\n"));
    let back = parse_config(&read(&a, "config.toml"), &[]).unwrap();
    assert_eq!(back, c);
}

#[test]
fn density_without_closed_form_still_reports_the_series() {
    let c = cfg(&["model.name=meanfield_ou", "time.t=0.5", "solver.n_particles=500", "solver.dt=0.01"]);
    let r = run_named(&c, Experiment::Density).unwrap();
    assert!(r.table("density_oracle").is_none());
    assert!(r.table("density_profile").unwrap().rows.len() == 401);
    assert!(r.check("series_decay").unwrap().passed);
}

#[test]
fn brownian_bounds_column_is_root_two_over_pi() {
    let c = cfg(&["model.name=brownian", "solver.n_particles=2000"]);
    let r = run_named(&c, Experiment::Bounds).unwrap();
    assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
    let rows = &r.table("bounds").unwrap().rows;
    for row in rows.iter().filter(|row| row[0] == "dirac_shift") {
        let scaled: f64 = row[6].parse().unwrap();
        assert!((scaled - 0.798).abs() < 0.05 * 0.798, "{row:?}");
    }
}

#[test]
fn small_simulation_writes_the_flow() {
    let c = cfg(&["model.name=ou", "simulate.sizes=[200, 800]", "solver.dt=0.01", "simulate.checkpoints=4"]);
    let r = run_named(&c, Experiment::Simulate).unwrap();
    let flow = r.table("flow").unwrap();
    assert_eq!(flow.header, ["time", "x_1", "weight"]);
    assert_eq!(flow.rows.len(), 5 * 800);
    assert!(r.check("flow_property_n200").is_some() && r.check("mean_ode_n800").is_some());
}

#[test]
fn gradient_falls_back_to_finite_differences() {
    let c = cfg(&[
        "model.name=bounded_interaction",
        "time.t=0.2",
        "solver.dt=0.01",
        "solver.n_mc=4000",
        "solver.n_particles=300",
        "gradient.functions=[\"cos\"]",
        "gradient.horizons=[0.1, 0.2]",
    ]);
    let r = run_named(&c, Experiment::Gradient).unwrap();
    let rows = &r.table("gradient").unwrap().rows;
    assert!(rows.iter().any(|row| row[8] == "fd"));
    assert!(rows.iter().any(|row| row[8] == "none"));
    assert!(r.checks.iter().any(|ch| ch.name.starts_with("bismut_vs_fd")));
}

#[test]
fn lions_reports_all_three_parts() {
    let c = cfg(&[
        "model.name=meanfield_ou",
        "time.t=0.5",
        "solver.dt=0.01",
        "solver.n_mc=20000",
        "solver.n_particles=1000",
        "lions.horizons=[0.1, 0.2]",
        "lions.random_phi=1",
        "lions.variation_phi=2",
        "lions.variation_particles=200",
    ]);
    let r = run_named(&c, Experiment::Lions).unwrap();
    for name in ["decomposition_total", "decomposition_spatial", "decomposition_measure", "variation_bound"] {
        assert!(r.check(name).unwrap().passed, "{name}: {:?}", r.check(name));
    }
    assert_eq!(r.table("lions_scaling").unwrap().rows.len(), 4);
}

#[test]
fn run_experiment_requires_a_name() {
    let c = cfg(&["model.name=ou"]);
    assert!(matches!(mvparametrix::harness::run_experiment(&c), Err(Error::Config { .. })));
    let c = cfg(&["model.name=ou", "experiment=identities"]);
    assert!(mvparametrix::harness::run_experiment(&c).unwrap().passed());
}
