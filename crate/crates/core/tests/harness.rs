use std::collections::BTreeMap;

use memwave::dynamics::TrajectoryRecord;
use memwave::harness::cli::cli;
use memwave::harness::{persist, reduce, replay, run_experiment, simulate, Config, ExperimentSpec, Verdict};

fn config(pairs: &[(&str, &str)]) -> Config {
    let mut c = Config::default();
    for (k, v) in pairs {
        c.set(k, v).unwrap();
    }
    c
}

fn small_attractor() -> ExperimentSpec {
    let c = config(&[
        ("experiment.name", "attractor_size"),
        ("experiment.epsilons", "0.2, 0.1"),
        ("experiment.ensemble", "2"),
        ("experiment.horizon", "4"),
        ("experiment.tail_start", "2"),
        ("basis.modes", "8"),
    ]);
    ExperimentSpec::from_config(c, 11).unwrap()
}

fn small_averaging() -> ExperimentSpec {
    let c = config(&[
        ("experiment.name", "averaging"),
        ("experiment.epsilons", "0.2, 0.1, 0.05"),
        ("experiment.warmup", "2"),
        ("experiment.compare", "1"),
        ("experiment.tail_length", "2"),
        ("basis.modes", "8"),
    ]);
    ExperimentSpec::from_config(c, 3).unwrap()
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let spec = small_attractor();
    let one = run_experiment(&spec, 1).unwrap();
    let three = run_experiment(&spec, 3).unwrap();
    assert_eq!(one.records, three.records);
    assert_eq!(one.report, three.report);
    let dir = tempfile::tempdir().unwrap();
    persist(dir.path().join("a"), &spec, &one).unwrap();
    persist(dir.path().join("b"), &spec, &three).unwrap();
    for key in one.records.keys() {
        let a = std::fs::read(dir.path().join("a/records").join(format!("{key}.csv"))).unwrap();
        let b = std::fs::read(dir.path().join("b/records").join(format!("{key}.csv"))).unwrap();
        assert_eq!(a, b, "{key}");
    }
}

#[test]
fn verdicts_replay_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    for spec in [small_attractor(), small_averaging()] {
        let outcome = run_experiment(&spec, 0).unwrap();
        let path = dir.path().join(spec.kind.name());
        persist(&path, &spec, &outcome).unwrap();
        let (again, report) = replay(&path).unwrap();
        assert!(again.config.same_values(&spec.config));
        assert_eq!(report, outcome.report);
    }
}

#[test]
fn record_csv_round_trip_is_exact() {
    let outcome = run_experiment(&small_averaging(), 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (key, rec) in &outcome.records {
        let path = dir.path().join(format!("{key}.csv"));
        rec.write_csv(&path).unwrap();
        assert_eq!(&TrajectoryRecord::read_csv(&path).unwrap(), rec, "{key}");
    }
}

#[test]
fn set_distance_needs_twenty_tail_samples() {
    let spec = small_averaging();
    let outcome = run_experiment(&spec, 0).unwrap();
    let mut records: BTreeMap<String, TrajectoryRecord> = outcome.records.clone();
    let key = records.keys().find(|k| k.starts_with("tail_r")).unwrap().clone();
    records.get_mut(&key).unwrap().snapshots.truncate(19);
    assert!(reduce(&spec, &records).is_err());
}

#[test]
fn config_round_trip_reproduces_the_run() {
    let c = config(&[("basis.modes", "6"), ("solver.horizon", "1"), ("force.g0.profile", "0.5, 0.25")]);
    let again = Config::parse(&c.emit()).unwrap();
    assert!(again.same_values(&c));
    assert_eq!(simulate(&c).unwrap(), simulate(&again).unwrap());
}

#[test]
fn aux_intercept_tracks_forcing_amplitude() {
    let run = |profile: &str| {
        let c = config(&[
            ("experiment.name", "aux_linear"),
            ("experiment.horizon", "8"),
            ("experiment.epsilons", "0.4, 0.2, 0.1, 0.05"),
            ("basis.modes", "4"),
            ("force.g1.profile", profile),
        ]);
        run_experiment(&ExperimentSpec::from_config(c, 0).unwrap(), 0).unwrap().report
    };
    let (one, two) = (run("1"), run("2"));
    assert_eq!(one.verdict, Verdict::Pass);
    assert!((one.fits["slope"] - two.fits["slope"]).abs() < 1e-9);
    assert!((two.fits["intercept"] - one.fits["intercept"] - 2f64.ln()).abs() < 1e-9);
}

#[test]
fn experiment_preconditions_are_config_errors() {
    let aux = config(&[("experiment.name", "aux_linear"), ("experiment.epsilons", "0.2, 0.1, 0.05")]);
    assert!(ExperimentSpec::from_config(aux, 0).is_err());
    let avg = config(&[("experiment.name", "averaging"), ("experiment.epsilons", "0.2, 0.1")]);
    assert!(ExperimentSpec::from_config(avg, 0).is_err());
    let tail = config(&[("experiment.name", "attractor_size"), ("experiment.tail_start", "200")]);
    assert!(ExperimentSpec::from_config(tail, 0).is_err());
}

#[test]
fn cli_simulate_writes_a_clean_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.txt");
    std::fs::write(&cfg, "# short run\nsolver.horizon = 2\nbasis.modes = 8\n").unwrap();
    let out = dir.path().join("traj.csv");
    let mut buf = Vec::new();
    let code = cli(
        ["memwave", "simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        &mut buf,
    );
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&buf));
    let rec = TrajectoryRecord::read_csv(&out).unwrap();
    rec.check().unwrap();
    assert!(rec.column("L").is_some());
    assert!(rec.times().windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn cli_sweep_and_report_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("aux.txt");
    std::fs::write(&cfg, "experiment.horizon = 8\nbasis.modes = 4\n").unwrap();
    let out = dir.path().join("run");
    let args = |v: &[&str]| -> Vec<String> { v.iter().map(|s| s.to_string()).collect() };
    let mut buf = Vec::new();
    let code = cli(
        args(&["memwave", "sweep", "--experiment", "aux_linear", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", "2"]),
        &mut buf,
    );
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&buf));
    let mut again = Vec::new();
    assert_eq!(cli(args(&["memwave", "report", out.to_str().unwrap()]), &mut again), 0);
    assert!(!String::from_utf8_lossy(&again).contains("warning"));
}
