use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

use diffsim::model::library::{chain_length_binding, pendulum_chain};
use diffsim::model::print_model;
use diffsim_harness::table::Table;

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim")).args(args).output().expect("spawn sim")
}

fn run(cmd: &str, config: &Path, out: &Path) -> Output {
    sim(&[cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

/// Pendulum model file plus a 140-sample reference generated at `l = 1`.
fn pendulum_fixture(dir: &Path) -> PathBuf {
    std::fs::write(dir.join("pendulum.json"), print_model(&pendulum_chain(1, 1.0, 1.0))).unwrap();
    let cfg = write_config(
        dir,
        "simulate.json",
        &json!({"model": "pendulum.json", "x0": [0.5, 0.0], "samples": 140, "sample_dt": 0.01, "seed": 1}),
    );
    let o = run("simulate", &cfg, dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join("reference.csv")
}

fn estimate_config(dir: &Path, theta0: f64, max_iters: usize) -> PathBuf {
    write_config(
        dir,
        "estimate.json",
        &json!({
            "model": "pendulum.json",
            "reference": "reference.csv",
            "parameters": serde_json::to_value(chain_length_binding(1)).unwrap(),
            "theta0": [theta0],
            "optimizer": {"max_iters": max_iters, "grad_tol": 1e-10, "lower": [0.05]},
            "seed": 3
        }),
    )
}

fn arm() -> Value {
    json!([
        {"d": 0.3, "a": 0.4, "alpha": 1.2},
        {"d": 0.15, "a": 0.5, "alpha": -0.7},
        {"d": 0.25, "a": 0.3, "alpha": 0.9},
        {"d": 0.2, "a": 0.35, "alpha": -1.1}
    ])
}

fn short_mpc(seed: u64) -> Value {
    json!({
        "poles": 1,
        "held_out": 5,
        "adaptive": {"episodes": 1, "steps": 20, "warmup_fit_every": 10},
        "theta0": 1.5,
        "seed": seed
    })
}

/// CSV text with the named column blanked.
fn without_column(text: &str, column: &str) -> String {
    let mut t = Table::from_csv(text).unwrap();
    if let Some(j) = t.column_index(column) {
        for row in &mut t.rows {
            row[j].clear();
        }
    }
    t.to_csv()
}

#[test]
fn help_exits_zero_and_bad_usage_exits_one() {
    assert_eq!(code(&sim(&["--help"])), 0);
    assert_eq!(code(&sim(&["benchmark"])), 1);
    assert_eq!(code(&sim(&["frobnicate"])), 1);
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("benchmark", &dir.path().join("nope.json"), dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nope.json"));
}

#[test]
fn config_without_seed_is_rejected_unless_given_on_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "b.json", &json!({"links": [1], "dt": [0.1], "methods": ["coupled"]}));
    let o = run("benchmark", &cfg, dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("seed"));
    let o = sim(&["benchmark", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(summary(dir.path())["seed"], 5);
}

#[test]
fn estimate_with_missing_reference_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pendulum.json"), print_model(&pendulum_chain(1, 1.0, 1.0))).unwrap();
    let cfg = estimate_config(dir.path(), 1.5, 50);
    let o = run("estimate", &cfg, &dir.path().join("out"));
    assert_eq!(code(&o), 1);
    let msg = stderr(&o);
    assert!(msg.contains("reference.csv") && msg.contains("No such file"), "{msg}");
}

#[test]
fn self_consistent_estimate_stops_at_iteration_zero() {
    let dir = tempfile::tempdir().unwrap();
    pendulum_fixture(dir.path());
    let cfg = estimate_config(dir.path(), 1.0, 50);
    let out = dir.path().join("out");
    let o = run("estimate", &cfg, &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let curve = Table::read(&out.join("loss_curve.csv")).unwrap();
    assert_eq!(curve.header, ["iteration", "loss", "theta0"]);
    assert_eq!(curve.rows.len(), 1);
    assert_eq!(summary(&out)["iterations"], 0);
}

#[test]
fn estimate_recovers_pendulum_length() {
    let dir = tempfile::tempdir().unwrap();
    pendulum_fixture(dir.path());
    let cfg = estimate_config(dir.path(), 1.5, 50);
    let out = dir.path().join("out");
    let o = run("estimate", &cfg, &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = summary(&out);
    let l = s["theta"][0].as_f64().unwrap();
    assert!((l - 1.0).abs() <= 1e-3, "{l}");
    let curve = Table::read(&out.join("loss_curve.csv")).unwrap();
    assert_eq!(curve.rows.len(), s["iterations"].as_u64().unwrap() as usize + 1);
    let losses = curve.column_f64("loss").unwrap();
    assert!(losses.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn estimate_that_runs_out_of_iterations_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    pendulum_fixture(dir.path());
    let cfg = estimate_config(dir.path(), 1.3, 1);
    let out = dir.path().join("out");
    let o = run("estimate", &cfg, &out);
    assert_eq!(code(&o), 2, "{}", summary(&out));
    assert!(stderr(&o).contains("MaxIters"), "{}", stderr(&o));
    // Results are still written.
    assert_eq!(Table::read(&out.join("loss_curve.csv")).unwrap().rows.len(), 2);
}

#[test]
fn design_from_the_generating_arm_is_a_single_zero_loss_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d.json", &json!({"arm": arm(), "perturbation": 0.0, "seed": 2}));
    let o = run("design", &cfg, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t = Table::read(&dir.path().join("dh_evolution.csv")).unwrap();
    assert_eq!(t.header.len(), 1 + 12 + 1);
    assert_eq!(t.rows.len(), 1);
    // Zero up to rounding in the forward kinematics.
    assert!(t.column_f64("loss").unwrap()[0] <= 1e-24);
}

#[test]
fn design_recovers_four_dof_arm() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d.json", &json!({"arm": arm(), "seed": 11}));
    let o = run("design", &cfg, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = summary(dir.path());
    assert!(s["rms_error"].as_f64().unwrap() <= 1e-3, "{s}");
    let t = Table::read(&dir.path().join("dh_evolution.csv")).unwrap();
    assert_eq!(t.rows.len(), s["iterations"].as_u64().unwrap() as usize + 1);
    assert_eq!(t.column("iteration").unwrap().last().unwrap(), &s["iterations"].to_string());
}

#[test]
fn benchmark_engines_agree_on_two_links() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "b.json", &json!({"links": [2], "dt": [0.01], "seed": 8}));
    let o = run("benchmark", &cfg, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t = Table::read(&dir.path().join("benchmark.csv")).unwrap();
    assert_eq!(t.header, diffsim_harness::commands::BENCHMARK_COLUMNS);
    assert_eq!(t.rows.len(), 4);
    let sums = t.column_f64("grad_checksum").unwrap();
    for a in &sums {
        for b in &sums {
            assert!((a - b).abs() <= 1e-4 * a.abs().max(b.abs()), "{sums:?}");
        }
    }
    let tape = t.column_f64("tape_vars").unwrap();
    let methods = t.column("method").unwrap();
    for (m, v) in methods.iter().zip(&tape) {
        assert_eq!(*v > 0.0, *m == "autodiff", "{m}");
    }
}

#[test]
fn benchmark_repetitions_match_outside_timing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "b.json", &json!({"links": [3], "dt": [0.02, 0.01], "repetitions": 2, "seed": 8}));
    let o = run("benchmark", &cfg, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t = Table::read(&dir.path().join("benchmark.csv")).unwrap();
    assert_eq!(t.rows.len(), 16);
    let timing = t.column_index("wall_time_s").unwrap();
    for pair in t.rows.chunks(2) {
        let strip = |r: &Vec<String>| r.iter().enumerate().filter(|(j, _)| *j != timing).map(|(_, v)| v.clone()).collect::<Vec<_>>();
        assert_eq!(strip(&pair[0]), strip(&pair[1]));
    }
}

#[test]
fn adaptive_benchmark_flags_tolerances_and_fails_on_reverse_ad() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "b.json",
        &json!({"links": [2], "dt": [0.01], "integrator": "dopri45", "methods": ["fd", "coupled", "adjoint"], "seed": 1}),
    );
    let o = run("benchmark", &cfg, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = summary(dir.path());
    assert_eq!(s["tolerances"], json!([1e-6, 1e-6]));
    let sums = Table::read(&dir.path().join("benchmark.csv")).unwrap().column_f64("grad_checksum").unwrap();
    assert!(sums.iter().all(|v| (v - sums[0]).abs() <= 1e-3 * sums[0]), "{sums:?}");

    // The tape engine needs fixed steps: its cell fails, the rest are kept.
    let cfg = write_config(dir.path(), "b2.json", &json!({"links": [2], "dt": [0.01], "integrator": "dopri45", "seed": 1}));
    let o = run("benchmark", &cfg, dir.path());
    assert_ne!(code(&o), 0);
    let s = summary(dir.path());
    assert_eq!(s["rows"], 3);
    assert_eq!(s["failures"].as_array().unwrap().len(), 1);
    assert_eq!(Table::read(&dir.path().join("benchmark.csv")).unwrap().rows.len(), 3);
}

#[test]
fn every_command_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    pendulum_fixture(dir.path());
    let configs = [
        ("benchmark", write_config(dir.path(), "b.json", &json!({"links": [2, 3], "dt": [0.02], "seed": 4})), vec!["benchmark.csv"]),
        ("estimate", estimate_config(dir.path(), 1.3, 50), vec!["loss_curve.csv", "summary.json"]),
        ("design", write_config(dir.path(), "d.json", &json!({"arm": arm(), "configurations": 20, "seed": 6})), vec!["dh_evolution.csv", "summary.json"]),
        ("mpc", write_config(dir.path(), "m.json", &short_mpc(9)), vec!["steps.csv", "theta_history.csv", "summary.json"]),
    ];
    for (cmd, cfg, files) in &configs {
        let a = dir.path().join(format!("{cmd}-a"));
        let b = dir.path().join(format!("{cmd}-b"));
        for out in [&a, &b] {
            let o = run(cmd, cfg, out);
            assert_eq!(code(&o), 0, "{cmd}: {}", stderr(&o));
        }
        for f in files {
            let (x, y) = (std::fs::read_to_string(a.join(f)).unwrap(), std::fs::read_to_string(b.join(f)).unwrap());
            if f.ends_with(".csv") {
                assert!(!x.contains('\r'));
                Table::from_csv(&x).unwrap();
            }
            if *cmd == "benchmark" {
                assert_eq!(without_column(&x, "wall_time_s"), without_column(&y, "wall_time_s"), "{cmd}/{f}");
            } else {
                assert_eq!(x, y, "{cmd}/{f}");
            }
        }
    }
    // A different seed moves the seeded parts.
    let m = write_config(dir.path(), "m2.json", &short_mpc(10));
    let c = dir.path().join("mpc-c");
    assert_eq!(code(&run("mpc", &m, &c)), 0);
    assert_ne!(
        std::fs::read_to_string(c.join("steps.csv")).unwrap(),
        std::fs::read_to_string(dir.path().join("mpc-a/steps.csv")).unwrap()
    );
}

#[test]
fn mpc_without_mismatch_swings_up_first_episode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.json", &json!({"poles": 1, "adaptive": {"episodes": 1}, "seed": 21}));
    let o = run("mpc", &cfg, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = summary(dir.path());
    assert_eq!(s["first_success"], 1, "{s}");
    let hidden: Vec<f64> = serde_json::from_value(s["hidden"].clone()).unwrap();
    let hist = Table::read(&dir.path().join("theta_history.csv")).unwrap();
    for row in &hist.rows {
        for (v, h) in row[1..].iter().zip(&hidden) {
            assert!((v.parse::<f64>().unwrap() - h).abs() <= 1e-6);
        }
    }
    let steps = Table::read(&dir.path().join("steps.csv")).unwrap();
    assert_eq!(&steps.header[..3], ["t", "episode", "u0"]);
    assert_eq!(steps.rows.len(), 141);
    let u = steps.column_f64("u0").unwrap();
    assert!(u[..140].iter().all(|v| v.abs() <= 20.0));
    assert!(u[140].is_nan());
}

#[test]
fn mpc_environment_blowup_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    // No step the environment's solver may take meets its tolerance.
    let cfg = write_config(
        dir.path(),
        "m.json",
        &json!({
            "poles": 1,
            "env_integrator": {"method": "dopri45", "dt": 0.01, "abs_tol": 1e-300, "rel_tol": 1e-300, "min_step": 1e-3},
            "held_out": 0,
            "adaptive": {"episodes": 1, "steps": 10},
            "seed": 1
        }),
    );
    let o = run("mpc", &cfg, dir.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(dir.path().join("summary.json").exists());
}
