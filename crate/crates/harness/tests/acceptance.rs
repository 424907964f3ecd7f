//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use diffsim::control::{ilqr, AdaptiveConfig, ControlBounds, CostSpec, FeatureMap, IlqrConfig, ModelSystem};
use diffsim::dynamics::{aba, rnea, total_energy, ControlMap, Plant, State};
use diffsim::estimate::{estimate_parameters, OptimizerConfig, ReferenceTrajectory, Termination};
use diffsim::integrate::{integrate, integrate_dense, IntegratorConfig, Method};
use diffsim::model::library::{chain_length_binding, pendulum_chain, pendulum_chain_with, rod_pendulum, slider};
use diffsim::model::{BindingEntry, DhJoint, DhParams, Field, Model, ParameterBinding};
use diffsim::sensitivity::{gradient, Dynamics, GradMethod};
use diffsim::spatial::{Mat3, Vec3};
use diffsim_harness::commands::{benchmark_request, cmd_benchmark, cmd_design, cmd_estimate, cmd_mpc, cmd_simulate, BenchmarkRow};
use diffsim_harness::config::{BenchmarkSpec, DesignConfig, EstimateConfig, InitialTheta, MpcConfig, SimulateConfig};
use diffsim_harness::table::Table;

const G: f64 = 9.81;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(checks: Vec<(bool, String)>) -> Outcome {
    Outcome {
        pass: checks.iter().all(|c| c.0),
        detail: checks
            .iter()
            .map(|(ok, d)| if *ok { d.clone() } else { format!("[x] {d}") })
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn bench_spec(links: Vec<usize>, dt: Vec<f64>, methods: Vec<GradMethod>) -> BenchmarkSpec {
    BenchmarkSpec {
        links,
        dt,
        methods,
        integrator: Method::Rk4,
        abs_tol: 1e-6,
        rel_tol: 1e-6,
        horizon: 1.0,
        repetitions: 1,
        threads: None,
        seed: 2024,
    }
}

fn rows_for<'a>(rows: &'a [BenchmarkRow], m: GradMethod) -> impl Iterator<Item = &'a BenchmarkRow> {
    rows.iter().filter(move |r| r.method == m)
}

// ---- 1 ------------------------------------------------------------------

fn gradient_cross_validation() -> Outcome {
    let start = Instant::now();
    let plant = Plant::passive(pendulum_chain(2, 1.0, 1.0), chain_length_binding(2)).unwrap();
    let (mut fd_worst, mut trio_worst) = (0.0f64, 0.0f64);
    for seed in 0..10 {
        let spec = BenchmarkSpec {
            seed,
            ..bench_spec(vec![2], vec![0.01], vec![])
        };
        let req = benchmark_request(&plant, &spec, 2, 0.01);
        let g: Vec<Vec<f64>> = GradMethod::ALL.iter().map(|&m| gradient(&req, m).unwrap().values()).collect();
        let fd = GradMethod::ALL.iter().position(|&m| m == GradMethod::Fd).unwrap();
        for i in 0..4 {
            for k in 0..4 {
                if i == k {
                    continue;
                }
                let e = rel_err(&g[i], &g[k]);
                if i == fd || k == fd {
                    fd_worst = fd_worst.max(e);
                } else {
                    trio_worst = trio_worst.max(e);
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(vec![
        (fd_worst <= 1e-4, format!("FD vs analytic {fd_worst:.1e} ≤ 1e-4")),
        (trio_worst <= 1e-6, format!("analytic trio {trio_worst:.1e} ≤ 1e-6")),
        (secs <= 10.0, format!("{secs:.1} s ≤ 10 s")),
    ])
}

// ---- 2 ------------------------------------------------------------------

fn benchmark_structure() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut checks = Vec::new();

    let fd = cmd_benchmark(&bench_spec(vec![2, 5, 10], vec![0.01], vec![GradMethod::Fd]), dir.path()).unwrap();
    let per_solve = 4.0 * 100.0; // RK4 stages over 1 s at dt = 0.01
    let pts: Vec<(f64, f64)> = fd.iter().map(|r| (r.n as f64, r.rhs_evals as f64 / per_solve)).collect();
    let s = slope(&pts);
    checks.push(((s - 2.0).abs() <= 0.15 * 2.0, format!("FD slope {s:.3} solves/parameter (2 ± 15%)")));

    let methods = vec![GradMethod::Autodiff, GradMethod::Coupled, GradMethod::Adjoint];
    let rows = cmd_benchmark(&bench_spec(vec![2], vec![0.01, 0.001], methods), dir.path()).unwrap();
    let tape: Vec<f64> = rows_for(&rows, GradMethod::Autodiff).map(|r| r.tape_vars as f64).collect();
    // Rows are sorted by dt: 0.001 first.
    let ratio = tape[0] / tape[1];
    checks.push(((ratio - 10.0).abs() <= 2.0, format!("tape ×{ratio:.2} for 10× steps (10 ± 20%)")));
    let zero = rows.iter().filter(|r| r.method != GradMethod::Autodiff).all(|r| r.tape_vars == 0);
    checks.push((zero, "coupled/adjoint keep no tape".to_string()));

    let big = cmd_benchmark(&bench_spec(vec![100], vec![0.01], vec![GradMethod::Coupled, GradMethod::Adjoint]), dir.path()).unwrap();
    let evals = |m| rows_for(&big, m).next().unwrap().rhs_evals as f64;
    let r = evals(GradMethod::Coupled) / evals(GradMethod::Adjoint);
    checks.push((
        (1.2..=3.0).contains(&r),
        format!(
            "100-link coupled/adjoint rhs evaluations {r:.2} ({} / {}) in [1.2, 3.0]",
            evals(GradMethod::Coupled),
            evals(GradMethod::Adjoint)
        ),
    ));
    let secs = start.elapsed().as_secs_f64();
    checks.push((secs <= 300.0, format!("{secs:.1} s ≤ 300 s")));
    outcome(checks)
}

// ---- 3 ------------------------------------------------------------------

fn random_chain(rng: &mut ChaCha8Rng, n: usize) -> Model {
    let links: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(0.2..2.0), rng.gen_range(0.3..1.5))).collect();
    let mut m = pendulum_chain_with(&links);
    for j in m.joints.iter_mut().skip(1) {
        let a = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        j.axis = a.scale(1.0 / a.norm());
    }
    for b in m.bodies.iter_mut() {
        b.com += Vec3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), 0.0);
        b.inertia_com = b.inertia_com + Mat3::diagonal(0.01, 0.02, 0.03);
    }
    m
}

/// Planar double pendulum of uniform rods by hand-derived Lagrangian, with
/// absolute angles `φ1 = q1`, `φ2 = q1 + q2`.
fn double_pendulum_torques((m1, l1): (f64, f64), (m2, l2): (f64, f64), q: [f64; 2], qd: [f64; 2], qdd: [f64; 2]) -> [f64; 2] {
    let (p1, p2) = (q[0], q[0] + q[1]);
    let (w1, w2) = (qd[0], qd[0] + qd[1]);
    let (a1, a2) = (qdd[0], qdd[0] + qdd[1]);
    let m11 = m1 * l1 * l1 / 3.0 + m2 * l1 * l1;
    let m12 = m2 * l1 * l2 / 2.0 * (p1 - p2).cos();
    let m22 = m2 * l2 * l2 / 3.0;
    let h = m2 * l1 * l2 / 2.0 * (p1 - p2).sin();
    let t1 = m11 * a1 + m12 * a2 + h * w2 * w2 + (m1 * l1 / 2.0 + m2 * l1) * G * p1.sin();
    let t2 = m12 * a1 + m22 * a2 - h * w1 * w1 + m2 * l2 / 2.0 * G * p2.sin();
    [t1 + t2, t2]
}

fn dynamics_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut round_trip = 0.0f64;
    for trial in 0..100 {
        let n = 1 + trial % 6;
        let m = random_chain(&mut rng, n);
        let s = State::new(
            (0..n).map(|_| rng.gen_range(-3.1..3.1)).collect(),
            (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        );
        let qdd: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let back = aba(&m, &s, &rnea(&m, &s, &qdd).unwrap()).unwrap();
        for k in 0..n {
            round_trip = round_trip.max((back[k] - qdd[k]).abs() / (1.0 + qdd[k].abs()));
        }
    }

    let mut rod = 0.0f64;
    for &(mass, l) in &[(1.0, 1.0), (0.3, 2.5), (2.0, 0.4)] {
        let m = rod_pendulum(mass, l);
        for _ in 0..20 {
            let q = rng.gen_range(-3.1..3.1);
            let qdd = aba(&m, &State::new(vec![q], vec![rng.gen_range(-2.0..2.0)]), &[0.0]).unwrap();
            rod = rod.max((qdd[0] + 3.0 * G / (2.0 * l) * q.sin()).abs());
        }
    }

    let links = [(1.2, 0.8), (0.7, 1.1)];
    let m = pendulum_chain_with(&links);
    let mut lagrange = 0.0f64;
    for _ in 0..100 {
        let q = [rng.gen_range(-3.1..3.1), rng.gen_range(-3.1..3.1)];
        let qd = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let qdd = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let tau = rnea(&m, &State::new(q.to_vec(), qd.to_vec()), &qdd).unwrap();
        let o = double_pendulum_torques(links[0], links[1], q, qd, qdd);
        lagrange = lagrange.max((tau[0] - o[0]).abs()).max((tau[1] - o[1]).abs());
    }
    outcome(vec![
        (round_trip <= 1e-8, format!("ABA∘RNEA {round_trip:.1e} ≤ 1e-8 on 100 chains")),
        (rod <= 1e-10, format!("rod −3g/2l·sin q {rod:.1e} ≤ 1e-10")),
        (lagrange <= 1e-8, format!("double-pendulum Lagrangian {lagrange:.1e} ≤ 1e-8")),
    ])
}

// ---- 4 ------------------------------------------------------------------

fn integrator_orders() -> Outcome {
    let order = |method| {
        let pts: Vec<(f64, f64)> = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
            .iter()
            .map(|&dt| {
                let (x, _) = integrate(|_, x: &[f64]| Ok(x.to_vec()), &[1.0], 0.0, 1.0, &IntegratorConfig::fixed(method, dt)).unwrap();
                (f64::ln(dt), (x[0] - std::f64::consts::E).abs().ln())
            })
            .collect();
        slope(&pts)
    };
    let (e, r) = (order(Method::Euler), order(Method::Rk4));

    let model = pendulum_chain(2, 1.0, 1.0);
    let plant = Plant::passive(model.clone(), ParameterBinding::default()).unwrap();
    let x0 = vec![1.2, -0.7, 0.0, 0.0];
    let energy = |x: &[f64]| total_energy(&model, &State::from_flat(x)).unwrap();
    let e0 = energy(&x0);
    let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
    let (xs, _) = integrate_dense(|_, x: &[f64]| plant.rhs_with(&model, &[], x), &x0, &times, &IntegratorConfig::fixed(Method::Rk4, 1e-3)).unwrap();
    let drift = xs.iter().map(|x| (energy(x) - e0).abs() / e0.abs()).fold(0.0, f64::max);
    outcome(vec![
        ((e - 1.0).abs() <= 0.15, format!("Euler slope {e:.3}")),
        ((r - 4.0).abs() <= 0.3, format!("RK4 slope {r:.3}")),
        (drift <= 1e-4, format!("energy drift {drift:.1e} ≤ 1e-4 over 10 s")),
    ])
}

// ---- 5 ------------------------------------------------------------------

fn parameter_recovery() -> Outcome {
    let rk4 = IntegratorConfig::fixed(Method::Rk4, 0.01);
    let generate = |plant: &Plant, theta: &[f64], x0: &[f64]| {
        let times: Vec<f64> = (0..140).map(|i| i as f64 * 0.01).collect();
        let (states, _) = integrate_dense(|t, x: &[f64]| plant.eval(theta, t, x), x0, &times, &rk4).unwrap();
        ReferenceTrajectory::new(times, states).unwrap()
    };
    let single = Plant::passive(pendulum_chain(1, 1.0, 1.0), chain_length_binding(1)).unwrap();
    let r1 = generate(&single, &[1.0], &[0.5, 0.0]);
    let opt = |k: usize| OptimizerConfig {
        max_iters: 50,
        grad_tol: 1e-10,
        lower: Some(vec![0.05; k]),
        ..OptimizerConfig::default()
    };
    let e1 = estimate_parameters(&single, &[1.5], &r1, GradMethod::Coupled, &rk4, &opt(1)).unwrap();

    let double = Plant::passive(pendulum_chain(2, 1.0, 1.0), chain_length_binding(2)).unwrap();
    let r2 = generate(&double, &[1.0, 0.7], &[0.6, -0.3, 0.0, 0.0]);
    let e2 = estimate_parameters(&double, &[2.0, 2.0], &r2, GradMethod::Adjoint, &rk4, &opt(2)).unwrap();
    let err2 = (e2.theta[0] - 1.0).abs().max((e2.theta[1] - 0.7).abs());
    outcome(vec![
        (
            (e1.theta[0] - 1.0).abs() <= 1e-3 && e1.result.iterations <= 50,
            format!("single l = {:.6} after {} iterations", e1.theta[0], e1.result.iterations),
        ),
        (err2 <= 1e-2, format!("double l = ({:.4}, {:.4}), error {err2:.1e} ≤ 1e-2", e2.theta[0], e2.theta[1])),
    ])
}

// ---- 6 ------------------------------------------------------------------

fn dh_design() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let arm = DhParams {
        joints: (0..4)
            .map(|_| DhJoint {
                d: rng.gen_range(0.1..0.5),
                a: rng.gen_range(0.2..0.6),
                alpha: rng.gen_range(-1.5..1.5),
            })
            .collect(),
    };
    let cfg = DesignConfig {
        arm,
        start: None,
        perturbation: 0.3,
        configurations: 50,
        trajectory: None,
        optimizer: OptimizerConfig {
            max_iters: 500,
            grad_tol: 1e-10,
            ..OptimizerConfig::default()
        },
        seed: 6,
    };
    let dir = tempfile::tempdir().unwrap();
    match cmd_design(&cfg, dir.path()) {
        Ok(s) => outcome(vec![(
            s.rms_error <= 1e-3,
            format!("RMS end-effector error {:.1e} m after {} iterations", s.rms_error, s.iterations),
        )]),
        Err(e) => outcome(vec![(false, format!("design failed: {e}"))]),
    }
}

// ---- 7 ------------------------------------------------------------------

fn ilqr_exactness() -> Outcome {
    let dt = 0.1;
    let h = 40;
    let binding = ParameterBinding::new(vec![BindingEntry::new(Field::Mass { body: 0 }, 0)]);
    let plant = Plant::new(slider(1.0), binding, ControlMap::new(vec![0])).unwrap();
    let sys = ModelSystem::new(&plant, &[1.0], dt, IntegratorConfig::fixed(Method::Euler, dt), FeatureMap::State).unwrap();
    let spec = CostSpec {
        q: vec![1.0, 0.2],
        r: vec![0.05],
        s: vec![10.0, 1.0],
        goal: vec![0.0, 0.0],
    };
    let x0 = [2.0, -0.5];

    // Backward Riccati recursion for Σ xᵀQx + uᵀRu + x_HᵀSx_H.
    let a = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, dt]);
    let q = DMatrix::from_diagonal(&DVector::from_column_slice(&spec.q));
    let r = DMatrix::from_diagonal(&DVector::from_column_slice(&spec.r));
    let mut p = DMatrix::from_diagonal(&DVector::from_column_slice(&spec.s));
    let mut gains = Vec::new();
    for _ in 0..h {
        let k = (&r + b.transpose() * &p * &b).try_inverse().unwrap() * b.transpose() * &p * &a;
        p = &q + a.transpose() * &p * (&a - &b * &k);
        gains.push(k);
    }
    gains.reverse();
    let mut x = DVector::from_column_slice(&x0);
    let mut oracle = Vec::new();
    for k in &gains {
        let u = -(k * &x);
        x = &a * &x + &b * &u;
        oracle.push(u[0]);
    }

    let mut worst = 0.0f64;
    let mut iterations = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..3 {
        let init: Vec<Vec<f64>> = (0..h).map(|_| vec![if trial == 0 { 0.0 } else { rng.gen_range(-5.0..5.0) }]).collect();
        let cfg = IlqrConfig {
            max_iters: 1,
            ..IlqrConfig::default()
        };
        let res = ilqr(&sys, &x0, &init, &spec, &ControlBounds::unbounded(1), &cfg).unwrap();
        iterations = iterations.max(res.iterations);
        for (u, o) in res.controls.iter().zip(&oracle) {
            worst = worst.max((u[0] - o).abs());
        }
    }
    outcome(vec![(
        worst <= 1e-8 && iterations == 1,
        format!("max |u − u_LQR| {worst:.1e} ≤ 1e-8 after one iteration from 3 starts"),
    )])
}

// ---- 8 ------------------------------------------------------------------

fn adaptive_mpc() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut checks = Vec::new();
    let mut fit_iters = Vec::new();
    let mut unconverged = 0;

    let single = MpcConfig {
        poles: 1,
        hidden: None,
        theta0: Some(InitialTheta::Uniform(2.0)),
        cost: None,
        control_limit: 20.0,
        adaptive: AdaptiveConfig::default(),
        env_integrator: None,
        held_out: 50,
        seed: 7,
    };
    match cmd_mpc(&single, &dir.path().join("single")) {
        Ok((s, r)) => {
            checks.push((
                s.first_success.is_some_and(|e| e <= 3),
                format!("single swing-up in episode {:?} of 3 (T=140, H=20)", s.first_success),
            ));
            for f in &r.fits {
                fit_iters.push(f.iterations);
                unconverged += usize::from(f.termination != Termination::GradTol);
            }
        }
        Err(e) => checks.push((false, format!("single: {e}"))),
    }

    let double = MpcConfig {
        poles: 2,
        adaptive: AdaptiveConfig {
            episodes: 5,
            horizon: 40,
            store_every: 2,
            buffer_capacity: Some(100),
            ..AdaptiveConfig::default()
        },
        ..single.clone()
    };
    match cmd_mpc(&double, &dir.path().join("double")) {
        Ok((s, r)) => {
            checks.push((
                s.first_success.is_some_and(|e| e <= 5),
                format!("double swing-up in episode {:?} of 5 (T=140, H=40, θ0 = 2)", s.first_success),
            ));
            let stored = r.buffers.iter().map(|b| b.len()).max().unwrap_or(0);
            checks.push((stored <= 100, format!("{stored} ≤ 100 transitions per episode")));
            let h = &s.held_out_errors;
            checks.push((
                h.windows(2).all(|w| w[1] <= w[0]),
                format!("held-out error {}", h.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(" → ")),
            ));
            for f in &r.fits {
                fit_iters.push(f.iterations);
                unconverged += usize::from(f.termination != Termination::GradTol);
            }
        }
        Err(e) => checks.push((false, format!("double: {e}"))),
    }

    let mean = fit_iters.iter().sum::<usize>() as f64 / fit_iters.len().max(1) as f64;
    checks.push((
        unconverged == 0 && fit_iters.iter().all(|&i| i <= 25),
        format!("{} of {} fits converged within the cap of 25, mean {mean:.1} iterations", fit_iters.len() - unconverged, fit_iters.len()),
    ));
    let secs = start.elapsed().as_secs_f64();
    checks.push((secs <= 900.0, format!("{secs:.0} s ≤ 900 s")));
    outcome(checks)
}

// ---- 9 ------------------------------------------------------------------

fn files_match(a: &Path, b: &Path, name: &str, timing: Option<&str>) -> bool {
    let (x, y) = (std::fs::read_to_string(a.join(name)).unwrap(), std::fs::read_to_string(b.join(name)).unwrap());
    match timing {
        None => x == y,
        Some(col) => {
            let strip = |s: &str| {
                let mut t = Table::from_csv(s).unwrap();
                let j = t.column_index(col).unwrap();
                t.rows.iter_mut().for_each(|r| r[j].clear());
                t.to_csv()
            };
            strip(&x) == strip(&y)
        }
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let twice = |name: &str, f: &dyn Fn(&Path)| {
        let (a, b) = (root.join(format!("{name}-a")), root.join(format!("{name}-b")));
        f(&a);
        f(&b);
        (a, b)
    };
    let mut checks = Vec::new();

    let spec = BenchmarkSpec {
        repetitions: 2,
        ..bench_spec(vec![2, 3], vec![0.02], GradMethod::ALL.to_vec())
    };
    let (a, b) = twice("benchmark", &|out| {
        cmd_benchmark(&spec, out).unwrap();
    });
    checks.push((files_match(&a, &b, "benchmark.csv", Some("wall_time_s")), "benchmark".to_string()));

    std::fs::write(root.join("pendulum.json"), diffsim::model::print_model(&pendulum_chain(1, 1.0, 1.0))).unwrap();
    let cfg_path = root.join("config.json");
    let sim = SimulateConfig {
        model: "pendulum.json".into(),
        x0: None,
        samples: 140,
        sample_dt: 0.01,
        integrator: IntegratorConfig::fixed(Method::Rk4, 0.01),
        seed: 9,
    };
    let (a, b) = twice("simulate", &|out| {
        cmd_simulate(&sim, &cfg_path, out).unwrap();
    });
    checks.push((files_match(&a, &b, "reference.csv", None), "simulate".to_string()));

    let est = EstimateConfig {
        model: "pendulum.json".into(),
        reference: a.join("reference.csv"),
        parameters: chain_length_binding(1),
        theta0: vec![1.4],
        method: GradMethod::Coupled,
        integrator: IntegratorConfig::fixed(Method::Rk4, 0.01),
        optimizer: OptimizerConfig {
            grad_tol: 1e-10,
            lower: Some(vec![0.05]),
            ..OptimizerConfig::default()
        },
        seed: 9,
    };
    let (a, b) = twice("estimate", &|out| {
        cmd_estimate(&est, &cfg_path, out).unwrap();
    });
    checks.push((
        files_match(&a, &b, "loss_curve.csv", None) && files_match(&a, &b, "summary.json", None),
        "estimate".to_string(),
    ));

    let design = DesignConfig {
        arm: DhParams::from_slice(&[0.3, 0.4, 1.2, 0.15, 0.5, -0.7, 0.25, 0.3, 0.9]),
        start: None,
        perturbation: 0.3,
        configurations: 20,
        trajectory: None,
        optimizer: OptimizerConfig {
            max_iters: 500,
            grad_tol: 1e-10,
            ..OptimizerConfig::default()
        },
        seed: 9,
    };
    let (a, b) = twice("design", &|out| {
        cmd_design(&design, out).unwrap();
    });
    checks.push((
        files_match(&a, &b, "dh_evolution.csv", None) && files_match(&a, &b, "summary.json", None),
        "design".to_string(),
    ));

    let mpc = MpcConfig {
        poles: 1,
        hidden: None,
        theta0: Some(InitialTheta::Uniform(1.5)),
        cost: None,
        control_limit: 20.0,
        adaptive: AdaptiveConfig {
            episodes: 2,
            steps: 40,
            warmup_fit_every: 20,
            ..AdaptiveConfig::default()
        },
        env_integrator: None,
        held_out: 10,
        seed: 9,
    };
    let (a, b) = twice("mpc", &|out| {
        cmd_mpc(&mpc, out).unwrap();
    });
    checks.push((
        ["steps.csv", "theta_history.csv", "summary.json"].iter().all(|f| files_match(&a, &b, f, None)),
        "mpc".to_string(),
    ));
    let all = checks.iter().all(|c| c.0);
    let detail = format!(
        "byte-identical reruns: {}",
        checks.iter().map(|(ok, n)| if *ok { n.clone() } else { format!("[x] {n}") }).collect::<Vec<_>>().join(", ")
    );
    Outcome { pass: all, detail }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient cross-validation", gradient_cross_validation),
        ("benchmark structure", benchmark_structure),
        ("dynamics correctness", dynamics_correctness),
        ("integrator orders", integrator_orders),
        ("parameter recovery", parameter_recovery),
        ("DH design", dh_design),
        ("iLQR exactness", ilqr_exactness),
        ("adaptive MPC", adaptive_mpc),
        ("determinism", determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|k| k != n) {
            continue;
        }
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!(
                "panicked: {}",
                e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
            ),
        });
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} ({name}): {verdict} — {} [{:.1} s]", out.detail, start.elapsed().as_secs_f64());
        if !out.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
