use super::*;
use crate::dynamics::Plant;
use crate::integrate::Method;
use crate::model::{library, DhJoint};
use crate::sensitivity::grad_fd;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn rk4() -> IntegratorConfig {
    IntegratorConfig::fixed(Method::Rk4, 0.01)
}

fn chain(n: usize) -> Plant {
    Plant::passive(library::pendulum_chain(n, 1.0, 1.0), library::chain_length_binding(n)).unwrap()
}

fn generate(plant: &Plant, theta: &[f64], x0: &[f64], samples: usize, dt: f64) -> ReferenceTrajectory {
    let times: Vec<f64> = (0..samples).map(|i| i as f64 * dt).collect();
    let (states, _) = integrate_dense(|t, x: &[f64]| plant.eval(theta, t, x), x0, &times, &rk4()).unwrap();
    ReferenceTrajectory::new(times, states).unwrap()
}

fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (a, b) = (x[0], x[1]);
    Ok((
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2),
        vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)],
    ))
}

fn armijo_holds(r: &OptimResult, c1: f64) -> bool {
    r.steps.iter().all(|s| s.armijo && s.loss_after <= s.loss_before + c1 * s.directional)
}

#[test]
fn lbfgs_solves_rosenbrock() {
    let cfg = OptimizerConfig {
        max_iters: 200,
        ..OptimizerConfig::default()
    };
    let r = minimize(rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
    assert!(r.converged(), "{:?}", r.termination);
    assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    assert!(armijo_holds(&r, cfg.c1));
    assert!(r.curve.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(r.curve.len(), r.iterations + 1);
    assert_eq!(r.iterates.len(), r.iterations + 1);
}

#[test]
fn lbfgs_stops_immediately_at_optimum() {
    let r = minimize(rosenbrock, &[1.0, 1.0], &OptimizerConfig::default()).unwrap();
    assert_eq!(r.iterations, 0);
    assert!(r.converged());
    assert_eq!(r.evaluations, 1);
}

#[test]
fn lbfgs_respects_box() {
    let cfg = OptimizerConfig {
        lower: Some(vec![-2.0, -2.0]),
        upper: Some(vec![0.5, 2.0]),
        max_iters: 200,
        ..OptimizerConfig::default()
    };
    let r = minimize(rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
    assert!(r.iterates.iter().all(|x| x[0] <= 0.5 && x[0] >= -2.0));
    // Constrained optimum sits on the face a = 0.5 with b = a².
    assert!((r.x[0] - 0.5).abs() < 1e-6 && (r.x[1] - 0.25).abs() < 1e-4, "{:?}", r.x);
    assert!(r.converged(), "{:?} {:?}", r.termination, r.x);
}

#[test]
fn lbfgs_equal_bounds_freeze_coordinates() {
    let cfg = OptimizerConfig {
        lower: Some(vec![-5.0, 0.3]),
        upper: Some(vec![5.0, 0.3]),
        ..OptimizerConfig::default()
    };
    let quad = |x: &[f64]| Ok(((x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2), vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] - 1.0)]));
    let r = minimize(quad, &[0.0, 0.3], &cfg).unwrap();
    assert_eq!(r.x[1], 0.3);
    assert!((r.x[0] - 2.0).abs() < 1e-8);
}

#[test]
fn lbfgs_config_validation() {
    let bad = OptimizerConfig {
        c1: 0.95,
        ..OptimizerConfig::default()
    };
    assert!(minimize(rosenbrock, &[0.0, 0.0], &bad).is_err());
    let outside = OptimizerConfig {
        lower: Some(vec![1.0, 1.0]),
        ..OptimizerConfig::default()
    };
    assert!(minimize(rosenbrock, &[0.0, 0.0], &outside).is_err());
    let zero_mem = OptimizerConfig {
        memory: 0,
        ..OptimizerConfig::default()
    };
    assert!(minimize(rosenbrock, &[0.0, 0.0], &zero_mem).is_err());
}

#[test]
fn lbfgs_reports_line_search_failure() {
    // Gradient points the wrong way: no descent is possible along −g.
    let liar = |x: &[f64]| Ok((x[0], vec![-1.0]));
    let r = minimize(liar, &[0.0], &OptimizerConfig::default()).unwrap();
    assert_eq!(r.termination, Termination::LineSearchFailed);
    assert_eq!(r.x, vec![0.0]);
}

proptest! {
    #[test]
    fn lbfgs_minimizes_convex_quadratics(d in prop::collection::vec(0.1f64..10.0, 1..6), c in prop::collection::vec(-5.0f64..5.0, 6)) {
        let n = d.len();
        let f = |x: &[f64]| {
            let v = (0..n).map(|i| 0.5 * d[i] * (x[i] - c[i]).powi(2)).sum();
            Ok((v, (0..n).map(|i| d[i] * (x[i] - c[i])).collect()))
        };
        let r = minimize(f, &vec![0.0; n], &OptimizerConfig::default()).unwrap();
        prop_assert!(r.converged());
        for i in 0..n {
            prop_assert!((r.x[i] - c[i]).abs() < 1e-7);
        }
        prop_assert!(armijo_holds(&r, 1e-4));
    }
}

#[test]
fn reference_csv_round_trip() {
    let r = ReferenceTrajectory::new(vec![0.0, 0.1, 0.2], vec![vec![1.0 / 3.0, -2.0], vec![1e-17, 5.5], vec![PI, 0.0]]).unwrap();
    let text = r.to_csv();
    assert!(text.starts_with("t,x0,x1\n"));
    assert_eq!(ReferenceTrajectory::from_csv(&text).unwrap(), r);
}

#[test]
fn reference_validation() {
    assert!(ReferenceTrajectory::new(vec![0.0, 0.0], vec![vec![1.0], vec![1.0]]).is_err());
    assert!(ReferenceTrajectory::new(vec![0.0, 1.0], vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    assert!(ReferenceTrajectory::new(vec![], vec![]).is_err());
    assert!(matches!(ReferenceTrajectory::from_csv("time,x0\n0,1\n"), Err(Error::Syntax { .. })));
    assert!(matches!(ReferenceTrajectory::from_csv("t,x0\n0,abc\n"), Err(Error::Syntax { line: 2, .. })));
    assert!(matches!(ReferenceTrajectory::read(std::path::Path::new("/nonexistent/ref.csv")), Err(Error::Io(_))));
}

#[test]
fn loss_is_zero_at_generator_parameters() {
    let plant = chain(1);
    let r = generate(&plant, &[1.0], &[0.5, 0.0], 140, 0.01);
    assert!(trajectory_loss(&plant, &[1.0], &r, &rk4()).unwrap() <= 1e-16);
}

#[test]
fn loss_of_unit_offset_is_one() {
    let plant = chain(1);
    let mut r = generate(&plant, &[1.0], &[0.5, 0.0], 2, 0.01);
    r.states[1][0] -= 1.0;
    assert!((trajectory_loss(&plant, &[1.0], &r, &rk4()).unwrap() - 1.0).abs() < 1e-12);
}

/// Plain RK4 on the closed-form uniform-rod pendulum, `q̈ = −3g/(2l) sin q`.
fn scripted_pendulum_loss(l: f64, reference: &ReferenceTrajectory) -> f64 {
    let g = 9.81;
    let f = |x: [f64; 2]| [x[1], -1.5 * g / l * x[0].sin()];
    let mut x = [reference.states[0][0], reference.states[0][1]];
    let h = 0.01;
    let mut total = 0.0;
    for k in 1..reference.len() {
        let k1 = f(x);
        let k2 = f([x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]]);
        let k3 = f([x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]]);
        let k4 = f([x[0] + h * k3[0], x[1] + h * k3[1]]);
        for i in 0..2 {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        total += (x[0] - reference.states[k][0]).powi(2) + (x[1] - reference.states[k][1]).powi(2);
    }
    total
}

#[test]
fn loss_matches_scripted_recomputation() {
    let plant = chain(1);
    let r = generate(&plant, &[1.0], &[0.5, 0.0], 140, 0.01);
    let loss = trajectory_loss(&plant, &[1.5], &r, &rk4()).unwrap();
    let oracle = scripted_pendulum_loss(1.5, &r);
    assert!(loss > 0.0);
    assert!((loss - oracle).abs() <= 1e-10 * oracle, "{loss} vs {oracle}");
}

#[test]
fn loss_reports_dimension_and_divergence_distinctly() {
    let plant = chain(1);
    let r = ReferenceTrajectory::new(vec![0.0, 1.0], vec![vec![0.0; 3], vec![0.0; 3]]).unwrap();
    assert!(matches!(trajectory_loss(&plant, &[1.0], &r, &rk4()), Err(Error::Dimension { .. })));
    let plant = chain(2);
    let r = ReferenceTrajectory::new(vec![0.0, 50.0], vec![vec![0.3, 0.2, 1e200, 0.0], vec![0.0; 4]]).unwrap();
    let err = trajectory_loss(&plant, &[1.0, 1.0], &r, &IntegratorConfig::fixed(Method::Rk4, 1.0));
    assert!(matches!(err, Err(Error::NonFinite(_))), "{err:?}");
}

#[test]
fn estimation_gradients_match_finite_differences() {
    let plant = chain(2);
    let r = generate(&plant, &[1.0, 0.7], &[0.6, -0.3, 0.0, 0.2], 60, 0.02);
    for method in GradMethod::ALL {
        let req = loss_request(&plant, &[1.4, 1.1], &r, &rk4()).unwrap();
        let g = gradient(&req, method).unwrap().gradient.unwrap();
        let fd = grad_fd(&req, Some(1e-5)).unwrap().gradient.unwrap();
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-4 * scale, "{method:?}: {a} vs {b}");
        }
        let l = trajectory_loss(&plant, &[1.4, 1.1], &r, &rk4()).unwrap();
        assert!((gradient(&req, method).unwrap().loss.unwrap() - l).abs() <= 1e-12 * l);
    }
}

#[test]
fn estimation_at_truth_stops_at_iteration_zero() {
    let plant = chain(1);
    let r = generate(&plant, &[1.0], &[0.5, 0.0], 140, 0.01);
    let e = estimate_parameters(&plant, &[1.0], &r, GradMethod::Coupled, &rk4(), &OptimizerConfig::default()).unwrap();
    assert_eq!(e.result.iterations, 0);
    assert!(e.result.converged());
    assert_eq!(e.loss_curve.len(), 1);
}

#[test]
fn single_pendulum_length_recovery_with_every_engine() {
    let plant = chain(1);
    let r = generate(&plant, &[1.0], &[0.5, 0.0], 140, 0.01);
    let opt = OptimizerConfig {
        max_iters: 50,
        grad_tol: 1e-10,
        lower: Some(vec![0.05]),
        ..OptimizerConfig::default()
    };
    let mut found = Vec::new();
    for method in GradMethod::ALL {
        let e = estimate_parameters(&plant, &[1.5], &r, method, &rk4(), &opt).unwrap();
        assert!((e.theta[0] - 1.0).abs() <= 1e-3, "{method:?}: {:?}", e.theta);
        assert!(e.result.iterations <= 50);
        assert!(e.loss_curve.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(e.reports.len(), e.result.evaluations);
        found.push(e.theta[0]);
    }
    for v in &found {
        assert!((v - found[0]).abs() <= 1e-3);
    }
}

#[test]
fn double_pendulum_length_recovery() {
    let plant = chain(2);
    let r = generate(&plant, &[1.0, 0.7], &[0.6, -0.3, 0.0, 0.0], 140, 0.01);
    let opt = OptimizerConfig {
        max_iters: 50,
        lower: Some(vec![0.05; 2]),
        ..OptimizerConfig::default()
    };
    let e = estimate_parameters(&plant, &[2.0, 2.0], &r, GradMethod::Adjoint, &rk4(), &opt).unwrap();
    assert!((e.theta[0] - 1.0).abs() <= 1e-2 && (e.theta[1] - 0.7).abs() <= 1e-2, "{:?}", e.theta);
}

fn random_configs(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count).map(|_| (0..n).map(|_| rng.gen_range(-PI..PI)).collect()).collect()
}

fn end_effector_path(dh: &DhParams, qs: &[Vec<f64>]) -> Vec<[f64; 3]> {
    let m = model_from_dh(dh).unwrap();
    qs.iter().map(|q| forward_kinematics(&m, q).unwrap().last().unwrap().position.to_array()).collect()
}

#[test]
fn design_from_generator_has_zero_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let dh = DhParams {
        joints: (0..3).map(|_| DhJoint { d: 0.3, a: 0.5, alpha: 0.4 }).collect(),
    };
    let qs = random_configs(&mut rng, 3, 20);
    let ps = end_effector_path(&dh, &qs);
    let d = design_arm(&dh, &qs, &ps, &OptimizerConfig::default()).unwrap();
    assert!(d.loss_curve[0] < 1e-24);
    assert_eq!(d.result.iterations, 0);
    assert_eq!(d.history.len(), 1);
}

#[test]
fn design_loss_invariant_under_joint_offset() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let truth = DhParams {
        joints: vec![DhJoint { d: 0.2, a: 0.7, alpha: 0.5 }, DhJoint { d: -0.1, a: 0.4, alpha: -0.3 }],
    };
    let guess = DhParams {
        joints: vec![DhJoint { d: 0.3, a: 0.6, alpha: 0.4 }, DhJoint { d: 0.0, a: 0.5, alpha: -0.2 }],
    };
    let qs = random_configs(&mut rng, 2, 10);
    let shifted: Vec<Vec<f64>> = qs.iter().map(|q| q.iter().map(|v| v + 0.37).collect()).collect();
    let l0 = kinematic_loss(&guess, &qs, &end_effector_path(&truth, &qs)).unwrap();
    let l1 = kinematic_loss(&guess, &shifted, &end_effector_path(&truth, &shifted)).unwrap();
    // Only the first joint's offset is a pure frame rotation about the base z
    // axis, which leaves every distance unchanged.
    let first_only: Vec<Vec<f64>> = qs.iter().map(|q| vec![q[0] + 0.37, q[1]]).collect();
    let l2 = kinematic_loss(&guess, &first_only, &end_effector_path(&truth, &first_only)).unwrap();
    assert!((l0 - l2).abs() < 1e-12);
    assert!(l1 > 0.0);
}

#[test]
fn single_joint_design_matches_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let qs: Vec<Vec<f64>> = (0..25).map(|_| vec![rng.gen_range(-PI..PI)]).collect();
    let ps: Vec<[f64; 3]> = (0..25).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.2]).collect();
    // End effector sits at (a cos q, a sin q, d); the minimizer over a is the
    // mean projection of the targets onto the radial direction.
    let oracle = qs.iter().zip(&ps).map(|(q, p)| q[0].cos() * p[0] + q[0].sin() * p[1]).sum::<f64>() / 25.0;
    let dh0 = DhParams {
        joints: vec![DhJoint { d: 0.2, a: 1.0, alpha: 0.1 }],
    };
    let opt = OptimizerConfig {
        lower: Some(vec![0.2, -10.0, 0.1]),
        upper: Some(vec![0.2, 10.0, 0.1]),
        grad_tol: 1e-12,
        ..OptimizerConfig::default()
    };
    let d = design_arm(&dh0, &qs, &ps, &opt).unwrap();
    assert!((d.dh.joints[0].a - oracle).abs() <= 1e-8, "{} vs {oracle}", d.dh.joints[0].a);
    assert_eq!(d.dh.joints[0].d, 0.2);
}

#[test]
fn four_dof_design_recovery() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let truth = DhParams {
        joints: (0..4)
            .map(|_| DhJoint {
                d: rng.gen_range(0.1..0.5),
                a: rng.gen_range(0.2..0.6),
                alpha: rng.gen_range(-1.5..1.5),
            })
            .collect(),
    };
    let qs = random_configs(&mut rng, 4, 50);
    let ps = end_effector_path(&truth, &qs);
    let start = DhParams::from_slice(&truth.to_vec().iter().map(|v| v * rng.gen_range(0.7..1.3)).collect::<Vec<_>>());
    let opt = OptimizerConfig {
        max_iters: 500,
        grad_tol: 1e-12,
        ..OptimizerConfig::default()
    };
    let d = design_arm(&start, &qs, &ps, &opt).unwrap();
    let rms = rms_error(&d.dh, &qs, &ps).unwrap();
    assert!(rms <= 1e-3, "rms {rms} after {:?}", d.result.termination);
    assert_eq!(d.history.len(), d.result.iterations + 1);
}

#[test]
fn design_dimension_errors() {
    let dh = DhParams {
        joints: vec![DhJoint { d: 0.0, a: 1.0, alpha: 0.0 }],
    };
    assert!(design_arm(&dh, &[vec![0.0]], &[], &OptimizerConfig::default()).is_err());
    assert!(design_arm(&dh, &[vec![0.0, 1.0]], &[[0.0; 3]], &OptimizerConfig::default()).is_err());
}
