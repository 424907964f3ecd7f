use diffsim::dynamics::{total_energy, Plant, State};
use diffsim::estimate::{estimate_parameters, OptimizerConfig, ReferenceTrajectory, Termination};
use diffsim::integrate::{integrate, integrate_dense, IntegratorConfig, Method};
use diffsim::model::{library, parse_model, print_model};
use diffsim::sensitivity::{gradient, Dynamics, GradMethod, GradientRequest, Loss, Target};
use proptest::prelude::*;

fn rk4(dt: f64) -> IntegratorConfig {
    IntegratorConfig::fixed(Method::Rk4, dt)
}

fn double_pendulum() -> Plant {
    let model = parse_model(&print_model(&library::pendulum_chain(2, 1.0, 1.0))).unwrap();
    Plant::passive(model, library::chain_length_binding(2)).unwrap()
}

fn reference(plant: &Plant, truth: &[f64], x0: &[f64]) -> ReferenceTrajectory {
    let times: Vec<f64> = (0..=40).map(|i| i as f64 * 0.025).collect();
    let (states, _) = integrate_dense(|t, x: &[f64]| plant.eval(truth, t, x), x0, &times, &rk4(0.005)).unwrap();
    ReferenceTrajectory::new(times, states).unwrap()
}

#[test]
fn lengths_recovered_through_json_and_csv() {
    let plant = double_pendulum();
    let truth = [0.8, 1.2];
    let reference = reference(&plant, &truth, &[0.6, -0.3, 0.0, 0.0]);
    let reread = ReferenceTrajectory::from_csv(&reference.to_csv()).unwrap();
    assert_eq!(reread.len(), reference.len());

    let est = estimate_parameters(&plant, &[1.0, 1.0], &reread, GradMethod::Adjoint, &rk4(0.005), &OptimizerConfig::default()).unwrap();
    assert_eq!(est.result.termination, Termination::GradTol);
    for (a, b) in est.theta.iter().zip(&truth) {
        assert!((a - b).abs() <= 1e-6, "{:?}", est.theta);
    }
    assert!(est.loss_curve.windows(2).all(|w| w[1] <= w[0]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn engines_agree_on_random_lengths(l1 in 0.5f64..1.5, l2 in 0.5f64..1.5, q1 in -1.0f64..1.0) {
        let plant = double_pendulum();
        let reference = reference(&plant, &[1.0, 1.0], &[q1, 0.2, 0.0, 0.0]);
        let loss = Loss::squared(&reference.times[1..], &reference.states[1..]);
        let req = GradientRequest::new(&plant, vec![l1, l2], reference.states[0].clone(), 0.0, 1.0, rk4(0.01), Target::Loss(loss));
        let exact = gradient(&req, GradMethod::Coupled).unwrap().gradient.unwrap();
        let scale = exact.iter().fold(1e-8f64, |m, v| m.max(v.abs()));
        for m in [GradMethod::Fd, GradMethod::Autodiff, GradMethod::Adjoint] {
            let g = gradient(&req, m).unwrap().gradient.unwrap();
            let tol = if m == GradMethod::Fd { 1e-4 } else { 1e-6 };
            for (a, b) in g.iter().zip(&exact) {
                prop_assert!((a - b).abs() <= tol * scale, "{:?}: {:?} vs {:?}", m, g, exact);
            }
        }
    }

    #[test]
    fn passive_chain_conserves_energy(n in 1usize..5, q in -1.5f64..1.5) {
        let model = library::pendulum_chain(n, 1.0, 0.5);
        let plant = Plant::passive(model.clone(), library::chain_length_binding(n)).unwrap();
        let theta = vec![0.5; n];
        let mut x0 = vec![q; n];
        x0.extend(vec![0.0; n]);
        let (x1, _) = integrate(|t, x: &[f64]| plant.eval(&theta, t, x), &x0, 0.0, 1.0, &rk4(1e-3)).unwrap();
        let e0 = total_energy(&model, &State::from_flat(&x0)).unwrap();
        let e1 = total_energy(&model, &State::from_flat(&x1)).unwrap();
        prop_assert!((e1 - e0).abs() <= 1e-6 * e0.abs().max(1.0), "{e0} → {e1}");
    }
}
