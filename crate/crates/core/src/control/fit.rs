use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{observation_dim, observe_state, state_from_observation, Observation};
use crate::dynamics::Plant;
use crate::error::{Error, Result};
use crate::estimate::{minimize, OptimResult, OptimizerConfig};
use crate::integrate::{integrate, IntegratorConfig};
use crate::scalar::Dual;
use crate::sensitivity::{grad_coupled, Driven, GradientRequest, Target};

/// `(x*_t, u*_t, x*_{t+1})` observed in the environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Observation,
    pub u: Vec<f64>,
    pub next: Observation,
}

/// Append-only transition store; pushes beyond `capacity` are refused.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    pub transitions: Vec<Transition>,
    pub capacity: Option<usize>,
}

impl ReplayBuffer {
    pub fn new(capacity: Option<usize>) -> Self {
        Self {
            transitions: Vec::new(),
            capacity,
        }
    }

    /// `false` if the buffer is full.
    pub fn push(&mut self, t: Transition) -> Result<bool> {
        if let Some(first) = self.transitions.first() {
            if t.obs.len() != first.obs.len() || t.next.len() != first.next.len() || t.u.len() != first.u.len() {
                return Err(Error::Dimension {
                    what: "transition",
                    expected: first.obs.len(),
                    got: t.obs.len(),
                });
            }
        } else if t.obs.len() != t.next.len() {
            return Err(Error::Dimension {
                what: "transition",
                expected: t.obs.len(),
                got: t.next.len(),
            });
        }
        if self.capacity.is_some_and(|c| self.transitions.len() >= c) {
            return Ok(false);
        }
        self.transitions.push(t);
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

fn poles_of(plant: &Plant) -> usize {
    plant.dof() - 1
}

fn check_transition(plant: &Plant, t: &Transition) -> Result<()> {
    let n = observation_dim(poles_of(plant));
    for o in [&t.obs, &t.next] {
        if o.len() != n {
            return Err(Error::Dimension {
                what: "observation",
                expected: n,
                got: o.len(),
            });
        }
    }
    if t.u.len() != plant.n_controls() {
        return Err(Error::Dimension {
            what: "control",
            expected: plant.n_controls(),
            got: t.u.len(),
        });
    }
    Ok(())
}

/// `‖φ_θ(step_θ(x_t, u_t)) − x*_{t+1}‖²` summed over `transitions`, where the
/// step integrates one interval `dt` from the state behind `x*_t`.
pub fn transition_loss(plant: &Plant, theta: &[f64], transitions: &[Transition], dt: f64, cfg: &IntegratorConfig) -> Result<f64> {
    let model = plant.instantiate(theta)?;
    let mut total = 0.0;
    for t in transitions {
        check_transition(plant, t)?;
        let x0 = state_from_observation(&t.obs, poles_of(plant))?;
        let (x1, _) = integrate(|_, x: &[f64]| plant.rhs_with(&model, &t.u, x), &x0, 0.0, dt, cfg)?;
        let pred = observe_state(&model, &x1)?;
        total += pred.iter().zip(&t.next).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total)
}

/// Mean per-transition squared prediction error.
pub fn prediction_error(plant: &Plant, theta: &[f64], transitions: &[Transition], dt: f64, cfg: &IntegratorConfig) -> Result<f64> {
    if transitions.is_empty() {
        return Err(Error::Request("no transitions to evaluate".into()));
    }
    Ok(transition_loss(plant, theta, transitions, dt, cfg)? / transitions.len() as f64)
}

/// Loss and gradient. The state sensitivity `∂x_{t+1}/∂θ` of every transition
/// comes from a coupled solve over the single interval; the observation map
/// is differentiated with dual sweeps in both `x` and `θ`.
pub(super) fn loss_and_gradient(plant: &Plant, theta: &[f64], transitions: &[Transition], dt: f64, cfg: &IntegratorConfig) -> Result<(f64, Vec<f64>)> {
    let (value, grad, _) = loss_gradient_curvature(plant, theta, transitions, dt, cfg)?;
    Ok((value, grad))
}

/// Loss, gradient and the Gauss–Newton Hessian `2 JᵀJ`.
fn loss_gradient_curvature(
    plant: &Plant,
    theta: &[f64],
    transitions: &[Transition],
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
    let p = theta.len();
    let model = plant.instantiate(theta)?;
    let model_d = model.lift::<Dual>();
    let theta_c: Vec<Dual> = theta.iter().map(|&v| Dual::constant(v)).collect();
    let mut value = 0.0;
    let mut grad = vec![0.0; p];
    let mut curv = DMatrix::zeros(p, p);
    for t in transitions {
        check_transition(plant, t)?;
        let x0 = state_from_observation(&t.obs, poles_of(plant))?;
        let n = x0.len();
        let (x1, _) = integrate(|_, x: &[f64]| plant.rhs_with(&model, &t.u, x), &x0, 0.0, dt, cfg)?;
        let pred = observe_state(&model, &x1)?;
        let resid: Vec<f64> = pred.iter().zip(&t.next).map(|(a, b)| a - b).collect();
        value += resid.iter().map(|r| r * r).sum::<f64>();

        let req = GradientRequest::new(Driven { plant, u: &t.u }, theta.to_vec(), x0, 0.0, dt, *cfg, Target::FinalJacobian);
        let sens = grad_coupled(&req)?.jacobian.expect("jacobian target");

        // ∂φ/∂x · ∂x/∂θ
        let x1c: Vec<Dual> = x1.iter().map(|&v| Dual::constant(v)).collect();
        let mut dr_dx = vec![vec![0.0; n]; resid.len()];
        for j in 0..n {
            let mut xd = x1c.clone();
            xd[j].eps = 1.0;
            for (i, v) in observe_state(&model_d, &xd)?.iter().enumerate() {
                dr_dx[i][j] = v.eps;
            }
        }
        let mut jac = DMatrix::zeros(resid.len(), p);
        for d in 0..p {
            // ∂φ/∂θ at fixed x (the accelerations depend on the parameters).
            let mut td = theta_c.clone();
            td[d].eps = 1.0;
            let direct = observe_state(&plant.instantiate(&td)?, &x1c)?;
            for (i, r) in resid.iter().enumerate() {
                let chain: f64 = (0..n).map(|j| dr_dx[i][j] * sens[j][d]).sum();
                let dr = chain + direct[i].eps;
                grad[d] += 2.0 * r * dr;
                jac[(i, d)] = dr;
            }
        }
        curv += jac.tr_mul(&jac) * 2.0;
    }
    Ok((value, grad, curv))
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub theta: Vec<f64>,
    pub loss: f64,
    pub initial_loss: f64,
    pub result: OptimResult,
}

/// L-BFGS on [`transition_loss`] over the buffer, starting from `theta0`.
/// The reported gradient and iterates are in `θ` coordinates.
pub fn fit_model(
    buffer: &ReplayBuffer,
    plant: &Plant,
    theta0: &[f64],
    dt: f64,
    cfg: &IntegratorConfig,
    opt: &OptimizerConfig,
) -> Result<FitResult> {
    if buffer.is_empty() {
        return Err(Error::Request("cannot fit an empty replay buffer".into()));
    }
    if theta0.len() != plant.n_params() {
        return Err(Error::Dimension {
            what: "theta",
            expected: plant.n_params(),
            got: theta0.len(),
        });
    }
    // Each coordinate is rescaled by the Gauss–Newton curvature at the start
    // point, so L-BFGS sees unit diagonal curvature; directions the data
    // does not excite keep their scale.
    let (_, _, g0) = loss_gradient_curvature(plant, theta0, &buffer.transitions, dt, cfg)?;
    let scale: Vec<f64> = g0.diagonal().iter().map(|c| if *c > 1e-12 { 1.0 / c.sqrt() } else { 1.0 }).collect();
    let to_theta = |z: &[f64]| -> Vec<f64> { z.iter().zip(&scale).map(|(z, s)| z * s).collect() };
    let to_z = |th: &[f64]| -> Vec<f64> { th.iter().zip(&scale).map(|(t, s)| t / s).collect() };
    let zopt = OptimizerConfig {
        lower: opt.lower.as_deref().map(to_z),
        upper: opt.upper.as_deref().map(to_z),
        ..opt.clone()
    };
    let mut result = minimize(
        |z| {
            let (v, g) = loss_and_gradient(plant, &to_theta(z), &buffer.transitions, dt, cfg)?;
            Ok((v, g.iter().zip(&scale).map(|(g, s)| g * s).collect()))
        },
        &to_z(theta0),
        &zopt,
    )?;
    result.x = to_theta(&result.x);
    result.grad = result.grad.iter().zip(&scale).map(|(g, s)| g / s).collect();
    result.iterates = result.iterates.iter().map(|z| to_theta(z)).collect();
    Ok(FitResult {
        theta: result.x.clone(),
        loss: result.loss,
        initial_loss: result.curve[0],
        result,
    })
}

