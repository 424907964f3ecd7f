//! Parameter estimation by fitting simulated trajectories to reference
//! samples, and kinematic design of DH arms, both driven by L-BFGS.

mod lbfgs;
mod reference;

pub use lbfgs::{minimize, OptimResult, OptimizerConfig, StepRecord, Termination};
pub use reference::ReferenceTrajectory;

use crate::dynamics::forward_kinematics;
use crate::error::{Error, Result};
use crate::integrate::{integrate_dense, IntegratorConfig};
use crate::model::{model_from_dh, DhParams};
use crate::scalar::{Dual, Scalar};
use crate::sensitivity::{gradient, Dynamics, GradMethod, GradientReport, GradientRequest, Loss, Target};

/// `Σ_{i≥1} ‖x(t_i) − x*(t_i)‖²`, simulated from the first reference sample.
pub fn trajectory_loss<D: Dynamics>(
    dynamics: &D,
    theta: &[f64],
    reference: &ReferenceTrajectory,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    check_reference(dynamics, theta, reference)?;
    if reference.len() == 1 {
        return Ok(0.0);
    }
    let (xs, _) = integrate_dense(|t, x: &[f64]| dynamics.eval(theta, t, x), &reference.states[0], &reference.times, cfg)?;
    Ok(xs
        .iter()
        .zip(&reference.states)
        .skip(1)
        .map(|(x, r)| x.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum())
}

fn check_reference<D: Dynamics>(dynamics: &D, theta: &[f64], reference: &ReferenceTrajectory) -> Result<()> {
    if reference.is_empty() {
        return Err(Error::Request("empty reference trajectory".into()));
    }
    if reference.state_dim() != dynamics.state_dim() {
        return Err(Error::Dimension {
            what: "reference state",
            expected: dynamics.state_dim(),
            got: reference.state_dim(),
        });
    }
    if theta.len() != dynamics.n_params() {
        return Err(Error::Dimension {
            what: "theta",
            expected: dynamics.n_params(),
            got: theta.len(),
        });
    }
    Ok(())
}

/// The gradient request whose loss equals [`trajectory_loss`].
pub fn loss_request<D: Dynamics>(
    dynamics: D,
    theta: &[f64],
    reference: &ReferenceTrajectory,
    cfg: &IntegratorConfig,
) -> Result<GradientRequest<D>> {
    check_reference(&dynamics, theta, reference)?;
    if reference.len() < 2 {
        return Err(Error::Request("need at least two reference samples".into()));
    }
    let loss = Loss::squared(&reference.times[1..], &reference.states[1..]);
    Ok(GradientRequest::new(
        dynamics,
        theta.to_vec(),
        reference.states[0].clone(),
        reference.times[0],
        *reference.times.last().unwrap(),
        *cfg,
        Target::Loss(loss),
    ))
}

#[derive(Clone, Debug)]
pub struct Estimate {
    pub theta: Vec<f64>,
    pub loss_curve: Vec<f64>,
    /// One report per gradient evaluation, in call order.
    pub reports: Vec<GradientReport>,
    pub result: OptimResult,
}

/// L-BFGS on [`trajectory_loss`] with gradients from `method`.
pub fn estimate_parameters<D: Dynamics>(
    dynamics: &D,
    theta0: &[f64],
    reference: &ReferenceTrajectory,
    method: GradMethod,
    cfg: &IntegratorConfig,
    opt: &OptimizerConfig,
) -> Result<Estimate> {
    let mut req = loss_request(dynamics, theta0, reference, cfg)?;
    let mut reports = Vec::new();
    let result = minimize(
        |theta| {
            req.theta = theta.to_vec();
            let r = gradient(&req, method)?;
            let out = (r.loss.unwrap_or(f64::NAN), r.gradient.clone().unwrap_or_default());
            reports.push(r);
            Ok(out)
        },
        theta0,
        opt,
    )?;
    Ok(Estimate {
        theta: result.x.clone(),
        loss_curve: result.curve.clone(),
        reports,
        result,
    })
}

/// `Σ_t ‖p_ee(q_t) − p_t‖²` for the arm described by `dh`.
pub fn kinematic_loss<S: Scalar>(dh: &DhParams<S>, q_traj: &[Vec<f64>], p_traj: &[[f64; 3]]) -> Result<S> {
    let model = model_from_dh(dh)?;
    let mut acc = S::zero();
    for (q, p) in q_traj.iter().zip(p_traj) {
        let qs: Vec<S> = q.iter().map(|&v| S::from_f64(v)).collect();
        let ee = forward_kinematics(&model, &qs)?.last().unwrap().position;
        for (a, &b) in ee.to_array().iter().zip(p) {
            let d = *a - S::from_f64(b);
            acc += d * d;
        }
    }
    Ok(acc)
}

/// Root-mean-square end-effector distance.
pub fn rms_error(dh: &DhParams, q_traj: &[Vec<f64>], p_traj: &[[f64; 3]]) -> Result<f64> {
    Ok((kinematic_loss(dh, q_traj, p_traj)? / q_traj.len().max(1) as f64).sqrt())
}

fn kinematic_loss_and_grad(theta: &[f64], q_traj: &[Vec<f64>], p_traj: &[[f64; 3]]) -> Result<(f64, Vec<f64>)> {
    let mut grad = Vec::with_capacity(theta.len());
    let mut value = None;
    for k in 0..theta.len() {
        let td: Vec<Dual> = theta
            .iter()
            .enumerate()
            .map(|(j, &v)| Dual::new(v, if j == k { 1.0 } else { 0.0 }))
            .collect();
        let l = kinematic_loss(&DhParams::from_slice(&td), q_traj, p_traj)?;
        value.get_or_insert(l.re);
        grad.push(l.eps);
    }
    let value = match value {
        Some(v) => v,
        None => kinematic_loss(&DhParams::from_slice(theta), q_traj, p_traj)?,
    };
    Ok((value, grad))
}

#[derive(Clone, Debug)]
pub struct Design {
    pub dh: DhParams,
    pub loss_curve: Vec<f64>,
    /// Parameters at every accepted iterate, starting with `dh0`.
    pub history: Vec<DhParams>,
    pub result: OptimResult,
}

/// Fit the `(d, a, α)` scalars of every joint so the end effector follows
/// `p_traj` when the joints follow `q_traj`. Bounds in `opt` are over the
/// flattened `(d, a, α)` vector; equal bounds freeze a scalar.
pub fn design_arm(dh0: &DhParams, q_traj: &[Vec<f64>], p_traj: &[[f64; 3]], opt: &OptimizerConfig) -> Result<Design> {
    if q_traj.len() != p_traj.len() {
        return Err(Error::Dimension {
            what: "task-space trajectory",
            expected: q_traj.len(),
            got: p_traj.len(),
        });
    }
    if let Some(q) = q_traj.iter().find(|q| q.len() != dh0.len()) {
        return Err(Error::Dimension {
            what: "joint configuration",
            expected: dh0.len(),
            got: q.len(),
        });
    }
    let result = minimize(|theta| kinematic_loss_and_grad(theta, q_traj, p_traj), &dh0.to_vec(), opt)?;
    Ok(Design {
        dh: DhParams::from_slice(&result.x),
        loss_curve: result.curve.clone(),
        history: result.iterates.iter().map(|x| DhParams::from_slice(x)).collect(),
        result,
    })
}

#[cfg(test)]
mod tests;
