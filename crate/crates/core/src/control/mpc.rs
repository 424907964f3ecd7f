use serde::{Deserialize, Serialize};

use super::{
    cost, fit_model, ilqr, is_upright, prediction_error, state_from_observation, ControlBounds, ControlSystem, CostSpec,
    FeatureMap, IlqrConfig, IlqrResult, ModelSystem, Observation, ReferenceEnvironment, ReplayBuffer, Transition,
};
use crate::dynamics::Plant;
use crate::error::{Error, Result};
use crate::estimate::{OptimizerConfig, Termination};
use crate::integrate::{IntegratorConfig, Method};

/// Receding-horizon controller state: the last plan, reused as warm start.
#[derive(Clone, Debug)]
pub struct MpcController {
    pub horizon: usize,
    pub ilqr: IlqrConfig,
    plan: Option<Vec<Vec<f64>>>,
    pub last: Option<IlqrResult>,
}

impl MpcController {
    pub fn new(horizon: usize, ilqr: IlqrConfig) -> Self {
        Self {
            horizon,
            ilqr,
            plan: None,
            last: None,
        }
    }

    /// Warm start for the next solve: the previous plan advanced one
    /// interval with its last control repeated, or zeros.
    pub fn warm_start(&self, nu: usize) -> Vec<Vec<f64>> {
        match &self.plan {
            Some(p) if p.len() == self.horizon => {
                let mut w: Vec<Vec<f64>> = p[1..].to_vec();
                w.push(p.last().unwrap().clone());
                w
            }
            _ => vec![vec![0.0; nu]; self.horizon],
        }
    }

    pub fn reset(&mut self) {
        self.plan = None;
        self.last = None;
    }
}

/// Plan over the controller's horizon from the state behind `obs` and return
/// the first control.
pub fn mpc_step(
    ctrl: &mut MpcController,
    sys: &ModelSystem,
    obs: &[f64],
    spec: &CostSpec,
    bounds: &ControlBounds,
) -> Result<Vec<f64>> {
    if ctrl.horizon == 0 {
        return Err(Error::Config("horizon must be at least one interval".into()));
    }
    let x = match sys.features {
        FeatureMap::CartPole => state_from_observation(obs, sys.model.dof() - 1)?,
        FeatureMap::State => obs.to_vec(),
    };
    let mut warm = ctrl.warm_start(sys.control_dim());
    for u in &mut warm {
        bounds.clamp(u);
    }
    let res = ilqr(sys, &x, &warm, spec, bounds, &ctrl.ilqr)?;
    let mut u = res.controls[0].clone();
    bounds.clamp(&mut u);
    ctrl.plan = Some(res.controls.clone());
    ctrl.last = Some(res);
    Ok(u)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveConfig {
    pub episodes: usize,
    pub steps: usize,
    pub horizon: usize,
    /// Extra fits during the first episode every this many steps (0: none).
    pub warmup_fit_every: usize,
    /// Store every `store_every`-th transition.
    pub store_every: usize,
    pub buffer_capacity: Option<usize>,
    /// Control interval.
    pub dt: f64,
    /// Integrator of the controller's model over one interval.
    pub model_integrator: IntegratorConfig,
    pub ilqr: IlqrConfig,
    pub fit: OptimizerConfig,
    /// Swing-up: every pole has `cos q ≥ success_cos` over the final
    /// `success_window` observations.
    pub success_cos: f64,
    pub success_window: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            episodes: 3,
            steps: 140,
            horizon: 20,
            warmup_fit_every: 50,
            store_every: 1,
            buffer_capacity: Some(100),
            dt: 0.01,
            model_integrator: IntegratorConfig::fixed(Method::Rk4, 0.01),
            ilqr: IlqrConfig {
                max_iters: 20,
                ..IlqrConfig::default()
            },
            fit: OptimizerConfig {
                max_iters: 25,
                grad_tol: 1e-10,
                ..OptimizerConfig::default()
            },
            success_cos: 0.95,
            success_window: 10,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.steps == 0 || self.horizon == 0 || self.store_every == 0 {
            return Err(Error::Config("episodes, steps, horizon and store_every must be at least 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("control interval must be positive".into()));
        }
        self.model_integrator.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub episode: usize,
    /// Steps into the episode when the fit ran.
    pub step: usize,
    pub transitions: usize,
    pub iterations: usize,
    pub initial_loss: f64,
    pub loss: f64,
    pub termination: Termination,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    /// `x*_0 … x*_T` (shorter if the environment diverged).
    pub observations: Vec<Observation>,
    pub controls: Vec<Vec<f64>>,
    /// Trajectory cost of what was actually flown.
    pub cost: f64,
    pub success: bool,
    pub diverged: bool,
    /// iLQR iterations spent per control step.
    pub planner_iterations: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveReport {
    pub episodes: Vec<EpisodeLog>,
    /// `θ0` followed by the result of every fit.
    pub theta_history: Vec<Vec<f64>>,
    pub fits: Vec<FitRecord>,
    pub buffers: Vec<ReplayBuffer>,
    /// Mean one-step prediction error on the held-out transitions at `θ0`
    /// and after each episode's closing fit.
    pub held_out_errors: Vec<f64>,
    pub diverged: bool,
}

impl AdaptiveReport {
    pub fn episode_costs(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.cost).collect()
    }

    pub fn theta(&self) -> &[f64] {
        self.theta_history.last().unwrap()
    }

    /// 1-based index of the first successful episode.
    pub fn first_success(&self) -> Option<usize> {
        self.episodes.iter().position(|e| e.success).map(|i| i + 1)
    }
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::NonFinite(_) | Error::SingularInertia { .. } | Error::StepUnderflow { .. } | Error::EvalBudget(_))
}

/// Adaptive MPC: fly `episodes` episodes of `steps` MPC steps against the
/// environment, refitting the model parameters from each episode's replay
/// buffer (and, in the first episode, every `warmup_fit_every` steps).
#[allow(clippy::too_many_arguments)]
pub fn adaptive_mpc(
    env: &mut ReferenceEnvironment,
    plant: &Plant,
    theta0: &[f64],
    spec: &CostSpec,
    bounds: &ControlBounds,
    cfg: &AdaptiveConfig,
    held_out: &[Transition],
) -> Result<AdaptiveReport> {
    cfg.validate()?;
    let poles = env.poles();
    let held_err = |theta: &[f64]| -> Result<f64> {
        if held_out.is_empty() {
            return Ok(f64::NAN);
        }
        prediction_error(plant, theta, held_out, cfg.dt, &cfg.model_integrator)
    };
    let mut theta = theta0.to_vec();
    let mut report = AdaptiveReport {
        episodes: Vec::new(),
        theta_history: vec![theta.clone()],
        fits: Vec::new(),
        buffers: Vec::new(),
        held_out_errors: vec![held_err(&theta)?],
        diverged: false,
    };

    for episode in 0..cfg.episodes {
        let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
        let mut ctrl = MpcController::new(cfg.horizon, cfg.ilqr.clone());
        let mut sys = ModelSystem::new(plant, &theta, cfg.dt, cfg.model_integrator, FeatureMap::CartPole)?;
        let mut log = EpisodeLog {
            observations: vec![env.reset()?],
            controls: Vec::new(),
            cost: 0.0,
            success: false,
            diverged: false,
            planner_iterations: Vec::new(),
        };

        for t in 0..cfg.steps {
            let obs = log.observations[t].clone();
            let u = mpc_step(&mut ctrl, &sys, &obs, spec, bounds)?;
            log.planner_iterations.push(ctrl.last.as_ref().map_or(0, |r| r.iterations));
            let next = match env.step(&u) {
                Ok(o) => o,
                Err(e) if is_divergence(&e) => {
                    log.diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            if t % cfg.store_every == 0 {
                buffer.push(Transition {
                    obs,
                    u: u.clone(),
                    next: next.clone(),
                })?;
            }
            log.controls.push(u);
            log.observations.push(next);

            let warmup = episode == 0 && cfg.warmup_fit_every > 0 && (t + 1) % cfg.warmup_fit_every == 0;
            if warmup && t + 1 < cfg.steps && !buffer.is_empty() {
                theta = run_fit(&mut report, &buffer, plant, &theta, cfg, episode, t + 1)?;
                sys = ModelSystem::new(plant, &theta, cfg.dt, cfg.model_integrator, FeatureMap::CartPole)?;
            }
        }

        if !log.controls.is_empty() {
            log.cost = cost(&log.observations, &log.controls, spec)?;
        }
        let n = log.observations.len();
        log.success = !log.diverged
            && n > cfg.success_window
            && log.observations[n - cfg.success_window..].iter().all(|o| is_upright(o, poles, cfg.success_cos));
        let diverged = log.diverged;
        report.episodes.push(log);

        if !buffer.is_empty() {
            theta = run_fit(&mut report, &buffer, plant, &theta, cfg, episode, cfg.steps)?;
            report.held_out_errors.push(held_err(&theta)?);
        }
        report.buffers.push(buffer);
        if diverged {
            report.diverged = true;
            break;
        }
    }
    Ok(report)
}

fn run_fit(
    report: &mut AdaptiveReport,
    buffer: &ReplayBuffer,
    plant: &Plant,
    theta: &[f64],
    cfg: &AdaptiveConfig,
    episode: usize,
    step: usize,
) -> Result<Vec<f64>> {
    let fit = fit_model(buffer, plant, theta, cfg.dt, &cfg.model_integrator, &cfg.fit)?;
    report.fits.push(FitRecord {
        episode,
        step,
        transitions: buffer.len(),
        iterations: fit.result.iterations,
        initial_loss: fit.initial_loss,
        loss: fit.loss,
        termination: fit.result.termination,
        theta: fit.theta.clone(),
    });
    report.theta_history.push(fit.theta.clone());
    Ok(fit.theta)
}
