use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cartpole_poles, observe_state, ControlBounds, Observation, Transition};
use crate::dynamics::{aba, ControlMap, Plant, State};
use crate::error::{Error, Result};
use crate::integrate::{integrate, IntegratorConfig, Method};
use crate::model::Model;

/// Stand-in for the real system: a cart-pole with parameters the controller
/// never sees, stepped by its own integrator.
#[derive(Clone, Debug)]
pub struct ReferenceEnvironment {
    model: Model,
    controls: ControlMap,
    integrator: IntegratorConfig,
    dt: f64,
    bounds: ControlBounds,
    /// Largest seeded angle perturbation of the hanging start.
    pub init_noise: f64,
    state: Vec<f64>,
    rng: ChaCha8Rng,
}

impl ReferenceEnvironment {
    /// The plant instantiated at `theta_true`.
    pub fn new(plant: &Plant, theta_true: &[f64], integrator: IntegratorConfig, dt: f64, bounds: ControlBounds, seed: u64) -> Result<Self> {
        let model = plant.instantiate(theta_true)?;
        Self::from_model(model, plant.controls.clone(), integrator, dt, bounds, seed)
    }

    pub fn from_model(
        model: Model,
        controls: ControlMap,
        integrator: IntegratorConfig,
        dt: f64,
        bounds: ControlBounds,
        seed: u64,
    ) -> Result<Self> {
        cartpole_poles(&model)?;
        integrator.validate()?;
        bounds.validate()?;
        if !(dt > 0.0) {
            return Err(Error::Config("control interval must be positive".into()));
        }
        if bounds.dim() != controls.len() {
            return Err(Error::Dimension {
                what: "control bounds",
                expected: controls.len(),
                got: bounds.dim(),
            });
        }
        let dof = model.dof();
        Ok(Self {
            model,
            controls,
            integrator,
            dt,
            bounds,
            init_noise: 0.05,
            state: vec![0.0; 2 * dof],
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Dormand–Prince at tight tolerances with internal steps capped at a
    /// quarter of the control interval.
    pub fn default_integrator(dt: f64) -> IntegratorConfig {
        IntegratorConfig {
            method: Method::Dopri45,
            dt: dt / 4.0,
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_step: dt / 4.0,
            ..IntegratorConfig::default()
        }
    }

    pub fn poles(&self) -> usize {
        self.model.dof() - 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn bounds(&self) -> &ControlBounds {
        &self.bounds
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    /// The hidden mechanism. For evaluation only; controllers must not read it.
    pub fn hidden_model(&self) -> &Model {
        &self.model
    }

    pub fn observe(&self) -> Result<Observation> {
        observe_state(&self.model, &self.state)
    }

    /// Hanging at rest, every pole angle perturbed by a seeded amount in
    /// `[-init_noise, init_noise]`.
    pub fn reset(&mut self) -> Result<Observation> {
        let dof = self.model.dof();
        let mut x = vec![0.0; 2 * dof];
        x[1] = std::f64::consts::PI;
        for q in &mut x[1..dof] {
            *q += self.rng.gen_range(-self.init_noise..=self.init_noise);
        }
        self.state = x;
        self.observe()
    }

    pub fn reset_to(&mut self, x: &[f64]) -> Result<Observation> {
        if x.len() != self.state.len() {
            return Err(Error::Dimension {
                what: "flat state",
                expected: self.state.len(),
                got: x.len(),
            });
        }
        self.state = x.to_vec();
        self.observe()
    }

    /// Apply `u` (clamped to the bounds) for one control interval.
    pub fn step(&mut self, u: &[f64]) -> Result<Observation> {
        let mut u = u.to_vec();
        if u.len() != self.bounds.dim() {
            return Err(Error::Dimension {
                what: "control",
                expected: self.bounds.dim(),
                got: u.len(),
            });
        }
        self.bounds.clamp(&mut u);
        let tau = self.controls.tau(self.model.dof(), &u)?;
        let plant_rhs = |_: f64, x: &[f64]| {
            let s = State::from_flat(x);
            let qdd = aba(&self.model, &s, &tau)?;
            Ok(s.qd.into_iter().chain(qdd).collect())
        };
        let (x1, _) = integrate(plant_rhs, &self.state, 0.0, self.dt, &self.integrator)?;
        self.state = x1;
        self.observe()
    }

    /// Seeded transitions from random states near the swing-up region
    /// (angles anywhere, moderate rates) under random controls; the
    /// environment's own state is left untouched.
    pub fn sample_transitions(&self, count: usize, seed: u64, u_scale: f64) -> Result<Vec<Transition>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut probe = self.clone();
        let dof = self.model.dof();
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut x = vec![0.0; 2 * dof];
            x[0] = rng.gen_range(-1.0..=1.0);
            for q in &mut x[1..dof] {
                *q = rng.gen_range(-std::f64::consts::PI..=std::f64::consts::PI);
            }
            x[dof] = rng.gen_range(-2.0..=2.0);
            for qd in &mut x[dof + 1..] {
                *qd = rng.gen_range(-5.0..=5.0);
            }
            let u: Vec<f64> = (0..self.bounds.dim()).map(|_| rng.gen_range(-u_scale..=u_scale)).collect();
            let obs = probe.reset_to(&x)?;
            let next = probe.step(&u)?;
            let mut applied = u;
            self.bounds.clamp(&mut applied);
            out.push(Transition { obs, u: applied, next });
        }
        Ok(out)
    }
}
