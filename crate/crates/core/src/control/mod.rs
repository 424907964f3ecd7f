//! Trajectory optimization and adaptive model-predictive control.
//!
//! The controller sees the mechanism through a [`ControlSystem`]: a discrete
//! transition `x_{k+1} = step(x_k, u_k)` over one control interval and a
//! feature map `φ(x)` the quadratic cost is written against. For cart-poles
//! the features are the observation vector
//! `(p, ṗ, sin q_i.., cos q_i.. interleaved, q̇_i.., q̈_i..)`.

mod env;
mod fit;
mod ilqr;
mod mpc;

pub use env::ReferenceEnvironment;
pub use fit::{fit_model, prediction_error, transition_loss, FitResult, ReplayBuffer, Transition};
pub use ilqr::{ilqr, IlqrConfig, IlqrResult};
pub use mpc::{adaptive_mpc, mpc_step, AdaptiveConfig, AdaptiveReport, EpisodeLog, FitRecord, MpcController};

use serde::{Deserialize, Serialize};

use crate::dynamics::{aba, Plant, State};
use crate::error::{Error, Result};
use crate::integrate::{integrate, IntegratorConfig};
use crate::model::{JointKind, Model};
use crate::scalar::{Dual, Scalar};

/// Flat observation vector.
pub type Observation = Vec<f64>;

/// Number of revolute poles on a cart, or an error for any other topology.
pub fn cartpole_poles<S: Scalar>(m: &Model<S>) -> Result<usize> {
    let unsupported = |why: &str| Err(Error::Topology(why.to_string()));
    if m.is_empty() || m.joints[0].kind != JointKind::Prismatic || m.joints[0].parent.is_some() {
        return unsupported("expected a prismatic cart at the root");
    }
    for (i, j) in m.joints.iter().enumerate().skip(1) {
        if j.kind != JointKind::Revolute || j.parent != Some(i - 1) {
            return unsupported("expected a serial chain of revolute poles on the cart");
        }
    }
    Ok(m.len() - 1)
}

/// Observation length for a cart with `poles` poles.
pub fn observation_dim(poles: usize) -> usize {
    2 + 4 * poles
}

/// Pack cart position/velocity and per-pole `sin`, `cos`, rate and
/// acceleration.
pub fn observe<S: Scalar>(m: &Model<S>, s: &State<S>, qdd: &[S]) -> Result<Vec<S>> {
    let poles = cartpole_poles(m)?;
    let dof = poles + 1;
    for (what, len) in [("q", s.q.len()), ("qd", s.qd.len()), ("qdd", qdd.len())] {
        if len != dof {
            return Err(Error::Dimension {
                what: if what == "qdd" { "accelerations" } else { "cart-pole state" },
                expected: dof,
                got: len,
            });
        }
    }
    let mut o = Vec::with_capacity(observation_dim(poles));
    o.push(s.q[0]);
    o.push(s.qd[0]);
    for &q in &s.q[1..] {
        o.push(q.sin());
        o.push(q.cos());
    }
    o.extend_from_slice(&s.qd[1..]);
    o.extend_from_slice(&qdd[1..]);
    Ok(o)
}

/// [`observe`] with the accelerations of the unforced mechanism at `x`.
pub fn observe_state<S: Scalar>(m: &Model<S>, x: &[S]) -> Result<Vec<S>> {
    let s = State::from_flat(x);
    let qdd = aba(m, &s, &vec![S::zero(); m.dof()])?;
    observe(m, &s, &qdd)
}

/// Inverse of the kinematic part of [`observe`]; angles come back in (−π, π].
pub fn state_from_observation(obs: &[f64], poles: usize) -> Result<Vec<f64>> {
    if obs.len() != observation_dim(poles) {
        return Err(Error::Dimension {
            what: "observation",
            expected: observation_dim(poles),
            got: obs.len(),
        });
    }
    let mut q = vec![obs[0]];
    q.extend((0..poles).map(|i| obs[2 + 2 * i].atan2(obs[3 + 2 * i])));
    let mut qd = vec![obs[1]];
    qd.extend_from_slice(&obs[2 + 2 * poles..2 + 3 * poles]);
    Ok(q.into_iter().chain(qd).collect())
}

/// Upright, centred and at rest.
pub fn goal_observation(poles: usize) -> Observation {
    let mut g = vec![0.0; observation_dim(poles)];
    for i in 0..poles {
        g[3 + 2 * i] = 1.0;
    }
    g
}

/// Diagonal quadratic cost `Σ x̃ᵀQx̃ + uᵀRu + x̃_HᵀSx̃_H`, `x̃ = goal − φ(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub goal: Vec<f64>,
}

impl CostSpec {
    /// Swing-up weights. Running: 0.1 on cart position, 0.01 on cart
    /// velocity, 1 on pole `sin`/`cos`, 0.01 on pole rates (0.001 with more
    /// than one pole), 1e-4 on accelerations, R = 1e-4. Terminal: cart 1 and
    /// 0.1, poses 10, rates 0.1, accelerations 1e-3.
    ///
    /// Rate and acceleration weights must stay well below the pose weight:
    /// a hanging pole oscillating at `ω² = 3g/2l` trades `δq²` of pose cost
    /// for `w_rate ω² δq²` of rate cost, and for `w_rate ≥ 1/ω²` hanging
    /// becomes a local minimum no local planner escapes. The control weight
    /// has to be small enough that pumping energy pays off within a horizon.
    pub fn cartpole(poles: usize) -> Self {
        let n = observation_dim(poles);
        let pose = 2..2 + 2 * poles;
        let rates = 2 + 2 * poles..2 + 3 * poles;
        let w_rate = if poles > 1 { 1e-3 } else { 1e-2 };
        let mut q = vec![1e-4; n];
        let mut s = vec![1e-3; n];
        q[0] = 0.1;
        q[1] = 0.01;
        s[0] = 1.0;
        s[1] = 0.1;
        for i in pose {
            q[i] = 1.0;
            s[i] = 10.0;
        }
        for i in rates {
            q[i] = w_rate;
            s[i] = 0.1;
        }
        Self {
            q,
            r: vec![1e-4],
            s,
            goal: goal_observation(poles),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.goal.len();
        for (what, v) in [("Q diagonal", &self.q), ("S diagonal", &self.s)] {
            if v.len() != n {
                return Err(Error::Dimension {
                    what,
                    expected: n,
                    got: v.len(),
                });
            }
            if v.iter().any(|w| !(*w >= 0.0)) {
                return Err(Error::Config(format!("{what} entries must be non-negative")));
            }
        }
        if self.r.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("R diagonal entries must be positive".into()));
        }
        Ok(())
    }

    fn weighted(w: &[f64], goal: &[f64], x: &[f64]) -> f64 {
        w.iter().zip(goal).zip(x).map(|((w, g), x)| w * (g - x) * (g - x)).sum()
    }
}

/// The trajectory cost over features `obs` (H+1 entries) and controls `u`
/// (H entries).
pub fn cost(obs: &[Vec<f64>], u: &[Vec<f64>], spec: &CostSpec) -> Result<f64> {
    spec.validate()?;
    if u.is_empty() || obs.len() != u.len() + 1 {
        return Err(Error::Dimension {
            what: "trajectory length (H + 1 observations for H controls, H >= 1)",
            expected: u.len() + 1,
            got: obs.len(),
        });
    }
    let nx = spec.goal.len();
    let nu = spec.r.len();
    if let Some(o) = obs.iter().find(|o| o.len() != nx) {
        return Err(Error::Dimension {
            what: "observation",
            expected: nx,
            got: o.len(),
        });
    }
    if let Some(c) = u.iter().find(|c| c.len() != nu) {
        return Err(Error::Dimension {
            what: "control",
            expected: nu,
            got: c.len(),
        });
    }
    let running: f64 = obs
        .iter()
        .zip(u)
        .map(|(o, c)| CostSpec::weighted(&spec.q, &spec.goal, o) + spec.r.iter().zip(c).map(|(r, c)| r * c * c).sum::<f64>())
        .sum();
    Ok(running + CostSpec::weighted(&spec.s, &spec.goal, obs.last().unwrap()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ControlBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn symmetric(limit: f64, dim: usize) -> Self {
        Self {
            lower: vec![-limit; dim],
            upper: vec![limit; dim],
        }
    }

    pub fn unbounded(dim: usize) -> Self {
        Self::symmetric(f64::INFINITY, dim)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::Dimension {
                what: "control bounds",
                expected: self.lower.len(),
                got: self.upper.len(),
            });
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Config("control lower bound exceeds upper bound".into()));
        }
        Ok(())
    }

    pub fn clamp(&self, u: &mut [f64]) {
        for ((v, l), h) in u.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *h);
        }
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), h)| l <= v && v <= h)
    }
}

/// A discrete-time controlled system with a cost feature map.
pub trait ControlSystem {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn feature_dim(&self) -> usize;
    /// State after one control interval with `u` held constant.
    fn step<S: Scalar>(&self, x: &[S], u: &[S]) -> Result<Vec<S>>;
    /// Features the cost compares with the goal.
    fn features<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>>;
}

/// What a [`ModelSystem`] exposes to the cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    /// The flat state itself.
    State,
    /// The cart-pole [`observe_state`] vector.
    CartPole,
}

/// A plant at fixed parameters, stepped by an integrator over `dt`.
#[derive(Clone, Debug)]
pub struct ModelSystem {
    pub plant: Plant,
    pub model: Model,
    pub dt: f64,
    pub integrator: IntegratorConfig,
    pub features: FeatureMap,
}

impl ModelSystem {
    pub fn new(plant: &Plant, theta: &[f64], dt: f64, integrator: IntegratorConfig, features: FeatureMap) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Config("control interval must be positive".into()));
        }
        integrator.validate()?;
        let model = plant.instantiate(theta)?;
        if features == FeatureMap::CartPole {
            cartpole_poles(&model)?;
        }
        Ok(Self {
            plant: plant.clone(),
            model,
            dt,
            integrator,
            features,
        })
    }
}

impl ControlSystem for ModelSystem {
    fn state_dim(&self) -> usize {
        self.plant.state_dim()
    }

    fn control_dim(&self) -> usize {
        self.plant.n_controls()
    }

    fn feature_dim(&self) -> usize {
        match self.features {
            FeatureMap::State => self.state_dim(),
            FeatureMap::CartPole => observation_dim(self.model.dof() - 1),
        }
    }

    fn step<S: Scalar>(&self, x: &[S], u: &[S]) -> Result<Vec<S>> {
        let m = self.model.lift::<S>();
        let (x1, _) = integrate(|_, x: &[S]| self.plant.rhs_with(&m, u, x), x, 0.0, self.dt, &self.integrator)?;
        Ok(x1)
    }

    fn features<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        match self.features {
            FeatureMap::State => Ok(x.to_vec()),
            FeatureMap::CartPole => observe_state(&self.model.lift::<S>(), x),
        }
    }
}

type Matrix = Vec<Vec<f64>>;

/// Jacobians `(A, B)` of the one-interval transition at `(x, u)`, one dual
/// sweep per state and control coordinate.
pub fn linearize<C: ControlSystem>(sys: &C, x: &[f64], u: &[f64]) -> Result<(Matrix, Matrix)> {
    let (nx, nu) = (x.len(), u.len());
    let xc: Vec<Dual> = x.iter().map(|&v| Dual::constant(v)).collect();
    let uc: Vec<Dual> = u.iter().map(|&v| Dual::constant(v)).collect();
    let mut a = vec![vec![0.0; nx]; nx];
    let mut b = vec![vec![0.0; nu]; nx];
    for j in 0..nx {
        let mut xd = xc.clone();
        xd[j].eps = 1.0;
        for (i, v) in sys.step(&xd, &uc)?.iter().enumerate() {
            a[i][j] = v.eps;
        }
    }
    for j in 0..nu {
        let mut ud = uc.clone();
        ud[j].eps = 1.0;
        for (i, v) in sys.step(&xc, &ud)?.iter().enumerate() {
            b[i][j] = v.eps;
        }
    }
    Ok((a, b))
}

/// Features and their state Jacobian.
pub fn feature_jacobian<C: ControlSystem>(sys: &C, x: &[f64]) -> Result<(Vec<f64>, Matrix)> {
    let nx = x.len();
    let xc: Vec<Dual> = x.iter().map(|&v| Dual::constant(v)).collect();
    let mut phi = None;
    let mut jac = vec![vec![0.0; nx]; sys.feature_dim()];
    for j in 0..nx {
        let mut xd = xc.clone();
        xd[j].eps = 1.0;
        let f = sys.features(&xd)?;
        for (i, v) in f.iter().enumerate() {
            jac[i][j] = v.eps;
        }
        phi.get_or_insert_with(|| f.iter().map(|v| v.re).collect::<Vec<_>>());
    }
    let phi = match phi {
        Some(p) => p,
        None => sys.features(x)?,
    };
    Ok((phi, jac))
}

/// Second derivatives `∂²φ_i/∂x_a∂x_b` of every feature, by nested dual
/// sweeps over the pairs `a ≤ b`.
pub fn feature_hessians<C: ControlSystem>(sys: &C, x: &[f64]) -> Result<Vec<Matrix>> {
    let nx = x.len();
    let mut hess = vec![vec![vec![0.0; nx]; nx]; sys.feature_dim()];
    let xc: Vec<Dual<Dual>> = x.iter().map(|&v| Dual::constant(Dual::constant(v))).collect();
    for a in 0..nx {
        for b in a..nx {
            let mut xd = xc.clone();
            xd[a].re.eps = 1.0;
            xd[b].eps.re = 1.0;
            for (i, v) in sys.features(&xd)?.iter().enumerate() {
                hess[i][a][b] = v.eps.eps;
                hess[i][b][a] = v.eps.eps;
            }
        }
    }
    Ok(hess)
}

/// Every pole within `acos(threshold)` of upright.
pub fn is_upright(obs: &[f64], poles: usize, threshold: f64) -> bool {
    (0..poles).all(|i| obs[3 + 2 * i] >= threshold)
}
