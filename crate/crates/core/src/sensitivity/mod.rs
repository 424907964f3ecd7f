//! Gradients of ODE solutions with respect to model parameters: symmetric
//! finite differences, reverse-mode AD through the solver, coupled forward
//! sensitivities and the adjoint method.
//!
//! Inner Jacobians of the dynamics are always taken with dual-number sweeps,
//! so only reverse AD ever touches the tape.

use serde::{Deserialize, Serialize};

use crate::dynamics::Plant;
use crate::error::{Error, Result};
use crate::integrate::{integrate_dense, integrate_scoped, EvalCounter, IntegratorConfig};
use crate::scalar::{Dual, Scalar, Tape, Var};

/// `ẋ = f(x, t; θ)` evaluable at any scalar type.
pub trait Dynamics {
    fn state_dim(&self) -> usize;
    fn n_params(&self) -> usize;
    fn eval<S: Scalar>(&self, theta: &[S], t: f64, x: &[S]) -> Result<Vec<S>>;
}

impl<D: Dynamics> Dynamics for &D {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn n_params(&self) -> usize {
        (**self).n_params()
    }
    fn eval<S: Scalar>(&self, theta: &[S], t: f64, x: &[S]) -> Result<Vec<S>> {
        (**self).eval(theta, t, x)
    }
}

/// A plant driven by a constant control.
#[derive(Clone, Copy, Debug)]
pub struct Driven<'a> {
    pub plant: &'a Plant,
    pub u: &'a [f64],
}

impl Dynamics for Driven<'_> {
    fn state_dim(&self) -> usize {
        self.plant.state_dim()
    }
    fn n_params(&self) -> usize {
        self.plant.n_params()
    }
    fn eval<S: Scalar>(&self, theta: &[S], _t: f64, x: &[S]) -> Result<Vec<S>> {
        let u: Vec<S> = self.u.iter().map(|&v| S::from_f64(v)).collect();
        self.plant.rhs(theta, &u, x)
    }
}

/// Unforced plant (all controls zero).
impl Dynamics for Plant {
    fn state_dim(&self) -> usize {
        Plant::state_dim(self)
    }
    fn n_params(&self) -> usize {
        Plant::n_params(self)
    }
    fn eval<S: Scalar>(&self, theta: &[S], _t: f64, x: &[S]) -> Result<Vec<S>> {
        self.rhs(theta, &vec![S::zero(); self.n_controls()], x)
    }
}

/// One term `w ‖x(t) − x*‖²` of a trajectory loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    pub target: Vec<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Loss {
    /// Strictly increasing in time.
    pub samples: Vec<Sample>,
}

impl Loss {
    /// Unit-weight squared distance to `targets` at `times`.
    pub fn squared(times: &[f64], targets: &[Vec<f64>]) -> Self {
        Self {
            samples: times
                .iter()
                .zip(targets)
                .map(|(&time, target)| Sample {
                    time,
                    target: target.clone(),
                    weight: 1.0,
                })
                .collect(),
        }
    }

    fn term<S: Scalar>(s: &Sample, x: &[S]) -> S {
        let mut acc = S::zero();
        for (xi, &ti) in x.iter().zip(&s.target) {
            let d = *xi - S::from_f64(ti);
            acc += d * d;
        }
        acc.scale(s.weight)
    }

    /// `∂c/∂x` of one term.
    fn term_grad(s: &Sample, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&s.target).map(|(xi, ti)| 2.0 * s.weight * (xi - ti)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    /// `∂x(t1)/∂θ`.
    FinalJacobian,
    /// `dL/dθ`.
    Loss(Loss),
}

#[derive(Clone, Debug)]
pub struct GradientRequest<D> {
    pub dynamics: D,
    pub theta: Vec<f64>,
    pub x0: Vec<f64>,
    pub t0: f64,
    pub t1: f64,
    pub cfg: IntegratorConfig,
    pub target: Target,
    /// Node limit for reverse AD.
    pub tape_budget: usize,
}

pub const DEFAULT_TAPE_BUDGET: usize = 50_000_000;

impl<D: Dynamics> GradientRequest<D> {
    pub fn new(dynamics: D, theta: Vec<f64>, x0: Vec<f64>, t0: f64, t1: f64, cfg: IntegratorConfig, target: Target) -> Self {
        Self {
            dynamics,
            theta,
            x0,
            t0,
            t1,
            cfg,
            target,
            tape_budget: DEFAULT_TAPE_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dim = |what, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::Dimension { what, expected, got })
            }
        };
        dim("theta", self.dynamics.n_params(), self.theta.len())?;
        dim("initial state", self.dynamics.state_dim(), self.x0.len())?;
        if !(self.t1 > self.t0) {
            return Err(Error::Request("need t1 > t0".into()));
        }
        if let Target::Loss(loss) = &self.target {
            let mut prev = f64::NEG_INFINITY;
            for s in &loss.samples {
                dim("sample target", self.x0.len(), s.target.len())?;
                if !(s.time > prev && s.time >= self.t0 && s.time <= self.t1) {
                    return Err(Error::Request(format!(
                        "sample time {} out of order or outside [{}, {}]",
                        s.time, self.t0, self.t1
                    )));
                }
                if !(s.weight >= 0.0) {
                    return Err(Error::Request("negative sample weight".into()));
                }
                prev = s.time;
            }
        }
        self.cfg.validate()
    }

    /// Output grid `[t0, samples…, t1]` and the grid index of each sample.
    fn grid(&self) -> (Vec<f64>, Vec<usize>) {
        let mut grid = vec![self.t0];
        let mut idx = Vec::new();
        if let Target::Loss(loss) = &self.target {
            for s in &loss.samples {
                if s.time > *grid.last().unwrap() {
                    grid.push(s.time);
                }
                idx.push(grid.len() - 1);
            }
        }
        if *grid.last().unwrap() < self.t1 {
            grid.push(self.t1);
        }
        (grid, idx)
    }

    fn loss_spec(&self) -> Option<&Loss> {
        match &self.target {
            Target::Loss(l) => Some(l),
            Target::FinalJacobian => None,
        }
    }

    fn solve<S: Scalar>(&self, theta: &[S], x0: &[S], grid: &[f64]) -> Result<(Vec<Vec<S>>, EvalCounter)> {
        integrate_dense(|t, x: &[S]| self.dynamics.eval(theta, t, x), x0, grid, &self.cfg)
    }

    fn loss_of<S: Scalar>(&self, states: &[Vec<S>], idx: &[usize]) -> S {
        let mut acc = S::zero();
        if let Some(loss) = self.loss_spec() {
            for (s, &k) in loss.samples.iter().zip(idx) {
                acc += Loss::term(s, &states[k]);
            }
        }
        acc
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradMethod {
    Fd,
    Autodiff,
    Coupled,
    Adjoint,
}

impl GradMethod {
    pub const ALL: [GradMethod; 4] = [GradMethod::Fd, GradMethod::Autodiff, GradMethod::Coupled, GradMethod::Adjoint];

    pub fn name(self) -> &'static str {
        match self {
            GradMethod::Fd => "fd",
            GradMethod::Autodiff => "autodiff",
            GradMethod::Coupled => "coupled",
            GradMethod::Adjoint => "adjoint",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown gradient method '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientReport {
    pub method: GradMethod,
    /// `|x| × |θ|`, row-major, for Jacobian targets.
    pub jacobian: Option<Vec<Vec<f64>>>,
    /// `dL/dθ` for loss targets.
    pub gradient: Option<Vec<f64>>,
    /// Loss value at θ (loss targets only).
    pub loss: Option<f64>,
    pub counters: EvalCounter,
}

impl GradientReport {
    /// Jacobian entries (row-major) or gradient entries, whichever is present.
    pub fn values(&self) -> Vec<f64> {
        match (&self.jacobian, &self.gradient) {
            (Some(j), _) => j.iter().flatten().copied().collect(),
            (None, Some(g)) => g.clone(),
            (None, None) => Vec::new(),
        }
    }

    fn check_finite(self) -> Result<Self> {
        match self.values().into_iter().find(|v| !v.is_finite()) {
            Some(v) => Err(Error::NonFinite(v)),
            None => Ok(self),
        }
    }
}

/// Default finite-difference step for coordinate value `theta`.
pub fn fd_step(theta: f64) -> f64 {
    1e-5 * theta.abs().max(1.0)
}

/// Dispatch to the selected engine. `fd` uses [`fd_step`] per coordinate.
pub fn gradient<D: Dynamics>(req: &GradientRequest<D>, method: GradMethod) -> Result<GradientReport> {
    match method {
        GradMethod::Fd => grad_fd(req, None),
        GradMethod::Autodiff => grad_reverse_ad(req),
        GradMethod::Coupled => grad_coupled(req),
        GradMethod::Adjoint => grad_adjoint(req),
    }
}

/// Symmetric difference quotients; exactly `2|θ|` forward solves. `h` fixes
/// the step for every coordinate, `None` selects [`fd_step`].
pub fn grad_fd<D: Dynamics>(req: &GradientRequest<D>, h: Option<f64>) -> Result<GradientReport> {
    req.validate()?;
    if let Some(h) = h {
        if !(h > 0.0) {
            return Err(Error::Request("finite-difference step must be positive".into()));
        }
    }
    let (grid, idx) = req.grid();
    let p = req.theta.len();
    let mut counters = EvalCounter::default();
    let mut columns = Vec::with_capacity(p);
    for d in 0..p {
        let step = h.unwrap_or_else(|| fd_step(req.theta[d]));
        let mut eval = |sign: f64| -> Result<Vec<f64>> {
            let mut th = req.theta.clone();
            th[d] += sign * step;
            let (xs, c) = req.solve(&th, &req.x0, &grid)?;
            counters += c;
            Ok(match req.loss_spec() {
                Some(_) => vec![req.loss_of(&xs, &idx)],
                None => xs.last().unwrap().clone(),
            })
        };
        let plus = eval(1.0)?;
        let minus = eval(-1.0)?;
        columns.push(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * step)).collect::<Vec<f64>>());
    }
    let report = match req.loss_spec() {
        Some(_) => {
            let (xs, _) = req.solve(&req.theta, &req.x0, &grid)?;
            GradientReport {
                method: GradMethod::Fd,
                jacobian: None,
                gradient: Some(columns.iter().map(|c| c[0]).collect()),
                loss: Some(req.loss_of(&xs, &idx)),
                counters,
            }
        }
        None => GradientReport {
            method: GradMethod::Fd,
            jacobian: Some(transpose(&columns, req.x0.len())),
            gradient: None,
            loss: None,
            counters,
        },
    };
    report.check_finite()
}

fn transpose(columns: &[Vec<f64>], rows: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|i| columns.iter().map(|c| c[i]).collect()).collect()
}

/// Reverse sweeps over a tape recorded through a fixed-step solve.
pub fn grad_reverse_ad<D: Dynamics>(req: &GradientRequest<D>) -> Result<GradientReport> {
    req.validate()?;
    if req.cfg.method.is_adaptive() {
        return Err(Error::Request(format!(
            "reverse AD requires a fixed-step integrator, got {}",
            req.cfg.method.name()
        )));
    }
    let (grid, idx) = req.grid();
    let session = Tape::session(req.tape_budget)?;
    let theta: Vec<Var> = req.theta.iter().map(|&v| Var::input(v)).collect();
    let x0: Vec<Var> = req.x0.iter().map(|&v| Var::constant(v)).collect();
    let (xs, mut counters) = req.solve(&theta, &x0, &grid)?;
    session.check()?;
    counters.tape_variables = session.len() as u64;

    let grad_of = |out: Var| -> Vec<f64> {
        let g = session.gradient(out);
        theta.iter().map(|t| g.wrt(*t)).collect()
    };
    let report = match req.loss_spec() {
        Some(_) => {
            let l = req.loss_of(&xs, &idx);
            session.check()?;
            counters.tape_variables = session.len() as u64;
            GradientReport {
                method: GradMethod::Autodiff,
                jacobian: None,
                gradient: Some(grad_of(l)),
                loss: Some(l.value()),
                counters,
            }
        }
        None => GradientReport {
            method: GradMethod::Autodiff,
            jacobian: Some(xs.last().unwrap().iter().map(|&xi| grad_of(xi)).collect()),
            gradient: None,
            loss: None,
            counters,
        },
    };
    report.check_finite()
}

/// Integrates `[x, ∂x/∂θ]` with `Ṡ = (∂f/∂x) S + ∂f/∂θ`, one directional
/// dual sweep per parameter.
pub fn grad_coupled<D: Dynamics>(req: &GradientRequest<D>) -> Result<GradientReport> {
    req.validate()?;
    let (grid, idx) = req.grid();
    let n = req.x0.len();
    let p = req.theta.len();
    let mut s0 = req.x0.clone();
    s0.resize(augmented_coupled_dim(n, p), 0.0);
    let rhs = |t: f64, s: &[f64]| coupled_rhs(&req.dynamics, &req.theta, t, s, n);
    let (ss, counters) = integrate_dense(rhs, &s0, &grid, &req.cfg)?;
    let sens = |k: usize, i: usize, d: usize| ss[k][n + d * n + i];

    let report = match req.loss_spec() {
        Some(loss) => {
            let mut g = vec![0.0; p];
            let mut value = 0.0;
            for (s, &k) in loss.samples.iter().zip(&idx) {
                let x = &ss[k][..n];
                value += Loss::term(s, x);
                let dc = Loss::term_grad(s, x);
                for (d, gd) in g.iter_mut().enumerate() {
                    *gd += (0..n).map(|i| dc[i] * sens(k, i, d)).sum::<f64>();
                }
            }
            GradientReport {
                method: GradMethod::Coupled,
                jacobian: None,
                gradient: Some(g),
                loss: Some(value),
                counters,
            }
        }
        None => {
            let last = ss.len() - 1;
            GradientReport {
                method: GradMethod::Coupled,
                jacobian: Some((0..n).map(|i| (0..p).map(|d| sens(last, i, d)).collect()).collect()),
                gradient: None,
                loss: None,
                counters,
            }
        }
    };
    report.check_finite()
}

/// `|x| (1 + |θ|)`.
pub fn augmented_coupled_dim(state: usize, params: usize) -> usize {
    state * (1 + params)
}

/// `2|x| + |θ|`: state, costate and parameter quadrature.
pub fn augmented_adjoint_dim(state: usize, params: usize) -> usize {
    2 * state + params
}

fn coupled_rhs<D: Dynamics>(dynamics: &D, theta: &[f64], t: f64, s: &[f64], n: usize) -> Result<Vec<f64>> {
    let p = theta.len();
    let x = &s[..n];
    if p == 0 {
        return dynamics.eval(theta, t, x);
    }
    let mut out = vec![0.0; s.len()];
    for d in 0..p {
        let xd: Vec<Dual> = (0..n).map(|i| Dual::new(x[i], s[n + d * n + i])).collect();
        let td: Vec<Dual> = (0..p).map(|j| Dual::new(theta[j], if j == d { 1.0 } else { 0.0 })).collect();
        let f = dynamics.eval(&td, t, &xd)?;
        for i in 0..n {
            if d == 0 {
                out[i] = f[i].re;
            }
            out[n + d * n + i] = f[i].eps;
        }
    }
    Ok(out)
}

/// Forward solve storing states at sample times, then a segmented backward
/// solve of `[x, a, g]` with `ȧ = −aᵀ∂f/∂x`, `ġ = −aᵀ∂f/∂θ`; the costate jumps
/// by `∂c/∂x` at every sample time and `x` is reset to the stored forward
/// state at each segment boundary.
pub fn grad_adjoint<D: Dynamics>(req: &GradientRequest<D>) -> Result<GradientReport> {
    req.validate()?;
    let loss = req
        .loss_spec()
        .ok_or_else(|| Error::Request("the adjoint engine needs a loss target".into()))?;
    let (grid, idx) = req.grid();
    let n = req.x0.len();
    let p = req.theta.len();
    let (xs, mut counters) = req.solve(&req.theta, &req.x0, &grid)?;

    let mut a = vec![0.0; n];
    let mut g = vec![0.0; p];
    let mut rhs = |t: f64, s: &[f64]| adjoint_rhs(&req.dynamics, &req.theta, t, s, n);
    for k in (0..grid.len()).rev() {
        for (s, _) in loss.samples.iter().zip(&idx).filter(|(_, &i)| i == k) {
            for (ai, di) in a.iter_mut().zip(Loss::term_grad(s, &xs[k])) {
                *ai += di;
            }
        }
        if k == 0 {
            break;
        }
        let mut s0 = Vec::with_capacity(augmented_adjoint_dim(n, p));
        s0.extend_from_slice(&xs[k]);
        s0.extend_from_slice(&a);
        s0.extend_from_slice(&g);
        let (s, c) = integrate_scoped(&mut rhs, &s0, grid[k], grid[k - 1], &req.cfg, 2 * n)?;
        counters += c;
        a.copy_from_slice(&s[n..2 * n]);
        g.copy_from_slice(&s[2 * n..]);
    }
    GradientReport {
        method: GradMethod::Adjoint,
        jacobian: None,
        gradient: Some(g),
        loss: Some(req.loss_of(&xs, &idx)),
        counters,
    }
    .check_finite()
}

fn adjoint_rhs<D: Dynamics>(dynamics: &D, theta: &[f64], t: f64, s: &[f64], n: usize) -> Result<Vec<f64>> {
    let x = &s[..n];
    let a = &s[n..2 * n];
    let (f, fx, ft) = jacobians(dynamics, theta, t, x)?;
    let mut out = f;
    out.extend((0..n).map(|j| -(0..n).map(|i| a[i] * fx[i][j]).sum::<f64>()));
    out.extend((0..theta.len()).map(|k| -(0..n).map(|i| a[i] * ft[i][k]).sum::<f64>()));
    Ok(out)
}

type Matrix = Vec<Vec<f64>>;

/// `(f, ∂f/∂x, ∂f/∂θ)` by one dual sweep per input column.
pub fn jacobians<D: Dynamics>(dynamics: &D, theta: &[f64], t: f64, x: &[f64]) -> Result<(Vec<f64>, Matrix, Matrix)> {
    let n = x.len();
    let p = theta.len();
    let th_const: Vec<Dual> = theta.iter().map(|&v| Dual::constant(v)).collect();
    let x_const: Vec<Dual> = x.iter().map(|&v| Dual::constant(v)).collect();
    let mut fx = vec![vec![0.0; n]; n];
    let mut ft = vec![vec![0.0; p]; n];
    let mut f = None;
    for j in 0..n {
        let mut xd = x_const.clone();
        xd[j].eps = 1.0;
        let col = dynamics.eval(&th_const, t, &xd)?;
        for i in 0..n {
            fx[i][j] = col[i].eps;
        }
        f.get_or_insert_with(|| col.iter().map(|c| c.re).collect::<Vec<_>>());
    }
    for k in 0..p {
        let mut td = th_const.clone();
        td[k].eps = 1.0;
        let col = dynamics.eval(&td, t, &x_const)?;
        for i in 0..n {
            ft[i][k] = col[i].eps;
        }
        f.get_or_insert_with(|| col.iter().map(|c| c.re).collect::<Vec<_>>());
    }
    let f = match f {
        Some(f) => f,
        None => dynamics.eval(theta, t, x)?,
    };
    Ok((f, fx, ft))
}

/// `(∂f/∂x, ∂f/∂θ)` of the plant right-hand side at `(x, u)`.
pub fn jac_dynamics(plant: &Plant, theta: &[f64], x: &[f64], t: f64, u: &[f64]) -> Result<(Matrix, Matrix)> {
    if x.len() != plant.state_dim() {
        return Err(Error::Dimension {
            what: "flat state",
            expected: plant.state_dim(),
            got: x.len(),
        });
    }
    let (_, fx, ft) = jacobians(&Driven { plant, u }, theta, t, x)?;
    Ok((fx, ft))
}
