//! Explicit ODE solvers, generic over the scalar type and the right-hand side.
//!
//! Evaluation counts are part of the contract:
//! * Euler: 1 per step; RK4: 4 per step.
//! * Dormand–Prince 5(4): first-same-as-last, so `1 + 6 × (accepted + rejected)`
//!   per solve (the initial slope is evaluated once and every attempted step
//!   costs six more; a rejected step reuses the still-valid first slope).
//! * Fehlberg 4(5): `6 × (accepted + rejected)`; the fourth-order solution
//!   is propagated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Rk4,
    Dopri45,
    Fehlberg45,
}

impl Method {
    pub fn is_adaptive(self) -> bool {
        matches!(self, Method::Dopri45 | Method::Fehlberg45)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::Rk4 => "rk4",
            Method::Dopri45 => "dopri45",
            Method::Fehlberg45 => "fehlberg45",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Method::Euler),
            "rk4" => Ok(Method::Rk4),
            "dopri45" => Ok(Method::Dopri45),
            "fehlberg45" => Ok(Method::Fehlberg45),
            other => Err(Error::Config(format!("unknown integrator '{other}'"))),
        }
    }
}

/// Solver settings. For adaptive methods `dt` is the initial step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub max_evals: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            dt: 0.01,
            abs_tol: 1e-6,
            rel_tol: 1e-6,
            min_step: 1e-12,
            max_step: f64::INFINITY,
            max_evals: u64::MAX,
        }
    }
}

impl IntegratorConfig {
    pub fn fixed(method: Method, dt: f64) -> Self {
        Self {
            method,
            dt,
            ..Self::default()
        }
    }

    pub fn adaptive(method: Method, abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            method,
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    pub fn with_eval_budget(mut self, max_evals: u64) -> Self {
        self.max_evals = max_evals;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad("dt must be positive and finite");
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.min_step > 0.0) || !(self.min_step <= self.max_step) {
            return bad("need 0 < min_step <= max_step");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounter {
    pub rhs_evaluations: u64,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    /// Peak tape size when the solve was recorded for reverse AD.
    pub tape_variables: u64,
}

impl std::ops::AddAssign for EvalCounter {
    fn add_assign(&mut self, o: Self) {
        self.rhs_evaluations += o.rhs_evaluations;
        self.accepted_steps += o.accepted_steps;
        self.rejected_steps += o.rejected_steps;
        self.tape_variables = self.tape_variables.max(o.tape_variables);
    }
}

/// Wraps the user RHS with counting and the evaluation budget.
struct Counted<'a, F> {
    f: &'a mut F,
    counter: EvalCounter,
    budget: u64,
}

impl<F> Counted<'_, F> {
    fn eval<S: Scalar>(&mut self, t: f64, x: &[S]) -> Result<Vec<S>>
    where
        F: FnMut(f64, &[S]) -> Result<Vec<S>>,
    {
        if self.counter.rhs_evaluations >= self.budget {
            return Err(Error::EvalBudget(self.budget));
        }
        // A blown-up stage input would otherwise surface as whatever the RHS
        // makes of NaN.
        check_finite(x, t)?;
        self.counter.rhs_evaluations += 1;
        let dx = (self.f)(t, x)?;
        if dx.len() != x.len() {
            return Err(Error::Dimension {
                what: "state derivative",
                expected: x.len(),
                got: dx.len(),
            });
        }
        Ok(dx)
    }
}

/// `x + h Σ_j b_j k_j` over the nonzero weights.
fn combine<S: Scalar>(x: &[S], h: f64, terms: &[(f64, &[S])]) -> Vec<S> {
    let mut out = x.to_vec();
    for &(b, k) in terms {
        if b == 0.0 {
            continue;
        }
        let w = h * b;
        for (o, &ki) in out.iter_mut().zip(k) {
            *o += ki.scale(w);
        }
    }
    out
}

fn check_finite<S: Scalar>(x: &[S], t: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(t))
    }
}

/// Solve from `t0` to `t1` (either direction). Returns `x(t1)` and the
/// solve's counters.
pub fn integrate<S, F>(
    mut rhs: F,
    x0: &[S],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<(Vec<S>, EvalCounter)>
where
    S: Scalar,
    F: FnMut(f64, &[S]) -> Result<Vec<S>>,
{
    integrate_scoped(&mut rhs, x0, t0, t1, cfg, x0.len())
}

/// As [`integrate`], but the adaptive error estimate only looks at the first
/// `error_dims` components (pure quadrature components are left uncontrolled).
pub fn integrate_scoped<S, F>(
    rhs: &mut F,
    x0: &[S],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    error_dims: usize,
) -> Result<(Vec<S>, EvalCounter)>
where
    S: Scalar,
    F: FnMut(f64, &[S]) -> Result<Vec<S>>,
{
    cfg.validate()?;
    if !(t0.is_finite() && t1.is_finite()) || t0 == t1 {
        return Err(Error::Config(format!("invalid time span [{t0}, {t1}]")));
    }
    check_finite(x0, t0)?;
    let mut c = Counted {
        f: rhs,
        counter: EvalCounter::default(),
        budget: cfg.max_evals,
    };
    let x = match cfg.method {
        Method::Euler | Method::Rk4 => fixed_step(&mut c, x0, t0, t1, cfg)?,
        Method::Dopri45 | Method::Fehlberg45 => {
            adaptive(&mut c, x0, t0, t1, cfg, error_dims.min(x0.len()))?
        }
    };
    Ok((x, c.counter))
}

/// Number of fixed steps covering `span`: `⌈|span|/dt⌉`, ignoring round-off
/// that would add a sliver step.
pub fn fixed_step_count(span: f64, dt: f64) -> usize {
    let r = span.abs() / dt;
    ((r * (1.0 - 1e-12)).ceil() as usize).max(1)
}

fn fixed_step<S, F>(
    c: &mut Counted<'_, F>,
    x0: &[S],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<S>>
where
    S: Scalar,
    F: FnMut(f64, &[S]) -> Result<Vec<S>>,
{
    let n = fixed_step_count(t1 - t0, cfg.dt);
    let h = (t1 - t0) / n as f64;
    let mut x = x0.to_vec();
    for k in 0..n {
        let t = t0 + k as f64 * h;
        x = match cfg.method {
            Method::Euler => {
                let k1 = c.eval(t, &x)?;
                combine(&x, h, &[(1.0, &k1)])
            }
            _ => rk4_step(c, &x, t, h)?,
        };
        c.counter.accepted_steps += 1;
        check_finite(&x, t + h)?;
    }
    Ok(x)
}

fn rk4_step<S, F>(c: &mut Counted<'_, F>, x: &[S], t: f64, h: f64) -> Result<Vec<S>>
where
    S: Scalar,
    F: FnMut(f64, &[S]) -> Result<Vec<S>>,
{
    let k1 = c.eval(t, x)?;
    let k2 = c.eval(t + 0.5 * h, &combine(x, h, &[(0.5, &k1)]))?;
    let k3 = c.eval(t + 0.5 * h, &combine(x, h, &[(0.5, &k2)]))?;
    let k4 = c.eval(t + h, &combine(x, h, &[(1.0, &k3)]))?;
    Ok(combine(
        x,
        h,
        &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)],
    ))
}

/// Explicit embedded pair in Butcher form.
struct Tableau {
    c: &'static [f64],
    a: &'static [&'static [f64]],
    /// Propagated solution weights.
    b: &'static [f64],
    /// Error weights: propagated minus embedded solution.
    e: &'static [f64],
    fsal: bool,
}

const DOPRI: Tableau = Tableau {
    c: &[0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0],
    a: &[
        &[],
        &[1.0 / 5.0],
        &[3.0 / 40.0, 9.0 / 40.0],
        &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
        &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
        &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
        &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ],
    b: &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0],
    e: &[
        35.0 / 384.0 - 5179.0 / 57600.0,
        0.0,
        500.0 / 1113.0 - 7571.0 / 16695.0,
        125.0 / 192.0 - 393.0 / 640.0,
        -2187.0 / 6784.0 + 92097.0 / 339200.0,
        11.0 / 84.0 - 187.0 / 2100.0,
        -1.0 / 40.0,
    ],
    fsal: true,
};

const FEHLBERG: Tableau = Tableau {
    c: &[0.0, 1.0 / 4.0, 3.0 / 8.0, 12.0 / 13.0, 1.0, 1.0 / 2.0],
    a: &[
        &[],
        &[1.0 / 4.0],
        &[3.0 / 32.0, 9.0 / 32.0],
        &[1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0],
        &[439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0],
        &[-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
    ],
    b: &[25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -1.0 / 5.0, 0.0],
    e: &[
        25.0 / 216.0 - 16.0 / 135.0,
        0.0,
        1408.0 / 2565.0 - 6656.0 / 12825.0,
        2197.0 / 4104.0 - 28561.0 / 56430.0,
        -1.0 / 5.0 + 9.0 / 50.0,
        -2.0 / 55.0,
    ],
    fsal: false,
};

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

fn adaptive<S, F>(
    c: &mut Counted<'_, F>,
    x0: &[S],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    error_dims: usize,
) -> Result<Vec<S>>
where
    S: Scalar,
    F: FnMut(f64, &[S]) -> Result<Vec<S>>,
{
    let tab = if cfg.method == Method::Dopri45 {
        &DOPRI
    } else {
        &FEHLBERG
    };
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut x = x0.to_vec();
    let mut t = t0;
    let mut h = cfg.dt.min(cfg.max_step).max(cfg.min_step);
    let stages = tab.c.len();
    let mut first: Option<Vec<S>> = None;

    loop {
        let remaining = span - (t - t0).abs();
        // Land exactly on t1 when the proposed step would reach it (or leave
        // a sliver behind).
        let last = h >= remaining * (1.0 - 1e-12);
        let step = if last { remaining } else { h };
        let hs = dir * step;

        let mut k: Vec<Vec<S>> = Vec::with_capacity(stages);
        k.push(match (&first, tab.fsal) {
            (Some(k1), true) => k1.clone(),
            _ => c.eval(t, &x)?,
        });
        for s in 1..stages {
            let terms: Vec<(f64, &[S])> = tab.a[s].iter().zip(&k).map(|(&a, ks)| (a, ks.as_slice())).collect();
            let xs = combine(&x, hs, &terms);
            k.push(c.eval(t + tab.c[s] * hs, &xs)?);
        }
        let terms: Vec<(f64, &[S])> = tab.b.iter().zip(&k).map(|(&b, ks)| (b, ks.as_slice())).collect();
        let x_new = combine(&x, hs, &terms);

        let mut err = 0.0f64;
        for i in 0..error_dims {
            let est: f64 = tab.e.iter().zip(&k).map(|(&e, ks)| e * ks[i].value()).sum::<f64>() * hs;
            let scale = cfg.abs_tol + cfg.rel_tol * x[i].value().abs().max(x_new[i].value().abs());
            err = err.max((est / scale).abs());
        }
        if !err.is_finite() {
            err = f64::INFINITY;
        }

        if err <= 1.0 {
            c.counter.accepted_steps += 1;
            t = if last { t1 } else { t + hs };
            first = if tab.fsal { k.pop() } else { None };
            x = x_new;
            check_finite(&x, t)?;
            if last {
                return Ok(x);
            }
            let factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            h = (step * factor).min(cfg.max_step);
        } else {
            c.counter.rejected_steps += 1;
            if tab.fsal {
                first = Some(k.swap_remove(0));
            }
            let factor = if err.is_finite() {
                (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0)
            } else {
                MIN_FACTOR
            };
            h = step * factor;
            if h < cfg.min_step {
                return Err(Error::StepUnderflow { t, step: h });
            }
        }
    }
}

/// States at each of `times` (strictly monotone), starting from `x0` at
/// `times[0]`. Each segment is an independent [`integrate`] call.
pub fn integrate_dense<S, F>(
    mut rhs: F,
    x0: &[S],
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<(Vec<Vec<S>>, EvalCounter)>
where
    S: Scalar,
    F: FnMut(f64, &[S]) -> Result<Vec<S>>,
{
    if times.is_empty() {
        return Err(Error::Config("no sample times".into()));
    }
    let dir = if times.len() > 1 { (times[1] - times[0]).signum() } else { 1.0 };
    if times.windows(2).any(|w| (w[1] - w[0]) * dir <= 0.0) {
        return Err(Error::Config("sample times must be strictly monotone".into()));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut total = EvalCounter::default();
    out.push(x0.to_vec());
    for w in times.windows(2) {
        let (x, counter) = integrate(&mut rhs, out.last().unwrap(), w[0], w[1], cfg)?;
        total += counter;
        out.push(x);
    }
    Ok((out, total))
}
