//! Limited-memory BFGS with an Armijo–Wolfe backtracking line search and
//! optional box bounds (trial points are projected onto the box).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub memory: usize,
    pub max_iters: usize,
    /// Converged when the projected gradient's max-norm drops below this.
    pub grad_tol: f64,
    /// Stop (without claiming convergence) when the relative loss decrease
    /// of an accepted step falls below this.
    pub f_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 100,
            grad_tol: 1e-8,
            f_tol: 0.0,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
            lower: None,
            upper: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config("need 0 < c1 < c2 < 1".into()));
        }
        if self.memory == 0 {
            return Err(Error::Config("memory must be at least 1".into()));
        }
        for b in [&self.lower, &self.upper].into_iter().flatten() {
            if b.len() != dim {
                return Err(Error::Dimension {
                    what: "bounds",
                    expected: dim,
                    got: b.len(),
                });
            }
        }
        if let (Some(lo), Some(hi)) = (&self.lower, &self.upper) {
            if lo.iter().zip(hi).any(|(l, h)| l > h) {
                return Err(Error::Config("lower bound exceeds upper bound".into()));
            }
        }
        Ok(())
    }

    fn project(&self, x: &mut [f64]) {
        if let Some(lo) = &self.lower {
            x.iter_mut().zip(lo).for_each(|(v, l)| *v = v.max(*l));
        }
        if let Some(hi) = &self.upper {
            x.iter_mut().zip(hi).for_each(|(v, h)| *v = v.min(*h));
        }
    }

    /// Coordinates sitting on a bound with the gradient pushing outward.
    fn pinned(&self, x: &[f64], g: &[f64]) -> Vec<bool> {
        (0..x.len())
            .map(|i| {
                let at_lo = self.lower.as_ref().is_some_and(|l| x[i] <= l[i] && g[i] > 0.0);
                let at_hi = self.upper.as_ref().is_some_and(|u| x[i] >= u[i] && g[i] < 0.0);
                at_lo || at_hi
            })
            .collect()
    }

    fn contains(&self, x: &[f64]) -> bool {
        let mut p = x.to_vec();
        self.project(&mut p);
        p == x
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradTol,
    FTol,
    MaxIters,
    LineSearchFailed,
}

/// One accepted step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub step_length: f64,
    pub loss_before: f64,
    pub loss_after: f64,
    /// `gᵀ(x_new − x)` at the start of the step.
    pub directional: f64,
    pub armijo: bool,
    pub curvature: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub loss: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Loss at every accepted iterate, starting with the initial point.
    pub curve: Vec<f64>,
    /// Every accepted iterate, starting with the initial point.
    pub iterates: Vec<Vec<f64>>,
    pub steps: Vec<StepRecord>,
}

impl OptimResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::GradTol
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Max-norm of `P(x − g) − x`; equals `‖g‖∞` without bounds.
fn projected_gradient_norm(cfg: &OptimizerConfig, x: &[f64], g: &[f64]) -> f64 {
    let mut p: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
    cfg.project(&mut p);
    p.iter().zip(x).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

/// Minimize `f`, which returns the loss and its gradient.
pub fn minimize<F>(mut f: F, x0: &[f64], cfg: &OptimizerConfig) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate(x0.len())?;
    if !cfg.contains(x0) {
        return Err(Error::Config("initial point outside bounds".into()));
    }
    let mut evaluations = 1;
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(fx));
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut res = OptimResult {
        x: Vec::new(),
        loss: fx,
        grad: Vec::new(),
        iterations: 0,
        evaluations: 0,
        termination: Termination::MaxIters,
        curve: vec![fx],
        iterates: vec![x.clone()],
        steps: Vec::new(),
    };

    let mut iteration = 0;
    loop {
        if projected_gradient_norm(cfg, &x, &g) <= cfg.grad_tol {
            res.termination = Termination::GradTol;
            break;
        }
        if iteration >= cfg.max_iters {
            res.termination = Termination::MaxIters;
            break;
        }

        let mut accepted = None;
        for attempt in 0..2 {
            // Coordinates pinned at a bound by the gradient stay out of the
            // quasi-Newton step.
            let pinned = cfg.pinned(&x, &g);
            let g_free: Vec<f64> = g.iter().zip(&pinned).map(|(v, &p)| if p { 0.0 } else { *v }).collect();
            let mut d = if attempt == 0 && !history.is_empty() {
                two_loop(&g_free, &history)
            } else {
                g_free.iter().map(|v| -v).collect()
            };
            d.iter_mut().zip(&pinned).filter(|(_, &p)| p).for_each(|(v, _)| *v = 0.0);
            let first_step = if history.is_empty() || attempt > 0 {
                (1.0 / inf_norm(&d)).min(1.0)
            } else {
                1.0
            };
            match line_search(&mut f, cfg, &x, fx, &g, &d, first_step, &mut evaluations)? {
                Some(step) => {
                    accepted = Some(step);
                    break;
                }
                None if history.is_empty() => break,
                None => history.clear(),
            }
        }
        let Some((x_new, f_new, g_new, record)) = accepted else {
            res.termination = Termination::LineSearchFailed;
            break;
        };
        iteration += 1;

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let decrease = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        res.curve.push(fx);
        res.iterates.push(x.clone());
        res.steps.push(StepRecord {
            iteration,
            ..record
        });
        if cfg.f_tol > 0.0 && decrease <= cfg.f_tol * fx.abs().max(1e-300) {
            res.termination = if projected_gradient_norm(cfg, &x, &g) <= cfg.grad_tol {
                Termination::GradTol
            } else {
                Termination::FTol
            };
            break;
        }
    }
    res.x = x;
    res.loss = fx;
    res.grad = g;
    res.iterations = iteration;
    res.evaluations = evaluations;
    Ok(res)
}

/// `−H g` from the stored curvature pairs.
fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alpha = vec![0.0; history.len()];
    for (k, (s, y, rho)) in history.iter().enumerate().rev() {
        alpha[k] = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= alpha[k] * yi);
    }
    let (s, y, _) = history.back().unwrap();
    let gamma = dot(s, y) / dot(y, y);
    q.iter_mut().for_each(|v| *v *= gamma);
    for (k, (s, y, rho)) in history.iter().enumerate() {
        let beta = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (alpha[k] - beta) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

type Accepted = (Vec<f64>, f64, Vec<f64>, StepRecord);

/// Backtracking until Armijo holds; if the first Armijo point also violates
/// the curvature condition and was reached without backtracking, the step
/// is expanded while both conditions improve. Returns `None` on failure.
#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    f: &mut F,
    cfg: &OptimizerConfig,
    x: &[f64],
    fx: f64,
    g: &[f64],
    d: &[f64],
    first_step: f64,
    evaluations: &mut usize,
) -> Result<Option<Accepted>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let gd = dot(g, d);
    if !(gd < 0.0) {
        return Ok(None);
    }
    let trial = |alpha: f64| {
        let mut xt: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
        cfg.project(&mut xt);
        xt
    };
    let mut eval = |xt: &[f64]| -> Result<Option<(f64, Vec<f64>)>> {
        *evaluations += 1;
        match f(xt) {
            Ok((v, gr)) if v.is_finite() && gr.iter().all(|e| e.is_finite()) => Ok(Some((v, gr))),
            Ok(_) | Err(Error::NonFinite(_)) | Err(Error::StepUnderflow { .. }) | Err(Error::NonPhysical(_))
            | Err(Error::SingularInertia { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };

    let mut alpha = first_step;
    let mut best: Option<Accepted> = None;
    let mut backtracked = false;
    for _ in 0..cfg.max_line_search {
        let xt = trial(alpha);
        let moved: Vec<f64> = xt.iter().zip(x).map(|(a, b)| a - b).collect();
        let directional = dot(g, &moved);
        if !(directional < 0.0) {
            // Projection removed every descent component at this length.
            alpha *= 0.5;
            backtracked = true;
            continue;
        }
        match eval(&xt)? {
            Some((ft, gt)) if ft <= fx + cfg.c1 * directional => {
                let curvature = dot(&gt, d) >= cfg.c2 * gd;
                let improves = best.as_ref().is_none_or(|b| ft < b.1);
                if improves {
                    best = Some((
                        xt,
                        ft,
                        gt,
                        StepRecord {
                            iteration: 0,
                            step_length: alpha,
                            loss_before: fx,
                            loss_after: ft,
                            directional,
                            armijo: true,
                            curvature,
                        },
                    ));
                }
                if curvature || backtracked || !improves {
                    break;
                }
                alpha *= 2.0;
            }
            _ => {
                if best.is_some() {
                    break;
                }
                alpha *= 0.5;
                backtracked = true;
            }
        }
    }
    Ok(best)
}
