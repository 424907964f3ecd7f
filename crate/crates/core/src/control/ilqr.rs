use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{feature_hessians, feature_jacobian, linearize, ControlBounds, ControlSystem, CostSpec};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IlqrConfig {
    pub max_iters: usize,
    /// Converged when an accepted step improves the cost by less than
    /// `tol · max(1, J)`.
    pub tol: f64,
    /// Levenberg term added to `Q_uu`; starts here and adapts.
    pub mu_init: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub mu_factor: f64,
    /// Step lengths tried in the forward pass: `1, ½, ¼, …`.
    pub max_line_search: usize,
    /// Drop the feature-curvature term of the cost Hessian. Cheaper, but
    /// blind to saddles such as a hanging pole under an upright goal.
    pub gauss_newton: bool,
}

impl Default for IlqrConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-9,
            mu_init: 0.0,
            mu_min: 1e-6,
            mu_max: 1e10,
            mu_factor: 10.0,
            max_line_search: 12,
            gauss_newton: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IlqrResult {
    pub controls: Vec<Vec<f64>>,
    /// Predicted states `x_0 … x_H`.
    pub states: Vec<Vec<f64>>,
    /// Cost of the initial rollout followed by every accepted iterate.
    pub cost_curve: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Why the solver stopped early, if it did.
    pub diagnostic: Option<String>,
}

impl IlqrResult {
    pub fn cost(&self) -> f64 {
        *self.cost_curve.last().unwrap()
    }
}

struct Rollout {
    xs: Vec<Vec<f64>>,
    us: Vec<Vec<f64>>,
    cost: f64,
}

fn stage_cost(w: &[f64], goal: &[f64], phi: &[f64]) -> f64 {
    w.iter().zip(goal).zip(phi).map(|((w, g), p)| w * (g - p) * (g - p)).sum()
}

fn control_cost(r: &[f64], u: &[f64]) -> f64 {
    r.iter().zip(u).map(|(r, u)| r * u * u).sum()
}

/// Simulate `x0` under `policy(k, x_k) -> u_k`, clamping every control.
fn rollout<C, P>(sys: &C, x0: &[f64], h: usize, spec: &CostSpec, bounds: &ControlBounds, mut policy: P) -> Result<Rollout>
where
    C: ControlSystem,
    P: FnMut(usize, &[f64]) -> Vec<f64>,
{
    let mut xs = vec![x0.to_vec()];
    let mut us = Vec::with_capacity(h);
    let mut cost = 0.0;
    for k in 0..h {
        let mut u = policy(k, &xs[k]);
        bounds.clamp(&mut u);
        cost += stage_cost(&spec.q, &spec.goal, &sys.features(&xs[k])?) + control_cost(&spec.r, &u);
        let next = sys.step(&xs[k], &u)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k as f64 + 1.0));
        }
        xs.push(next);
        us.push(u);
    }
    cost += stage_cost(&spec.s, &spec.goal, &sys.features(&xs[h])?);
    if !cost.is_finite() {
        return Err(Error::NonFinite(h as f64));
    }
    Ok(Rollout { xs, us, cost })
}

fn mat(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

/// Expansion `(l_x, l_xx)` of `w ‖goal − φ(x)‖²`; the curvature of `φ`
/// itself is included unless `gauss_newton`.
fn feature_expansion<C: ControlSystem>(
    sys: &C,
    w: &[f64],
    goal: &[f64],
    x: &[f64],
    gauss_newton: bool,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (phi, jac) = feature_jacobian(sys, x)?;
    let j = mat(&jac, x.len());
    let wr = DVector::from_fn(phi.len(), |i, _| 2.0 * w[i] * (phi[i] - goal[i]));
    let wj = DMatrix::from_fn(phi.len(), x.len(), |i, c| 2.0 * w[i] * j[(i, c)]);
    let mut lxx = j.transpose() * wj;
    if !gauss_newton {
        for (i, h) in feature_hessians(sys, x)?.iter().enumerate() {
            if wr[i] != 0.0 {
                lxx += mat(h, x.len()) * wr[i];
            }
        }
    }
    Ok((j.transpose() * wr, lxx))
}

struct Expansion {
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    lx: Vec<DVector<f64>>,
    lxx: Vec<DMatrix<f64>>,
}

fn expand<C: ControlSystem>(sys: &C, spec: &CostSpec, r: &Rollout, gauss_newton: bool) -> Result<Expansion> {
    let h = r.us.len();
    let nx = sys.state_dim();
    let nu = sys.control_dim();
    let mut e = Expansion {
        a: Vec::with_capacity(h),
        b: Vec::with_capacity(h),
        lx: Vec::with_capacity(h + 1),
        lxx: Vec::with_capacity(h + 1),
    };
    for k in 0..=h {
        let (w, x) = (if k < h { &spec.q } else { &spec.s }, &r.xs[k]);
        let (lx, lxx) = feature_expansion(sys, w, &spec.goal, x, gauss_newton)?;
        e.lx.push(lx);
        e.lxx.push(lxx);
        if k < h {
            let (a, b) = linearize(sys, x, &r.us[k])?;
            e.a.push(mat(&a, nx));
            e.b.push(mat(&b, nu));
        }
    }
    Ok(e)
}

/// Feedforward and feedback terms of every stage.
type Gains = (Vec<DVector<f64>>, Vec<DMatrix<f64>>);

/// Riccati-style backward pass. Controls whose step would leave the box are
/// pinned at the bound (zero feedback) and the free ones re-solved.
fn backward(e: &Expansion, spec: &CostSpec, r: &Rollout, bounds: &ControlBounds, mu: f64) -> Option<Gains> {
    let h = r.us.len();
    let nu = spec.r.len();
    let mut vx = e.lx[h].clone();
    let mut vxx = e.lxx[h].clone();
    let mut ks = vec![DVector::zeros(nu); h];
    let mut kks = vec![DMatrix::zeros(nu, vx.len()); h];
    for k in (0..h).rev() {
        let (a, b) = (&e.a[k], &e.b[k]);
        let u = DVector::from_column_slice(&r.us[k]);
        let rdiag = DVector::from_column_slice(&spec.r);
        let qx = &e.lx[k] + a.transpose() * &vx;
        let qu = rdiag.component_mul(&u) * 2.0 + b.transpose() * &vx;
        let qxx = &e.lxx[k] + a.transpose() * &vxx * a;
        let qux = b.transpose() * &vxx * a;
        let mut quu = b.transpose() * &vxx * b;
        for i in 0..nu {
            quu[(i, i)] += 2.0 * spec.r[i];
        }
        let mut quu_reg = quu.clone();
        for i in 0..nu {
            quu_reg[(i, i)] += mu;
        }

        let chol = quu_reg.clone().cholesky()?;
        let mut kff = -chol.solve(&qu);
        let mut kfb = -chol.solve(&qux);

        let clamped: Vec<bool> = (0..nu)
            .map(|i| {
                let t = r.us[k][i] + kff[i];
                t < bounds.lower[i] || t > bounds.upper[i]
            })
            .collect();
        if clamped.iter().any(|&c| c) {
            let free: Vec<usize> = (0..nu).filter(|&i| !clamped[i]).collect();
            let mut step = DVector::zeros(nu);
            for i in 0..nu {
                if clamped[i] {
                    step[i] = if r.us[k][i] + kff[i] < bounds.lower[i] {
                        bounds.lower[i] - r.us[k][i]
                    } else {
                        bounds.upper[i] - r.us[k][i]
                    };
                }
            }
            kfb = DMatrix::zeros(nu, vx.len());
            if !free.is_empty() {
                let qff = DMatrix::from_fn(free.len(), free.len(), |i, j| quu_reg[(free[i], free[j])]);
                let cf = qff.cholesky()?;
                let rhs = DVector::from_fn(free.len(), |i, _| {
                    qu[free[i]] + (0..nu).filter(|&c| clamped[c]).map(|c| quu_reg[(free[i], c)] * step[c]).sum::<f64>()
                });
                let sol = -cf.solve(&rhs);
                let fb = -cf.solve(&DMatrix::from_fn(free.len(), vx.len(), |i, j| qux[(free[i], j)]));
                for (fi, &i) in free.iter().enumerate() {
                    step[i] = sol[fi];
                    kfb.set_row(i, &fb.row(fi));
                }
            }
            kff = step;
        }

        vx = &qx + kfb.transpose() * &quu * &kff + kfb.transpose() * &qu + qux.transpose() * &kff;
        vxx = &qxx + kfb.transpose() * &quu * &kfb + kfb.transpose() * &qux + qux.transpose() * &kfb;
        vxx = (&vxx + vxx.transpose()) * 0.5;
        ks[k] = kff;
        kks[k] = kfb;
    }
    Some((ks, kks))
}

/// Iterative LQR from `x0` over `u_init.len()` intervals.
pub fn ilqr<C: ControlSystem>(
    sys: &C,
    x0: &[f64],
    u_init: &[Vec<f64>],
    spec: &CostSpec,
    bounds: &ControlBounds,
    cfg: &IlqrConfig,
) -> Result<IlqrResult> {
    spec.validate()?;
    bounds.validate()?;
    let h = u_init.len();
    if h == 0 {
        return Err(Error::Config("horizon must be at least one interval".into()));
    }
    if x0.len() != sys.state_dim() {
        return Err(Error::Dimension {
            what: "initial state",
            expected: sys.state_dim(),
            got: x0.len(),
        });
    }
    if spec.goal.len() != sys.feature_dim() || spec.r.len() != sys.control_dim() || bounds.dim() != sys.control_dim() {
        return Err(Error::Dimension {
            what: "cost or bounds vs system",
            expected: sys.feature_dim(),
            got: spec.goal.len(),
        });
    }
    if let Some(u) = u_init.iter().find(|u| u.len() != sys.control_dim()) {
        return Err(Error::Dimension {
            what: "initial control",
            expected: sys.control_dim(),
            got: u.len(),
        });
    }

    let mut cur = rollout(sys, x0, h, spec, bounds, |k, _| u_init[k].clone())?;
    let mut curve = vec![cur.cost];
    let mut mu = cfg.mu_init;
    let mut converged = false;
    let mut diagnostic = None;
    let mut iterations = 0;
    let mut expansion = None;

    while iterations < cfg.max_iters {
        if expansion.is_none() {
            expansion = Some(expand(sys, spec, &cur, cfg.gauss_newton)?);
        }
        let e = expansion.as_ref().unwrap();
        let Some((ks, kks)) = backward(e, spec, &cur, bounds, mu) else {
            mu = (mu * cfg.mu_factor).max(cfg.mu_min);
            if mu > cfg.mu_max {
                diagnostic = Some("regularization overflow in backward pass".into());
                break;
            }
            continue;
        };
        if ks.iter().all(|k| k.amax() <= 1e-12 * (1.0 + cur.us.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())))) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..cfg.max_line_search {
            let trial = rollout(sys, x0, h, spec, bounds, |k, x| {
                let dx = DVector::from_fn(x.len(), |i, _| x[i] - cur.xs[k][i]);
                let du = &ks[k] * alpha + &kks[k] * dx;
                cur.us[k].iter().zip(du.iter()).map(|(u, d)| u + d).collect()
            });
            match trial {
                Ok(t) if t.cost < cur.cost => {
                    accepted = Some(t);
                    break;
                }
                Ok(_) | Err(Error::NonFinite(_)) | Err(Error::SingularInertia { .. }) => {}
                Err(err) => return Err(err),
            }
            alpha *= 0.5;
        }

        match accepted {
            Some(t) => {
                let improvement = cur.cost - t.cost;
                cur = t;
                curve.push(cur.cost);
                expansion = None;
                mu = if mu / cfg.mu_factor < cfg.mu_min { 0.0 } else { mu / cfg.mu_factor };
                if improvement < cfg.tol * cur.cost.max(1.0) {
                    converged = true;
                    break;
                }
            }
            None => {
                mu = (mu * cfg.mu_factor).max(cfg.mu_min);
                if mu > cfg.mu_max {
                    diagnostic = Some("regularization overflow: no descent step found".into());
                    break;
                }
            }
        }
    }
    if !converged && diagnostic.is_none() {
        diagnostic = Some(format!("iteration limit {} reached", cfg.max_iters));
    }
    Ok(IlqrResult {
        controls: cur.us,
        states: cur.xs,
        cost_curve: curve,
        iterations,
        converged,
        diagnostic,
    })
}
