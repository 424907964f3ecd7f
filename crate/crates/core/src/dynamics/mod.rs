//! Forward kinematics, articulated-body forward dynamics and recursive
//! Newton–Euler inverse dynamics.
//!
//! All recursions run in body coordinates. Gravity enters as a fictitious
//! upward acceleration of the world.

mod rhs;

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::scalar::Scalar;
use crate::spatial::{
    Plucker, Quat, SpatialForce, SpatialMotion, SpatialTransform, Vec3,
};

pub use rhs::{ode_rhs, ControlMap, Plant};

/// Generalized positions and velocities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State<S = f64> {
    pub q: Vec<S>,
    pub qd: Vec<S>,
}

impl<S: Scalar> State<S> {
    pub fn new(q: Vec<S>, qd: Vec<S>) -> Self {
        Self { q, qd }
    }

    pub fn zeros(dof: usize) -> Self {
        Self::new(vec![S::zero(); dof], vec![S::zero(); dof])
    }

    /// Split `x = [q, q̇]`.
    pub fn from_flat(x: &[S]) -> Self {
        let n = x.len() / 2;
        Self::new(x[..n].to_vec(), x[n..].to_vec())
    }

    pub fn to_flat(&self) -> Vec<S> {
        self.q.iter().chain(self.qd.iter()).copied().collect()
    }

    fn check(&self, dof: usize) -> Result<()> {
        check_len("q", dof, self.q.len())?;
        check_len("qd", dof, self.qd.len())
    }
}

/// World pose of a body frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FramePose<S> {
    pub position: Vec3<S>,
    pub orientation: Quat<S>,
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    } else {
        Ok(())
    }
}

thread_local! {
    static BODY_VISITS: Cell<u64> = const { Cell::new(0) };
}

/// Per-body recursion steps executed on this thread (ABA and RNEA).
pub fn body_visits() -> u64 {
    BODY_VISITS.with(Cell::get)
}

pub fn reset_body_visits() {
    BODY_VISITS.with(|c| c.set(0));
}

#[inline]
fn visit() {
    BODY_VISITS.with(|c| c.set(c.get() + 1));
}

fn joint_coord<S: Scalar>(model: &Model<S>, i: usize, v: &[S]) -> Option<S> {
    model.q_index(i).map(|k| v[k])
}

/// Parent-to-child transforms for configuration `q`.
fn link_transforms<S: Scalar>(model: &Model<S>, q: &[S]) -> Vec<Plucker<S>> {
    (0..model.len())
        .map(|i| model.joints[i].child_pose(joint_coord(model, i, q)).to_plucker())
        .collect()
}

/// World pose of every body.
pub fn forward_kinematics<S: Scalar>(model: &Model<S>, q: &[S]) -> Result<Vec<FramePose<S>>> {
    check_len("q", model.dof(), q.len())?;
    let mut world: Vec<SpatialTransform<S>> = Vec::with_capacity(model.len());
    for i in 0..model.len() {
        let local = model.joints[i].child_pose(joint_coord(model, i, q));
        let pose = match model.parent(i) {
            Some(p) => world[p].compose(&local),
            None => local,
        };
        world.push(pose);
    }
    Ok(world
        .into_iter()
        .map(|t| FramePose {
            position: t.translation,
            orientation: t.rotation,
        })
        .collect())
}

fn world_acceleration<S: Scalar>(model: &Model<S>) -> SpatialMotion<S> {
    SpatialMotion::new(Vec3::zero(), -model.gravity)
}

/// Articulated-body algorithm: `q̈` such that `τ = H q̈ + C + G`.
pub fn aba<S: Scalar>(model: &Model<S>, state: &State<S>, tau: &[S]) -> Result<Vec<S>> {
    let n = model.len();
    state.check(model.dof())?;
    check_len("tau", model.dof(), tau.len())?;

    let xs = link_transforms(model, &state.q);
    let subspace: Vec<_> = model.joints.iter().map(|j| j.motion_subspace()).collect();
    let mut vel = vec![SpatialMotion::zero(); n];
    let mut bias_acc = vec![SpatialMotion::zero(); n];
    let mut ia = Vec::with_capacity(n);
    let mut pa = Vec::with_capacity(n);

    for i in 0..n {
        visit();
        let vj = match (&subspace[i], joint_coord(model, i, &state.qd)) {
            (Some(s), Some(qd)) => s.scale(qd),
            _ => SpatialMotion::zero(),
        };
        let v_parent = match model.parent(i) {
            Some(p) => xs[i].inv_motion(&vel[p]),
            None => SpatialMotion::zero(),
        };
        vel[i] = v_parent + vj;
        bias_acc[i] = vel[i].cross_motion(&vj);
        let inertia = model.bodies[i].inertia();
        pa.push(vel[i].cross_force(&inertia.apply(&vel[i])));
        ia.push(inertia.to_matrix());
    }

    let mut u_vec: Vec<SpatialForce<S>> = vec![SpatialForce::zero(); n];
    let mut d = vec![S::one(); n];
    let mut u = vec![S::zero(); n];

    for i in (0..n).rev() {
        visit();
        let (ia_a, pa_a) = match (&subspace[i], model.q_index(i)) {
            (Some(s), Some(k)) => {
                let ui = ia[i].apply(s);
                let di = s.dot(&ui);
                if !(di.value() > 1e-12) {
                    return Err(Error::SingularInertia {
                        body: i,
                        value: di.value(),
                    });
                }
                let res = tau[k] - s.dot(&pa[i]);
                u_vec[i] = ui;
                d[i] = di;
                u[i] = res;
                let ia_a = ia[i].sub_outer(&ui, di);
                let pa_a = pa[i] + ia_a.apply(&bias_acc[i]) + ui.scale(res / di);
                (ia_a, pa_a)
            }
            _ => (ia[i], pa[i] + ia[i].apply(&bias_acc[i])),
        };
        if let Some(p) = model.parent(i) {
            let moved = ia_a.to_parent(&xs[i]);
            ia[p] += moved;
            let f = xs[i].force(&pa_a);
            pa[p] += f;
        }
    }

    let a0 = world_acceleration(model);
    let mut acc = vec![SpatialMotion::zero(); n];
    let mut qdd = vec![S::zero(); model.dof()];
    for i in 0..n {
        visit();
        let a_parent = match model.parent(i) {
            Some(p) => xs[i].inv_motion(&acc[p]),
            None => xs[i].inv_motion(&a0),
        };
        let a = a_parent + bias_acc[i];
        match (&subspace[i], model.q_index(i)) {
            (Some(s), Some(k)) => {
                let qdd_i = (u[i] - a.dot(&u_vec[i])) / d[i];
                qdd[k] = qdd_i;
                acc[i] = a + s.scale(qdd_i);
            }
            _ => acc[i] = a,
        }
    }
    Ok(qdd)
}

/// Recursive Newton–Euler inverse dynamics: `τ = H q̈ + C + G`.
pub fn rnea<S: Scalar>(model: &Model<S>, state: &State<S>, qdd: &[S]) -> Result<Vec<S>> {
    let n = model.len();
    state.check(model.dof())?;
    check_len("qdd", model.dof(), qdd.len())?;

    let xs = link_transforms(model, &state.q);
    let a0 = world_acceleration(model);
    let mut vel = vec![SpatialMotion::zero(); n];
    let mut acc = vec![SpatialMotion::zero(); n];
    let mut f = vec![SpatialForce::zero(); n];
    for i in 0..n {
        visit();
        let s = model.joints[i].motion_subspace();
        let (vj, aj) = match (&s, model.q_index(i)) {
            (Some(s), Some(k)) => (s.scale(state.qd[k]), s.scale(qdd[k])),
            _ => (SpatialMotion::zero(), SpatialMotion::zero()),
        };
        let (vp, ap) = match model.parent(i) {
            Some(p) => (xs[i].inv_motion(&vel[p]), xs[i].inv_motion(&acc[p])),
            None => (SpatialMotion::zero(), xs[i].inv_motion(&a0)),
        };
        vel[i] = vp + vj;
        acc[i] = ap + aj + vel[i].cross_motion(&vj);
        let inertia = model.bodies[i].inertia();
        f[i] = inertia.apply(&acc[i]) + vel[i].cross_force(&inertia.apply(&vel[i]));
    }
    let mut tau = vec![S::zero(); model.dof()];
    for i in (0..n).rev() {
        visit();
        if let (Some(s), Some(k)) = (model.joints[i].motion_subspace(), model.q_index(i)) {
            tau[k] = s.dot(&f[i]);
        }
        if let Some(p) = model.parent(i) {
            let fp = xs[i].force(&f[i]);
            f[p] += fp;
        }
    }
    Ok(tau)
}

/// `C(q, q̇) + G(q)`.
pub fn bias_forces<S: Scalar>(model: &Model<S>, state: &State<S>) -> Result<Vec<S>> {
    rnea(model, state, &vec![S::zero(); model.dof()])
}

/// Joint-space inertia `H(q)`, one RNEA call per column.
pub fn mass_matrix<S: Scalar>(model: &Model<S>, q: &[S]) -> Result<Vec<Vec<S>>> {
    let dof = model.dof();
    let rest = State::new(q.to_vec(), vec![S::zero(); dof]);
    let g = bias_forces(model, &rest)?;
    let mut h = vec![vec![S::zero(); dof]; dof];
    for k in 0..dof {
        let mut e = vec![S::zero(); dof];
        e[k] = S::one();
        let col = rnea(model, &rest, &e)?;
        for r in 0..dof {
            h[r][k] = col[r] - g[r];
        }
    }
    Ok(h)
}

/// Kinetic plus gravitational potential energy (zero potential at the
/// world origin).
pub fn total_energy<S: Scalar>(model: &Model<S>, state: &State<S>) -> Result<S> {
    state.check(model.dof())?;
    let n = model.len();
    let xs = link_transforms(model, &state.q);
    let mut vel = vec![SpatialMotion::zero(); n];
    let mut world: Vec<SpatialTransform<S>> = Vec::with_capacity(n);
    let mut kinetic = S::zero();
    let mut potential = S::zero();
    for i in 0..n {
        let joint = &model.joints[i];
        let vj = match (joint.motion_subspace(), model.q_index(i)) {
            (Some(s), Some(k)) => s.scale(state.qd[k]),
            _ => SpatialMotion::zero(),
        };
        vel[i] = match model.parent(i) {
            Some(p) => xs[i].inv_motion(&vel[p]),
            None => SpatialMotion::zero(),
        } + vj;
        let body = &model.bodies[i];
        kinetic += vel[i].dot(&body.inertia().apply(&vel[i])).scale(0.5);

        let local = joint.child_pose(joint_coord(model, i, &state.q));
        let pose = match model.parent(i) {
            Some(p) => world[p].compose(&local),
            None => local,
        };
        let com = pose.apply_point(&body.com);
        potential -= body.mass * model.gravity.dot(&com);
        world.push(pose);
    }
    Ok(kinetic + potential)
}
