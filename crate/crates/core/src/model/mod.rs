//! Kinematic trees: bodies, joints, parameter bindings.
//!
//! Joint `i` connects body `i` to its parent body (or to the world). The pose
//! of body `i` in its parent is `offset_i ∘ motion_i(q)`, so `q = 0` is the
//! configuration written in the model document.

mod binding;
mod dh;
mod json;
pub mod library;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spatial::{Mat3, Quat, SpatialInertia, SpatialMotion, SpatialTransform, Vec3};

pub use binding::{apply_parameters, BindingEntry, Field, ParameterBinding};
pub use dh::{model_from_dh, DhJoint, DhParams};
pub use json::{parse_model, print_model};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

impl JointKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "revolute" => Ok(Self::Revolute),
            "prismatic" => Ok(Self::Prismatic),
            "fixed" => Ok(Self::Fixed),
            other => Err(Error::UnknownJointKind(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Revolute => "revolute",
            Self::Prismatic => "prismatic",
            Self::Fixed => "fixed",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Joint<S> {
    pub kind: JointKind,
    /// Unit axis in the joint frame.
    pub axis: Vec3<f64>,
    /// Parent body index, `None` for the world.
    pub parent: Option<usize>,
    /// Pose of the joint frame in the parent body frame.
    pub offset: SpatialTransform<S>,
    pub limits: Option<(f64, f64)>,
}

impl<S: Scalar> Joint<S> {
    /// Motion subspace in the child body frame.
    pub fn motion_subspace(&self) -> Option<SpatialMotion<S>> {
        let a = self.axis.lift::<S>();
        match self.kind {
            JointKind::Revolute => Some(SpatialMotion::new(a, Vec3::zero())),
            JointKind::Prismatic => Some(SpatialMotion::new(Vec3::zero(), a)),
            JointKind::Fixed => None,
        }
    }

    /// Relative pose produced by the joint coordinate.
    pub fn motion(&self, q: S) -> SpatialTransform<S> {
        match self.kind {
            JointKind::Revolute => SpatialTransform::rotation(&self.axis.lift(), q),
            JointKind::Prismatic => SpatialTransform::translation(self.axis.lift::<S>().scale(q)),
            JointKind::Fixed => SpatialTransform::identity(),
        }
    }

    /// Pose of the child body frame in the parent body frame.
    pub fn child_pose(&self, q: Option<S>) -> SpatialTransform<S> {
        match q {
            Some(q) => self.offset.compose(&self.motion(q)),
            None => self.offset,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Body<S> {
    pub name: String,
    pub mass: S,
    /// Centre of mass in the body frame.
    pub com: Vec3<S>,
    /// Rotational inertia about the centre of mass.
    pub inertia_com: Mat3<S>,
}

impl<S: Scalar> Body<S> {
    pub fn inertia(&self) -> SpatialInertia<S> {
        SpatialInertia::from_com(self.mass, self.com, self.inertia_com)
    }
}

/// A kinematic tree in topological order.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<S = f64> {
    pub bodies: Vec<Body<S>>,
    pub joints: Vec<Joint<S>>,
    pub gravity: Vec3<S>,
    q_index: Vec<Option<usize>>,
    dof: usize,
}

pub const DEFAULT_GRAVITY: [f64; 3] = [0.0, 0.0, -9.81];

impl<S: Scalar> Model<S> {
    /// Validate and index a tree. Joint `i` attaches body `i`.
    pub fn new(bodies: Vec<Body<S>>, joints: Vec<Joint<S>>, gravity: Vec3<S>) -> Result<Self> {
        if bodies.len() != joints.len() {
            return Err(Error::Dimension {
                what: "joints per body",
                expected: bodies.len(),
                got: joints.len(),
            });
        }
        let n = bodies.len();
        for (i, j) in joints.iter().enumerate() {
            if let Some(p) = j.parent {
                if p >= n {
                    return Err(Error::DanglingParent {
                        joint: i,
                        parent: p as i64,
                    });
                }
            }
        }
        // Walk each ancestor chain; more than n hops means a cycle.
        for i in 0..n {
            let mut cur = joints[i].parent;
            let mut hops = 0;
            while let Some(p) = cur {
                hops += 1;
                if hops > n {
                    return Err(Error::Cycle(i));
                }
                cur = joints[p].parent;
            }
        }
        for (i, j) in joints.iter().enumerate() {
            if let Some(p) = j.parent {
                if p >= i {
                    return Err(Error::Topology(format!(
                        "joint {i}: parent {p} must precede its child"
                    )));
                }
            }
        }
        for (i, b) in bodies.iter().enumerate() {
            if !(b.mass.value() > 0.0) {
                return Err(Error::NonPhysical(format!(
                    "body {i} (`{}`) has non-positive mass {}",
                    b.name,
                    b.mass.value()
                )));
            }
        }
        let mut q_index = Vec::with_capacity(n);
        let mut dof = 0;
        for j in &joints {
            if j.kind == JointKind::Fixed {
                q_index.push(None);
            } else {
                let norm = (j.axis.dot(&j.axis)).sqrt();
                if !(norm > 0.0) {
                    return Err(Error::NonPhysical("joint axis has zero length".into()));
                }
                q_index.push(Some(dof));
                dof += 1;
            }
        }
        let joints = joints
            .into_iter()
            .map(|mut j| {
                let norm = j.axis.norm();
                if norm > 0.0 {
                    j.axis = j.axis.scale(1.0 / norm);
                }
                j
            })
            .collect();
        Ok(Self {
            bodies,
            joints,
            gravity,
            q_index,
            dof,
        })
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn len(&self) -> usize {
        self.bodies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bodies.is_empty()
    }

    /// Coordinate index of joint `i`, `None` for fixed joints.
    pub fn q_index(&self, i: usize) -> Option<usize> {
        self.q_index[i]
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.joints[i].parent
    }
}

impl Model<f64> {
    /// Convert every stored quantity into another scalar type.
    pub fn lift<T: Scalar>(&self) -> Model<T> {
        Model {
            bodies: self
                .bodies
                .iter()
                .map(|b| Body {
                    name: b.name.clone(),
                    mass: T::from_f64(b.mass),
                    com: b.com.lift(),
                    inertia_com: b.inertia_com.lift(),
                })
                .collect(),
            joints: self
                .joints
                .iter()
                .map(|j| Joint {
                    kind: j.kind,
                    axis: j.axis,
                    parent: j.parent,
                    offset: SpatialTransform {
                        rotation: j.offset.rotation.lift(),
                        translation: j.offset.translation.lift(),
                    },
                    limits: j.limits,
                })
                .collect(),
            gravity: self.gravity.lift(),
            q_index: self.q_index.clone(),
            dof: self.dof,
        }
    }
}

pub(crate) fn quat_from_array<S: Scalar>(q: [f64; 4]) -> Quat<S> {
    Quat::new(
        S::from_f64(q[0]),
        S::from_f64(q[1]),
        S::from_f64(q[2]),
        S::from_f64(q[3]),
    )
    .normalized()
}
