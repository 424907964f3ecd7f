//! Serial chains from standard (distal) Denavit–Hartenberg parameters.

use serde::{Deserialize, Serialize};

use super::{Body, Joint, JointKind, Model, DEFAULT_GRAVITY};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::spatial::{Mat3, Quat, SpatialTransform, Vec3};

/// Design scalars of one joint; the joint angle is the runtime coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DhJoint<S> {
    pub d: S,
    pub a: S,
    pub alpha: S,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DhParams<S = f64> {
    pub joints: Vec<DhJoint<S>>,
}

impl<S: Scalar> DhParams<S> {
    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    /// `(d, a, α)` per joint, flattened.
    pub fn to_vec(&self) -> Vec<S> {
        self.joints.iter().flat_map(|j| [j.d, j.a, j.alpha]).collect()
    }

    pub fn from_slice(v: &[S]) -> Self {
        Self {
            joints: v
                .chunks_exact(3)
                .map(|c| DhJoint {
                    d: c[0],
                    a: c[1],
                    alpha: c[2],
                })
                .collect(),
        }
    }

    /// `Trans_z(d) · Trans_x(a) · Rot_x(α)`: the fixed part of a DH link.
    fn link_transform(j: &DhJoint<S>) -> SpatialTransform<S> {
        let x = Vec3::new(S::one(), S::zero(), S::zero());
        SpatialTransform {
            rotation: Quat::from_axis_angle(&x, j.alpha),
            translation: Vec3::new(j.a, S::zero(), j.d),
        }
    }
}

/// Build `N` revolute joints about their local z axes plus a fixed
/// end-effector body. Body `i`'s frame is DH frame `i-1` rotated by `q_i`;
/// the final body sits at DH frame `N`. Every body is a unit point mass at
/// its frame origin.
pub fn model_from_dh<S: Scalar>(dh: &DhParams<S>) -> Result<Model<S>> {
    let n = dh.len();
    let point = || Body {
        name: String::new(),
        mass: S::one(),
        com: Vec3::zero(),
        inertia_com: Mat3::zero(),
    };
    let mut bodies = Vec::with_capacity(n + 1);
    let mut joints = Vec::with_capacity(n + 1);
    for i in 0..n {
        bodies.push(Body {
            name: format!("link{i}"),
            ..point()
        });
        joints.push(Joint {
            kind: JointKind::Revolute,
            axis: Vec3::new(0.0, 0.0, 1.0),
            parent: i.checked_sub(1),
            offset: if i == 0 {
                SpatialTransform::identity()
            } else {
                DhParams::link_transform(&dh.joints[i - 1])
            },
            limits: None,
        });
    }
    bodies.push(Body {
        name: "end_effector".into(),
        ..point()
    });
    joints.push(Joint {
        kind: JointKind::Fixed,
        axis: Vec3::new(0.0, 0.0, 1.0),
        parent: n.checked_sub(1),
        offset: match dh.joints.last() {
            Some(j) => DhParams::link_transform(j),
            None => SpatialTransform::identity(),
        },
        limits: None,
    });
    Model::new(bodies, joints, Vec3::from_f64(DEFAULT_GRAVITY))
}
