//! JSON model documents.
//!
//! ```json
//! {
//!   "gravity": [0, 0, -9.81],
//!   "bodies": [{"name": "pole", "mass": 1.0, "com": [0, 0, 0.5],
//!               "inertia": [ixx, ixy, ixz, iyy, iyz, izz]}],
//!   "joints": [{"kind": "revolute", "axis": [0, 1, 0], "parent": -1,
//!               "offset": [0, 0, 0]}]
//! }
//! ```
//!
//! `inertia` is taken about the centre of mass. Joints may carry an optional
//! `rotation` quaternion `[w, x, y, z]` and optional `limits` `[lo, hi]`.

use serde::{Deserialize, Serialize};

use super::{quat_from_array, Body, Joint, JointKind, Model, DEFAULT_GRAVITY};
use crate::error::{Error, Result};
use crate::spatial::{Mat3, SpatialTransform, Vec3};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    #[serde(default = "default_gravity")]
    gravity: [f64; 3],
    bodies: Vec<BodyDoc>,
    joints: Vec<JointDoc>,
}

fn default_gravity() -> [f64; 3] {
    DEFAULT_GRAVITY
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BodyDoc {
    name: String,
    mass: f64,
    com: [f64; 3],
    inertia: [f64; 6],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointDoc {
    kind: String,
    #[serde(default = "default_axis")]
    axis: [f64; 3],
    parent: i64,
    offset: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rotation: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    limits: Option<[f64; 2]>,
}

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

/// Parse and validate a model document. Body order equals document order.
pub fn parse_model(text: &str) -> Result<Model> {
    let doc: ModelDoc = serde_json::from_str(text).map_err(|e| Error::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let n = doc.bodies.len();
    let bodies = doc
        .bodies
        .into_iter()
        .map(|b| Body {
            name: b.name,
            mass: b.mass,
            com: Vec3::from_f64(b.com),
            inertia_com: Mat3::symmetric(b.inertia),
        })
        .collect();
    let mut joints = Vec::with_capacity(doc.joints.len());
    for (i, j) in doc.joints.into_iter().enumerate() {
        let kind = JointKind::parse(&j.kind)?;
        let parent = match j.parent {
            -1 => None,
            p if p >= 0 && (p as usize) < n => Some(p as usize),
            p => return Err(Error::DanglingParent { joint: i, parent: p }),
        };
        let rotation = j.rotation.map(quat_from_array).unwrap_or_else(crate::spatial::Quat::identity);
        joints.push(Joint {
            kind,
            axis: Vec3::from_f64(j.axis),
            parent,
            offset: SpatialTransform {
                rotation,
                translation: Vec3::from_f64(j.offset),
            },
            limits: j.limits.map(|l| (l[0], l[1])),
        });
    }
    Model::new(bodies, joints, Vec3::from_f64(doc.gravity))
}

/// Serialize a model; `parse_model(print_model(m))` reproduces `m`.
pub fn print_model(model: &Model) -> String {
    let identity = |q: &crate::spatial::Quat<f64>| q.w == 1.0 && q.x == 0.0 && q.y == 0.0 && q.z == 0.0;
    let doc = ModelDoc {
        gravity: model.gravity.to_array(),
        bodies: model
            .bodies
            .iter()
            .map(|b| BodyDoc {
                name: b.name.clone(),
                mass: b.mass,
                com: b.com.to_array(),
                inertia: b.inertia_com.upper(),
            })
            .collect(),
        joints: model
            .joints
            .iter()
            .map(|j| JointDoc {
                kind: j.kind.name().to_string(),
                axis: j.axis.to_array(),
                parent: j.parent.map_or(-1, |p| p as i64),
                offset: j.offset.translation.to_array(),
                rotation: (!identity(&j.offset.rotation)).then(|| j.offset.rotation.values()),
                limits: j.limits.map(|(a, b)| [a, b]),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("model serializes")
}
