use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A model quantity that a parameter can overwrite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "field", rename_all = "snake_case")]
pub enum Field {
    /// Magnitude of the joint's translation offset along its stored direction.
    LinkLength { joint: usize },
    Mass { body: usize },
    /// One coordinate (0 = x, 1 = y, 2 = z) of a body's centre of mass.
    Com { body: usize, axis: usize },
    /// One diagonal term of a body's inertia about its centre of mass.
    Inertia { body: usize, axis: usize },
}

/// `field ← scale · θ[index]^power`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BindingEntry {
    #[serde(flatten)]
    pub field: Field,
    pub index: usize,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default = "unit_power", skip_serializing_if = "is_unit_power")]
    pub power: i32,
}

fn one() -> f64 {
    1.0
}

fn unit_power() -> i32 {
    1
}

fn is_unit_power(p: &i32) -> bool {
    *p == 1
}

impl BindingEntry {
    pub fn new(field: Field, index: usize) -> Self {
        Self::scaled(field, index, 1.0)
    }

    pub fn scaled(field: Field, index: usize, scale: f64) -> Self {
        Self::powered(field, index, scale, 1)
    }

    pub fn powered(field: Field, index: usize, scale: f64, power: i32) -> Self {
        Self {
            field,
            index,
            scale,
            power,
        }
    }
}

/// Maps a parameter vector θ onto model fields.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterBinding {
    pub entries: Vec<BindingEntry>,
}

impl ParameterBinding {
    pub fn new(entries: Vec<BindingEntry>) -> Self {
        Self { entries }
    }

    /// One parameter per field, in order.
    pub fn from_fields(fields: &[Field]) -> Self {
        Self::new(
            fields
                .iter()
                .enumerate()
                .map(|(i, f)| BindingEntry::new(*f, i))
                .collect(),
        )
    }

    /// Length of θ.
    pub fn arity(&self) -> usize {
        self.entries.iter().map(|e| e.index + 1).max().unwrap_or(0)
    }

    /// Check every θ index is used and every selector exists in `model`.
    pub fn validate<S: Scalar>(&self, model: &Model<S>) -> Result<()> {
        let arity = self.arity();
        let mut seen = vec![false; arity];
        for e in &self.entries {
            if e.power == 0 {
                return Err(Error::Binding("binding power must be nonzero".into()));
            }
            seen[e.index] = true;
            let ok = match e.field {
                Field::LinkLength { joint } => {
                    joint < model.joints.len()
                        && model.joints[joint].offset.translation.norm().value() > 0.0
                }
                Field::Mass { body } => body < model.bodies.len(),
                Field::Com { body, axis } | Field::Inertia { body, axis } => {
                    body < model.bodies.len() && axis < 3
                }
            };
            if !ok {
                return Err(Error::Binding(format!(
                    "selector {:?} does not reference a bindable model field",
                    e.field
                )));
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Binding(format!("parameter {i} is never bound")));
        }
        Ok(())
    }

    /// Current values of the bound fields (first entry wins per index).
    pub fn read(&self, model: &Model) -> Vec<f64> {
        let mut theta = vec![f64::NAN; self.arity()];
        for e in &self.entries {
            if !theta[e.index].is_nan() {
                continue;
            }
            let v = match e.field {
                Field::LinkLength { joint } => model.joints[joint].offset.translation.norm(),
                Field::Mass { body } => model.bodies[body].mass,
                Field::Com { body, axis } => model.bodies[body].com.to_array()[axis],
                Field::Inertia { body, axis } => model.bodies[body].inertia_com.m[axis][axis],
            };
            theta[e.index] = (v / e.scale).powf(1.0 / e.power as f64);
        }
        theta
    }
}

/// Copy of `model` with the bound fields overwritten by `theta`.
pub fn apply_parameters<T: Scalar>(
    model: &Model,
    binding: &ParameterBinding,
    theta: &[T],
) -> Result<Model<T>> {
    if theta.len() != binding.arity() {
        return Err(Error::Dimension {
            what: "parameter vector",
            expected: binding.arity(),
            got: theta.len(),
        });
    }
    let mut out = model.lift::<T>();
    for e in &binding.entries {
        let v = theta[e.index].powi(e.power).scale(e.scale);
        match e.field {
            Field::LinkLength { joint } => {
                let t = model
                    .joints
                    .get(joint)
                    .ok_or_else(|| Error::Binding(format!("no joint {joint}")))?
                    .offset
                    .translation;
                let n = t.norm();
                if !(n > 0.0) {
                    return Err(Error::Binding(format!(
                        "joint {joint} has no offset direction to scale"
                    )));
                }
                out.joints[joint].offset.translation = t.scale(1.0 / n).lift::<T>().scale(v);
            }
            Field::Mass { body } => {
                if !(v.value() > 0.0) {
                    return Err(Error::NonPhysical(format!(
                        "mass of body {body} would be {}",
                        v.value()
                    )));
                }
                body_mut(&mut out, body)?.mass = v;
            }
            Field::Com { body, axis } => {
                let b = body_mut(&mut out, body)?;
                match axis {
                    0 => b.com.x = v,
                    1 => b.com.y = v,
                    2 => b.com.z = v,
                    _ => return Err(Error::Binding(format!("com axis {axis}"))),
                }
            }
            Field::Inertia { body, axis } => {
                if axis > 2 {
                    return Err(Error::Binding(format!("inertia axis {axis}")));
                }
                body_mut(&mut out, body)?.inertia_com.m[axis][axis] = v;
            }
        }
    }
    Ok(out)
}

fn body_mut<T>(m: &mut Model<T>, body: usize) -> Result<&mut super::Body<T>> {
    m.bodies
        .get_mut(body)
        .ok_or_else(|| Error::Binding(format!("no body {body}")))
}
