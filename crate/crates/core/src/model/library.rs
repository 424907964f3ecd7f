//! Stock mechanisms used by the experiments and tests.

use super::{BindingEntry, Body, Field, Joint, JointKind, Model, ParameterBinding, DEFAULT_GRAVITY};
use crate::spatial::{Mat3, SpatialTransform, Vec3};

fn rod_body(name: String, mass: f64, length: f64, com: Vec3<f64>) -> Body<f64> {
    let i = mass * length * length / 12.0;
    Body {
        name,
        mass,
        com,
        inertia_com: Mat3::diagonal(i, i, 0.0),
    }
}

fn revolute_y(parent: Option<usize>, offset: Vec3<f64>) -> Joint<f64> {
    Joint {
        kind: JointKind::Revolute,
        axis: Vec3::new(0.0, 1.0, 0.0),
        parent,
        offset: SpatialTransform::translation(offset),
        limits: None,
    }
}

/// Uniform rod of the given mass and length swinging about the world y axis.
/// `q = 0` is the stable (hanging) equilibrium.
pub fn rod_pendulum(mass: f64, length: f64) -> Model {
    pendulum_chain_with(&[(mass, length)])
}

/// `n` identical hanging rods joined end to end (compound pendulum).
pub fn pendulum_chain(n: usize, mass: f64, length: f64) -> Model {
    pendulum_chain_with(&vec![(mass, length); n])
}

/// Hanging chain of uniform rods given as `(mass, length)` pairs.
pub fn pendulum_chain_with(links: &[(f64, f64)]) -> Model {
    let mut bodies = Vec::new();
    let mut joints = Vec::new();
    for (k, &(m, l)) in links.iter().enumerate() {
        bodies.push(rod_body(format!("link{k}"), m, l, Vec3::new(0.0, 0.0, -l / 2.0)));
        let offset = if k == 0 {
            Vec3::zero()
        } else {
            Vec3::new(0.0, 0.0, -links[k - 1].1)
        };
        joints.push(revolute_y(k.checked_sub(1), offset));
    }
    Model::new(bodies, joints, Vec3::from_f64(DEFAULT_GRAVITY)).expect("valid chain")
}

/// θ_k is the length of uniform rod `k` in a chain built with masses
/// `masses`: it sets the offset of the next joint, places the centre of mass
/// at the midpoint and scales the transverse inertia as `m l²/12`.
pub fn chain_length_binding_with(masses: &[f64]) -> ParameterBinding {
    let n = masses.len();
    let mut entries = Vec::new();
    for (k, &m) in masses.iter().enumerate() {
        if k + 1 < n {
            entries.push(BindingEntry::new(Field::LinkLength { joint: k + 1 }, k));
        }
        entries.push(BindingEntry::scaled(Field::Com { body: k, axis: 2 }, k, -0.5));
        for axis in 0..2 {
            entries.push(BindingEntry::powered(Field::Inertia { body: k, axis }, k, m / 12.0, 2));
        }
    }
    ParameterBinding::new(entries)
}

/// [`chain_length_binding_with`] for unit-mass rods.
pub fn chain_length_binding(n: usize) -> ParameterBinding {
    chain_length_binding_with(&vec![1.0; n])
}

/// Nominal cart-pole geometry.
#[derive(Clone, Copy, Debug)]
pub struct CartPoleSpec {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_length: f64,
    /// Height of the first pivot above the cart frame origin.
    pub pivot_height: f64,
}

impl Default for CartPoleSpec {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_length: 1.0,
            pivot_height: 0.1,
        }
    }
}

/// Cart sliding along x carrying `poles` rods hinged about y. `q = 0` is the
/// upright configuration; coordinates are `[p, q0, q1, ...]` with each pole
/// angle measured relative to its parent.
pub fn cartpole(poles: usize) -> Model {
    cartpole_with(poles, &CartPoleSpec::default())
}

pub fn cartpole_with(poles: usize, spec: &CartPoleSpec) -> Model {
    let mut bodies = vec![Body {
        name: "cart".into(),
        mass: spec.cart_mass,
        com: Vec3::zero(),
        inertia_com: Mat3::diagonal(0.01, 0.01, 0.01),
    }];
    let mut joints = vec![Joint {
        kind: JointKind::Prismatic,
        axis: Vec3::new(1.0, 0.0, 0.0),
        parent: None,
        offset: SpatialTransform::identity(),
        limits: None,
    }];
    for k in 0..poles {
        let l = spec.pole_length;
        bodies.push(rod_body(
            format!("pole{k}"),
            spec.pole_mass,
            l,
            Vec3::new(0.0, 0.0, l / 2.0),
        ));
        let offset = if k == 0 { spec.pivot_height } else { l };
        joints.push(revolute_y(Some(k), Vec3::new(0.0, 0.0, offset)));
    }
    Model::new(bodies, joints, Vec3::from_f64(DEFAULT_GRAVITY)).expect("valid cart-pole")
}

/// Pivot offsets, masses and 3-D centres of mass of every body:
/// `poles + (poles + 1) + 3 (poles + 1)` parameters (14 for two poles).
pub fn cartpole_binding(poles: usize) -> ParameterBinding {
    let mut fields = Vec::new();
    for j in 1..=poles {
        fields.push(Field::LinkLength { joint: j });
    }
    for b in 0..=poles {
        fields.push(Field::Mass { body: b });
    }
    for b in 0..=poles {
        for axis in 0..3 {
            fields.push(Field::Com { body: b, axis });
        }
    }
    ParameterBinding::from_fields(&fields)
}

/// A single block of mass `mass` sliding along x: with one Euler step per
/// interval and the slide force as control this is the discrete double
/// integrator.
pub fn slider(mass: f64) -> Model {
    let bodies = vec![Body {
        name: "block".into(),
        mass,
        com: Vec3::zero(),
        inertia_com: Mat3::diagonal(0.01, 0.01, 0.01),
    }];
    let joints = vec![Joint {
        kind: JointKind::Prismatic,
        axis: Vec3::new(1.0, 0.0, 0.0),
        parent: None,
        offset: SpatialTransform::identity(),
        limits: None,
    }];
    Model::new(bodies, joints, Vec3::from_f64(DEFAULT_GRAVITY)).expect("valid slider")
}
