use serde::{Deserialize, Serialize};

use super::{aba, State};
use crate::error::{Error, Result};
use crate::model::{apply_parameters, Model, ParameterBinding};
use crate::scalar::Scalar;

/// Routes control inputs into generalized-force slots; other slots stay zero.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlMap {
    /// `u[k]` drives coordinate `coords[k]`.
    pub coords: Vec<usize>,
}

impl ControlMap {
    pub fn new(coords: Vec<usize>) -> Self {
        Self { coords }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn tau<S: Scalar>(&self, dof: usize, u: &[S]) -> Result<Vec<S>> {
        if u.len() != self.coords.len() {
            return Err(Error::Dimension {
                what: "control vector",
                expected: self.coords.len(),
                got: u.len(),
            });
        }
        let mut tau = vec![S::zero(); dof];
        for (k, &c) in self.coords.iter().enumerate() {
            if c >= dof {
                return Err(Error::Dimension {
                    what: "control coordinate",
                    expected: dof,
                    got: c,
                });
            }
            tau[c] += u[k];
        }
        Ok(tau)
    }
}

/// A parameterized, actuated mechanism: everything needed to evaluate
/// `ẋ = f(x, u, θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Plant {
    pub model: Model,
    pub binding: ParameterBinding,
    pub controls: ControlMap,
}

impl Plant {
    pub fn new(model: Model, binding: ParameterBinding, controls: ControlMap) -> Result<Self> {
        binding.validate(&model)?;
        if let Some(&c) = controls.coords.iter().find(|&&c| c >= model.dof()) {
            return Err(Error::Dimension {
                what: "control coordinate",
                expected: model.dof(),
                got: c,
            });
        }
        Ok(Self {
            model,
            binding,
            controls,
        })
    }

    /// Unactuated plant.
    pub fn passive(model: Model, binding: ParameterBinding) -> Result<Self> {
        Self::new(model, binding, ControlMap::default())
    }

    pub fn dof(&self) -> usize {
        self.model.dof()
    }

    pub fn state_dim(&self) -> usize {
        2 * self.model.dof()
    }

    pub fn n_params(&self) -> usize {
        self.binding.arity()
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    /// The model with `theta` written into the bound fields.
    pub fn instantiate<S: Scalar>(&self, theta: &[S]) -> Result<Model<S>> {
        apply_parameters(&self.model, &self.binding, theta)
    }

    pub fn rhs<S: Scalar>(&self, theta: &[S], u: &[S], x: &[S]) -> Result<Vec<S>> {
        let model = self.instantiate(theta)?;
        self.rhs_with(&model, u, x)
    }

    /// Right-hand side on an already instantiated model.
    pub fn rhs_with<S: Scalar>(&self, model: &Model<S>, u: &[S], x: &[S]) -> Result<Vec<S>> {
        let dof = model.dof();
        if x.len() != 2 * dof {
            return Err(Error::Dimension {
                what: "flat state",
                expected: 2 * dof,
                got: x.len(),
            });
        }
        let tau = self.controls.tau(dof, u)?;
        let state = State::from_flat(x);
        let qdd = aba(model, &state, &tau)?;
        Ok(state.qd.into_iter().chain(qdd).collect())
    }
}

/// `ẋ = [q̇, q̈]` for the model with `theta` applied and control `u` routed by
/// `u_map`. Autonomous: `t` is accepted for signature compatibility only.
pub fn ode_rhs<S: Scalar>(
    model: &Model,
    binding: &ParameterBinding,
    theta: &[S],
    u_map: &ControlMap,
    u: &[S],
    _t: f64,
    x: &[S],
) -> Result<Vec<S>> {
    let m = apply_parameters(model, binding, theta)?;
    let tau = u_map.tau(m.dof(), u)?;
    if x.len() != 2 * m.dof() {
        return Err(Error::Dimension {
            what: "flat state",
            expected: 2 * m.dof(),
            got: x.len(),
        });
    }
    let state = State::from_flat(x);
    let qdd = aba(&m, &state, &tau)?;
    Ok(state.qd.into_iter().chain(qdd).collect())
}
