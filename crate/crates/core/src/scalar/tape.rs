//! Reverse-mode automatic differentiation on a thread-local tape.
//!
//! Every operation on a non-constant [`Var`] appends one node holding the
//! indices of its (at most two) operands together with the local partial
//! derivatives. A reverse sweep accumulates adjoints from the output back to
//! the inputs. Tapes are private to a thread and to a [`TapeSession`].

use std::cell::RefCell;
use std::marker::PhantomData;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_traits::{One, Zero};

use super::Scalar;
use crate::error::{Error, Result};

const CONST: usize = usize::MAX;

#[derive(Clone, Copy)]
struct Node {
    parents: [usize; 2],
    partials: [f64; 2],
}

#[derive(Default)]
struct TapeState {
    nodes: Vec<Node>,
    budget: usize,
    overflowed: bool,
    active: bool,
}

thread_local! {
    static TAPE: RefCell<TapeState> = RefCell::new(TapeState::default());
}

fn push(node: Node) -> usize {
    TAPE.with(|t| {
        let mut t = t.borrow_mut();
        if t.nodes.len() >= t.budget {
            t.overflowed = true;
            return CONST;
        }
        t.nodes.push(node);
        t.nodes.len() - 1
    })
}

/// A value recorded on the active tape (or a constant).
#[derive(Clone, Copy, Debug)]
pub struct Var {
    idx: usize,
    val: f64,
}

impl Var {
    /// Register an independent variable on the active tape.
    ///
    /// Panics when no [`TapeSession`] is active on this thread.
    pub fn input(val: f64) -> Self {
        let active = TAPE.with(|t| t.borrow().active);
        assert!(active, "Var::input called outside a tape session");
        let idx = push(Node {
            parents: [CONST, CONST],
            partials: [0.0, 0.0],
        });
        Self { idx, val }
    }

    pub fn constant(val: f64) -> Self {
        Self { idx: CONST, val }
    }

    pub fn is_constant(&self) -> bool {
        self.idx == CONST
    }

    fn unary(a: Var, val: f64, da: f64) -> Var {
        if a.is_constant() {
            return Var::constant(val);
        }
        let idx = push(Node {
            parents: [a.idx, CONST],
            partials: [da, 0.0],
        });
        Var { idx, val }
    }

    fn binary(a: Var, b: Var, val: f64, da: f64, db: f64) -> Var {
        match (a.is_constant(), b.is_constant()) {
            (true, true) => Var::constant(val),
            (false, true) => Var::unary(a, val, da),
            (true, false) => Var::unary(b, val, db),
            (false, false) => {
                let idx = push(Node {
                    parents: [a.idx, b.idx],
                    partials: [da, db],
                });
                Var { idx, val }
            }
        }
    }
}

/// Entry point for creating tape sessions.
pub struct Tape;

impl Tape {
    /// Start a fresh tape on this thread holding at most `budget` variables.
    pub fn session(budget: usize) -> Result<TapeSession> {
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            if t.active {
                return Err(Error::TapeBusy);
            }
            t.nodes.clear();
            t.budget = budget;
            t.overflowed = false;
            t.active = true;
            Ok(())
        })?;
        Ok(TapeSession {
            budget,
            _not_send: PhantomData,
        })
    }
}

/// Guard owning the thread-local tape. Dropping it discards the tape.
pub struct TapeSession {
    budget: usize,
    _not_send: PhantomData<*const ()>,
}

impl TapeSession {
    /// Number of variables recorded so far.
    pub fn len(&self) -> usize {
        TAPE.with(|t| t.borrow().nodes.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fails if any operation was dropped because the budget ran out.
    pub fn check(&self) -> Result<()> {
        if TAPE.with(|t| t.borrow().overflowed) {
            Err(Error::TapeBudget(self.budget))
        } else {
            Ok(())
        }
    }

    /// Reverse sweep from `output`.
    pub fn gradient(&self, output: Var) -> Gradients {
        TAPE.with(|t| {
            let t = t.borrow();
            let mut adj = vec![0.0; t.nodes.len()];
            if output.is_constant() {
                return Gradients { adjoints: adj };
            }
            adj[output.idx] = 1.0;
            for i in (0..=output.idx).rev() {
                let a = adj[i];
                if a == 0.0 {
                    continue;
                }
                let n = t.nodes[i];
                for k in 0..2 {
                    if n.parents[k] != CONST {
                        adj[n.parents[k]] += n.partials[k] * a;
                    }
                }
            }
            Gradients { adjoints: adj }
        })
    }
}

impl Drop for TapeSession {
    fn drop(&mut self) {
        TAPE.with(|t| {
            let mut t = t.borrow_mut();
            t.nodes = Vec::new();
            t.active = false;
            t.overflowed = false;
        });
    }
}

/// Adjoints of every tape variable after one reverse sweep.
pub struct Gradients {
    adjoints: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> f64 {
        if v.is_constant() {
            0.0
        } else {
            self.adjoints[v.idx]
        }
    }
}

impl Zero for Var {
    fn zero() -> Self {
        Var::constant(0.0)
    }
    fn is_zero(&self) -> bool {
        self.val == 0.0
    }
}

impl One for Var {
    fn one() -> Self {
        Var::constant(1.0)
    }
}

impl Neg for Var {
    type Output = Var;
    fn neg(self) -> Var {
        Var::unary(self, -self.val, -1.0)
    }
}

impl Add for Var {
    type Output = Var;
    fn add(self, o: Var) -> Var {
        Var::binary(self, o, self.val + o.val, 1.0, 1.0)
    }
}

impl Sub for Var {
    type Output = Var;
    fn sub(self, o: Var) -> Var {
        Var::binary(self, o, self.val - o.val, 1.0, -1.0)
    }
}

impl Mul for Var {
    type Output = Var;
    fn mul(self, o: Var) -> Var {
        Var::binary(self, o, self.val * o.val, o.val, self.val)
    }
}

impl Div for Var {
    type Output = Var;
    fn div(self, o: Var) -> Var {
        let inv = 1.0 / o.val;
        let val = self.val * inv;
        Var::binary(self, o, val, inv, -val * inv)
    }
}

macro_rules! assign_op {
    ($tr:ident, $m:ident, $op:tt) => {
        impl $tr for Var {
            fn $m(&mut self, o: Var) {
                *self = *self $op o;
            }
        }
    };
}
assign_op!(AddAssign, add_assign, +);
assign_op!(SubAssign, sub_assign, -);
assign_op!(MulAssign, mul_assign, *);
assign_op!(DivAssign, div_assign, /);

impl Scalar for Var {
    fn from_f64(v: f64) -> Self {
        Var::constant(v)
    }
    fn value(&self) -> f64 {
        self.val
    }
    fn sin(self) -> Self {
        Var::unary(self, self.val.sin(), self.val.cos())
    }
    fn cos(self) -> Self {
        Var::unary(self, self.val.cos(), -self.val.sin())
    }
    fn sqrt(self) -> Self {
        let r = self.val.sqrt();
        Var::unary(self, r, 0.5 / r)
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        Var::unary(self, e, e)
    }
    fn ln(self) -> Self {
        Var::unary(self, self.val.ln(), 1.0 / self.val)
    }
    fn atan2(self, x: Self) -> Self {
        let den = self.val * self.val + x.val * x.val;
        Var::binary(
            self,
            x,
            self.val.atan2(x.val),
            x.val / den,
            -self.val / den,
        )
    }
}
