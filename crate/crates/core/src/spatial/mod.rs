//! Spatial (6-D) vector algebra in Featherstone's convention.
//!
//! Motion vectors are `[angular; linear]`, force vectors `[moment; force]`.
//! A [`SpatialTransform`] is the pose of a local frame inside a target frame:
//! it maps points `p ↦ R p + t`, motion vectors from local to target
//! coordinates and, through [`SpatialTransform::transform_force`], the dual
//! force vectors.

mod vec;

use std::ops::{Add, AddAssign, Neg, Sub};

use crate::scalar::Scalar;

pub use vec::{Mat3, Quat, Vec3};

impl Vec3<f64> {
    /// Convert a plain vector into another scalar type.
    pub fn lift<T: Scalar>(&self) -> Vec3<T> {
        Vec3::new(T::from_f64(self.x), T::from_f64(self.y), T::from_f64(self.z))
    }
}

impl Quat<f64> {
    pub fn lift<T: Scalar>(&self) -> Quat<T> {
        Quat::new(
            T::from_f64(self.w),
            T::from_f64(self.x),
            T::from_f64(self.y),
            T::from_f64(self.z),
        )
    }
}

impl Mat3<f64> {
    pub fn lift<T: Scalar>(&self) -> Mat3<T> {
        let mut r = Mat3::zero();
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] = T::from_f64(self.m[i][j]);
            }
        }
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialMotion<S> {
    pub angular: Vec3<S>,
    pub linear: Vec3<S>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialForce<S> {
    pub moment: Vec3<S>,
    pub force: Vec3<S>,
}

macro_rules! spatial_vector_ops {
    ($t:ident, $a:ident, $b:ident) => {
        impl<S: Scalar> $t<S> {
            pub fn new($a: Vec3<S>, $b: Vec3<S>) -> Self {
                Self { $a, $b }
            }

            pub fn zero() -> Self {
                Self::new(Vec3::zero(), Vec3::zero())
            }

            pub fn from_array(v: [S; 6]) -> Self {
                Self::new(Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]))
            }

            pub fn to_array(&self) -> [S; 6] {
                [
                    self.$a.x, self.$a.y, self.$a.z, self.$b.x, self.$b.y, self.$b.z,
                ]
            }

            pub fn scale(&self, k: S) -> Self {
                Self::new(self.$a.scale(k), self.$b.scale(k))
            }
        }

        impl<S: Scalar> Add for $t<S> {
            type Output = Self;
            #[inline]
            fn add(self, o: Self) -> Self {
                Self::new(self.$a + o.$a, self.$b + o.$b)
            }
        }

        impl<S: Scalar> AddAssign for $t<S> {
            #[inline]
            fn add_assign(&mut self, o: Self) {
                *self = *self + o;
            }
        }

        impl<S: Scalar> Sub for $t<S> {
            type Output = Self;
            #[inline]
            fn sub(self, o: Self) -> Self {
                Self::new(self.$a - o.$a, self.$b - o.$b)
            }
        }

        impl<S: Scalar> Neg for $t<S> {
            type Output = Self;
            #[inline]
            fn neg(self) -> Self {
                Self::new(-self.$a, -self.$b)
            }
        }
    };
}

spatial_vector_ops!(SpatialMotion, angular, linear);
spatial_vector_ops!(SpatialForce, moment, force);

impl<S: Scalar> SpatialMotion<S> {
    /// Power pairing `v · f`.
    #[inline]
    pub fn dot(&self, f: &SpatialForce<S>) -> S {
        self.angular.dot(&f.moment) + self.linear.dot(&f.force)
    }

    /// Motion cross product `self ×ₘ m`.
    #[inline]
    pub fn cross_motion(&self, m: &SpatialMotion<S>) -> SpatialMotion<S> {
        SpatialMotion::new(
            self.angular.cross(&m.angular),
            self.angular.cross(&m.linear) + self.linear.cross(&m.angular),
        )
    }

    /// Force cross product `self ×* f`.
    #[inline]
    pub fn cross_force(&self, f: &SpatialForce<S>) -> SpatialForce<S> {
        SpatialForce::new(
            self.angular.cross(&f.moment) + self.linear.cross(&f.force),
            self.angular.cross(&f.force),
        )
    }
}

/// Free-function form of [`SpatialMotion::cross_motion`].
pub fn cross_motion<S: Scalar>(v: &SpatialMotion<S>, m: &SpatialMotion<S>) -> SpatialMotion<S> {
    v.cross_motion(m)
}

/// Free-function form of [`SpatialMotion::cross_force`].
pub fn cross_force<S: Scalar>(v: &SpatialMotion<S>, f: &SpatialForce<S>) -> SpatialForce<S> {
    v.cross_force(f)
}

/// Rigid transform stored as a unit quaternion plus translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialTransform<S> {
    pub rotation: Quat<S>,
    pub translation: Vec3<S>,
}

impl<S: Scalar> SpatialTransform<S> {
    pub fn identity() -> Self {
        Self {
            rotation: Quat::identity(),
            translation: Vec3::zero(),
        }
    }

    /// The rotation is renormalized.
    pub fn new(rotation: Quat<S>, translation: Vec3<S>) -> Self {
        Self {
            rotation: rotation.normalized(),
            translation,
        }
    }

    pub fn translation(t: Vec3<S>) -> Self {
        Self {
            rotation: Quat::identity(),
            translation: t,
        }
    }

    pub fn rotation(axis: &Vec3<S>, angle: S) -> Self {
        Self {
            rotation: Quat::from_axis_angle(axis, angle),
            translation: Vec3::zero(),
        }
    }

    /// `self ∘ b`: applies `b` first, then `self`.
    pub fn compose(&self, b: &Self) -> Self {
        Self {
            rotation: self.rotation.mul(&b.rotation).normalized(),
            translation: self.rotation.rotate(&b.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rinv = self.rotation.conjugate();
        Self {
            rotation: rinv,
            translation: -rinv.rotate(&self.translation),
        }
    }

    pub fn apply_point(&self, p: &Vec3<S>) -> Vec3<S> {
        self.rotation.rotate(p) + self.translation
    }

    /// Matrix form for repeated application.
    pub fn to_plucker(&self) -> Plucker<S> {
        Plucker {
            rot: self.rotation.to_matrix(),
            trans: self.translation,
        }
    }

    pub fn transform_motion(&self, v: &SpatialMotion<S>) -> SpatialMotion<S> {
        self.to_plucker().motion(v)
    }

    pub fn transform_force(&self, f: &SpatialForce<S>) -> SpatialForce<S> {
        self.to_plucker().force(f)
    }
}

/// Free-function form of [`SpatialTransform::compose`].
pub fn transform_compose<S: Scalar>(
    a: &SpatialTransform<S>,
    b: &SpatialTransform<S>,
) -> SpatialTransform<S> {
    a.compose(b)
}

/// Free-function form of [`SpatialTransform::transform_motion`].
pub fn transform_motion<S: Scalar>(x: &SpatialTransform<S>, v: &SpatialMotion<S>) -> SpatialMotion<S> {
    x.transform_motion(v)
}

/// Rotation-matrix form of a [`SpatialTransform`], used inside the recursions.
#[derive(Clone, Copy, Debug)]
pub struct Plucker<S> {
    pub rot: Mat3<S>,
    pub trans: Vec3<S>,
}

impl<S: Scalar> Plucker<S> {
    pub fn identity() -> Self {
        Self {
            rot: Mat3::identity(),
            trans: Vec3::zero(),
        }
    }

    /// Local → target coordinates.
    #[inline]
    pub fn motion(&self, v: &SpatialMotion<S>) -> SpatialMotion<S> {
        let w = self.rot.mul_vec(&v.angular);
        SpatialMotion::new(w, self.rot.mul_vec(&v.linear) + self.trans.cross(&w))
    }

    /// Target → local coordinates.
    #[inline]
    pub fn inv_motion(&self, v: &SpatialMotion<S>) -> SpatialMotion<S> {
        SpatialMotion::new(
            self.rot.tr_mul_vec(&v.angular),
            self.rot.tr_mul_vec(&(v.linear - self.trans.cross(&v.angular))),
        )
    }

    /// Local → target coordinates.
    #[inline]
    pub fn force(&self, f: &SpatialForce<S>) -> SpatialForce<S> {
        let fr = self.rot.mul_vec(&f.force);
        SpatialForce::new(self.rot.mul_vec(&f.moment) + self.trans.cross(&fr), fr)
    }

    /// Target → local coordinates.
    #[inline]
    pub fn inv_force(&self, f: &SpatialForce<S>) -> SpatialForce<S> {
        SpatialForce::new(
            self.rot.tr_mul_vec(&(f.moment - self.trans.cross(&f.force))),
            self.rot.tr_mul_vec(&f.force),
        )
    }
}

/// Rigid-body inertia about the body-frame origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialInertia<S> {
    pub mass: S,
    pub com: Vec3<S>,
    /// Rotational inertia about the frame origin (not the centre of mass).
    pub rot_inertia: Mat3<S>,
}

impl<S: Scalar> SpatialInertia<S> {
    /// Build from the inertia about the centre of mass via the parallel-axis theorem.
    pub fn from_com(mass: S, com: Vec3<S>, inertia_com: Mat3<S>) -> Self {
        let cx = Mat3::skew(&com);
        // I_O = I_c + m cx cxᵀ
        let shift = cx.mul_mat(&cx.transpose()) * mass;
        Self {
            mass,
            com,
            rot_inertia: inertia_com + shift,
        }
    }

    pub fn point_mass(mass: S, at: Vec3<S>) -> Self {
        Self::from_com(mass, at, Mat3::zero())
    }

    /// Momentum of motion `v`.
    #[inline]
    pub fn apply(&self, v: &SpatialMotion<S>) -> SpatialForce<S> {
        let mc = self.com.scale(self.mass);
        SpatialForce::new(
            self.rot_inertia.mul_vec(&v.angular) + mc.cross(&v.linear),
            v.linear.scale(self.mass) - mc.cross(&v.angular),
        )
    }

    /// Dense 6×6 matrix (motion → force).
    pub fn to_matrix(&self) -> SpatialMatrix<S> {
        SpatialMatrix::from_columns(|k| {
            let mut e = [S::zero(); 6];
            e[k] = S::one();
            self.apply(&SpatialMotion::from_array(e))
        })
    }
}

/// Free-function form of [`SpatialInertia::apply`].
pub fn inertia_apply<S: Scalar>(i: &SpatialInertia<S>, v: &SpatialMotion<S>) -> SpatialForce<S> {
    i.apply(v)
}

/// Dense 6×6 operator mapping motion vectors to force vectors
/// (articulated-body inertias).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialMatrix<S> {
    pub m: [[S; 6]; 6],
}

impl<S: Scalar> SpatialMatrix<S> {
    pub fn zero() -> Self {
        Self {
            m: [[S::zero(); 6]; 6],
        }
    }

    pub fn from_columns(mut col: impl FnMut(usize) -> SpatialForce<S>) -> Self {
        let mut r = Self::zero();
        for k in 0..6 {
            let c = col(k).to_array();
            for (i, ci) in c.iter().enumerate() {
                r.m[i][k] = *ci;
            }
        }
        r
    }

    #[inline]
    pub fn apply(&self, v: &SpatialMotion<S>) -> SpatialForce<S> {
        let x = v.to_array();
        let mut out = [S::zero(); 6];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.m[i];
            let mut acc = S::zero();
            for k in 0..6 {
                acc += row[k] * x[k];
            }
            *o = acc;
        }
        SpatialForce::from_array(out)
    }

    /// `self − u uᵀ / d` (articulated inertia handed to the parent).
    pub fn sub_outer(&self, u: &SpatialForce<S>, d: S) -> Self {
        let u = u.to_array();
        let mut r = *self;
        for i in 0..6 {
            let ui = u[i] / d;
            for j in 0..6 {
                r.m[i][j] -= ui * u[j];
            }
        }
        r
    }

    /// Express an inertia given in local coordinates in target coordinates.
    pub fn to_parent(&self, x: &Plucker<S>) -> Self {
        Self::from_columns(|k| {
            let mut e = [S::zero(); 6];
            e[k] = S::one();
            let v_local = x.inv_motion(&SpatialMotion::from_array(e));
            x.force(&self.apply(&v_local))
        })
    }
}

impl<S: Scalar> Add for SpatialMatrix<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut r = self;
        for i in 0..6 {
            for j in 0..6 {
                r.m[i][j] += o.m[i][j];
            }
        }
        r
    }
}

impl<S: Scalar> AddAssign for SpatialMatrix<S> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}
