//! Small fixed-size 3-D algebra generic over [`Scalar`].

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3<S> {
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: Scalar> Vec3<S> {
    #[inline]
    pub fn new(x: S, y: S, z: S) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero(), S::zero())
    }

    pub fn from_f64(v: [f64; 3]) -> Self {
        Self::new(S::from_f64(v[0]), S::from_f64(v[1]), S::from_f64(v[2]))
    }

    pub fn to_array(self) -> [S; 3] {
        [self.x, self.y, self.z]
    }

    pub fn values(&self) -> [f64; 3] {
        [self.x.value(), self.y.value(), self.z.value()]
    }

    #[inline]
    pub fn dot(&self, o: &Self) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(&self, o: &Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn scale(&self, k: S) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn norm(&self) -> S {
        self.dot(self).sqrt()
    }
}

impl<S: Scalar> Add for Vec3<S> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<S: Scalar> AddAssign for Vec3<S> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Scalar> Sub for Vec3<S> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<S: Scalar> Neg for Vec3<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3×3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3<S> {
    pub m: [[S; 3]; 3],
}

impl<S: Scalar> Mat3<S> {
    pub fn zero() -> Self {
        Self {
            m: [[S::zero(); 3]; 3],
        }
    }

    pub fn identity() -> Self {
        Self::diagonal(S::one(), S::one(), S::one())
    }

    pub fn diagonal(a: S, b: S, c: S) -> Self {
        let mut m = Self::zero();
        m.m[0][0] = a;
        m.m[1][1] = b;
        m.m[2][2] = c;
        m
    }

    /// Symmetric matrix from upper-triangular entries `(xx, xy, xz, yy, yz, zz)`.
    pub fn symmetric(u: [S; 6]) -> Self {
        Self {
            m: [[u[0], u[1], u[2]], [u[1], u[3], u[4]], [u[2], u[4], u[5]]],
        }
    }

    pub fn upper(&self) -> [S; 6] {
        let m = &self.m;
        [m[0][0], m[0][1], m[0][2], m[1][1], m[1][2], m[2][2]]
    }

    /// Skew-symmetric cross-product matrix: `skew(a) b = a × b`.
    pub fn skew(a: &Vec3<S>) -> Self {
        let z = S::zero();
        Self {
            m: [[z, -a.z, a.y], [a.z, z, -a.x], [-a.y, a.x, z]],
        }
    }

    #[inline]
    pub fn mul_vec(&self, v: &Vec3<S>) -> Vec3<S> {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    #[inline]
    pub fn tr_mul_vec(&self, v: &Vec3<S>) -> Vec3<S> {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z,
        )
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                t.m[i][j] = self.m[j][i];
            }
        }
        t
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut r = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = S::zero();
                for k in 0..3 {
                    acc += self.m[i][k] * o.m[k][j];
                }
                r.m[i][j] = acc;
            }
        }
        r
    }
}

impl<S: Scalar> Add for Mat3<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut r = self;
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] += o.m[i][j];
            }
        }
        r
    }
}

impl<S: Scalar> Sub for Mat3<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut r = self;
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] -= o.m[i][j];
            }
        }
        r
    }
}

impl<S: Scalar> Mul<S> for Mat3<S> {
    type Output = Self;
    fn mul(self, k: S) -> Self {
        let mut r = self;
        for row in r.m.iter_mut() {
            for e in row.iter_mut() {
                *e *= k;
            }
        }
        r
    }
}

/// Quaternion `w + xi + yj + zk`. Rotations use unit quaternions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat<S> {
    pub w: S,
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: Scalar> Quat<S> {
    pub fn new(w: S, x: S, y: S, z: S) -> Self {
        Self { w, x, y, z }
    }

    pub fn identity() -> Self {
        Self::new(S::one(), S::zero(), S::zero(), S::zero())
    }

    /// Rotation by `angle` about the unit vector `axis`.
    pub fn from_axis_angle(axis: &Vec3<S>, angle: S) -> Self {
        let half = angle.scale(0.5);
        let s = half.sin();
        Self::new(half.cos(), axis.x * s, axis.y * s, axis.z * s)
    }

    pub fn norm(&self) -> S {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self ⊗ o` (apply `o` first).
    pub fn mul(&self, o: &Self) -> Self {
        Self::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    pub fn to_matrix(&self) -> Mat3<S> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let two = S::from_f64(2.0);
        let one = S::one();
        Mat3 {
            m: [
                [
                    one - two * (y * y + z * z),
                    two * (x * y - w * z),
                    two * (x * z + w * y),
                ],
                [
                    two * (x * y + w * z),
                    one - two * (x * x + z * z),
                    two * (y * z - w * x),
                ],
                [
                    two * (x * z - w * y),
                    two * (y * z + w * x),
                    one - two * (x * x + y * y),
                ],
            ],
        }
    }

    pub fn rotate(&self, v: &Vec3<S>) -> Vec3<S> {
        self.to_matrix().mul_vec(v)
    }

    pub fn values(&self) -> [f64; 4] {
        [self.w.value(), self.x.value(), self.y.value(), self.z.value()]
    }
}
