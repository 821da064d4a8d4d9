//! Small fixed-size vector and matrix types for splatting geometry.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3<T>(pub [T; 3]);

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Mat3<T>(pub [[T; 3]; 3]);

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Mat2<T>(pub [[T; 2]; 2]);

impl<T: Real> Vec3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Self([x, y, z])
    }

    #[inline]
    pub fn zero() -> Self {
        Self([T::zero(); 3])
    }

    #[inline]
    pub fn x(&self) -> T {
        self.0[0]
    }

    #[inline]
    pub fn y(&self) -> T {
        self.0[1]
    }

    #[inline]
    pub fn z(&self) -> T {
        self.0[2]
    }

    #[inline]
    pub fn dot(&self, o: &Self) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    #[inline]
    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn cross(&self, o: &Self) -> Self {
        let [a, b, c] = self.0;
        let [d, e, f] = o.0;
        Self([b * f - c * e, c * d - a * f, a * e - b * d])
    }

    /// Unit vector in the same direction; the zero vector is returned unchanged.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n > T::zero() {
            *self * (T::one() / n)
        } else {
            *self
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self([f(self.0[0]), f(self.0[1]), f(self.0[2])])
    }

    pub fn cast<U: Real>(&self) -> Vec3<U> {
        Vec3(self.0.map(|v| U::lit(v.to_f64_lossy())))
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    #[inline]
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for Vec3<T> {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

impl<T: Real> Mat3<T> {
    pub fn zero() -> Self {
        Self([[T::zero(); 3]; 3])
    }

    pub fn identity() -> Self {
        Self::diag(Vec3([T::one(); 3]))
    }

    pub fn diag(d: Vec3<T>) -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            m.0[i][i] = d.0[i];
        }
        m
    }

    pub fn from_rows(rows: [[T; 3]; 3]) -> Self {
        Self(rows)
    }

    #[inline]
    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Self([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    #[inline]
    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        let m = &self.0;
        Vec3([
            m[0][0] * v.0[0] + m[0][1] * v.0[1] + m[0][2] * v.0[2],
            m[1][0] * v.0[0] + m[1][1] * v.0[1] + m[1][2] * v.0[2],
            m[2][0] * v.0[0] + m[2][1] * v.0[1] + m[2][2] * v.0[2],
        ])
    }

    pub fn scale(&self, s: T) -> Self {
        Self(self.0.map(|r| r.map(|v| v * s)))
    }

    pub fn determinant(&self) -> T {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Inverse via the adjugate; `None` when the determinant vanishes.
    pub fn inverse(&self) -> Option<Self> {
        let det = self.determinant();
        if det == T::zero() || !det.is_finite() {
            return None;
        }
        let m = &self.0;
        let inv = T::one() / det;
        let c = |a: usize, b: usize, c: usize, d: usize| m[a][b] * m[c][d] - m[a][d] * m[c][b];
        Some(Self([
            [
                c(1, 1, 2, 2) * inv,
                -c(0, 1, 2, 2) * inv,
                c(0, 1, 1, 2) * inv,
            ],
            [
                -c(1, 0, 2, 2) * inv,
                c(0, 0, 2, 2) * inv,
                -c(0, 0, 1, 2) * inv,
            ],
            [
                c(1, 0, 2, 1) * inv,
                -c(0, 0, 2, 1) * inv,
                c(0, 0, 1, 1) * inv,
            ],
        ]))
    }

    /// Largest absolute deviation of `self * self^T` from the identity.
    pub fn orthonormality_error(&self) -> T {
        let p = *self * self.transpose();
        let mut err = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { T::one() } else { T::zero() };
                err = err.max((p.0[i][j] - target).abs());
            }
        }
        err
    }

    pub fn cast<U: Real>(&self) -> Mat3<U> {
        Mat3(self.0.map(|r| r.map(|v| U::lit(v.to_f64_lossy()))))
    }
}

impl<T: Real> Mul for Mat3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let a = &self.0;
        let b = &o.0;
        let mut out = [[T::zero(); 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        Self(out)
    }
}

impl<T: Real> Add for Mat3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] += o.0[i][j];
            }
        }
        out
    }
}

impl<T: Real> Mat2<T> {
    pub fn new(a: T, b: T, c: T, d: T) -> Self {
        Self([[a, b], [c, d]])
    }

    pub fn determinant(&self) -> T {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }
}

/// Rotation matrix of the normalized quaternion `(w, x, y, z)`.
pub fn quat_to_rotation<T: Real>(q: [T; 4]) -> Mat3<T> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    rotation_of_unit_quat([w, x, y, z])
}

#[inline]
pub(crate) fn rotation_of_unit_quat<T: Real>(q: [T; 4]) -> Mat3<T> {
    let [w, x, y, z] = q;
    let one = T::one();
    let two = one + one;
    Mat3([
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
    ])
}

/// Unit quaternion `(w, x, y, z)` of a proper rotation matrix (Shepperd's method).
pub fn rotation_to_quat<T: Real>(m: &Mat3<T>) -> [T; 4] {
    let r = &m.0;
    let one = T::one();
    let two = one + one;
    let quarter = T::lit(0.25);
    let trace = r[0][0] + r[1][1] + r[2][2];
    let q = if trace > T::zero() {
        let s = (trace + one).sqrt() * two;
        [
            quarter * s,
            (r[2][1] - r[1][2]) / s,
            (r[0][2] - r[2][0]) / s,
            (r[1][0] - r[0][1]) / s,
        ]
    } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
        let s = (one + r[0][0] - r[1][1] - r[2][2]).sqrt() * two;
        [
            (r[2][1] - r[1][2]) / s,
            quarter * s,
            (r[0][1] + r[1][0]) / s,
            (r[0][2] + r[2][0]) / s,
        ]
    } else if r[1][1] > r[2][2] {
        let s = (one + r[1][1] - r[0][0] - r[2][2]).sqrt() * two;
        [
            (r[0][2] - r[2][0]) / s,
            (r[0][1] + r[1][0]) / s,
            quarter * s,
            (r[1][2] + r[2][1]) / s,
        ]
    } else {
        let s = (one + r[2][2] - r[0][0] - r[1][1]).sqrt() * two;
        [
            (r[1][0] - r[0][1]) / s,
            (r[0][2] + r[2][0]) / s,
            (r[1][2] + r[2][1]) / s,
            quarter * s,
        ]
    };
    let n = q.iter().fold(T::zero(), |acc, v| acc + *v * *v).sqrt();
    q.map(|v| v / n)
}
