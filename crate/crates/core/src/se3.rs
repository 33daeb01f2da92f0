//! Rotations and rigid transforms.
//!
//! Rotations are stored as 3x3 matrices. Axis-angle vectors are only used as
//! an input/output parametrization (pose documents, optimizer parameters).

use std::ops::Mul;

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Below this norm of `unit(u) x unit(v)` two directions count as
/// (anti-)parallel.
pub const PARALLEL_EPS: f64 = 1e-8;

/// An element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps a matrix, checking orthonormality and orientation.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let r = Rotation(m);
        if r.orthonormality_error() > 1e-9 || (m.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("matrix is not a proper rotation"));
        }
        Ok(r)
    }

    /// Rotation by `‖v‖` radians about `v`; the zero vector maps to identity.
    pub fn from_rotation_vector(v: &Vec3) -> Self {
        let angle = v.norm();
        if angle == 0.0 {
            return Self::identity();
        }
        rodrigues(&(v / angle), angle)
    }

    /// Inverse of [`Rotation::from_rotation_vector`], angle in `[0, π]`.
    pub fn to_rotation_vector(&self) -> Vec3 {
        let m = &self.0;
        let w = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        let angle = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos();
        if angle < 1e-4 {
            // θ / (2 sin θ) ≈ ½ + θ²/12
            return w * (0.5 + angle * angle / 12.0);
        }
        if PI - angle > 1e-3 {
            return w * (angle / (2.0 * angle.sin()));
        }
        // Near a half turn the skew part vanishes; read the axis from the
        // symmetric part, which is cos θ·I + (1 − cos θ)·aaᵀ, and take its
        // sign from the skew part.
        let c = angle.cos();
        let s = ((m + m.transpose()) * 0.5 - Matrix3::identity() * c) / (1.0 - c);
        let k = (0..3).max_by(|&i, &j| s[(i, i)].total_cmp(&s[(j, j)])).unwrap();
        let mut axis: Vec3 = s.column(k).into();
        axis /= axis.norm();
        if axis.dot(&w) < 0.0 {
            axis = -axis;
        }
        axis * angle
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).norm()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

fn rodrigues(unit_axis: &Vec3, angle: f64) -> Rotation {
    let k = unit_axis;
    let kx = k.cross_matrix();
    let (s, c) = angle.sin_cos();
    Rotation(Matrix3::identity() + kx * s + kx * kx * (1.0 - c))
}

/// Rodrigues rotation about `axis` by `angle` radians.
///
/// A zero axis is accepted only together with a zero angle.
pub fn axis_angle_rotation(axis: &Vec3, angle: f64) -> Result<Rotation> {
    if !axis.iter().all(|c| c.is_finite()) || !angle.is_finite() {
        return Err(Error::invalid("non-finite axis-angle rotation"));
    }
    let n = axis.norm();
    if n == 0.0 {
        if angle == 0.0 {
            return Ok(Rotation::identity());
        }
        return Err(Error::invalid("zero rotation axis with nonzero angle"));
    }
    Ok(rodrigues(&(axis / n), angle))
}

/// The minimal-angle rotation taking the direction of `u` onto the direction
/// of `v`.
///
/// Anti-parallel inputs rotate by π about the coordinate axis least aligned
/// with `u`, orthogonalized against `u`.
pub fn rotation_between(u: &Vec3, v: &Vec3) -> Result<Rotation> {
    let (nu, nv) = (u.norm(), v.norm());
    if !(nu > 0.0 && nv > 0.0) || !nu.is_finite() || !nv.is_finite() {
        return Err(Error::invalid("rotation_between needs two nonzero vectors"));
    }
    let a = u / nu;
    let b = v / nv;
    let k = a.cross(&b);
    let c = a.dot(&b);
    if k.norm() < PARALLEL_EPS {
        if c > 0.0 {
            return Ok(Rotation::identity());
        }
        return Ok(rodrigues(&perpendicular_unit(&a), PI));
    }
    // R = I + [k]x + [k]x² / (1 + c), exact for unit a, b.
    let kx = k.cross_matrix();
    Ok(Rotation(Matrix3::identity() + kx + kx * kx / (1.0 + c)))
}

fn perpendicular_unit(a: &Vec3) -> Vec3 {
    let mut axis = Vec3::zeros();
    let i = a.iamin();
    axis[i] = 1.0;
    let p = axis - a * a.dot(&axis);
    p.normalize()
}

/// An element of SE(3): `x ↦ R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vec3::zeros())
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Rotation::identity(), t)
    }

    pub fn from_rotation(r: Rotation) -> Self {
        Self::new(r, Vec3::zeros())
    }

    /// Rotation `r` about the fixed point `center`.
    pub fn rotation_about(r: Rotation, center: &Vec3) -> Self {
        Self::new(r, center - r.apply(center))
    }

    pub fn apply_point(&self, x: &Vec3) -> Vec3 {
        self.rotation.apply(x) + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation.apply(v)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation.apply(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -rt.apply(&self.translation),
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.matrix().iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

pub fn apply_point(t: &RigidTransform, x: &Vec3) -> Vec3 {
    t.apply_point(x)
}
