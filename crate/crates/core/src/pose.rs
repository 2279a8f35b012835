//! Rigid transforms on SE(3).
//!
//! Rotations are unit quaternions kept in the canonical hemisphere `w >= 0`.
//! Distances and geodesics use the product structure SO(3) x R^3: the
//! rotational part follows the great-circle arc (slerp) and the translational
//! part is linear. The coupled SE(3) exponential and logarithm are provided as
//! well for converting between poses and twists.

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use crate::error::{invalid, Result};

/// Unit quaternion rotation with `w >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    q: UnitQuaternion<f64>,
}

impl Rotation {
    pub fn identity() -> Self {
        Self {
            q: UnitQuaternion::identity(),
        }
    }

    /// Builds a rotation from raw `(w, x, y, z)` components, renormalizing.
    ///
    /// Returns `None` for a zero or non-finite quaternion.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Option<Self> {
        let raw = Quaternion::new(w, x, y, z);
        let norm = raw.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return None;
        }
        Some(Self::canonical(UnitQuaternion::new_unchecked(raw / norm)))
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        Self::exp(axis / n * angle)
    }

    fn canonical(q: UnitQuaternion<f64>) -> Self {
        let mut raw = *q.quaternion();
        if raw.w < 0.0 {
            raw = -raw;
        }
        // renormalize so long composition chains stay on the unit sphere
        let norm = raw.norm();
        Self {
            q: UnitQuaternion::new_unchecked(raw / norm),
        }
    }

    /// `(w, x, y, z)`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.q.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.q
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.q.to_rotation_matrix().into_inner()
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Self::canonical(self.q * other.q)
    }

    pub fn inverse(&self) -> Rotation {
        Self::canonical(self.q.inverse())
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.q.transform_vector(v)
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let q = self.q.quaternion();
        2.0 * q.imag().norm().atan2(q.w.abs())
    }

    /// Geodesic angle between two rotations, `2 acos(|<qa, qb>|)`.
    ///
    /// Evaluated as `4 atan2(|qa - qb|, |qa + qb|)` on the nearer sign of
    /// `qb`: the same quantity, exactly symmetric, and accurate near zero.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        let a = self.q.quaternion().coords;
        let mut b = other.q.quaternion().coords;
        if a.dot(&b) < 0.0 {
            b = -b;
        }
        4.0 * (a - b).norm().atan2((a + b).norm())
    }

    /// SO(3) exponential of an axis-angle vector.
    pub fn exp(phi: Vector3<f64>) -> Rotation {
        let theta = phi.norm();
        let half = 0.5 * theta;
        let (w, k) = if theta < 1e-6 {
            let t2 = theta * theta;
            (1.0 - t2 / 8.0, 0.5 - t2 / 48.0)
        } else {
            (half.cos(), half.sin() / theta)
        };
        let v = phi * k;
        Self::canonical(UnitQuaternion::new_unchecked(Quaternion::new(
            w, v.x, v.y, v.z,
        )))
    }

    /// SO(3) logarithm; the result has norm in `[0, pi]`.
    pub fn log(&self) -> Vector3<f64> {
        let q = self.q.quaternion();
        let v = q.imag();
        let n = v.norm();
        let w = q.w;
        if n < 1e-8 {
            // theta / sin(theta / 2) -> 2 / w (1 - n^2 / (3 w^2))
            let w = w.max(f64::EPSILON);
            v * (2.0 / w * (1.0 - n * n / (3.0 * w * w)))
        } else {
            let theta = 2.0 * n.atan2(w);
            v * (theta / n)
        }
    }

    /// Point on the shortest arc from `self` to `other` at fraction `t`.
    pub fn slerp(&self, other: &Rotation, t: f64) -> Rotation {
        let rel = self.inverse().compose(other);
        self.compose(&Rotation::exp(rel.log() * t))
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

/// Rigid transform `x -> R x + t`, translation in mm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Rotation::identity(), t)
    }

    pub fn from_rotation(r: Rotation) -> Self {
        Self::new(r, Vector3::zeros())
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.wxyz().iter().all(|v| v.is_finite())
    }

    /// Homogeneous 4x4 matrix.
    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(p) + self.translation
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: inv,
            translation: -inv.rotate(&self.translation),
        }
    }

    /// Coupled SE(3) logarithm.
    pub fn log(&self) -> Twist {
        let phi = self.rotation.log();
        let theta = phi.norm();
        let k = hat(&phi);
        // V^-1 = I - K/2 + c K^2
        let c = if theta < 1e-4 {
            let t2 = theta * theta;
            1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
        } else {
            let half = 0.5 * theta;
            1.0 / (theta * theta) - half.cos() / half.sin() / (2.0 * theta)
        };
        let v_inv = Matrix3::identity() - k * 0.5 + k * k * c;
        Twist {
            rho: v_inv * self.translation,
            phi,
        }
    }

    /// Coupled SE(3) exponential.
    pub fn exp(twist: &Twist) -> Pose {
        let phi = twist.phi;
        let theta = phi.norm();
        let k = hat(&phi);
        let (a, b) = if theta < 1e-4 {
            let t2 = theta * theta;
            (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
        } else {
            let t2 = theta * theta;
            (
                (1.0 - theta.cos()) / t2,
                (theta - theta.sin()) / (t2 * theta),
            )
        };
        let v = Matrix3::identity() + k * a + k * k * b;
        Pose {
            rotation: Rotation::exp(phi),
            translation: v * twist.rho,
        }
    }
}

fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Tangent vector: translational part `rho` (mm), rotational part `phi` (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub rho: Vector3<f64>,
    pub phi: Vector3<f64>,
}

impl Twist {
    pub fn new(rho: Vector3<f64>, phi: Vector3<f64>) -> Self {
        Self { rho, phi }
    }

    pub fn zero() -> Self {
        Self::default()
    }
}

/// Relative weighting of translation (per mm) and rotation (per rad) in the
/// pose metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    pub w_trans: f64,
    pub w_rot: f64,
}

impl Default for MetricWeights {
    /// 0.1 rad weighs as much as 1 mm.
    fn default() -> Self {
        Self {
            w_trans: 1.0,
            w_rot: 10.0,
        }
    }
}

impl MetricWeights {
    pub fn new(w_trans: f64, w_rot: f64) -> Result<Self> {
        let w = Self { w_trans, w_rot };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w_trans > 0.0 && self.w_trans.is_finite()) {
            return Err(invalid(format!(
                "w_trans must be > 0, got {}",
                self.w_trans
            )));
        }
        if !(self.w_rot >= 0.0 && self.w_rot.is_finite()) {
            return Err(invalid(format!("w_rot must be >= 0, got {}", self.w_rot)));
        }
        Ok(())
    }
}

/// Length of the product-metric geodesic between two poses.
pub fn geodesic_distance(a: &Pose, b: &Pose, w: &MetricWeights) -> f64 {
    let dt = (a.translation - b.translation).norm();
    let theta = a.rotation.angle_to(&b.rotation);
    (w.w_trans * w.w_trans * dt * dt + w.w_rot * w.w_rot * theta * theta).sqrt()
}

/// Point at fraction `t` along the geodesic from `a` to `b`.
pub fn geodesic_interpolate(a: &Pose, b: &Pose, t: f64) -> Result<Pose> {
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!(
            "interpolation parameter {t} outside [0, 1]"
        )));
    }
    Ok(interpolate(a, b, t))
}

pub(crate) fn interpolate(a: &Pose, b: &Pose, t: f64) -> Pose {
    if t == 0.0 {
        return *a;
    }
    if t == 1.0 {
        return *b;
    }
    Pose {
        rotation: a.rotation.slerp(&b.rotation, t),
        translation: a.translation + (b.translation - a.translation) * t,
    }
}

/// Huber penalty: `s^2` below `1/sqrt(2)`, `sqrt(2) s - 1/2` above.
pub fn huber(s: f64) -> Result<f64> {
    if s.is_nan() || s < 0.0 {
        return Err(invalid(format!("huber argument must be >= 0, got {s}")));
    }
    Ok(huber_unchecked(s))
}

#[inline]
pub(crate) fn huber_unchecked(s: f64) -> f64 {
    if s < FRAC_1_SQRT_2 {
        s * s
    } else {
        SQRT_2 * s - 0.5
    }
}
