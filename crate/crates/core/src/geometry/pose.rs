use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Drift above which a rotation is projected back onto SO(3).
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

/// Rigid transform in SE(3).
///
/// Applied to a point `x` as `R x + t`. Composition follows matrix order:
/// `a.compose(&b)` is the 4x4 product `a * b`, so `b` is applied first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, projecting `rotation` onto SO(3) when it drifts more
    /// than [`ORTHONORMAL_TOLERANCE`] from orthonormality.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let rotation = if orthonormality_drift(&rotation) > ORTHONORMAL_TOLERANCE {
            project_to_so3(&rotation)
        } else {
            rotation
        };
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    /// Rotation about `axis` by `angle` radians followed by `translation`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = if axis.norm() == 0.0 || angle == 0.0 {
            Matrix3::identity()
        } else {
            *Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle).matrix()
        };
        Self {
            rotation,
            translation,
        }
    }

    /// Pose from a rotation vector (axis times angle, radians) and translation.
    pub fn from_rotation_vector(rotvec: &Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *Rotation3::new(*rotvec).matrix(),
            translation,
        }
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *q.to_rotation_matrix().matrix(),
            translation,
        }
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        let rotation = m.fixed_view::<3, 3>(0, 0).into_owned();
        let translation = m.fixed_view::<3, 1>(0, 3).into_owned();
        Self::new(rotation, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `self * other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    /// `(R^T, -R^T t)`.
    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn is_valid(&self) -> bool {
        orthonormality_drift(&self.rotation) <= ORTHONORMAL_TOLERANCE
            && self.translation.iter().all(|x| x.is_finite())
    }

    pub fn to_vec6(&self) -> Result<Vec6Pose> {
        let (roll, pitch, yaw) = euler_xyz(&self.rotation)?;
        Ok(Vec6Pose {
            tx: self.translation.x,
            ty: self.translation.y,
            tz: self.translation.z,
            roll: roll.to_degrees(),
            pitch: pitch.to_degrees(),
            yaw: yaw.to_degrees(),
        })
    }

    pub fn from_vec6(v: &Vec6Pose) -> Pose {
        let r = Rotation3::from_euler_angles(
            v.roll.to_radians(),
            v.pitch.to_radians(),
            v.yaw.to_radians(),
        );
        Pose {
            rotation: *r.matrix(),
            translation: Vector3::new(v.tx, v.ty, v.tz),
        }
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn inverse(p: &Pose) -> Pose {
    p.inverse()
}

pub fn pose_to_vec6(p: &Pose) -> Result<Vec6Pose> {
    p.to_vec6()
}

pub fn vec6_to_pose(v: &Vec6Pose) -> Pose {
    Pose::from_vec6(v)
}

/// Translation in meters plus extrinsic X-Y-Z Euler angles in degrees.
///
/// The rotation is `Rz(yaw) * Ry(pitch) * Rx(roll)`: roll about the fixed X
/// axis first, then pitch about Y, then yaw about Z.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec6Pose {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Vec6Pose {
    pub fn new(tx: f64, ty: f64, tz: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            tx,
            ty,
            tz,
            roll,
            pitch,
            yaw,
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.tx, self.ty, self.tz, self.roll, self.pitch, self.yaw]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    /// Component-wise `|self - other|`, with angle differences wrapped to
    /// (-180, 180] degrees before taking the absolute value.
    pub fn abs_diff(&self, other: &Vec6Pose) -> [f64; 6] {
        let a = self.to_array();
        let b = other.to_array();
        let mut out = [0.0; 6];
        for k in 0..6 {
            let d = a[k] - b[k];
            out[k] = if k < 3 { d.abs() } else { wrap_degrees(d).abs() };
        }
        out
    }

    /// `true` when every component of `abs_diff` is strictly below `threshold`.
    pub fn within(&self, other: &Vec6Pose, threshold: &Vec6Pose) -> bool {
        let d = self.abs_diff(other);
        let th = threshold.to_array();
        d.iter().zip(th.iter()).all(|(d, t)| d < t)
    }
}

/// Wraps an angle in degrees to (-180, 180].
pub fn wrap_degrees(a: f64) -> f64 {
    let mut w = a % 360.0;
    if w <= -180.0 {
        w += 360.0;
    } else if w > 180.0 {
        w -= 360.0;
    }
    w
}

fn euler_xyz(r: &Matrix3<f64>) -> Result<(f64, f64, f64)> {
    // R = Rz(y) Ry(p) Rx(r); R[2,0] = -sin(p)
    let sp = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let cp = (r[(2, 1)].powi(2) + r[(2, 2)].powi(2)).sqrt();
    if cp < ORTHONORMAL_TOLERANCE {
        return Err(Error::GimbalLock);
    }
    let pitch = sp.atan2(cp);
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    Ok((roll, pitch, yaw))
}

/// Largest deviation of `R^T R` from identity, or of `det R` from +1.
pub fn orthonormality_drift(r: &Matrix3<f64>) -> f64 {
    let e = r.transpose() * r - Matrix3::identity();
    let m = e.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    m.max((r.determinant() - 1.0).abs())
}

/// Nearest rotation in the Frobenius sense: `U diag(1, 1, det(U V^T)) V^T`.
pub fn project_to_so3(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let d = (u * v_t).determinant();
    let s = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d.signum()));
    u * s * v_t
}

/// Rotation about Z by `deg` degrees.
pub fn rot_z(deg: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::z_axis(), deg.to_radians()).matrix()
}

pub fn rot_y(deg: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::y_axis(), deg.to_radians()).matrix()
}

pub fn rot_x(deg: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::x_axis(), deg.to_radians()).matrix()
}
