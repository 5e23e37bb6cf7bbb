use nalgebra::{Matrix3, Vector3};

/// `||I - R_gt R_est^-1||_F`, in `[0, 2 sqrt 2]` for rotations.
pub fn rotation_error(r_gt: &Matrix3<f64>, r_est: &Matrix3<f64>) -> f64 {
    (Matrix3::identity() - r_gt * r_est.transpose()).norm()
}

/// Distance between the two origins, in meters.
pub fn translation_error(t_gt: &Vector3<f64>, t_est: &Vector3<f64>) -> f64 {
    (t_gt - t_est).norm()
}
