//! Rigid-body math, the pinhole camera, cloud and mesh containers, and the
//! pose-error metrics.

pub mod camera;
pub mod cloud;
pub mod mesh;
pub mod metrics;
pub mod pose;

pub use camera::CameraIntrinsics;
pub use cloud::{transform_cloud, PointCloud, ViewKind};
pub use mesh::TriangleMesh;
pub use metrics::{rotation_error, translation_error};
pub use pose::{compose, inverse, pose_to_vec6, vec6_to_pose, Pose, Vec6Pose};
