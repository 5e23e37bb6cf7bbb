//! Pairwise rigid registration and overlap scoring.

pub mod downsample;
pub mod features;
pub mod global;
pub mod icp;
pub mod kabsch;
pub mod normals;
pub mod overlap;

use crate::geometry::Pose;

pub use downsample::voxel_downsample;
pub use features::{compute_features, Descriptor, FeatureCloud, FeatureRadii, FPFH_DIM};
pub use global::{global_register, global_register_prepared, GlobalRegParams, PreparedCloud};
pub use icp::{icp_refine, icp_refine_traced, IcpParams, IcpStep};
pub use kabsch::fit_rigid;
pub use normals::{estimate_normals, point_normals};
pub use overlap::{overlap_percentage, overlap_with_indices};

/// Outcome of a pairwise registration. `transform` maps source coordinates
/// into the target frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationResult {
    pub transform: Pose,
    /// Overlap fraction in `[0, 1]`.
    pub overlap: f64,
    /// Meters, over inlier correspondences.
    pub rmse: f64,
    /// Share of correspondences (or source points, for ICP) counted as inliers.
    pub fitness: f64,
    pub converged: bool,
    pub iterations: usize,
}
