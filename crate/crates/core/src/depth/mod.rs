//! Depth post-processing: disparity/depth conversion, output mappings,
//! back-projection, outlier removal and full-view assembly.

pub mod fusion;
pub mod mapping;
pub mod maps;
pub mod outliers;
pub mod projection;
pub mod rig;

pub use fusion::{fuse_disparities, DisparityFusion, GradientConsistencyFusion};
pub use mapping::{depth_to_disparity, disparity_to_depth, map_tanh_output, TanhMapping, DISPARITY_FLOOR};
pub use maps::{DepthMap, DisparityMap};
pub use outliers::{remove_outliers, FusionParams, OutlierScope};
pub use projection::{backproject, project};
pub use rig::{assemble_full_view, RingExtrinsics, RIG_FRAME};
