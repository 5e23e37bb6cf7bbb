//! Volumetric fusion of posed depth maps and surface extraction.

pub mod marching;
pub mod tsdf;

pub use marching::{case_table, extract_cloud, extract_mesh};
pub use tsdf::{integrate, Allocation, IntegrationParams, TsdfVolume, BLOCK};
