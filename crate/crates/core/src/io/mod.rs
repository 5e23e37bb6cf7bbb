//! File formats: trajectories, graph dumps, PLY/OBJ, depth PNGs, volume
//! snapshots and the JSON report.

pub mod ply;
pub mod png;
pub mod snapshot;
pub mod text;

use std::path::Path;

use crate::error::Result;

pub use ply::{read_ply_cloud, read_ply_mesh, write_obj, write_ply_cloud, write_ply_mesh};
pub use png::{quantize_depth, read_depth_png, write_depth_png, MAX_PNG_DEPTH};
pub use snapshot::{read_volume, write_volume};
pub use text::{format_graph, format_trajectory, parse_graph, parse_trajectory, read_trajectory, write_graph, write_trajectory};

/// Pretty-printed JSON.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}
