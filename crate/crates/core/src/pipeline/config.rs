//! TOML configuration for the whole pipeline.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::depth::{FusionParams, RingExtrinsics};
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::pipeline::dataset::Adapter;
use crate::pipeline::scene::GardenParams;
use crate::posegraph::MptejiParams;
use crate::volume::{Allocation, IntegrationParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub adapter: Adapter,
    /// Dataset directory; without one the synthetic garden is rendered in
    /// memory from `[synthetic]`.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write the per-frame cleaned clouds as PLY.
    pub save_clouds: bool,
    /// Also write the TSDF volume snapshot.
    pub save_volume: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            save_clouds: false,
            save_volume: false,
        }
    }
}

/// Overrides for the camera model read from the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub intrinsics: Option<CameraIntrinsics>,
    /// `(cameras, radius)` of an evenly spaced ring.
    pub ring: Option<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolumeConfig {
    pub voxel_size: f64,
    pub allocation: Allocation,
    #[serde(flatten)]
    pub params: IntegrationParams,
}

impl Default for VolumeConfig {
    fn default() -> Self {
        Self {
            voxel_size: 0.01,
            allocation: Allocation::Sparse,
            params: IntegrationParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// X values of the reported badX curve.
    pub badx: Vec<f64>,
    /// Reference surface cloud for mesh accuracy; `reference.ply` in the
    /// dataset directory is used when absent.
    pub reference: Option<PathBuf>,
    /// Spacing of the analytic surface samples for in-memory scenes.
    pub surface_spacing: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            badx: vec![1.0, 2.0, 3.0, 4.0],
            reference: None,
            surface_spacing: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    /// Camera whose cloud is the node's single-view cloud.
    pub single_view_camera: usize,
    pub input: InputConfig,
    pub output: OutputConfig,
    pub camera: CameraConfig,
    pub synthetic: GardenParams,
    pub fusion: FusionParams,
    pub pose: MptejiParams,
    pub volume: VolumeConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            threads: 0,
            single_view_camera: 0,
            input: InputConfig::default(),
            output: OutputConfig::default(),
            camera: CameraConfig::default(),
            synthetic: GardenParams::default(),
            fusion: FusionParams::default(),
            pose: MptejiParams::default(),
            volume: VolumeConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is serializable")
    }

    /// Checks every parameter block and that referenced inputs exist.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        if let Some(p) = &self.input.path {
            if !p.is_dir() {
                return Err(Error::Config(format!("input directory {} does not exist", p.display())));
            }
        } else if self.input.adapter != Adapter::Synthetic {
            return Err(Error::Config("the trimbot adapter needs input.path".into()));
        }
        if let Some(r) = &self.eval.reference {
            if !r.is_file() {
                return Err(Error::Config(format!("reference cloud {} does not exist", r.display())));
            }
        }
        if let Some(k) = &self.camera.intrinsics {
            k.validate().map_err(cfg)?;
        }
        if let Some((n, r)) = self.camera.ring {
            RingExtrinsics::ring(n, r).map_err(cfg)?;
        }
        self.fusion.validate().map_err(cfg)?;
        self.pose.graph.registration.validate().map_err(cfg)?;
        self.pose.refine.validate().map_err(cfg)?;
        if !(self.volume.voxel_size > 0.0) {
            return Err(Error::Config("volume.voxel_size must be positive".into()));
        }
        self.volume.params.validate(self.volume.voxel_size).map_err(cfg)?;
        if self.eval.badx.iter().any(|x| !(*x > 0.0)) || !(self.eval.surface_spacing > 0.0) {
            return Err(Error::Config("eval.badx and eval.surface_spacing must be positive".into()));
        }
        Ok(())
    }
}
