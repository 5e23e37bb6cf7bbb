use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::pose::rot_y;
use crate::geometry::{PointCloud, Pose, ViewKind};

pub const RIG_FRAME: &str = "rig";

/// Extrinsics of the cameras on the ring: `cameras[k]` maps camera-`k`
/// coordinates into the rig frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RingExtrinsics {
    cameras: Vec<Pose>,
}

impl RingExtrinsics {
    pub fn new(cameras: Vec<Pose>) -> Result<Self> {
        if cameras.is_empty() {
            return Err(Error::InvalidParameter("rig needs at least one camera".into()));
        }
        if let Some(k) = cameras.iter().position(|p| !p.is_valid()) {
            return Err(Error::InvalidParameter(format!("camera {k} extrinsic is not in SE(3)")));
        }
        Ok(Self { cameras })
    }

    /// `count` cameras with optical centres on a horizontal circle of
    /// `radius` meters, yawed by `360 / count` degrees each.
    ///
    /// The rig frame coincides with camera 0 (x right, y down, z forward);
    /// the ring centre sits `radius` behind it.
    pub fn ring(count: usize, radius: f64) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidParameter("rig needs at least one camera".into()));
        }
        let centre = Vector3::new(0.0, 0.0, -radius);
        let cameras = (0..count)
            .map(|k| {
                let r = rot_y(k as f64 * 360.0 / count as f64);
                Pose::new(r, centre + r * Vector3::new(0.0, 0.0, radius))
            })
            .collect();
        Self::new(cameras)
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn camera(&self, k: usize) -> &Pose {
        &self.cameras[k]
    }

    pub fn cameras(&self) -> &[Pose] {
        &self.cameras
    }
}

/// Moves each single-view cloud into the rig frame and concatenates them.
pub fn assemble_full_view(views: &[PointCloud], rig: &RingExtrinsics) -> Result<PointCloud> {
    if views.len() != rig.len() {
        return Err(Error::CountMismatch {
            expected: rig.len(),
            actual: views.len(),
        });
    }
    let mut full = PointCloud::empty(RIG_FRAME, ViewKind::Full);
    for (view, extrinsic) in views.iter().zip(rig.cameras()) {
        full.extend(&view.transformed(extrinsic, RIG_FRAME));
    }
    full.view = ViewKind::Full;
    Ok(full)
}
