//! On-disk frame sets: the synthetic dump and the Trimbot-style adapter.
//!
//! Both adapters read the same directory shape:
//!
//! ```text
//! <root>/intrinsics.json          CameraIntrinsics (shared by every camera)
//! <root>/rig.txt                  one `k r00 r01 r02 t0 r10 ... t2` line per camera
//! <root>/groundtruth.txt          optional, same line format, world<-rig per frame
//! <root>/frames/<NNNN>/cam<k>.png       16-bit depth in millimeters, or
//! <root>/frames/<NNNN>/cam<k>_disp.png  16-bit disparity in 1/256 pixel
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::depth::{disparity_to_depth, DepthMap, DisparityMap, RingExtrinsics};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::io::{quantize_depth, read_depth_png, write_depth_png};
use crate::pipeline::scene::SyntheticScene;

/// Sensor resolution of the Trimbot garden cameras.
pub const TRIMBOT_RESOLUTION: (usize, usize) = (752, 480);
pub const DISPARITY_SCALE: f64 = 256.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Adapter {
    #[default]
    Synthetic,
    Trimbot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: usize,
    /// One depth map per rig camera.
    pub depth: Vec<DepthMap>,
    /// World←rig.
    pub gt_pose: Option<Pose>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub intrinsics: CameraIntrinsics,
    pub rig: RingExtrinsics,
    pub frames: Vec<Frame>,
}

impl Dataset {
    /// Renders every trajectory position of `scene`, optionally quantized to
    /// the millimeter grid the PNG dump stores.
    pub fn from_scene(scene: &SyntheticScene, quantize: bool) -> Result<Self> {
        let frames = (0..scene.frame_count())
            .map(|id| {
                let (maps, pose) = scene.render(id)?;
                let depth = if quantize { maps.iter().map(quantize_depth).collect() } else { maps };
                Ok(Frame { id, depth, gt_pose: Some(pose) })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            intrinsics: scene.intrinsics,
            rig: scene.rig.clone(),
            frames,
        })
    }

    pub fn ground_truth(&self) -> Option<Vec<Pose>> {
        self.frames.iter().map(|f| f.gt_pose).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::InvalidParameter("dataset has no frames".into()));
        }
        for f in &self.frames {
            if f.depth.len() != self.rig.len() {
                return Err(Error::CountMismatch {
                    expected: self.rig.len(),
                    actual: f.depth.len(),
                });
            }
            if let Some(k) = f.depth.iter().position(|d| !d.same_shape(&self.intrinsics)) {
                return Err(Error::ShapeMismatch(format!("frame {} camera {k} does not match the intrinsics", f.id)));
            }
        }
        Ok(())
    }
}

fn layout(path: &Path, reason: impl Into<String>) -> Error {
    Error::Layout {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// `id` followed by the 3x4 matrix `[R | t]` row-major; lossless.
pub fn format_poses(poses: &[Pose]) -> String {
    let mut s = String::new();
    for (i, p) in poses.iter().enumerate() {
        let (r, t) = (p.rotation(), p.translation());
        let _ = write!(s, "{i}");
        for row in 0..3 {
            let _ = write!(s, " {:e} {:e} {:e} {:e}", r[(row, 0)], r[(row, 1)], r[(row, 2)], t[row]);
        }
        s.push('\n');
    }
    s
}

pub fn read_poses(path: &Path) -> Result<Vec<Pose>> {
    let text = std::fs::read_to_string(path).map_err(|e| layout(path, e.to_string()))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).enumerate() {
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| layout(path, format!("line {}: {e}", n + 1)))?;
        if v.len() != 13 || v[0] != n as f64 {
            return Err(layout(path, format!("line {}: expected `{n}` and 12 matrix entries", n + 1)));
        }
        let r = Matrix3::new(v[1], v[2], v[3], v[5], v[6], v[7], v[9], v[10], v[11]);
        let t = Vector3::new(v[4], v[8], v[12]);
        let rt = r.transpose() * r - Matrix3::identity();
        if rt.abs().max() > 1e-6 || (r.determinant() - 1.0).abs() > 1e-6 {
            return Err(layout(path, format!("line {}: rotation is not orthonormal", n + 1)));
        }
        // exact values are kept; re-orthonormalizing would break round trips
        out.push(Pose::new(r, t));
    }
    Ok(out)
}

fn frame_dir(root: &Path, id: usize) -> PathBuf {
    root.join("frames").join(format!("{id:04}"))
}

/// Writes `d` in the synthetic layout. Depths are stored to the millimeter,
/// so a dataset built with `Dataset::from_scene(_, true)` reloads exactly.
pub fn write_dataset(root: &Path, d: &Dataset) -> Result<()> {
    d.validate()?;
    std::fs::create_dir_all(root.join("frames"))?;
    crate::io::write_json(&root.join("intrinsics.json"), &d.intrinsics)?;
    std::fs::write(root.join("rig.txt"), format_poses(d.rig.cameras()))?;
    if let Some(gt) = d.ground_truth() {
        std::fs::write(root.join("groundtruth.txt"), format_poses(&gt))?;
    }
    for f in &d.frames {
        let dir = frame_dir(root, f.id);
        std::fs::create_dir_all(&dir)?;
        for (k, m) in f.depth.iter().enumerate() {
            write_depth_png(&dir.join(format!("cam{k}.png")), m)?;
        }
    }
    Ok(())
}

fn read_disparity_png(path: &Path, k: &CameraIntrinsics) -> Result<DepthMap> {
    let img = match image::open(path)? {
        image::DynamicImage::ImageLuma16(i) => i,
        other => return Err(layout(path, format!("expected 16-bit grayscale, found {:?}", other.color()))),
    };
    if (img.width() as usize, img.height() as usize) != (k.width, k.height) {
        return Err(layout(path, format!("image is {}x{}, expected {}x{}", img.width(), img.height(), k.width, k.height)));
    }
    let disp = DisparityMap::from_fn(*k, |u, v| {
        let raw = img.get_pixel(u as u32, v as u32)[0];
        (raw > 0).then(|| raw as f64 / DISPARITY_SCALE)
    });
    Ok(disparity_to_depth(&disp))
}

/// Loads a frame set. The Trimbot adapter additionally requires 752×480
/// images; errors name the first offending file.
pub fn load_dataset(root: &Path, adapter: Adapter) -> Result<Dataset> {
    if !root.is_dir() {
        return Err(layout(root, "not a directory"));
    }
    let intr_path = root.join("intrinsics.json");
    let text = std::fs::read_to_string(&intr_path).map_err(|e| layout(&intr_path, e.to_string()))?;
    let intrinsics: CameraIntrinsics = serde_json::from_str(&text).map_err(|e| layout(&intr_path, e.to_string()))?;
    intrinsics.validate().map_err(|e| layout(&intr_path, e.to_string()))?;
    if adapter == Adapter::Trimbot && (intrinsics.width, intrinsics.height) != TRIMBOT_RESOLUTION {
        return Err(layout(
            &intr_path,
            format!("resolution {}x{} is not 752x480", intrinsics.width, intrinsics.height),
        ));
    }
    let rig_path = root.join("rig.txt");
    let rig = RingExtrinsics::new(read_poses(&rig_path)?).map_err(|e| layout(&rig_path, e.to_string()))?;

    let frames_root = root.join("frames");
    let mut dirs: Vec<(usize, PathBuf)> = std::fs::read_dir(&frames_root)
        .map_err(|e| layout(&frames_root, e.to_string()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.parse::<usize>()
                .map(|id| (id, e.path()))
                .map_err(|_| layout(&e.path(), "frame directory name is not a number"))
        })
        .collect::<Result<_>>()?;
    dirs.sort();
    if dirs.is_empty() {
        return Err(layout(&frames_root, "no frame directories"));
    }

    let gt_path = root.join("groundtruth.txt");
    let gt = if gt_path.exists() {
        let poses = read_poses(&gt_path)?;
        if poses.len() != dirs.len() {
            return Err(layout(&gt_path, format!("{} poses for {} frames", poses.len(), dirs.len())));
        }
        Some(poses)
    } else {
        None
    };

    let mut frames = Vec::with_capacity(dirs.len());
    for (n, (id, dir)) in dirs.into_iter().enumerate() {
        let depth = (0..rig.len())
            .map(|k| {
                let depth_path = dir.join(format!("cam{k}.png"));
                let disp_path = dir.join(format!("cam{k}_disp.png"));
                if depth_path.exists() {
                    read_depth_png(&depth_path, &intrinsics)
                } else if disp_path.exists() {
                    read_disparity_png(&disp_path, &intrinsics)
                } else {
                    Err(layout(&depth_path, "missing depth (or _disp) image"))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        frames.push(Frame {
            id,
            depth,
            gt_pose: gt.as_ref().map(|g| g[n]),
        });
    }
    Ok(Dataset { intrinsics, rig, frames })
}
