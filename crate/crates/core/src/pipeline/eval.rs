//! Trajectory, depth and mesh accuracy metrics, and the flat JSON report.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde_json::Value;

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::{rotation_error, translation_error, PointCloud, Pose};
use crate::spatial::PointIndex;

/// Meters per unit of X in badX.
pub const BADX_UNIT: f64 = 0.025;

/// Mean and sample standard deviation; a single value has zero spread.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEval {
    /// Per frame `||I - R_gt R_est^-1||_F`.
    pub e_r: Vec<f64>,
    /// Per frame, meters.
    pub e_t: Vec<f64>,
    /// Per frame absolute differences of `[tx, ty, tz, roll, pitch, yaw]`
    /// (meters, degrees).
    pub axis: Vec<[f64; 6]>,
}

impl TrajectoryEval {
    pub fn frames(&self) -> usize {
        self.e_t.len()
    }

    pub fn e_r_stats(&self) -> (f64, f64) {
        mean_std(&self.e_r)
    }

    pub fn e_t_stats(&self) -> (f64, f64) {
        mean_std(&self.e_t)
    }

    /// Mean and standard deviation of each Vec6 component difference.
    pub fn axis_stats(&self) -> [(f64, f64); 6] {
        std::array::from_fn(|k| mean_std(&self.axis.iter().map(|a| a[k]).collect::<Vec<_>>()))
    }
}

/// Moves `est` so its first pose coincides with `gt`'s first pose.
pub fn align_first(est: &[Pose], gt: &[Pose]) -> Vec<Pose> {
    let (Some(e0), Some(g0)) = (est.first(), gt.first()) else {
        return est.to_vec();
    };
    let fix = g0.compose(&e0.inverse());
    est.iter().map(|p| fix.compose(p)).collect()
}

/// Per-frame pose errors after first-pose alignment. Poses are world←rig.
pub fn eval_trajectory(est: &[Pose], gt: &[Pose]) -> Result<TrajectoryEval> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: est.len(),
            right: gt.len(),
        });
    }
    let aligned = align_first(est, gt);
    let mut out = TrajectoryEval {
        e_r: Vec::with_capacity(est.len()),
        e_t: Vec::with_capacity(est.len()),
        axis: Vec::with_capacity(est.len()),
    };
    for (e, g) in aligned.iter().zip(gt) {
        out.e_r.push(rotation_error(g.rotation(), e.rotation()));
        out.e_t.push(translation_error(g.translation(), e.translation()));
        out.axis.push(e.to_vec6()?.abs_diff(&g.to_vec6()?));
    }
    Ok(out)
}

/// Fraction of pixels valid in both maps, with ground truth no farther than
/// `max_dist`, whose absolute error exceeds `x * 0.025` m. No such pixels
/// gives 0.
pub fn eval_badx(est: &DepthMap, gt: &DepthMap, x: f64, max_dist: f64) -> Result<f64> {
    if est.width() != gt.width() || est.height() != gt.height() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            est.width(),
            est.height(),
            gt.width(),
            gt.height()
        )));
    }
    if !(x > 0.0) {
        return Err(Error::InvalidParameter("badX threshold must be positive".into()));
    }
    let threshold = x * BADX_UNIT;
    let (mut counted, mut bad) = (0usize, 0usize);
    for (i, (&g, &gv)) in gt.values().iter().zip(gt.mask()).enumerate() {
        if !gv || !est.mask()[i] || g > max_dist {
            continue;
        }
        counted += 1;
        if (est.values()[i] - g).abs() > threshold {
            bad += 1;
        }
    }
    Ok(if counted == 0 { 0.0 } else { bad as f64 / counted as f64 })
}

/// Nearest-neighbour accuracy of a reconstruction against reference points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshEval {
    pub points: usize,
    /// `(mean, std)` of the distance.
    pub dist: (f64, f64),
    /// `(mean, std)` of `|dx|`, `|dy|`, `|dz|` to the nearest point.
    pub axis: [(f64, f64); 3],
}

pub fn eval_mesh(recon: &PointCloud, gt: &PointCloud) -> Result<MeshEval> {
    if recon.is_empty() || gt.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let index = PointIndex::new(&gt.points);
    let diffs: Vec<[f64; 4]> = recon
        .points
        .par_iter()
        .map(|p| {
            let (j, d) = index.nearest(p).expect("non-empty index");
            let delta = p - gt.points[j];
            [d, delta.x.abs(), delta.y.abs(), delta.z.abs()]
        })
        .collect();
    let column = |k: usize| mean_std(&diffs.iter().map(|d| d[k]).collect::<Vec<_>>());
    Ok(MeshEval {
        points: recon.len(),
        dist: column(0),
        axis: [column(1), column(2), column(3)],
    })
}

/// Everything a run measured, flattened to `key: number` pairs on output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub trajectory: Option<TrajectoryEval>,
    /// `(X, fraction)` pairs.
    pub badx: Vec<(f64, f64)>,
    pub mesh: Option<MeshEval>,
    /// `(mean, std)` of the distance from mesh vertices to an analytic
    /// reference surface.
    pub analytic: Option<(f64, f64)>,
    /// Wall-clock seconds per stage, in execution order.
    pub timings: Vec<(String, f64)>,
    pub counts: Vec<(String, usize)>,
}

impl EvalReport {
    pub fn timing(&mut self, stage: &str, seconds: f64) {
        self.timings.push((stage.to_string(), seconds));
    }

    pub fn count(&mut self, key: &str, n: usize) {
        self.counts.push((key.to_string(), n));
    }

    pub fn to_flat(&self) -> BTreeMap<String, Value> {
        let mut m = BTreeMap::new();
        let mut put = |k: String, v: f64| {
            m.insert(k, Value::from(v));
        };
        if let Some(t) = &self.trajectory {
            let (rm, rs) = t.e_r_stats();
            let (tm, ts) = t.e_t_stats();
            put("pose.e_r_mean".into(), rm);
            put("pose.e_r_std".into(), rs);
            put("pose.e_t_mean".into(), tm);
            put("pose.e_t_std".into(), ts);
            for (name, (mean, std)) in ["tx", "ty", "tz", "roll", "pitch", "yaw"].iter().zip(t.axis_stats()) {
                put(format!("pose.{name}_mean"), mean);
                put(format!("pose.{name}_std"), std);
            }
            for (i, (r, e)) in t.e_r.iter().zip(&t.e_t).enumerate() {
                put(format!("pose.frame{i:04}.e_r"), *r);
                put(format!("pose.frame{i:04}.e_t"), *e);
            }
            put("pose.frames".into(), t.frames() as f64);
        }
        for (x, f) in &self.badx {
            put(format!("depth.bad{x}"), *f);
        }
        if let Some(me) = &self.mesh {
            put("mesh.dist_mean".into(), me.dist.0);
            put("mesh.dist_std".into(), me.dist.1);
            for (name, (mean, std)) in ["dx", "dy", "dz"].iter().zip(me.axis) {
                put(format!("mesh.{name}_mean"), mean);
                put(format!("mesh.{name}_std"), std);
            }
            put("mesh.points".into(), me.points as f64);
        }
        if let Some((mean, std)) = self.analytic {
            put("mesh.analytic_dist_mean".into(), mean);
            put("mesh.analytic_dist_std".into(), std);
        }
        for (stage, s) in &self.timings {
            put(format!("time.{stage}_s"), *s);
        }
        for (k, n) in &self.counts {
            m.insert(format!("count.{k}"), Value::from(*n));
        }
        m
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, &self.to_flat())
    }
}
