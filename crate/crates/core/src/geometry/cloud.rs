use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Field of view a cloud was captured with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ViewKind {
    /// One stereo pair (72 degrees on the five-camera ring).
    #[default]
    Single,
    /// All pairs of the ring merged (360 degrees).
    Full,
}

/// Points with optional unit normals, tagged with the frame they live in.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    normals: Option<Vec<Vector3<f64>>>,
    pub frame: String,
    pub view: ViewKind,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>, frame: impl Into<String>, view: ViewKind) -> Self {
        Self {
            points,
            normals: None,
            frame: frame.into(),
            view,
        }
    }

    pub fn empty(frame: impl Into<String>, view: ViewKind) -> Self {
        Self::new(Vec::new(), frame, view)
    }

    pub fn from_points(points: Vec<Vector3<f64>>) -> Self {
        Self::new(points, "", ViewKind::Single)
    }

    /// Attaches normals; they must match the point count and have unit length.
    pub fn with_normals(mut self, normals: Vec<Vector3<f64>>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::CountMismatch {
                expected: self.points.len(),
                actual: normals.len(),
            });
        }
        if normals.iter().any(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::InvalidParameter("normals must have unit length".into()));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    pub fn clear_normals(&mut self) {
        self.normals = None;
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Maps every point through `pose` and rotates normals; the result is
    /// labelled with `frame`.
    pub fn transformed(&self, pose: &Pose, frame: impl Into<String>) -> PointCloud {
        let points = self.points.iter().map(|p| pose.transform_point(p)).collect();
        let normals = self
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| pose.transform_vector(n)).collect());
        PointCloud {
            points,
            normals,
            frame: frame.into(),
            view: self.view,
        }
    }

    /// Keeps the points at `indices`, in order, together with their normals.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| indices.iter().map(|&i| ns[i]).collect()),
            frame: self.frame.clone(),
            view: self.view,
        }
    }

    /// Appends `other`; normals survive only when both clouds carry them.
    pub fn extend(&mut self, other: &PointCloud) {
        let keep_normals = match (&self.normals, &other.normals) {
            (Some(_), Some(_)) => true,
            (None, None) => false,
            _ => self.points.is_empty() && other.normals.is_some(),
        };
        if keep_normals {
            let mut ns = self.normals.take().unwrap_or_default();
            ns.extend_from_slice(other.normals.as_ref().unwrap());
            self.normals = Some(ns);
        } else {
            self.normals = None;
        }
        self.points.extend_from_slice(&other.points);
    }

    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vector3<f64> = self.points.iter().sum();
        Some(sum / self.points.len() as f64)
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }
}

pub fn transform_cloud(c: &PointCloud, p: &Pose, frame: impl Into<String>) -> PointCloud {
    c.transformed(p, frame)
}
